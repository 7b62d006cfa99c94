use std::f64::consts::PI;

use crate::constants::PhysicalConstants;
use crate::grid::{ComplexField, Grid1D, RealField, WaveState};

use super::DynamicsError;

/// External potential `V(q)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Free,
    /// `m·ω²·q²/2`.
    Harmonic {
        omega: f64,
    },
    /// `a·|q|^s`.
    PowerLaw {
        strength: f64,
        exponent: f64,
    },
    /// One value per grid point.
    Tabulated(Vec<f64>),
}

impl PotentialSpec {
    pub fn validate(&self, grid: &Grid1D) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::Potential(msg));
        match self {
            Self::Free => Ok(()),
            Self::Harmonic { omega } if !(omega.is_finite() && *omega > 0.0) => {
                bad(format!("harmonic omega must be positive, got {omega}"))
            }
            Self::PowerLaw { strength, exponent } => {
                if !strength.is_finite() {
                    bad(format!("power-law strength must be finite, got {strength}"))
                } else if !(exponent.is_finite() && *exponent > 0.0) {
                    bad(format!(
                        "power-law exponent must be positive, got {exponent}"
                    ))
                } else {
                    Ok(())
                }
            }
            Self::Tabulated(values) => {
                if values.len() != grid.n_points() {
                    bad(format!(
                        "tabulated potential has {} values, grid has {}",
                        values.len(),
                        grid.n_points()
                    ))
                } else if values.iter().any(|v| !v.is_finite()) {
                    bad("tabulated potential has non-finite values".into())
                } else {
                    Ok(())
                }
            }
            Self::Harmonic { .. } => Ok(()),
        }
    }

    /// `V` at an arbitrary coordinate. Tabulated potentials interpolate
    /// periodically with 4-point Lagrange weights.
    pub fn value_at(&self, q: f64, grid: &Grid1D, consts: &PhysicalConstants) -> f64 {
        match self {
            Self::Free => 0.0,
            Self::Harmonic { omega } => 0.5 * consts.mass * omega * omega * q * q,
            Self::PowerLaw { strength, exponent } => strength * q.abs().powf(*exponent),
            Self::Tabulated(values) => super::flow::interpolate_periodic(values, grid, q),
        }
    }

    /// Classical force `−∂V/∂q`.
    pub fn force_at(&self, q: f64, grid: &Grid1D, consts: &PhysicalConstants) -> f64 {
        match self {
            Self::Free => 0.0,
            Self::Harmonic { omega } => -consts.mass * omega * omega * q,
            Self::PowerLaw { strength, exponent } => {
                if q == 0.0 {
                    0.0
                } else {
                    -strength * exponent * q.abs().powf(exponent - 1.0) * q.signum()
                }
            }
            Self::Tabulated(values) => {
                let n = values.len();
                let dq = grid.spacing();
                let gradient: Vec<f64> = (0..n)
                    .map(|j| {
                        let at =
                            |k: isize| values[(j as isize + k).rem_euclid(n as isize) as usize];
                        (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * dq)
                    })
                    .collect();
                -super::flow::interpolate_periodic(&gradient, grid, q)
            }
        }
    }

    pub fn values(
        &self,
        grid: &Grid1D,
        consts: &PhysicalConstants,
    ) -> Result<RealField, DynamicsError> {
        self.validate(grid)?;
        let values = match self {
            Self::Tabulated(v) => v.clone(),
            _ => grid
                .points()
                .into_iter()
                .map(|q| self.value_at(q, grid, consts))
                .collect(),
        };
        Ok(RealField::new(*grid, values)?)
    }
}

/// Initial wave function.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Gaussian {
        sigma: f64,
        center: f64,
        momentum: f64,
    },
    /// Ground state of the harmonic potential.
    GroundState,
    /// Uniform amplitude; `p₀·L/(2πħ)` must be an integer.
    PlaneWave { momentum: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        Self::Gaussian {
            sigma: 1.0,
            center: 0.0,
            momentum: 0.0,
        }
    }
}

impl InitialState {
    pub fn validate(
        &self,
        grid: &Grid1D,
        potential: &PotentialSpec,
        consts: &PhysicalConstants,
    ) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InitialState(msg));
        match self {
            Self::Gaussian {
                sigma,
                center,
                momentum,
            } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    bad(format!("gaussian sigma must be positive, got {sigma}"))
                } else if !center.is_finite() || !momentum.is_finite() {
                    bad("gaussian center and momentum must be finite".into())
                } else {
                    Ok(())
                }
            }
            Self::GroundState => match potential {
                PotentialSpec::Harmonic { .. } => Ok(()),
                _ => bad("ground state is only available for the harmonic potential".into()),
            },
            Self::PlaneWave { momentum } => {
                let winding = momentum * grid.length() / (2.0 * PI * consts.hbar);
                if !winding.is_finite() || (winding - winding.round()).abs() > 1e-9 {
                    bad(format!(
                        "plane-wave momentum {momentum} is not periodic on the grid (winding {winding})"
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Polar form built from closed-form amplitude and action, normalized on
    /// the grid.
    pub fn prepare(
        &self,
        grid: &Grid1D,
        potential: &PotentialSpec,
        consts: &PhysicalConstants,
    ) -> Result<WaveState, DynamicsError> {
        self.validate(grid, potential, consts)?;
        let (amplitude, action): (Vec<f64>, Vec<f64>) = match self {
            Self::Gaussian {
                sigma,
                center,
                momentum,
            } => grid
                .points()
                .into_iter()
                .map(|q| {
                    let x = q - center;
                    ((-x * x / (4.0 * sigma * sigma)).exp(), momentum * x)
                })
                .unzip(),
            Self::GroundState => {
                let PotentialSpec::Harmonic { omega } = potential else {
                    unreachable!("validated above")
                };
                let var = consts.hbar / (2.0 * consts.mass * omega);
                grid.points()
                    .into_iter()
                    .map(|q| ((-q * q / (4.0 * var)).exp(), 0.0))
                    .unzip()
            }
            Self::PlaneWave { momentum } => grid
                .points()
                .into_iter()
                .map(|q| (1.0, momentum * q))
                .unzip(),
        };
        let norm = amplitude.iter().map(|a| a * a).sum::<f64>() * grid.spacing();
        let scale = norm.sqrt().recip();
        let amplitude = amplitude.into_iter().map(|a| a * scale).collect();
        Ok(WaveState::new(
            RealField::new(*grid, amplitude)?,
            RealField::new(*grid, action)?,
            0.0,
        )?)
    }

    pub fn prepare_complex(
        &self,
        grid: &Grid1D,
        potential: &PotentialSpec,
        consts: &PhysicalConstants,
    ) -> Result<ComplexField, DynamicsError> {
        let state = self.prepare(grid, potential, consts)?;
        Ok(crate::grid::from_polar(&state, consts.hbar))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_validation() {
        let grid = Grid1D::new(10.0, 16).unwrap();
        assert!(PotentialSpec::Harmonic { omega: 0.0 }
            .validate(&grid)
            .is_err());
        assert!(PotentialSpec::PowerLaw {
            strength: 1.0,
            exponent: -1.0
        }
        .validate(&grid)
        .is_err());
        assert!(PotentialSpec::Tabulated(vec![0.0; 15])
            .validate(&grid)
            .is_err());
        assert!(PotentialSpec::Tabulated(vec![0.0; 16])
            .validate(&grid)
            .is_ok());
    }

    #[test]
    fn forces_are_minus_gradients() {
        let grid = Grid1D::new(20.0, 256).unwrap();
        let c = PhysicalConstants::default();
        let tab = PotentialSpec::Tabulated(grid.points().iter().map(|q| (0.5 * q).sin()).collect());
        let specs = [
            PotentialSpec::Harmonic { omega: 1.3 },
            PotentialSpec::PowerLaw {
                strength: 0.7,
                exponent: 1.5,
            },
            tab,
        ];
        let h = 1e-5;
        for spec in &specs {
            for q in [-3.1, -0.4, 0.77, 2.5] {
                let fd = -(spec.value_at(q + h, &grid, &c) - spec.value_at(q - h, &grid, &c))
                    / (2.0 * h);
                assert!(
                    (spec.force_at(q, &grid, &c) - fd).abs() < 1e-5,
                    "{spec:?} at {q}"
                );
            }
        }
    }

    #[test]
    fn ground_state_requires_harmonic_potential() {
        let grid = Grid1D::new(20.0, 64).unwrap();
        let c = PhysicalConstants::default();
        assert!(InitialState::GroundState
            .prepare(&grid, &PotentialSpec::Free, &c)
            .is_err());
        let s = InitialState::GroundState
            .prepare(&grid, &PotentialSpec::Harmonic { omega: 1.0 }, &c)
            .unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn plane_wave_must_wind_an_integer_number_of_times() {
        let grid = Grid1D::new(10.0, 64).unwrap();
        let c = PhysicalConstants::default();
        let ok = InitialState::PlaneWave {
            momentum: 2.0 * PI * 3.0 / 10.0,
        };
        assert!(ok.prepare(&grid, &PotentialSpec::Free, &c).is_ok());
        let bad = InitialState::PlaneWave { momentum: 1.0 };
        assert!(bad.prepare(&grid, &PotentialSpec::Free, &c).is_err());
    }
}
