use num_complex::Complex64;

use crate::constants::PhysicalConstants;
use crate::grid::{ComplexField, Grid1D, RealField, Spectral, WaveState, AMPLITUDE_FLOOR};
use crate::noise::NoiseField;

use super::{DynamicsError, PotentialSpec};

/// A single step may change the norm by at most this much before it is
/// rejected.
pub const MAX_STEP_NORM_DRIFT: f64 = 1e-3;

/// Largest stable `dt` for the amplitude/action integrator, in units of
/// `m·dq²/ħ`.
pub const HYDRO_STABILITY: f64 = 0.5;

/// Default `dt` in units of `m·dq²/ħ`.
pub const DEFAULT_DT_FACTOR: f64 = 0.1;

/// Relative amplitude floor in the `1/A` of the action equation.
const HYDRO_DIVISION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `∫n'/∫n − 1` before any renormalization.
    pub norm_drift: f64,
    /// Points where the noise increment was tapered or `A` was clipped at 0.
    pub floor_hits: usize,
    pub dt_used: f64,
}

pub fn default_dt(grid: &Grid1D, consts: &PhysicalConstants) -> f64 {
    DEFAULT_DT_FACTOR * consts.mass * grid.spacing().powi(2) / consts.hbar
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(DynamicsError::TimeStep { dt, bound: None })
    }
}

fn check_noise(eta: Option<&NoiseField>, grid: &Grid1D) -> Result<(), DynamicsError> {
    match eta {
        Some(e) if e.grid() != grid => Err(DynamicsError::GridMismatch),
        _ => Ok(()),
    }
}

/// Applies `∂n/∂t = coupling·η` over one step as a density increment.
///
/// The increment is tapered by `w = n²/(n² + n_f²)` with
/// `n_f = max(4·coupling·dt·max|η|, ε_A²)`, which keeps `n' ≥ n/2`. With
/// `project` the weighted mean of `η` is removed first so the increment sums to
/// zero. Returns the number of points below `n_f`.
pub(crate) fn apply_noise_to_density(
    density: &mut [f64],
    eta: &[f64],
    coupling: f64,
    dt: f64,
    project: bool,
) -> usize {
    let eta_max = eta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if eta_max == 0.0 {
        return 0;
    }
    let n_max = density.iter().fold(0.0_f64, |m, &v| m.max(v));
    let n_f = (4.0 * coupling * dt * eta_max).max(AMPLITUDE_FLOOR * AMPLITUDE_FLOOR * n_max);
    let weights: Vec<f64> = density
        .iter()
        .map(|&n| n * n / (n * n + n_f * n_f))
        .collect();
    let offset = if project {
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter().zip(eta).map(|(w, e)| w * e).sum::<f64>() / total
        } else {
            0.0
        }
    } else {
        0.0
    };
    let mut hits = 0;
    for ((n, w), e) in density.iter_mut().zip(&weights).zip(eta) {
        if *n < n_f {
            hits += 1;
        }
        *n = (*n + coupling * dt * w * (e - offset)).max(0.0);
    }
    hits
}

/// Strang split-step for `iħψ_t = −(ħ²/2m)ψ'' + Vψ`, followed by the noise
/// substep and renormalization.
#[derive(Debug, Clone)]
pub struct SchrodingerStepper {
    spectral: Spectral,
    kinetic_half: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
    dt: f64,
    coupling: f64,
    project: bool,
}

impl SchrodingerStepper {
    pub fn new(
        grid: Grid1D,
        potential: &PotentialSpec,
        consts: &PhysicalConstants,
        dt: f64,
        zero_mean_projection: bool,
    ) -> Result<Self, DynamicsError> {
        check_dt(dt)?;
        let spectral = Spectral::new(grid);
        let kinetic_half = spectral
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -consts.hbar * k * k * dt / (4.0 * consts.mass)))
            .collect();
        let potential_phase = potential
            .values(&grid, consts)?
            .values()
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / consts.hbar))
            .collect();
        Ok(Self {
            spectral,
            kinetic_half,
            potential_phase,
            dt,
            coupling: 2.0 / consts.hbar,
            project: zero_mean_projection,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid1D {
        self.spectral.grid()
    }

    fn kinetic(&self, psi: &mut [Complex64]) {
        self.spectral.forward(psi);
        psi.iter_mut()
            .zip(&self.kinetic_half)
            .for_each(|(z, k)| *z *= k);
        self.spectral.inverse(psi);
    }

    /// Deterministic part only.
    pub fn strang(&self, psi: &mut [Complex64]) {
        self.kinetic(psi);
        psi.iter_mut()
            .zip(&self.potential_phase)
            .for_each(|(z, v)| *z *= v);
        self.kinetic(psi);
    }

    pub fn step(
        &self,
        psi: &mut [Complex64],
        eta: Option<&NoiseField>,
    ) -> Result<StepReport, DynamicsError> {
        check_noise(eta, self.spectral.grid())?;
        let dq = self.spectral.grid().spacing();
        let norm_before: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq;
        self.strang(psi);

        let mut floor_hits = 0;
        if let Some(eta) = eta.filter(|e| !e.is_zero()) {
            let before: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            let mut after = before.clone();
            floor_hits = apply_noise_to_density(
                &mut after,
                eta.values().values(),
                self.coupling,
                self.dt,
                self.project,
            );
            for ((z, n0), n1) in psi.iter_mut().zip(&before).zip(&after) {
                if *n0 > 0.0 {
                    *z *= (n1 / n0).sqrt();
                }
            }
        }

        let norm_after: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq;
        let norm_drift = norm_after / norm_before - 1.0;
        if !norm_drift.is_finite() || psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(DynamicsError::Unstable("non-finite wave function".into()));
        }
        if norm_drift.abs() > MAX_STEP_NORM_DRIFT {
            return Err(DynamicsError::StepRejected { norm_drift });
        }
        let s = (norm_before / norm_after).sqrt();
        psi.iter_mut().for_each(|z| *z *= s);
        Ok(StepReport {
            norm_drift,
            floor_hits,
            dt_used: self.dt,
        })
    }
}

/// One stochastic Schrödinger step on a complex field.
pub fn step_schrodinger(
    psi: &ComplexField,
    potential: &PotentialSpec,
    eta: Option<&NoiseField>,
    dt: f64,
    consts: &PhysicalConstants,
    zero_mean_projection: bool,
) -> Result<(ComplexField, StepReport), DynamicsError> {
    let stepper =
        SchrodingerStepper::new(*psi.grid(), potential, consts, dt, zero_mean_projection)?;
    let mut values = psi.values().to_vec();
    let report = stepper.step(&mut values, eta)?;
    Ok((ComplexField::new(*psi.grid(), values)?, report))
}

/// Classical RK4 for the amplitude/action pair
/// `∂S/∂t = −V + (ħ²/2m)A''/A − S'²/2m`,
/// `∂A/∂t = −A'S'/m − AS''/2m`,
/// followed by the noise substep on `n = A²`.
///
/// Both right-hand sides come from `l = exp(−iS/ħ)·∂²(A·exp(iS/ħ))`, since
/// `Re l = A'' − AS'²/ħ²` and `Im l = (2A'S' + AS'')/ħ`. This keeps every
/// spectral derivative acting on a smooth periodic field even when `S` winds
/// or grows quadratically.
#[derive(Debug, Clone)]
pub struct HydroStepper {
    spectral: Spectral,
    potential: Vec<f64>,
    dt: f64,
    hbar: f64,
    mass: f64,
    coupling: f64,
    project: bool,
}

impl HydroStepper {
    pub fn new(
        grid: Grid1D,
        potential: &PotentialSpec,
        consts: &PhysicalConstants,
        dt: f64,
        zero_mean_projection: bool,
    ) -> Result<Self, DynamicsError> {
        check_dt(dt)?;
        let bound = HYDRO_STABILITY * consts.mass * grid.spacing().powi(2) / consts.hbar;
        if dt > bound {
            return Err(DynamicsError::TimeStep {
                dt,
                bound: Some(bound),
            });
        }
        Ok(Self {
            spectral: Spectral::new(grid),
            potential: potential.values(&grid, consts)?.into_values(),
            dt,
            hbar: consts.hbar,
            mass: consts.mass,
            coupling: 2.0,
            project: zero_mean_projection,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid1D {
        self.spectral.grid()
    }

    fn rhs(&self, a: &[f64], s: &[f64], da: &mut [f64], ds: &mut [f64]) {
        let (hbar, m) = (self.hbar, self.mass);
        let a_max = a.iter().fold(0.0_f64, |x, &v| x.max(v));
        let a_floor = HYDRO_DIVISION_FLOOR * a_max;
        let phase: Vec<Complex64> = s.iter().map(|&s| Complex64::cis(s / hbar)).collect();
        let psi: Vec<Complex64> = a.iter().zip(&phase).map(|(&a, z)| z * a).collect();
        let d2 = self.spectral.derivative_complex(&psi, 2);
        for j in 0..a.len() {
            let l = d2[j] * phase[j].conj();
            da[j] = -hbar / (2.0 * m) * l.im;
            ds[j] = -self.potential[j] + hbar * hbar / (2.0 * m) * l.re / a[j].max(a_floor);
        }
    }

    /// Deterministic RK4 step; returns the number of points clipped at `A = 0`.
    pub fn rk4(&self, a: &mut [f64], s: &mut [f64]) -> usize {
        let n = a.len();
        let dt = self.dt;
        let mut k_a = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut k_s = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut a_tmp = vec![0.0; n];
        let mut s_tmp = vec![0.0; n];
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for stage in 0..4 {
            if stage == 0 {
                a_tmp.copy_from_slice(a);
                s_tmp.copy_from_slice(s);
            } else {
                let h = offsets[stage] * dt;
                for j in 0..n {
                    a_tmp[j] = a[j] + h * k_a[stage - 1][j];
                    s_tmp[j] = s[j] + h * k_s[stage - 1][j];
                }
            }
            let (ka, ks) = (&mut k_a[stage], &mut k_s[stage]);
            self.rhs(&a_tmp, &s_tmp, ka, ks);
        }
        let mut clipped = 0;
        for j in 0..n {
            a[j] += dt / 6.0 * (k_a[0][j] + 2.0 * k_a[1][j] + 2.0 * k_a[2][j] + k_a[3][j]);
            s[j] += dt / 6.0 * (k_s[0][j] + 2.0 * k_s[1][j] + 2.0 * k_s[2][j] + k_s[3][j]);
            if a[j] < 0.0 {
                a[j] = 0.0;
                clipped += 1;
            }
        }
        clipped
    }

    pub fn step(
        &self,
        a: &mut [f64],
        s: &mut [f64],
        eta: Option<&NoiseField>,
    ) -> Result<StepReport, DynamicsError> {
        check_noise(eta, self.spectral.grid())?;
        let dq = self.spectral.grid().spacing();
        let norm_before: f64 = a.iter().map(|x| x * x).sum::<f64>() * dq;
        let mut floor_hits = self.rk4(a, s);

        if let Some(eta) = eta.filter(|e| !e.is_zero()) {
            let mut density: Vec<f64> = a.iter().map(|x| x * x).collect();
            floor_hits += apply_noise_to_density(
                &mut density,
                eta.values().values(),
                self.coupling,
                self.dt,
                self.project,
            );
            a.iter_mut().zip(&density).for_each(|(x, n)| *x = n.sqrt());
        }

        if a.iter().chain(s.iter()).any(|v| !v.is_finite()) {
            return Err(DynamicsError::Unstable(
                "non-finite amplitude or action".into(),
            ));
        }
        let norm_after: f64 = a.iter().map(|x| x * x).sum::<f64>() * dq;
        let norm_drift = norm_after / norm_before - 1.0;
        if norm_drift.abs() > MAX_STEP_NORM_DRIFT {
            return Err(DynamicsError::Unstable(format!(
                "norm changed by {norm_drift:e} in one step"
            )));
        }
        if !self.project {
            let scale = (norm_before / norm_after).sqrt();
            a.iter_mut().for_each(|x| *x *= scale);
        }
        Ok(StepReport {
            norm_drift,
            floor_hits,
            dt_used: self.dt,
        })
    }
}

/// One step of the amplitude/action pair.
pub fn step_hydrodynamic(
    state: &WaveState,
    potential: &PotentialSpec,
    eta: Option<&NoiseField>,
    dt: f64,
    consts: &PhysicalConstants,
    zero_mean_projection: bool,
) -> Result<(WaveState, StepReport), DynamicsError> {
    let grid = *state.grid();
    let stepper = HydroStepper::new(grid, potential, consts, dt, zero_mean_projection)?;
    let mut a = state.amplitude().values().to_vec();
    let mut s = state.action().values().to_vec();
    let report = stepper.step(&mut a, &mut s, eta)?;
    let next = WaveState::new(
        RealField::new(grid, a)?,
        RealField::new(grid, s)?,
        state.time() + dt,
    )?;
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitialState;
    use crate::noise::{NoiseSampler, NoiseSpec};

    fn units() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn tapered_increment_keeps_half_the_density() {
        let density0: Vec<f64> = (0..64)
            .map(|j| (-(j as f64 - 32.0).powi(2) / 20.0).exp())
            .collect();
        let eta: Vec<f64> = (0..64)
            .map(|j| 50.0 * ((j * 7919) % 13) as f64 - 300.0)
            .collect();
        for project in [true, false] {
            let mut d = density0.clone();
            apply_noise_to_density(&mut d, &eta, 2.0, 0.01, project);
            for (a, b) in d.iter().zip(&density0) {
                assert!(*a >= 0.5 * b - 1e-15);
            }
            if project {
                let before: f64 = density0.iter().sum();
                let after: f64 = d.iter().sum();
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_noise_is_a_no_op() {
        let mut d = vec![0.3, 0.2, 0.0, 1.0];
        assert_eq!(apply_noise_to_density(&mut d, &[0.0; 4], 2.0, 0.1, true), 0);
        assert_eq!(d, vec![0.3, 0.2, 0.0, 1.0]);
    }

    #[test]
    fn hydro_rejects_unstable_dt() {
        let grid = Grid1D::new(20.0, 256).unwrap();
        let dq2 = grid.spacing().powi(2);
        assert!(HydroStepper::new(grid, &PotentialSpec::Free, &units(), 0.6 * dq2, true).is_err());
        assert!(HydroStepper::new(grid, &PotentialSpec::Free, &units(), 0.4 * dq2, true).is_ok());
    }

    #[test]
    fn plane_wave_translates_uniformly() {
        let grid = Grid1D::new(10.0, 64).unwrap();
        let p0 = 2.0 * std::f64::consts::PI * 2.0 / 10.0;
        let init = InitialState::PlaneWave { momentum: p0 };
        let state = init.prepare(&grid, &PotentialSpec::Free, &units()).unwrap();
        let dt = default_dt(&grid, &units());
        let (next, _) =
            step_hydrodynamic(&state, &PotentialSpec::Free, None, dt, &units(), true).unwrap();
        for (a0, a1) in state
            .amplitude()
            .values()
            .iter()
            .zip(next.amplitude().values())
        {
            assert!((a0 - a1).abs() < 1e-13);
        }
        // S advances by −p₀²/2m·dt everywhere.
        for (s0, s1) in state.action().values().iter().zip(next.action().values()) {
            assert!((s1 - s0 + p0 * p0 / 2.0 * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_schrodinger_step_conserves_norm_before_renormalization() {
        let grid = Grid1D::new(20.0, 128).unwrap();
        let pot = PotentialSpec::Harmonic { omega: 1.0 };
        let c = units();
        let spec = NoiseSpec {
            theta: 0.05,
            seed: 11,
            ..Default::default()
        };
        let dt = default_dt(&grid, &c);
        let mut sampler = NoiseSampler::new(grid, spec, &c, 0).unwrap();
        let stepper = SchrodingerStepper::new(grid, &pot, &c, dt, true).unwrap();
        let mut psi = InitialState::GroundState
            .prepare_complex(&grid, &pot, &c)
            .unwrap()
            .into_values();
        for k in 0..200 {
            let eta = sampler.sample(k as f64 * dt, dt).unwrap();
            let r = stepper.step(&mut psi, Some(&eta)).unwrap();
            assert!(r.norm_drift.abs() < 1e-13, "{}", r.norm_drift);
        }
    }
}
