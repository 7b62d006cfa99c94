//! Quantum potential `V_qu = −(ħ²/2m)·A''/A`, its force, the mean quantum
//! energy, and the long-range diagnostics of the quantum force.

use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::fit::log_log_fit;
use crate::grid::{Flagged, RealField, Spectral, WaveState, AMPLITUDE_FLOOR};

/// Above this RMS log-residual a tail is not treated as a power law.
pub const POWER_LAW_RESIDUAL: f64 = 0.1;

/// Points at the grid edge left out of tail fits.
const EDGE_EXCLUSION: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangeError {
    #[error("correlation length must be positive and finite, got {0}")]
    CorrelationLength(f64),
    #[error("tail window [{lo}, {hi}] spans less than one decade")]
    ShortTail { lo: f64, hi: f64 },
    #[error("quantum-force profile vanishes over the tail window")]
    VanishingTail,
}

fn floored_ratio(num: &[f64], amplitude: &[f64], floor: f64) -> Vec<f64> {
    num.iter()
        .zip(amplitude)
        .map(|(n, &a)| n / a.max(floor))
        .collect()
}

/// Amplitude scaled to unit maximum, so the spectral round-off pattern does
/// not depend on the overall scale of `A`, and the matching floor.
fn unit_amplitude(state: &WaveState) -> (Vec<f64>, f64) {
    let peak = state.amplitude().max_abs();
    let a = state.amplitude().values();
    if peak > 0.0 {
        (a.iter().map(|x| x / peak).collect(), AMPLITUDE_FLOOR)
    } else {
        (a.to_vec(), 0.0)
    }
}

fn node_flags(amplitude: &[f64], floor: f64) -> Vec<usize> {
    amplitude
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < floor || a == 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Quantum potential on the grid; points where `A < ε_A` are flagged.
pub fn vqu(state: &WaveState, consts: &PhysicalConstants) -> Flagged<RealField> {
    let spectral = Spectral::new(*state.grid());
    vqu_with(&spectral, state, consts)
}

pub fn vqu_with(
    spectral: &Spectral,
    state: &WaveState,
    consts: &PhysicalConstants,
) -> Flagged<RealField> {
    let (a, floor) = unit_amplitude(state);
    let d2 = spectral.derivative_real(&a, 2);
    let pref = -consts.kinetic_prefactor();
    let values = floored_ratio(&d2, &a, floor)
        .into_iter()
        .map(|r| pref * r)
        .collect();
    Flagged {
        value: RealField::new(*state.grid(), values).expect("floored ratio is finite"),
        flagged: node_flags(&a, floor),
    }
}

/// `−∂V_qu/∂q`, expanded as `(ħ²/2m)·(A'''/A − A''·A'/A²)` so that the
/// derivative never passes through the floored quotient.
pub fn quantum_force(state: &WaveState, consts: &PhysicalConstants) -> Flagged<RealField> {
    let spectral = Spectral::new(*state.grid());
    let (a, floor) = unit_amplitude(state);
    let [d1, d2, d3] = spectral.derivatives_real(&a, [1, 2, 3]);
    let pref = consts.kinetic_prefactor();
    let values = a
        .iter()
        .zip(d1.iter().zip(d2.iter().zip(&d3)))
        .map(|(&a, (d1, (d2, d3)))| {
            let a = a.max(floor);
            pref * (d3 / a - d2 * d1 / (a * a))
        })
        .collect();
    Flagged {
        value: RealField::new(*state.grid(), values).expect("floored ratio is finite"),
        flagged: node_flags(&a, floor),
    }
}

/// `H̄_qu = ∫ n·V_qu dq = −(ħ²/2m)∫ A·A'' dq`.
pub fn mean_quantum_energy(state: &WaveState, consts: &PhysicalConstants) -> f64 {
    let spectral = Spectral::new(*state.grid());
    mean_quantum_energy_with(&spectral, state, consts)
}

pub fn mean_quantum_energy_with(
    spectral: &Spectral,
    state: &WaveState,
    consts: &PhysicalConstants,
) -> f64 {
    let a = state.amplitude().values();
    let d2 = spectral.derivative_real(a, 2);
    let s: f64 = a.iter().zip(&d2).map(|(a, d)| a * d).sum();
    -consts.kinetic_prefactor() * s * state.grid().spacing()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `ε` in `|∂V_qu/∂q| ∝ |q|^(−ε)`.
    pub exponent: f64,
    pub residual: f64,
    pub power_law: bool,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeStatus {
    Converged,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub status: RangeStatus,
    pub lambda_q: Option<f64>,
    /// `∫_{λ_c}^∞ |q⁻¹·∂V_qu/∂q| dq`.
    pub integral: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub fit_residual: Option<f64>,
    pub converged: bool,
}

impl RangeReport {
    fn inconclusive(fit: Option<DecayFit>) -> Self {
        Self {
            status: RangeStatus::Inconclusive,
            lambda_q: None,
            integral: None,
            decay_exponent: fit.map(|f| f.exponent),
            fit_residual: fit.map(|f| f.residual),
            converged: false,
        }
    }
}

/// Four-point Lagrange interpolation on uniform, non-periodic samples.
fn cubic_at(x: &[f64], y: &[f64], at: f64) -> f64 {
    let h = x[1] - x[0];
    let k = (((at - x[0]) / h).floor() as usize).clamp(1, x.len() - 3);
    let t = (at - x[k]) / h;
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    (0..4).map(|i| w[i] * y[k - 1 + i]).sum()
}

/// Gradient samples on the positive half-axis, `q ∈ [3dq, q_{N−4}]`, from
/// fourth-order central differences. The profile need not be periodic.
fn positive_half_gradient(profile: &RealField) -> (Vec<f64>, Vec<f64>) {
    let grid = profile.grid();
    let n = grid.n_points();
    let dq = grid.spacing();
    let v = profile.values();
    let first = n / 2 + 3;
    let last = n - 1 - EDGE_EXCLUSION;
    let mut q = Vec::new();
    let mut dv = Vec::new();
    for j in first..=last {
        q.push(grid.point(j));
        dv.push((v[j - 2] - 8.0 * v[j - 1] + 8.0 * v[j + 1] - v[j + 2]) / (12.0 * dq));
    }
    (q, dv)
}

fn fit_tail(q: &[f64], dv: &[f64]) -> Result<DecayFit, RangeError> {
    let hi = *q.last().ok_or(RangeError::ShortTail { lo: 0.0, hi: 0.0 })?;
    // Widen to the nearest sample at or below hi/10 so the window covers a
    // full decade.
    let lo = match q.iter().rev().find(|&&x| x <= hi / 10.0 * (1.0 + 1e-12)) {
        Some(&lo) => lo,
        None => return Err(RangeError::ShortTail { lo: q[0], hi }),
    };
    let (x, y): (Vec<f64>, Vec<f64>) = q
        .iter()
        .zip(dv)
        .filter(|(&q, &d)| q >= lo && d != 0.0)
        .map(|(&q, &d)| (q, d.abs()))
        .unzip();
    if x.len() < 4 || x[x.len() - 1] / x[0] < 10.0 * (1.0 - 1e-9) {
        return Err(RangeError::VanishingTail);
    }
    let fit = log_log_fit(&x, &y);
    Ok(DecayFit {
        exponent: -fit.slope,
        residual: fit.residual,
        power_law: fit.residual < POWER_LAW_RESIDUAL,
        window: (lo, hi),
    })
}

/// Fits `|∂V_qu/∂q| ∝ q^(−ε)` over `q ∈ [q_hi/10, q_hi]` on the positive
/// half-axis, where `q_hi` is the fourth point from the grid edge.
pub fn decay_exponent(profile: &RealField) -> Result<DecayFit, RangeError> {
    let (q, dv) = positive_half_gradient(profile);
    fit_tail(&q, &dv)
}

/// Mean weighted range of the quantum force,
/// `λ_q = 2·∫_{λ_c}^∞ |q⁻¹·V_qu'| dq / (λ_c⁻¹·|V_qu'(λ_c)|)`.
///
/// The integral runs by Simpson's rule to `q_hi` and is closed with the fitted
/// tail `|V_qu'(q_hi)|/ε`. A fitted `ε ≤ 0` makes it divergent.
pub fn interaction_range(profile: &RealField, lambda_c: f64) -> Result<RangeReport, RangeError> {
    if !(lambda_c.is_finite() && lambda_c > 0.0) {
        return Err(RangeError::CorrelationLength(lambda_c));
    }
    let (q, dv) = positive_half_gradient(profile);
    let fit = match fit_tail(&q, &dv) {
        Ok(fit) => fit,
        Err(_) => return Ok(RangeReport::inconclusive(None)),
    };
    if fit.exponent <= 0.0 {
        return Ok(RangeReport {
            status: RangeStatus::Divergent,
            lambda_q: None,
            integral: None,
            decay_exponent: Some(fit.exponent),
            fit_residual: Some(fit.residual),
            converged: false,
        });
    }
    let q_hi = q[q.len() - 1];
    if !fit.power_law || lambda_c < q[0] || lambda_c >= q_hi {
        return Ok(RangeReport::inconclusive(Some(fit)));
    }

    let g: Vec<f64> = q.iter().zip(&dv).map(|(q, d)| d.abs() / q).collect();
    let dv_c = cubic_at(&q, &dv, lambda_c).abs();
    let g_c = dv_c / lambda_c;
    let k = q.partition_point(|&x| x < lambda_c);

    // Partial cell [λ_c, q_k], then Simpson over the uniform samples, with a
    // trapezoid on a leftover odd interval at the far end.
    let h = q[1] - q[0];
    let mut integral = 0.5 * (g_c + g[k]) * (q[k] - lambda_c);
    let intervals = q.len() - 1 - k;
    let even = intervals - intervals % 2;
    for j in (k..k + even).step_by(2) {
        integral += h / 3.0 * (g[j] + 4.0 * g[j + 1] + g[j + 2]);
    }
    if intervals % 2 == 1 {
        let j = q.len() - 2;
        integral += 0.5 * h * (g[j] + g[j + 1]);
    }
    integral += dv[dv.len() - 1].abs() / fit.exponent;

    let denominator = dv_c / lambda_c;
    if denominator == 0.0 {
        return Ok(RangeReport::inconclusive(Some(fit)));
    }
    let lambda_q = 2.0 * integral / denominator;
    Ok(RangeReport {
        status: RangeStatus::Converged,
        lambda_q: Some(lambda_q),
        integral: Some(integral),
        decay_exponent: Some(fit.exponent),
        fit_residual: Some(fit.residual),
        converged: lambda_q.is_finite() && lambda_q > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1D, RealField, WaveState};

    fn gaussian_state(grid: Grid1D, sigma: f64) -> WaveState {
        let c = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        let a = RealField::from_fn(grid, |q| c * (-q * q / (4.0 * sigma * sigma)).exp()).unwrap();
        WaveState::new(a, RealField::zeros(grid), 0.0).unwrap()
    }

    fn units() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn gaussian_quantum_potential_is_quadratic() {
        let grid = Grid1D::new(40.0, 512).unwrap();
        let state = gaussian_state(grid, 1.0);
        let v = vqu(&state, &units());
        let f = quantum_force(&state, &units());
        for (j, q) in grid.points().into_iter().enumerate() {
            if q.abs() < 6.0 {
                assert!((v.value.values()[j] - (0.25 - q * q / 8.0)).abs() < 1e-8);
                assert!((f.value.values()[j] - q / 4.0).abs() < 1e-8);
            }
        }
        assert!((v.value.values()[256] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_amplitude_has_no_quantum_potential() {
        let grid = Grid1D::new(10.0, 64).unwrap();
        let a = RealField::from_fn(grid, |_| 10f64.sqrt().recip()).unwrap();
        let state = WaveState::new(a, RealField::zeros(grid), 0.0).unwrap();
        assert!(vqu(&state, &units()).value.max_abs() < 1e-14);
        assert!(quantum_force(&state, &units()).value.max_abs() < 1e-14);
        assert!(mean_quantum_energy(&state, &units()).abs() < 1e-14);
    }

    #[test]
    fn harmonic_ground_state_balances_potential() {
        let omega: f64 = 2.0;
        let grid = Grid1D::new(20.0, 256).unwrap();
        let state = gaussian_state(grid, (1.0 / (2.0 * omega)).sqrt());
        let v = vqu(&state, &units());
        let f = quantum_force(&state, &units());
        for (j, q) in grid.points().into_iter().enumerate() {
            // exp(−q²) ≥ 1e-4: beyond that, round-off in A'' dominates.
            if q.abs() < 3.0 {
                let total = 0.5 * omega * omega * q * q + v.value.values()[j];
                assert!((total - 1.0).abs() < 1e-8, "q={q} total={total}");
                let classical = -omega * omega * q;
                assert!((f.value.values()[j] + classical).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mean_quantum_energy_scales_inverse_square() {
        let grid = Grid1D::new(40.0, 512).unwrap();
        let expected = [(0.5, 0.5), (1.0, 0.125), (2.0, 0.03125)];
        for (sigma, e) in expected {
            let h = mean_quantum_energy(&gaussian_state(grid, sigma), &units());
            assert!((h - e).abs() < 1e-10, "sigma={sigma} h={h}");
            assert!((h * sigma * sigma - 0.125).abs() < 1e-6);
        }
    }

    #[test]
    fn decay_exponent_examples() {
        let grid = Grid1D::new(400.0, 4096).unwrap();
        // V_qu = −1/q has gradient q^(−2).
        let p = RealField::from_fn(grid, |q| if q > 0.0 { -1.0 / q } else { 0.0 }).unwrap();
        let fit = decay_exponent(&p).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.05, "{fit:?}");
        assert!(fit.power_law);

        let p = RealField::from_fn(grid, |q| 0.25 - q * q / 8.0).unwrap();
        assert!((decay_exponent(&p).unwrap().exponent + 1.0).abs() < 1e-9);

        let p = RealField::from_fn(grid, |q| 3.0 * q).unwrap();
        assert!(decay_exponent(&p).unwrap().exponent.abs() < 1e-9);

        let p = RealField::zeros(grid);
        assert_eq!(decay_exponent(&p), Err(RangeError::VanishingTail));
    }

    #[test]
    fn quadratic_profile_diverges() {
        let grid = Grid1D::new(40.0, 512).unwrap();
        let p = RealField::from_fn(grid, |q| 0.25 - q * q / 8.0).unwrap();
        let r = interaction_range(&p, 1.0).unwrap();
        assert_eq!(r.status, RangeStatus::Divergent);
        assert!(!r.converged);
        assert!(r.lambda_q.is_none());
    }

    #[test]
    fn oversized_correlation_length_is_inconclusive() {
        let grid = Grid1D::new(40.0, 512).unwrap();
        let p = RealField::from_fn(grid, |q| if q > 0.0 { -1.0 / q } else { 0.0 }).unwrap();
        let r = interaction_range(&p, 25.0).unwrap();
        assert_eq!(r.status, RangeStatus::Inconclusive);
        assert!(interaction_range(&p, -1.0).is_err());
    }

    #[test]
    fn inverse_square_gradient_matches_closed_form() {
        // |V'| = q^(−2): ∫_{λ}^∞ q^(−3) dq = 1/(2λ²), denominator λ^(−3),
        // so λ_q = λ.
        let grid = Grid1D::new(800.0, 8192).unwrap();
        let p = RealField::from_fn(grid, |q| if q > 0.0 { -1.0 / q } else { 0.0 }).unwrap();
        let r = interaction_range(&p, 2.0).unwrap();
        assert_eq!(r.status, RangeStatus::Converged);
        let lq = r.lambda_q.unwrap();
        assert!((lq - 2.0).abs() / 2.0 < 1e-3, "{lq}");
    }
}
