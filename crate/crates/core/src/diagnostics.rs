//! Observables, closed-form uncertainty relations, the classical-limit
//! decomposition and scaling fits.

use num_complex::Complex64;
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::dynamics::{DynamicsError, PotentialSpec, TrajectoryRecord};
use crate::fit::log_log_fit;
use crate::grid::{from_polar, Spectral, WaveState};
use crate::noise::{correlation_length, NoiseError};

/// Smallest ensemble accepted for energy statistics.
pub const MIN_ENSEMBLE: usize = 16;

/// Fraction of each record series discarded as transient.
pub const TRANSIENT_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("theta must be positive, got {0}")]
    Theta(f64),
    #[error("{got} ensemble members supplied, at least {need} required")]
    TooFewMembers { got: usize, need: usize },
    #[error("scaling fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("scaling fit points must span a decade, span is {0}")]
    ShortSpan(f64),
    #[error("scaling fit needs positive finite values, point {0} is not")]
    NonPositive(usize),
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub norm: f64,
    pub mean_q: f64,
    pub sigma_q: f64,
    pub mean_p: f64,
    pub sigma_p: f64,
    pub mean_h: f64,
    pub h_qu: f64,
    pub norm_drift: f64,
}

/// Moments of a complex field with expectation values divided by its norm.
/// `⟨H⟩ = ∫[(ħ²/2m)|ψ'|² + V·n]`, which integrates by parts to
/// `∫n·[S'²/2m + V + V_qu]`.
pub(crate) fn observables_psi(
    spectral: &Spectral,
    psi: &[Complex64],
    potential: &[f64],
    consts: &PhysicalConstants,
    t: f64,
    norm_drift: f64,
) -> DiagnosticsRecord {
    let grid = spectral.grid();
    let dq = grid.spacing();
    let d1 = spectral.derivative_complex(psi, 1);
    let amplitude: Vec<f64> = psi.iter().map(|z| z.norm()).collect();
    let d2a = spectral.derivative_real(&amplitude, 2);

    let (mut n0, mut q1, mut q2, mut p1, mut p2, mut v, mut hq) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..psi.len() {
        let q = grid.point(j);
        let n = psi[j].norm_sqr();
        n0 += n;
        q1 += q * n;
        q2 += q * q * n;
        p1 += (psi[j].conj() * d1[j]).im;
        p2 += d1[j].norm_sqr();
        v += potential[j] * n;
        hq += amplitude[j] * d2a[j];
    }
    let norm = n0 * dq;
    let (hbar, k) = (consts.hbar, consts.kinetic_prefactor());
    let mean_q = q1 / n0;
    let mean_p = hbar * p1 / n0;
    let mean_p2 = hbar * hbar * p2 / n0;
    DiagnosticsRecord {
        t,
        norm,
        mean_q,
        sigma_q: (q2 / n0 - mean_q * mean_q).max(0.0).sqrt(),
        mean_p,
        sigma_p: (mean_p2 - mean_p * mean_p).max(0.0).sqrt(),
        mean_h: k * p2 / n0 + v / n0,
        h_qu: -k * hq / n0,
        norm_drift,
    }
}

pub fn observables(
    state: &WaveState,
    potential: &PotentialSpec,
    consts: &PhysicalConstants,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let grid = *state.grid();
    let spectral = Spectral::new(grid);
    let v = potential
        .values(&grid, consts)
        .map_err(DiagnosticsError::Dynamics)?;
    let psi = from_polar(state, consts.hbar);
    Ok(observables_psi(
        &spectral,
        psi.values(),
        v.values(),
        consts,
        state.time(),
        0.0,
    ))
}

/// Closed-form noise-induced uncertainties at one `Θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyReport {
    pub theta: f64,
    pub lambda_c: f64,
    /// `kΘ`.
    pub delta_e_theta: f64,
    /// `√(2mc²kΘ)`.
    pub delta_e: f64,
    /// `√(2mkΘ)`.
    pub delta_p: f64,
    /// `λ_c/c`.
    pub tau_min: f64,
    pub product_e_t: f64,
    pub product_l_p: f64,
}

pub fn uncertainty_report(
    theta: f64,
    consts: &PhysicalConstants,
) -> Result<UncertaintyReport, DiagnosticsError> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(DiagnosticsError::Theta(theta));
    }
    let lambda_c = correlation_length(theta, consts)?;
    let kt = consts.boltzmann * theta;
    let delta_e = (2.0 * consts.mass * consts.light_speed * consts.light_speed * kt).sqrt();
    let delta_p = (2.0 * consts.mass * kt).sqrt();
    let tau_min = lambda_c / consts.light_speed;
    Ok(UncertaintyReport {
        theta,
        lambda_c,
        delta_e_theta: kt,
        delta_e,
        delta_p,
        tau_min,
        product_e_t: delta_e * tau_min,
        product_l_p: lambda_c * delta_p,
    })
}

/// Splits tracer momenta and actions into a Newtonian part and a remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalDecomposition {
    pub times: Vec<f64>,
    /// Particle-averaged classical momentum.
    pub p_cl: Vec<f64>,
    /// `[member][time]`: particle average of `p_i − p_cl,i`.
    pub delta_p: Vec<Vec<f64>>,
    pub delta_p_mean: Vec<f64>,
    pub delta_p_standard_error: Vec<f64>,
    /// Particle-averaged classical action.
    pub s_cl: Vec<f64>,
    /// Ensemble and particle average of `S_i − S_cl,i`.
    pub delta_s: Vec<f64>,
    /// RMS of `p_i − p_cl,i` over members, times and particles, divided by
    /// the RMS of `p_cl,i`.
    pub relative_fluctuation: f64,
    pub theta: f64,
    /// Domain length over `λ_c`; zero in the deterministic limit.
    pub scale_ratio: f64,
}

/// Compares the tracer histories of each noisy member with a Newtonian
/// reference started from the same particles.
pub fn classical_decomposition(
    noisy_runs: &[Vec<TrajectoryRecord>],
    classical: &[TrajectoryRecord],
    theta: f64,
    length: f64,
    consts: &PhysicalConstants,
) -> Result<ClassicalDecomposition, DiagnosticsError> {
    let mismatch = |m: String| Err(DiagnosticsError::Mismatch(m));
    if noisy_runs.is_empty() {
        return mismatch("no noisy runs".into());
    }
    for (k, run) in noisy_runs.iter().enumerate() {
        if run.len() != classical.len() {
            return mismatch(format!(
                "member {k} has {} records, reference has {}",
                run.len(),
                classical.len()
            ));
        }
        for (a, b) in run.iter().zip(classical) {
            if (a.t - b.t).abs() > 1e-9 * b.t.abs().max(1.0) || a.momenta.len() != b.momenta.len() {
                return mismatch(format!(
                    "member {k} differs from the reference at t = {}",
                    b.t
                ));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let members = noisy_runs.len() as f64;
    let times: Vec<f64> = classical.iter().map(|r| r.t).collect();
    let p_cl: Vec<f64> = classical.iter().map(|r| mean(&r.momenta)).collect();
    let s_cl: Vec<f64> = classical.iter().map(|r| mean(&r.action)).collect();

    let mut delta_p = Vec::with_capacity(noisy_runs.len());
    let (mut sq_dp, mut sq_p, mut count) = (0.0, 0.0, 0usize);
    for run in noisy_runs {
        let mut series = Vec::with_capacity(times.len());
        for (rec, cl) in run.iter().zip(classical) {
            let d: Vec<f64> = rec
                .momenta
                .iter()
                .zip(&cl.momenta)
                .map(|(a, b)| a - b)
                .collect();
            sq_dp += d.iter().map(|x| x * x).sum::<f64>();
            sq_p += cl.momenta.iter().map(|x| x * x).sum::<f64>();
            count += d.len();
            series.push(mean(&d));
        }
        delta_p.push(series);
    }
    let delta_p_mean: Vec<f64> = (0..times.len())
        .map(|t| delta_p.iter().map(|s| s[t]).sum::<f64>() / members)
        .collect();
    let delta_p_standard_error = (0..times.len())
        .map(|t| {
            if noisy_runs.len() < 2 {
                return 0.0;
            }
            let m = delta_p_mean[t];
            let var = delta_p.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / (members - 1.0);
            (var / members).sqrt()
        })
        .collect();
    let delta_s = (0..times.len())
        .map(|t| {
            noisy_runs
                .iter()
                .map(|run| mean(&run[t].action) - s_cl[t])
                .sum::<f64>()
                / members
        })
        .collect();
    let rms_dp = (sq_dp / count.max(1) as f64).sqrt();
    let rms_p = (sq_p / count.max(1) as f64).sqrt();
    let lambda_c = if theta > 0.0 {
        correlation_length(theta, consts)?
    } else {
        f64::INFINITY
    };
    Ok(ClassicalDecomposition {
        times,
        p_cl,
        delta_p,
        delta_p_mean,
        delta_p_standard_error,
        s_cl,
        delta_s,
        relative_fluctuation: if rms_p > 0.0 {
            rms_dp / rms_p
        } else {
            f64::INFINITY
        },
        theta,
        scale_ratio: length / lambda_c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares power law `y = prefactor·Θ^exponent` through `(Θ, y)` pairs.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit, DiagnosticsError> {
    if points.len() < 4 {
        return Err(DiagnosticsError::TooFewPoints(points.len()));
    }
    if let Some(i) = points
        .iter()
        .position(|&(x, y)| !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0))
    {
        return Err(DiagnosticsError::NonPositive(i));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(DiagnosticsError::ShortSpan(hi / lo));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = log_log_fit(&x, &y);
    Ok(ScalingFit {
        exponent: fit.slope,
        prefactor: fit.intercept.exp(),
        residual: fit.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStatistics {
    pub mean: f64,
    /// Across-member standard deviation of the time-averaged energy.
    pub sigma: f64,
    pub standard_error: f64,
    pub members: usize,
}

/// Time-averages `⟨H⟩` per member after dropping the first tenth of its
/// records, then takes statistics across members.
pub fn ensemble_energy_variance(
    runs: &[Vec<DiagnosticsRecord>],
) -> Result<EnergyStatistics, DiagnosticsError> {
    if runs.len() < MIN_ENSEMBLE {
        return Err(DiagnosticsError::TooFewMembers {
            got: runs.len(),
            need: MIN_ENSEMBLE,
        });
    }
    let lengths: Vec<usize> = runs.iter().map(Vec::len).collect();
    if lengths.iter().any(|&l| l != lengths[0] || l == 0) {
        return Err(DiagnosticsError::Mismatch(
            "members have unequal record counts".into(),
        ));
    }
    let skip = (TRANSIENT_FRACTION * lengths[0] as f64).floor() as usize;
    let averages: Vec<f64> = runs
        .iter()
        .map(|r| {
            let tail = &r[skip..];
            tail.iter().map(|d| d.mean_h).sum::<f64>() / tail.len() as f64
        })
        .collect();
    let m = averages.len() as f64;
    let mean = averages.iter().sum::<f64>() / m;
    let sigma = (averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(EnergyStatistics {
        mean,
        sigma,
        standard_error: sigma / m.sqrt(),
        members: averages.len(),
    })
}
