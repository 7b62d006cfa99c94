//! Spatially correlated, temporally white Gaussian noise.
//!
//! The covariance of the field is
//! `⟨η(q,t)η(q+λ,t')⟩ = kΘ·μ/(2λ_c²)·exp(−(λ/λ_c)²)·δ(t−t')`; in discrete
//! time the δ becomes `1/dt`. Realizations are drawn by circulant embedding of
//! the periodized kernel on the grid.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::grid::{Grid1D, RealField, Spectral};

/// Minimum number of fields for a covariance estimate.
pub const MIN_COVARIANCE_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("theta must be non-negative and finite, got {0}")]
    Theta(f64),
    #[error("mobility must be positive and finite, got {0}")]
    Mobility(f64),
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error(
        "correlation length {lambda_c} is below two grid spacings ({dq}); the kernel would alias"
    )]
    Unresolved { lambda_c: f64, dq: f64 },
    #[error("kernel spectrum has negative weight {value} at mode {mode}")]
    NegativeSpectrum { mode: usize, value: f64 },
    #[error("{got} samples supplied, at least {MIN_COVARIANCE_SAMPLES} required")]
    TooFewSamples { got: usize },
    #[error("samples live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub theta: f64,
    pub mobility: f64,
    pub seed: u64,
    pub zero_mean_projection: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            theta: 0.0,
            mobility: 1.0,
            seed: 0,
            zero_mean_projection: true,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(NoiseError::Theta(self.theta));
        }
        if !(self.mobility.is_finite() && self.mobility > 0.0) {
            return Err(NoiseError::Mobility(self.mobility));
        }
        Ok(())
    }

    pub fn lambda_c(&self, consts: &PhysicalConstants) -> Result<f64, NoiseError> {
        correlation_length(self.theta, consts)
    }

    /// `kΘμ/(2λ_c²)`, the equal-time variance density before the `1/dt`.
    pub fn kernel_amplitude(&self, consts: &PhysicalConstants) -> Result<f64, NoiseError> {
        self.validate()?;
        if self.theta == 0.0 {
            return Ok(0.0);
        }
        let lc = self.lambda_c(consts)?;
        Ok(consts.boltzmann * self.theta * self.mobility / (2.0 * lc * lc))
    }
}

/// `λ_c = α·ħ/√(2mkΘ)`. Returns `+∞` at `Θ = 0`, the deterministic limit.
pub fn correlation_length(theta: f64, consts: &PhysicalConstants) -> Result<f64, NoiseError> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(NoiseError::Theta(theta));
    }
    if theta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(consts.alpha * consts.hbar / (2.0 * consts.mass * consts.boltzmann * theta).sqrt())
}

/// One spatial realization, already scaled by `1/√dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    values: RealField,
    time: f64,
    dt: f64,
}

impl NoiseField {
    pub fn new(values: RealField, time: f64, dt: f64) -> Result<Self, NoiseError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(NoiseError::TimeStep(dt));
        }
        Ok(Self { values, time, dt })
    }

    pub fn zeros(grid: Grid1D, time: f64, dt: f64) -> Result<Self, NoiseError> {
        Self::new(RealField::zeros(grid), time, dt)
    }

    pub fn values(&self) -> &RealField {
        &self.values
    }

    pub fn grid(&self) -> &Grid1D {
        self.values.grid()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_zero(&self) -> bool {
        self.values.values().iter().all(|&v| v == 0.0)
    }
}

fn subtract_mean(values: &mut [f64]) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
}

/// Removes the spatial mean so that `∫η dq = 0` to rounding.
pub fn project_zero_mean(field: &NoiseField) -> NoiseField {
    let mut values = field.values.values().to_vec();
    subtract_mean(&mut values);
    NoiseField {
        values: RealField::new(*field.grid(), values).expect("finite input stays finite"),
        time: field.time,
        dt: field.dt,
    }
}

/// `√Λ_k` for the circulant covariance with first row equal to the
/// periodized kernel at unit amplitude.
fn kernel_sqrt_spectrum(spectral: &Spectral, lambda_c: f64) -> Result<Vec<f64>, NoiseError> {
    let grid = spectral.grid();
    let n = grid.n_points();
    let (dq, length) = (grid.spacing(), grid.length());
    let images = (6.0 * lambda_c / length).ceil() as i64 + 1;
    let mut row: Vec<Complex64> = (0..n)
        .map(|j| {
            let lag = j as f64 * dq;
            let c: f64 = (-images..=images)
                .map(|m| {
                    let x = (lag + m as f64 * length) / lambda_c;
                    (-x * x).exp()
                })
                .sum();
            Complex64::new(c, 0.0)
        })
        .collect();
    spectral.forward(&mut row);
    let largest = row.iter().fold(0.0_f64, |m, z| m.max(z.re));
    row.iter()
        .enumerate()
        .map(|(mode, z)| {
            if z.re < -1e-12 * largest {
                Err(NoiseError::NegativeSpectrum { mode, value: z.re })
            } else {
                Ok(z.re.max(0.0).sqrt())
            }
        })
        .collect()
}

/// Seeded source of noise fields for one ensemble member.
///
/// Member `m` of seed `s` draws from ChaCha8 seeded with `s` on stream `m`, so
/// members are independent and each one is reproducible on its own.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    spectral: Spectral,
    spec: NoiseSpec,
    /// `√(C0·Λ_k)`; `None` in the deterministic limit.
    filter: Option<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(
        grid: Grid1D,
        spec: NoiseSpec,
        consts: &PhysicalConstants,
        member: u64,
    ) -> Result<Self, NoiseError> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(member);
        Self::with_rng(grid, spec, consts, rng)
    }

    fn with_rng(
        grid: Grid1D,
        spec: NoiseSpec,
        consts: &PhysicalConstants,
        rng: ChaCha8Rng,
    ) -> Result<Self, NoiseError> {
        spec.validate()?;
        let spectral = Spectral::new(grid);
        let filter = if spec.theta == 0.0 {
            None
        } else {
            let lambda_c = spec.lambda_c(consts)?;
            if lambda_c < 2.0 * grid.spacing() {
                return Err(NoiseError::Unresolved {
                    lambda_c,
                    dq: grid.spacing(),
                });
            }
            let amp = spec.kernel_amplitude(consts)?.sqrt();
            let root = kernel_sqrt_spectrum(&spectral, lambda_c)?;
            Some(root.into_iter().map(|r| r * amp).collect())
        };
        Ok(Self {
            spectral,
            spec,
            filter,
            rng,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid1D {
        self.spectral.grid()
    }

    /// Draws the field for the step `[time, time + dt)`. At `Θ = 0` the field
    /// is zero and no random numbers are consumed.
    pub fn sample(&mut self, time: f64, dt: f64) -> Result<NoiseField, NoiseError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(NoiseError::TimeStep(dt));
        }
        let grid = *self.grid();
        let Some(filter) = &self.filter else {
            return NoiseField::zeros(grid, time, dt);
        };
        let mut buf: Vec<Complex64> = (0..grid.n_points())
            .map(|_| Complex64::new(self.rng.sample(StandardNormal), 0.0))
            .collect();
        self.spectral.forward(&mut buf);
        buf.iter_mut().zip(filter).for_each(|(z, f)| *z *= f);
        self.spectral.inverse(&mut buf);
        let scale = dt.sqrt().recip();
        let mut values: Vec<f64> = buf.into_iter().map(|z| z.re * scale).collect();
        if self.spec.zero_mean_projection {
            subtract_mean(&mut values);
        }
        NoiseField::new(
            RealField::new(grid, values).expect("filtered noise is finite"),
            time,
            dt,
        )
    }
}

/// One-shot sampling with a caller-owned generator.
pub fn sample_noise(
    grid: Grid1D,
    spec: &NoiseSpec,
    consts: &PhysicalConstants,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NoiseField, NoiseError> {
    let mut sampler = NoiseSampler::with_rng(grid, *spec, consts, rng.clone())?;
    let field = sampler.sample(0.0, dt)?;
    *rng = sampler.rng;
    Ok(field)
}

/// Lag-resolved covariance estimate over lags `0..=N/2` grid spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    pub lags: Vec<f64>,
    pub covariance: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub samples: usize,
}

impl EmpiricalCovariance {
    /// Linear interpolation between tabulated lags.
    pub fn at(&self, lag: f64) -> f64 {
        let dq = self.lags[1] - self.lags[0];
        let x = (lag.abs() / dq).min((self.lags.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.lags.len() - 2);
        let t = x - k as f64;
        (1.0 - t) * self.covariance[k] + t * self.covariance[k + 1]
    }
}

/// Averages `(1/N)·Σ_j η_j·η_{j+l}` over samples and periodic translations,
/// with the across-sample standard error.
pub fn empirical_covariance(samples: &[NoiseField]) -> Result<EmpiricalCovariance, NoiseError> {
    if samples.len() < MIN_COVARIANCE_SAMPLES {
        return Err(NoiseError::TooFewSamples { got: samples.len() });
    }
    let grid = *samples[0].grid();
    if samples.iter().any(|s| *s.grid() != grid) {
        return Err(NoiseError::GridMismatch);
    }
    let n = grid.n_points();
    let max_lag = n / 2;
    let mut sum = vec![0.0; max_lag + 1];
    let mut sum_sq = vec![0.0; max_lag + 1];
    for s in samples {
        let v = s.values().values();
        for lag in 0..=max_lag {
            let c = (0..n).map(|j| v[j] * v[(j + lag) % n]).sum::<f64>() / n as f64;
            sum[lag] += c;
            sum_sq[lag] += c * c;
        }
    }
    let count = samples.len() as f64;
    let covariance: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let standard_error = sum_sq
        .iter()
        .zip(&covariance)
        .map(|(sq, mean)| {
            let var = ((sq - count * mean * mean) / (count - 1.0)).max(0.0);
            (var / count).sqrt()
        })
        .collect();
    Ok(EmpiricalCovariance {
        lags: (0..=max_lag).map(|l| l as f64 * grid.spacing()).collect(),
        covariance,
        standard_error,
        samples: samples.len(),
    })
}
