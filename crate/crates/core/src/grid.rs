//! Uniform periodic grid, fields sampled on it, spectral calculus and the
//! polar/complex conversion of wave functions.
//!
//! Points are `q_j = -L/2 + j·dq` for `j = 0..N`, with `dq = L/N`. The grid is
//! periodic: `q_N` is identified with `q_0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Relative amplitude floor `ε_A / max(A)` below which the phase of a wave
/// function is undefined and divisions by `A` are clamped.
pub const AMPLITUDE_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid length must be positive and finite, got {0}")]
    Length(f64),
    #[error("grid point count must be even and at least 8, got {0}")]
    PointCount(usize),
    #[error("field has {got} samples but the grid has {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("field sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("amplitude sample {index} is negative")]
    NegativeAmplitude { index: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("derivative order must be 1 or 2, got {0}")]
    Order(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    length: f64,
    n_points: usize,
    spacing: f64,
}

impl Grid1D {
    pub fn new(length: f64, n_points: usize) -> Result<Self, GridError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::Length(length));
        }
        if n_points < 8 || !n_points.is_multiple_of(2) {
            return Err(GridError::PointCount(n_points));
        }
        Ok(Self {
            length,
            n_points,
            spacing: length / n_points as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn point(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.point(j)).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist mode carries `-π/dq`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let base = 2.0 * PI / self.length;
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|j| base * j as f64)
            .collect()
    }

    /// Maps a coordinate into `[-L/2, L/2)`.
    pub fn wrap(&self, q: f64) -> f64 {
        let half = 0.5 * self.length;
        (q + half).rem_euclid(self.length) - half
    }
}

impl fmt::Display for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} N={} dq={}",
            self.length, self.n_points, self.spacing
        )
    }
}

/// A value together with the grid indices where it is unreliable.
#[derive(Debug, Clone, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub flagged: Vec<usize>,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Self {
            value,
            flagged: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn check_samples<T>(
    grid: &Grid1D,
    values: &[T],
    finite: impl Fn(&T) -> bool,
) -> Result<(), GridError> {
    if values.len() != grid.n_points() {
        return Err(GridError::SampleCount {
            expected: grid.n_points(),
            got: values.len(),
        });
    }
    match values.iter().position(|v| !finite(v)) {
        Some(index) => Err(GridError::NonFinite { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self, GridError> {
        check_samples(&grid, &values, |v| v.is_finite())?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self, GridError> {
        check_samples(&grid, &values, |v| v.re.is_finite() && v.im.is_finite())?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self, GridError> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    /// Rescales so that `∫|ψ|² dq = 1`. Leaves an all-zero field untouched.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            let s = norm.sqrt().recip();
            self.values.iter_mut().for_each(|z| *z *= s);
        }
        self
    }
}

/// Polar pair `(A, S)` with `ψ = A·exp(iS/ħ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    amplitude: RealField,
    action: RealField,
    time: f64,
}

impl WaveState {
    pub fn new(amplitude: RealField, action: RealField, time: f64) -> Result<Self, GridError> {
        if amplitude.grid() != action.grid() {
            return Err(GridError::GridMismatch);
        }
        if let Some(index) = amplitude.values().iter().position(|&a| a < 0.0) {
            return Err(GridError::NegativeAmplitude { index });
        }
        Ok(Self {
            amplitude,
            action,
            time,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        self.amplitude.grid()
    }

    pub fn amplitude(&self) -> &RealField {
        &self.amplitude
    }

    pub fn action(&self) -> &RealField {
        &self.action
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitude.values().iter().map(|a| a * a).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amplitude.values().iter().map(|a| a * a).sum::<f64>() * self.grid().spacing()
    }

    /// `ε_A` for this state.
    pub fn amplitude_floor(&self) -> f64 {
        AMPLITUDE_FLOOR * self.amplitude.max_abs()
    }
}

/// FFT plans and wavenumbers for one grid; cheap to share across threads.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid1D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n_points()),
            inverse: planner.plan_fft_inverse(grid.n_points()),
            wavenumbers: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse DFT in place, including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }

    /// Multiplier `(ik)^order`; odd orders drop the Nyquist mode so that real
    /// input yields real output.
    fn multiplier(&self, j: usize, order: u32) -> Complex64 {
        let n = self.grid.n_points();
        if order % 2 == 1 && j == n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.wavenumbers[j];
        match order % 4 {
            0 => Complex64::new(k.powi(order as i32), 0.0),
            1 => Complex64::new(0.0, k.powi(order as i32)),
            2 => Complex64::new(-k.powi(order as i32), 0.0),
            _ => Complex64::new(0.0, -k.powi(order as i32)),
        }
    }

    pub fn derivative_complex(&self, f: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (j, z) in buf.iter_mut().enumerate() {
            *z *= self.multiplier(j, order);
        }
        self.inverse(&mut buf);
        buf
    }

    pub fn derivative_real(&self, f: &[f64], order: u32) -> Vec<f64> {
        let buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.derivative_complex(&buf, order)
            .into_iter()
            .map(|z| z.re)
            .collect()
    }

    /// Several derivative orders of one real field from a single forward FFT.
    pub fn derivatives_real<const K: usize>(&self, f: &[f64], orders: [u32; K]) -> [Vec<f64>; K] {
        let mut spectrum: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut spectrum);
        orders.map(|order| {
            let mut buf: Vec<Complex64> = spectrum
                .iter()
                .enumerate()
                .map(|(j, z)| z * self.multiplier(j, order))
                .collect();
            self.inverse(&mut buf);
            buf.into_iter().map(|z| z.re).collect()
        })
    }
}

/// Spectral derivative of order 1 or 2 on the periodic grid.
pub fn derivative(f: &RealField, order: u32) -> Result<RealField, GridError> {
    if !(1..=2).contains(&order) {
        return Err(GridError::Order(order));
    }
    let spectral = Spectral::new(*f.grid());
    RealField::new(*f.grid(), spectral.derivative_real(f.values(), order))
}

/// Periodic rectangle rule `Σ f_j·dq`.
pub fn integrate(f: &RealField) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().spacing()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Splits `ψ` into amplitude and unwrapped action. The phase is unwrapped left
/// to right starting from the principal value at the leftmost point; points
/// with `|ψ| < ε_A` are flagged.
pub fn to_polar(psi: &ComplexField, hbar: f64) -> Flagged<WaveState> {
    let grid = *psi.grid();
    let amplitude: Vec<f64> = psi.values().iter().map(|z| z.norm()).collect();
    let floor = AMPLITUDE_FLOOR * amplitude.iter().fold(0.0_f64, |m, &a| m.max(a));

    let mut action = Vec::with_capacity(amplitude.len());
    let mut previous = 0.0;
    let mut unwrapped = 0.0;
    for (j, z) in psi.values().iter().enumerate() {
        let phase = z.arg();
        unwrapped = if j == 0 {
            phase
        } else {
            unwrapped + wrap_angle(phase - previous)
        };
        previous = phase;
        action.push(hbar * unwrapped);
    }

    let flagged = amplitude
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < floor || a == 0.0)
        .map(|(j, _)| j)
        .collect();
    let state = WaveState {
        amplitude: RealField {
            grid,
            values: amplitude,
        },
        action: RealField {
            grid,
            values: action,
        },
        time: 0.0,
    };
    Flagged {
        value: state,
        flagged,
    }
}

pub fn from_polar(state: &WaveState, hbar: f64) -> ComplexField {
    let values = state
        .amplitude
        .values()
        .iter()
        .zip(state.action.values())
        .map(|(&a, &s)| Complex64::from_polar(a, s / hbar))
        .collect();
    ComplexField {
        grid: *state.grid(),
        values,
    }
}
