use num_complex::Complex64;

use crate::constants::PhysicalConstants;
use crate::grid::{from_polar, Flagged, Grid1D, RealField, Spectral, WaveState, AMPLITUDE_FLOOR};
use crate::noise::NoiseField;

use super::{DynamicsError, PotentialSpec};

/// Four-point Lagrange interpolation of grid samples at an arbitrary `q`,
/// wrapping periodically.
pub fn interpolate_periodic(values: &[f64], grid: &Grid1D, q: f64) -> f64 {
    let (idx, w) = stencil(grid, q);
    idx.iter().zip(&w).map(|(&i, w)| values[i] * w).sum()
}

fn stencil(grid: &Grid1D, q: f64) -> ([usize; 4], [f64; 4]) {
    let n = grid.n_points() as isize;
    let x = (grid.wrap(q) - grid.point(0)) / grid.spacing();
    let k = x.floor();
    let t = x - k;
    let k = k as isize;
    let idx = [-1, 0, 1, 2].map(|o| (k + o).rem_euclid(n) as usize);
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    (idx, w)
}

/// `ħ·Im(ψ*·ψ')/(m·n)` with `n` floored at `ε_A²`; equals `S'/m` away from
/// nodes.
pub(crate) fn velocity_from_psi(
    spectral: &Spectral,
    psi: &[Complex64],
    consts: &PhysicalConstants,
) -> (Vec<f64>, Vec<bool>) {
    // Differentiating real and imaginary parts separately keeps a real ψ's
    // current exactly zero.
    let re: Vec<f64> = psi.iter().map(|z| z.re).collect();
    let im: Vec<f64> = psi.iter().map(|z| z.im).collect();
    let d_re = spectral.derivative_real(&re, 1);
    let d_im = spectral.derivative_real(&im, 1);
    let density: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    let n_max = density.iter().fold(0.0_f64, |m, &v| m.max(v));
    let floor = AMPLITUDE_FLOOR * AMPLITUDE_FLOOR * n_max;
    let velocity = (0..psi.len())
        .map(|j| {
            let current = re[j] * d_im[j] - im[j] * d_re[j];
            consts.hbar * current / (consts.mass * density[j].max(floor))
        })
        .collect();
    let below: Vec<bool> = density.iter().map(|&n| n < floor || n == 0.0).collect();
    let len = below.len();
    let unreliable = (0..len)
        .map(|j| below[(j + len - 1) % len] || below[j] || below[(j + 1) % len])
        .collect();
    (velocity, unreliable)
}

/// Velocity field `∇S/m`; grid points at or next to a node are flagged.
pub fn bohmian_velocity(state: &WaveState, consts: &PhysicalConstants) -> Flagged<RealField> {
    let spectral = Spectral::new(*state.grid());
    let psi = from_polar(state, consts.hbar);
    let (v, unreliable) = velocity_from_psi(&spectral, psi.values(), consts);
    Flagged {
        value: RealField::new(*state.grid(), v).expect("floored velocity is finite"),
        flagged: unreliable
            .iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(j, _)| j)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityResidual {
    pub field: RealField,
    pub max_norm: f64,
    pub l2_norm: f64,
}

/// `(n' − n)/dt + ∂(n̄·v)/∂q − η`, with `n̄ = (n + n')/2` and `v` the
/// velocity at the half step supplied by the caller.
pub fn continuity_residual(
    state: &WaveState,
    next: &WaveState,
    velocity: &RealField,
    eta: Option<&NoiseField>,
    dt: f64,
) -> Result<ContinuityResidual, DynamicsError> {
    let grid = *state.grid();
    if next.grid() != &grid || velocity.grid() != &grid || eta.is_some_and(|e| e.grid() != &grid) {
        return Err(DynamicsError::GridMismatch);
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::TimeStep { dt, bound: None });
    }
    let n0 = state.density();
    let n1 = next.density();
    let flux: Vec<f64> = n0
        .iter()
        .zip(&n1)
        .zip(velocity.values())
        .map(|((a, b), v)| 0.5 * (a + b) * v)
        .collect();
    let divergence = Spectral::new(grid).derivative_real(&flux, 1);
    let residual: Vec<f64> = (0..grid.n_points())
        .map(|j| {
            let source = eta.map_or(0.0, |e| e.values().values()[j]);
            (n1[j] - n0[j]) / dt + divergence[j] - source
        })
        .collect();
    let max_norm = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let l2_norm = (residual.iter().map(|r| r * r).sum::<f64>() * grid.spacing()).sqrt();
    Ok(ContinuityResidual {
        field: RealField::new(grid, residual)?,
        max_norm,
        l2_norm,
    })
}

/// Tracer particles following the probability flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    /// `∫(p²/2m − V − V_qu) dt` accumulated along each path.
    pub action: Vec<f64>,
    /// Set once a particle has sampled the field next to a node.
    pub flagged: Vec<bool>,
}

impl TrajectoryEnsemble {
    /// Places `count` particles at the density quantiles `(i + ½)/count`.
    pub fn from_quantiles(state: &WaveState, count: usize, consts: &PhysicalConstants) -> Self {
        let grid = *state.grid();
        let dq = grid.spacing();
        let density = state.density();
        let mut cdf = Vec::with_capacity(density.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for n in &density {
            acc += n * dq;
            cdf.push(acc);
        }
        // Cell j spans [q_j − dq/2, q_j + dq/2].
        let positions: Vec<f64> = (0..count)
            .map(|i| {
                let target = (i as f64 + 0.5) / count as f64 * acc;
                let j = cdf
                    .partition_point(|&c| c <= target)
                    .clamp(1, density.len());
                let width = cdf[j] - cdf[j - 1];
                let t = if width > 0.0 {
                    (target - cdf[j - 1]) / width
                } else {
                    0.5
                };
                grid.wrap(grid.point(j - 1) - 0.5 * dq + t * dq)
            })
            .collect();
        let v = bohmian_velocity(state, consts).value.into_values();
        let momenta = positions
            .iter()
            .map(|&q| consts.mass * interpolate_periodic(&v, &grid, q))
            .collect();
        Self {
            momenta,
            action: vec![0.0; count],
            flagged: vec![false; count],
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Velocity, Lagrangian density `m·v²/2 − V − V_qu`, and node mask at one
/// instant.
#[derive(Debug, Clone)]
pub struct FlowSnapshot {
    pub velocity: Vec<f64>,
    pub lagrangian: Vec<f64>,
    pub unreliable: Vec<bool>,
}

impl FlowSnapshot {
    pub fn from_psi(
        spectral: &Spectral,
        psi: &[Complex64],
        potential: &[f64],
        consts: &PhysicalConstants,
    ) -> Self {
        let (velocity, unreliable) = velocity_from_psi(spectral, psi, consts);
        let amplitude: Vec<f64> = psi.iter().map(|z| z.norm()).collect();
        let a_max = amplitude.iter().fold(0.0_f64, |m, &a| m.max(a));
        let floor = AMPLITUDE_FLOOR * a_max;
        let d2 = spectral.derivative_real(&amplitude, 2);
        let lagrangian = (0..psi.len())
            .map(|j| {
                let vqu = -consts.kinetic_prefactor() * d2[j] / amplitude[j].max(floor);
                0.5 * consts.mass * velocity[j] * velocity[j] - potential[j] - vqu
            })
            .collect();
        Self {
            velocity,
            lagrangian,
            unreliable,
        }
    }
}

fn touches(mask: &[bool], grid: &Grid1D, q: f64) -> bool {
    stencil(grid, q).0.iter().any(|&i| mask[i])
}

/// RK4 through a velocity field that varies linearly in time from `now` to
/// `next` across the step.
pub fn advect_between(
    ens: &TrajectoryEnsemble,
    now: &FlowSnapshot,
    next: &FlowSnapshot,
    grid: &Grid1D,
    dt: f64,
    consts: &PhysicalConstants,
) -> TrajectoryEnsemble {
    let v_at = |q: f64, s: f64| {
        (1.0 - s) * interpolate_periodic(&now.velocity, grid, q)
            + s * interpolate_periodic(&next.velocity, grid, q)
    };
    let mut out = ens.clone();
    for i in 0..ens.len() {
        let q = ens.positions[i];
        let k1 = v_at(q, 0.0);
        let k2 = v_at(q + 0.5 * dt * k1, 0.5);
        let k3 = v_at(q + 0.5 * dt * k2, 0.5);
        let k4 = v_at(q + dt * k3, 1.0);
        let q_new = grid.wrap(q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        out.positions[i] = q_new;
        out.momenta[i] = consts.mass * interpolate_periodic(&next.velocity, grid, q_new);
        out.action[i] += 0.5
            * dt
            * (interpolate_periodic(&now.lagrangian, grid, q)
                + interpolate_periodic(&next.lagrangian, grid, q_new));
        out.flagged[i] |=
            touches(&now.unreliable, grid, q) || touches(&next.unreliable, grid, q_new);
    }
    out
}

/// Moves particles through the frozen velocity field of `state`. The action
/// is left unchanged because the external potential is not known here.
pub fn advect_trajectories(
    ens: &TrajectoryEnsemble,
    state: &WaveState,
    dt: f64,
    consts: &PhysicalConstants,
) -> TrajectoryEnsemble {
    let grid = *state.grid();
    let spectral = Spectral::new(grid);
    let psi = from_polar(state, consts.hbar);
    let (velocity, unreliable) = velocity_from_psi(&spectral, psi.values(), consts);
    let snap = FlowSnapshot {
        lagrangian: vec![0.0; velocity.len()],
        velocity,
        unreliable,
    };
    let action = ens.action.clone();
    let mut out = advect_between(ens, &snap, &snap, &grid, dt, consts);
    out.action = action;
    out
}

/// Particle positions, momenta and accumulated action at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub action: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl TrajectoryRecord {
    pub fn capture(t: f64, ens: &TrajectoryEnsemble) -> Self {
        Self {
            t,
            positions: ens.positions.clone(),
            momenta: ens.momenta.clone(),
            action: ens.action.clone(),
            flagged: ens.flagged.clone(),
        }
    }

    pub fn mean_momentum(&self) -> f64 {
        self.momenta.iter().sum::<f64>() / self.momenta.len().max(1) as f64
    }
}

/// Newtonian reference: particles start from the given phase-space points
/// and feel only `−∂V/∂q`, never the quantum force or noise. Records every
/// `record_every` steps and after the last one.
pub fn classical_reference(
    potential: &PotentialSpec,
    grid: &Grid1D,
    consts: &PhysicalConstants,
    start: &TrajectoryEnsemble,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<Vec<TrajectoryRecord>, DynamicsError> {
    potential.validate(grid)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::TimeStep { dt, bound: None });
    }
    let m = consts.mass;
    let rhs = |q: f64, p: f64| {
        (
            p / m,
            potential.force_at(q, grid, consts),
            p * p / (2.0 * m) - potential.value_at(q, grid, consts),
        )
    };
    let mut q = start.positions.clone();
    let mut p = start.momenta.clone();
    let mut s = vec![0.0; q.len()];
    let record = |t: f64, q: &[f64], p: &[f64], s: &[f64]| TrajectoryRecord {
        t,
        positions: q.to_vec(),
        momenta: p.to_vec(),
        action: s.to_vec(),
        flagged: vec![false; q.len()],
    };
    let every = record_every.max(1);
    let mut out = vec![record(0.0, &q, &p, &s)];
    for step in 1..=steps {
        for i in 0..q.len() {
            let (q0, p0) = (q[i], p[i]);
            let k1 = rhs(q0, p0);
            let k2 = rhs(q0 + 0.5 * dt * k1.0, p0 + 0.5 * dt * k1.1);
            let k3 = rhs(q0 + 0.5 * dt * k2.0, p0 + 0.5 * dt * k2.1);
            let k4 = rhs(q0 + dt * k3.0, p0 + dt * k3.1);
            q[i] = grid.wrap(q0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0));
            p[i] = p0 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            s[i] += dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        }
        if step % every == 0 || step == steps {
            out.push(record(step as f64 * dt, &q, &p, &s));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitialState;

    fn units() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let grid = Grid1D::new(40.0, 64).unwrap();
        let f = |q: f64| 0.3 * q * q * q - q * q + 2.0;
        let values: Vec<f64> = grid.points().into_iter().map(f).collect();
        for q in [-3.3, 0.1, 7.77] {
            assert!((interpolate_periodic(&values, &grid, q) - f(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_of_plane_wave_and_real_state() {
        let grid = Grid1D::new(10.0, 64).unwrap();
        let p0 = 2.0 * std::f64::consts::PI * 3.0 / 10.0;
        let s = InitialState::PlaneWave { momentum: p0 }
            .prepare(&grid, &PotentialSpec::Free, &units())
            .unwrap();
        let v = bohmian_velocity(&s, &units());
        assert!(v.value.values().iter().all(|x| (x - p0).abs() < 1e-12));

        let pot = PotentialSpec::Harmonic { omega: 1.0 };
        let grid = Grid1D::new(20.0, 256).unwrap();
        let s = InitialState::GroundState
            .prepare(&grid, &pot, &units())
            .unwrap();
        let v = bohmian_velocity(&s, &units());
        assert!(v.value.max_abs() < 1e-12);
    }

    #[test]
    fn quantiles_are_ordered_and_symmetric() {
        let grid = Grid1D::new(20.0, 256).unwrap();
        let s = InitialState::default()
            .prepare(&grid, &PotentialSpec::Free, &units())
            .unwrap();
        let ens = TrajectoryEnsemble::from_quantiles(&s, 9, &units());
        assert!(ens.positions.windows(2).all(|w| w[0] < w[1]));
        assert!(ens.positions[4].abs() < 1e-12);
        assert!((ens.positions[0] + ens.positions[8]).abs() < 1e-9);
        // Median of the outermost ninth of N(0,1): Φ⁻¹(1/18) ≈ −1.593.
        assert!((ens.positions[0] + 1.593).abs() < 5e-3);
    }

    #[test]
    fn frozen_plane_wave_translates_particles() {
        let grid = Grid1D::new(10.0, 64).unwrap();
        let p0 = 2.0 * std::f64::consts::PI / 10.0;
        let s = InitialState::PlaneWave { momentum: p0 }
            .prepare(&grid, &PotentialSpec::Free, &units())
            .unwrap();
        let ens = TrajectoryEnsemble::from_quantiles(&s, 5, &units());
        let moved = advect_trajectories(&ens, &s, 0.3, &units());
        for (a, b) in ens.positions.iter().zip(&moved.positions) {
            assert!((grid.wrap(b - a - p0 * 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_harmonic_orbit() {
        let grid = Grid1D::new(20.0, 64).unwrap();
        let pot = PotentialSpec::Harmonic { omega: 1.0 };
        let start = TrajectoryEnsemble {
            positions: vec![1.0],
            momenta: vec![0.0],
            action: vec![0.0],
            flagged: vec![false],
        };
        let dt = 1e-3;
        let steps = (std::f64::consts::PI / dt).round() as usize;
        let recs = classical_reference(&pot, &grid, &units(), &start, dt, steps, steps).unwrap();
        let last = recs.last().unwrap();
        let t = last.t;
        assert!((last.positions[0] - t.cos()).abs() < 1e-9);
        assert!((last.momenta[0] + t.sin()).abs() < 1e-9);
        // ∫(p²/2 − q²/2) dt = −sin(2t)/4.
        assert!((last.action[0] + (2.0 * t).sin() / 4.0).abs() < 1e-9);
    }
}
