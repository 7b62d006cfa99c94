use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::SimConfig;
use crate::diagnostics::{observables_psi, DiagnosticsRecord};
use crate::grid::{from_polar, to_polar, ComplexField, Grid1D, RealField, Spectral, WaveState};
use crate::noise::{NoiseField, NoiseSampler};
use crate::quantum_potential::vqu_with;

use super::flow::{advect_between, FlowSnapshot, TrajectoryEnsemble, TrajectoryRecord};
use super::stepper::{HydroStepper, SchrodingerStepper, StepReport};
use super::{DynamicsError, Formulation};

/// Full fields at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: WaveState,
    pub vqu: RealField,
    /// Noise applied in the step that ended here; zero at `t = 0`.
    pub eta: RealField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortRecord {
    pub step: usize,
    pub time: f64,
    pub message: String,
}

/// Everything recorded for one ensemble member. After an abort the records
/// cover the steps completed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberRun {
    pub member: usize,
    pub snapshots: Vec<Snapshot>,
    /// Primary formulation: amplitude/action for `hydrodynamic` and `both`.
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Schrödinger-form records when running `both`.
    pub secondary: Option<Vec<DiagnosticsRecord>>,
    /// `(t, max|n_hydro − n_schrodinger|)` when running `both`.
    pub cross_distance: Vec<(f64, f64)>,
    pub steps: Vec<StepReport>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub abort: Option<AbortRecord>,
}

impl MemberRun {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}

enum Evolver {
    Hydro {
        stepper: HydroStepper,
        a: Vec<f64>,
        s: Vec<f64>,
    },
    Schrodinger {
        stepper: SchrodingerStepper,
        psi: Vec<Complex64>,
    },
}

impl Evolver {
    fn grid(&self) -> Grid1D {
        match self {
            Self::Hydro { stepper, .. } => *stepper.grid(),
            Self::Schrodinger { stepper, .. } => *stepper.grid(),
        }
    }

    fn psi(&self, hbar: f64) -> Vec<Complex64> {
        match self {
            Self::Hydro { a, s, .. } => a
                .iter()
                .zip(s)
                .map(|(&a, &s)| Complex64::from_polar(a, s / hbar))
                .collect(),
            Self::Schrodinger { psi, .. } => psi.clone(),
        }
    }

    fn step(&mut self, eta: &NoiseField) -> Result<StepReport, DynamicsError> {
        match self {
            Self::Hydro { stepper, a, s } => stepper.step(a, s, Some(eta)),
            Self::Schrodinger { stepper, psi } => stepper.step(psi, Some(eta)),
        }
    }

    /// Polar form; the Schrödinger phase is unwrapped from the left edge.
    fn state(&self, hbar: f64, t: f64) -> Result<WaveState, DynamicsError> {
        match self {
            Self::Hydro { a, s, .. } => {
                let grid = self.grid();
                Ok(WaveState::new(
                    RealField::new(grid, a.clone())?,
                    RealField::new(grid, s.clone())?,
                    t,
                )?)
            }
            Self::Schrodinger { psi, .. } => {
                let field = ComplexField::new(self.grid(), psi.clone())?;
                Ok(to_polar(&field, hbar).value.with_time(t))
            }
        }
    }
}

/// Runs one ensemble member. Noise for member `m` comes from stream `m` of
/// the configured seed; with `both`, the two formulations share each field.
pub fn run_member(
    config: &SimConfig,
    member: usize,
    keep_snapshots: bool,
) -> Result<MemberRun, DynamicsError> {
    let grid = config.grid;
    let consts = config.constants;
    let hbar = consts.hbar;
    let dt = config.dt;
    let project = config.noise.zero_mean_projection;
    let spectral = Spectral::new(grid);
    let potential = config.potential.values(&grid, &consts)?.into_values();
    let initial = config.initial.prepare(&grid, &config.potential, &consts)?;

    let hydro = || -> Result<Evolver, DynamicsError> {
        Ok(Evolver::Hydro {
            stepper: HydroStepper::new(grid, &config.potential, &consts, dt, project)?,
            a: initial.amplitude().values().to_vec(),
            s: initial.action().values().to_vec(),
        })
    };
    let schrodinger = || -> Result<Evolver, DynamicsError> {
        Ok(Evolver::Schrodinger {
            stepper: SchrodingerStepper::new(grid, &config.potential, &consts, dt, project)?,
            psi: from_polar(&initial, hbar).into_values(),
        })
    };
    let (mut primary, mut secondary) = match config.formulation {
        Formulation::Hydrodynamic => (hydro()?, None),
        Formulation::Schrodinger => (schrodinger()?, None),
        Formulation::Both => (hydro()?, Some(schrodinger()?)),
    };
    let mut sampler = NoiseSampler::new(grid, config.noise, &consts, member as u64)?;

    let mut out = MemberRun {
        member,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        secondary: secondary.as_ref().map(|_| Vec::new()),
        cross_distance: Vec::new(),
        steps: Vec::new(),
        trajectories: Vec::new(),
        abort: None,
    };

    let mut tracers = (config.trajectories > 0)
        .then(|| TrajectoryEnsemble::from_quantiles(&initial, config.trajectories, &consts));
    let mut flow_now = tracers
        .as_ref()
        .map(|_| FlowSnapshot::from_psi(&spectral, &primary.psi(hbar), &potential, &consts));

    let mut drift = (0.0, 0.0);
    let zero_eta = RealField::zeros(grid);
    let record = |out: &mut MemberRun,
                  t: f64,
                  primary: &Evolver,
                  secondary: Option<&Evolver>,
                  eta: &RealField,
                  drift: (f64, f64),
                  tracers: Option<&TrajectoryEnsemble>|
     -> Result<(), DynamicsError> {
        let psi = primary.psi(hbar);
        out.diagnostics.push(observables_psi(
            &spectral, &psi, &potential, &consts, t, drift.0,
        ));
        if let (Some(sec), Some(records)) = (secondary, out.secondary.as_mut()) {
            let psi2 = sec.psi(hbar);
            records.push(observables_psi(
                &spectral, &psi2, &potential, &consts, t, drift.1,
            ));
            let distance = psi.iter().zip(&psi2).fold(0.0_f64, |m, (a, b)| {
                m.max((a.norm_sqr() - b.norm_sqr()).abs())
            });
            out.cross_distance.push((t, distance));
        }
        if keep_snapshots {
            let state = primary.state(hbar, t)?;
            let vqu = vqu_with(&spectral, &state, &consts).value;
            out.snapshots.push(Snapshot {
                t,
                state,
                vqu,
                eta: eta.clone(),
            });
        }
        if let Some(ens) = tracers {
            out.trajectories.push(TrajectoryRecord::capture(t, ens));
        }
        Ok(())
    };

    record(
        &mut out,
        0.0,
        &primary,
        secondary.as_ref(),
        &zero_eta,
        drift,
        tracers.as_ref(),
    )?;
    for step in 1..=config.steps {
        let t0 = (step - 1) as f64 * dt;
        let t = step as f64 * dt;
        let eta = sampler.sample(t0, dt)?;
        let outcome = primary.step(&eta).and_then(|r| {
            let r2 = match secondary.as_mut() {
                Some(sec) => Some(sec.step(&eta)?),
                None => None,
            };
            Ok((r, r2))
        });
        let (report, report2) = match outcome {
            Ok(x) => x,
            Err(e) => {
                out.abort = Some(AbortRecord {
                    step,
                    time: t0,
                    message: e.to_string(),
                });
                break;
            }
        };
        drift.0 += report.norm_drift;
        if let Some(r) = report2 {
            drift.1 += r.norm_drift;
        }
        out.steps.push(report);

        if let (Some(ens), Some(now)) = (tracers.as_mut(), flow_now.as_mut()) {
            let next = FlowSnapshot::from_psi(&spectral, &primary.psi(hbar), &potential, &consts);
            *ens = advect_between(ens, now, &next, &grid, dt, &consts);
            *now = next;
        }
        if step % config.output_every == 0 || step == config.steps {
            record(
                &mut out,
                t,
                &primary,
                secondary.as_ref(),
                eta.values(),
                drift,
                tracers.as_ref(),
            )?;
        }
    }
    Ok(out)
}

/// Member 0 with snapshots.
pub fn run_simulation(config: &SimConfig) -> Result<MemberRun, DynamicsError> {
    run_member(config, 0, true)
}

/// All members in parallel, returned in member order. Only member 0 keeps
/// snapshots when `keep_snapshots` is set.
pub fn run_ensemble(
    config: &SimConfig,
    keep_snapshots: bool,
) -> Result<Vec<MemberRun>, DynamicsError> {
    (0..config.ensemble)
        .into_par_iter()
        .map(|m| run_member(config, m, keep_snapshots && m == 0))
        .collect()
}
