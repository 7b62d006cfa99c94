//! Time evolution: the amplitude/action pair, the stochastic Schrödinger
//! equation, tracer trajectories and whole-run orchestration.

mod flow;
mod potential;
mod run;
mod stepper;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::GridError;
use crate::noise::NoiseError;

pub use flow::{
    advect_between, advect_trajectories, bohmian_velocity, classical_reference,
    continuity_residual, interpolate_periodic, ContinuityResidual, FlowSnapshot,
    TrajectoryEnsemble, TrajectoryRecord,
};
pub use potential::{InitialState, PotentialSpec};
pub use run::{run_ensemble, run_member, run_simulation, AbortRecord, MemberRun, Snapshot};
pub use stepper::{
    default_dt, step_hydrodynamic, step_schrodinger, HydroStepper, SchrodingerStepper, StepReport,
    DEFAULT_DT_FACTOR, HYDRO_STABILITY, MAX_STEP_NORM_DRIFT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid potential: {0}")]
    Potential(String),
    #[error("invalid initial state: {0}")]
    InitialState(String),
    #[error("time step {dt} is not allowed{}", .bound.map(|b| format!(" (bound {b})")).unwrap_or_default())]
    TimeStep { dt: f64, bound: Option<f64> },
    #[error("step rejected: norm changed by {norm_drift:e}; reduce dt")]
    StepRejected { norm_drift: f64 },
    #[error("integration became unstable: {0}")]
    Unstable(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Hydrodynamic,
    Schrodinger,
    Both,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hydrodynamic => "hydrodynamic",
            Self::Schrodinger => "schrodinger",
            Self::Both => "both",
        })
    }
}

impl FromStr for Formulation {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "hydrodynamic" => Ok(Self::Hydrodynamic),
            "schrodinger" => Ok(Self::Schrodinger),
            "both" => Ok(Self::Both),
            _ => Err(()),
        }
    }
}
