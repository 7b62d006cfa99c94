//! One-dimensional stochastic quantum hydrodynamics.
//!
//! A state `ψ = A·exp(iS/ħ)` is evolved either as the amplitude/action pair
//! or as a stochastic Schrödinger equation, driven by spatially correlated
//! Gaussian noise whose correlation length shrinks as `Θ^(−1/2)`.

pub mod config;
pub mod constants;
pub mod diagnostics;
pub mod dynamics;
mod fit;
pub mod grid;
pub mod noise;
pub mod quantum_potential;
pub mod runner;

pub use config::{parse_config, ConfigError, SimConfig};
pub use constants::PhysicalConstants;
pub use dynamics::{Formulation, InitialState, PotentialSpec};
pub use grid::{ComplexField, Flagged, Grid1D, RealField, Spectral, WaveState};
pub use noise::{NoiseField, NoiseSampler, NoiseSpec};
pub use runner::{noise_audit, run_scenario, sweep_theta, RunError, RunSummary};
