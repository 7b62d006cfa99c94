//! Scenario execution and CSV output.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! failed run never leaves a truncated CSV behind. Floats are printed with 17
//! significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::diagnostics::{
    ensemble_energy_variance, scaling_fit, uncertainty_report, DiagnosticsRecord,
};
use crate::dynamics::{run_ensemble, DynamicsError, MemberRun};
use crate::noise::{empirical_covariance, NoiseError, NoiseSampler};

pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.csv";
pub const CROSS_CHECK_FILE: &str = "cross_check.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const NOISE_REALIZATION_FILE: &str = "noise_realization.csv";
pub const NOISE_COVARIANCE_FILE: &str = "noise_covariance.csv";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

impl RunError {
    /// 1 for configuration and output problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Output { .. } => 1,
            Self::Dynamics(_) | Self::Noise(_) => 2,
        }
    }
}

/// A member or sweep point that stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub label: String,
    pub step: Option<usize>,
    pub time: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub failures: Vec<Failure>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(out: &mut String, cells: &[f64]) {
    let line: Vec<String> = cells.iter().map(|&x| num(x)).collect();
    out.push_str(&line.join(","));
    out.push('\n');
}

fn prepare_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    let fail = |source| RunError::Output {
        path: path.clone(),
        source,
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(&path).map_err(|e| fail(e.error))?;
    Ok(path)
}

fn units_line(config: &SimConfig) -> String {
    let c = &config.constants;
    format!(
        "# units: hbar={} mass={} boltzmann={} light_speed={}\n",
        c.hbar, c.mass, c.boltzmann, c.light_speed
    )
}

fn snapshots_csv(config: &SimConfig, run: &MemberRun) -> String {
    let mut s = units_line(config);
    s.push_str("t,q,A,S,n,V_qu,eta\n");
    let grid = config.grid;
    for snap in &run.snapshots {
        let a = snap.state.amplitude().values();
        let phase = snap.state.action().values();
        let v = snap.vqu.values();
        let eta = snap.eta.values();
        for j in 0..grid.n_points() {
            row(
                &mut s,
                &[
                    snap.t,
                    grid.point(j),
                    a[j],
                    phase[j],
                    a[j] * a[j],
                    v[j],
                    eta[j],
                ],
            );
        }
    }
    s
}

const DIAGNOSTICS_HEADER: &str = "t,norm,mean_q,sigma_q,mean_p,sigma_p,mean_H,H_qu,norm_drift\n";

fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    for d in records {
        row(
            &mut s,
            &[
                d.t,
                d.norm,
                d.mean_q,
                d.sigma_q,
                d.mean_p,
                d.sigma_p,
                d.mean_h,
                d.h_qu,
                d.norm_drift,
            ],
        );
    }
    s
}

/// Mean and standard error over the members that reached record `i`.
fn ensemble_csv(runs: &[MemberRun]) -> String {
    let mut s = String::from("t,members,mean_q,se_q,mean_p,se_p,mean_H,sigma_H,se_H\n");
    let longest = runs.iter().map(|r| r.diagnostics.len()).max().unwrap_or(0);
    for i in 0..longest {
        let recs: Vec<&DiagnosticsRecord> =
            runs.iter().filter_map(|r| r.diagnostics.get(i)).collect();
        let m = recs.len() as f64;
        let stats = |f: fn(&DiagnosticsRecord) -> f64| {
            let mean = recs.iter().map(|d| f(d)).sum::<f64>() / m;
            let sd = if recs.len() > 1 {
                (recs.iter().map(|d| (f(d) - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd, sd / m.sqrt())
        };
        let (mq, _, eq) = stats(|d| d.mean_q);
        let (mp, _, ep) = stats(|d| d.mean_p);
        let (mh, sh, eh) = stats(|d| d.mean_h);
        row(&mut s, &[recs[0].t, m, mq, eq, mp, ep, mh, sh, eh]);
    }
    s
}

fn cross_check_csv(run: &MemberRun) -> Option<String> {
    let secondary = run.secondary.as_ref()?;
    let mut s = String::from(
        "t,norm_hydro,norm_schrodinger,mean_q_hydro,mean_q_schrodinger,\
         mean_H_hydro,mean_H_schrodinger,max_density_distance\n",
    );
    for ((h, w), &(t, distance)) in run
        .diagnostics
        .iter()
        .zip(secondary)
        .zip(&run.cross_distance)
    {
        row(
            &mut s,
            &[
                t, h.norm, w.norm, h.mean_q, w.mean_q, h.mean_h, w.mean_h, distance,
            ],
        );
    }
    Some(s)
}

fn trajectories_csv(run: &MemberRun) -> String {
    let mut s = String::from("t,index,q,p,action,flagged\n");
    for rec in &run.trajectories {
        for i in 0..rec.positions.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                num(rec.t),
                i,
                num(rec.positions[i]),
                num(rec.momenta[i]),
                num(rec.action[i]),
                u8::from(rec.flagged[i])
            );
        }
    }
    s
}

fn error_json(failures: &[Failure]) -> String {
    let records: Vec<_> = failures
        .iter()
        .map(|f| {
            json!({
                "kind": "numerical_abort",
                "source": f.label,
                "step": f.step,
                "time": f.time,
                "message": f.message,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({ "errors": records }))
        .expect("plain JSON values serialize");
    s.push('\n');
    s
}

fn member_failures(runs: &[MemberRun]) -> Vec<Failure> {
    runs.iter()
        .filter_map(|r| {
            r.abort.as_ref().map(|a| Failure {
                label: format!("member {}", r.member),
                step: Some(a.step),
                time: Some(a.time),
                message: a.message.clone(),
            })
        })
        .collect()
}

/// Runs every ensemble member and writes member 0's snapshots, diagnostics,
/// cross-check and tracer records, plus ensemble statistics when there is
/// more than one member. Aborted members keep their partial records and are
/// listed in `error.json`.
pub fn run_scenario(config: &SimConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    config.validate()?;
    prepare_dir(out_dir)?;
    let runs = run_ensemble(config, true)?;
    let lead = &runs[0];

    let mut summary = RunSummary::default();
    summary.files.push(write_atomic(
        out_dir,
        SNAPSHOTS_FILE,
        &snapshots_csv(config, lead),
    )?);
    summary.files.push(write_atomic(
        out_dir,
        DIAGNOSTICS_FILE,
        &diagnostics_csv(&lead.diagnostics),
    )?);
    if runs.len() > 1 {
        summary
            .files
            .push(write_atomic(out_dir, ENSEMBLE_FILE, &ensemble_csv(&runs))?);
    }
    if let Some(text) = cross_check_csv(lead) {
        summary
            .files
            .push(write_atomic(out_dir, CROSS_CHECK_FILE, &text)?);
    }
    if config.trajectories > 0 {
        summary.files.push(write_atomic(
            out_dir,
            TRAJECTORIES_FILE,
            &trajectories_csv(lead),
        )?);
    }
    summary.failures = member_failures(&runs);
    if !summary.failures.is_empty() {
        summary.files.push(write_atomic(
            out_dir,
            ERROR_FILE,
            &error_json(&summary.failures),
        )?);
    }
    Ok(summary)
}

/// One sweep row before the sweep-wide fit is known.
struct SweepPoint {
    theta: f64,
    lambda_c: f64,
    sigma_e: f64,
    tau_min: f64,
    product_e_t: f64,
    product_l_p: f64,
}

/// Runs the configured ensemble at each `Θ` of the sweep list. A point whose
/// run fails gets `NaN` in `sigma_E` and an entry in `error.json`; the other
/// points still run. The footer carries the power-law fit of `sigma_E`.
pub fn sweep_theta(config: &SimConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    config.validate()?;
    let thetas = config.theta_sweep.clone().ok_or_else(|| ConfigError {
        line: None,
        key: "sweep.thetas".into(),
        message: "the sweep verb needs a [sweep] section".into(),
    })?;
    prepare_dir(out_dir)?;

    let outcomes: Vec<(SweepPoint, Vec<Failure>)> = thetas
        .par_iter()
        .map(|&theta| -> Result<_, RunError> {
            let report = uncertainty_report(theta, &config.constants)
                .map_err(|e| RunError::Config(sweep_error(&e.to_string())))?;
            let cfg = config.with_theta(theta);
            let label = format!("theta {}", num(theta));
            let mut failures = Vec::new();
            let sigma_e = match run_ensemble(&cfg, false) {
                Ok(runs) => {
                    failures.extend(member_failures(&runs).into_iter().map(|mut f| {
                        f.label = format!("{label} {}", f.label);
                        f
                    }));
                    let records: Vec<Vec<DiagnosticsRecord>> =
                        runs.into_iter().map(|r| r.diagnostics).collect();
                    if failures.is_empty() {
                        ensemble_energy_variance(&records).map_or(f64::NAN, |s| s.sigma)
                    } else {
                        f64::NAN
                    }
                }
                Err(e) => {
                    failures.push(Failure {
                        label,
                        step: None,
                        time: None,
                        message: e.to_string(),
                    });
                    f64::NAN
                }
            };
            Ok((
                SweepPoint {
                    theta,
                    lambda_c: report.lambda_c,
                    sigma_e,
                    tau_min: report.tau_min,
                    product_e_t: report.product_e_t,
                    product_l_p: report.product_l_p,
                },
                failures,
            ))
        })
        .collect::<Result<_, _>>()?;

    let points: Vec<(f64, f64)> = outcomes.iter().map(|(p, _)| (p.theta, p.sigma_e)).collect();
    let fit = scaling_fit(&points);
    let exponent = fit.as_ref().map_or(f64::NAN, |f| f.exponent);

    let mut s =
        String::from("theta,lambda_c,sigma_E,tau_min,product_E_t,product_L_p,fit_exponent\n");
    for (p, _) in &outcomes {
        row(
            &mut s,
            &[
                p.theta,
                p.lambda_c,
                p.sigma_e,
                p.tau_min,
                p.product_e_t,
                p.product_l_p,
                exponent,
            ],
        );
    }
    match &fit {
        Ok(f) => {
            let _ = writeln!(
                s,
                "# scaling_fit exponent={} prefactor={} residual={}",
                num(f.exponent),
                num(f.prefactor),
                num(f.residual)
            );
        }
        Err(e) => {
            let _ = writeln!(s, "# scaling_fit unavailable: {e}");
        }
    }

    let mut summary = RunSummary::default();
    summary.files.push(write_atomic(out_dir, SWEEP_FILE, &s)?);
    summary.failures = outcomes.into_iter().flat_map(|(_, f)| f).collect();
    if !summary.failures.is_empty() {
        summary.files.push(write_atomic(
            out_dir,
            ERROR_FILE,
            &error_json(&summary.failures),
        )?);
    }
    Ok(summary)
}

fn sweep_error(message: &str) -> ConfigError {
    ConfigError {
        line: None,
        key: "sweep.thetas".into(),
        message: message.into(),
    }
}

/// Draws `audit_samples` noise fields at the configured `Θ` and time step.
/// Writes the first realization and the empirical covariance next to the
/// kernel value `C0·exp(−(λ/λ_c)²)/dt`.
pub fn noise_audit(config: &SimConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    config.validate()?;
    if config.noise.theta <= 0.0 {
        return Err(RunError::Config(ConfigError {
            line: None,
            key: "noise.theta".into(),
            message: "a noise audit needs theta > 0".into(),
        }));
    }
    prepare_dir(out_dir)?;
    let grid = config.grid;
    let consts = &config.constants;
    let mut sampler = NoiseSampler::new(grid, config.noise, consts, 0)?;
    let samples = (0..config.audit_samples)
        .map(|i| sampler.sample(i as f64 * config.dt, config.dt))
        .collect::<Result<Vec<_>, _>>()?;
    let cov = empirical_covariance(&samples)?;
    let lambda_c = config.noise.lambda_c(consts)?;
    let c0 = config.noise.kernel_amplitude(consts)?;

    let mut realization = String::from("q,eta\n");
    for (j, &eta) in samples[0].values().values().iter().enumerate() {
        row(&mut realization, &[grid.point(j), eta]);
    }
    let mut covariance = String::from("lag,covariance,standard_error,kernel\n");
    for ((&lag, &c), &se) in cov
        .lags
        .iter()
        .zip(&cov.covariance)
        .zip(&cov.standard_error)
    {
        let kernel = c0 * (-(lag / lambda_c).powi(2)).exp() / config.dt;
        row(&mut covariance, &[lag, c, se, kernel]);
    }

    let mut summary = RunSummary::default();
    summary
        .files
        .push(write_atomic(out_dir, NOISE_REALIZATION_FILE, &realization)?);
    summary
        .files
        .push(write_atomic(out_dir, NOISE_COVARIANCE_FILE, &covariance)?);
    Ok(summary)
}
