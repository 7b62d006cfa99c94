//! Scenario configuration: a flat, sectioned `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! [grid]
//! length = 20
//! points = 256
//!
//! [potential]
//! kind = harmonic
//! omega = 1
//!
//! [run]
//! steps = 1000
//! ```
//!
//! Every key is listed in the README. Unknown sections or keys, duplicates and
//! malformed values are errors carrying the line number and key.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::dynamics::{default_dt, Formulation, InitialState, PotentialSpec, HYDRO_STABILITY};
use crate::grid::Grid1D;
use crate::noise::{correlation_length, NoiseSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

fn err<T>(line: Option<usize>, key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid1D,
    pub constants: PhysicalConstants,
    pub potential: PotentialSpec,
    pub initial: InitialState,
    pub noise: NoiseSpec,
    /// Fields drawn by `noise-audit`.
    pub audit_samples: usize,
    pub formulation: Formulation,
    pub dt: f64,
    pub steps: usize,
    pub output_every: usize,
    pub ensemble: usize,
    /// Tracer particles per member; zero disables trajectories.
    pub trajectories: usize,
    pub theta_sweep: Option<Vec<f64>>,
}

impl SimConfig {
    /// Defaults around a grid: harmonic `ω = 1`, unit Gaussian, `Θ = 0`,
    /// default `dt`, no steps.
    pub fn new(grid: Grid1D) -> Self {
        let constants = PhysicalConstants::default();
        Self {
            grid,
            constants,
            potential: PotentialSpec::Harmonic { omega: 1.0 },
            initial: InitialState::default(),
            noise: NoiseSpec::default(),
            audit_samples: 10_000,
            formulation: Formulation::Schrodinger,
            dt: default_dt(&grid, &constants),
            steps: 0,
            output_every: 1,
            ensemble: 1,
            trajectories: 0,
            theta_sweep: None,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Same scenario at another `Θ`.
    pub fn with_theta(&self, theta: f64) -> Self {
        let mut c = self.clone();
        c.noise.theta = theta;
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let at = |key: &str, message: String| err::<()>(None, key, message);
        if let Err(e) = self.constants.validate() {
            return at(e.name, e.to_string());
        }
        if let Err(e) = self.potential.validate(&self.grid) {
            return at("kind", e.to_string());
        }
        if let Err(e) = self
            .initial
            .validate(&self.grid, &self.potential, &self.constants)
        {
            return at("kind", e.to_string());
        }
        if !(self.noise.theta.is_finite() && self.noise.theta >= 0.0) {
            return at(
                "theta",
                format!("must be non-negative, got {}", self.noise.theta),
            );
        }
        if !(self.noise.mobility.is_finite() && self.noise.mobility > 0.0) {
            return at(
                "mobility",
                format!("must be positive, got {}", self.noise.mobility),
            );
        }
        self.check_resolved("theta", self.noise.theta)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return at("dt", format!("must be positive, got {}", self.dt));
        }
        if self.formulation != Formulation::Schrodinger {
            let bound = HYDRO_STABILITY * self.constants.mass * self.grid.spacing().powi(2)
                / self.constants.hbar;
            if self.dt > bound {
                return at(
                    "dt",
                    format!(
                        "{} exceeds the amplitude/action stability bound {bound}",
                        self.dt
                    ),
                );
            }
        }
        if self.output_every == 0 {
            return at("output_every", "must be at least 1".into());
        }
        if self.ensemble == 0 {
            return at("ensemble", "must be at least 1".into());
        }
        if let Some(sweep) = &self.theta_sweep {
            if sweep.is_empty() {
                return at("thetas", "sweep list is empty".into());
            }
            if sweep.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return at("thetas", "sweep entries must be strictly positive".into());
            }
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return at("thetas", "sweep entries must be strictly increasing".into());
            }
            for &t in sweep {
                self.check_resolved("thetas", t)?;
            }
        }
        Ok(())
    }

    fn check_resolved(&self, key: &str, theta: f64) -> Result<(), ConfigError> {
        if theta > 0.0 {
            let lc = correlation_length(theta, &self.constants).unwrap_or(0.0);
            if lc < 2.0 * self.grid.spacing() {
                return err(
                    None,
                    key,
                    format!(
                        "theta {theta} gives correlation length {lc}, below two grid spacings ({})",
                        2.0 * self.grid.spacing()
                    ),
                );
            }
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.constants;
        let _ = writeln!(
            s,
            "[grid]\nlength = {}\npoints = {}\n",
            self.grid.length(),
            self.grid.n_points()
        );
        let _ = writeln!(
            s,
            "[constants]\nhbar = {}\nmass = {}\nboltzmann = {}\nlight_speed = {}\nalpha = {}\n",
            c.hbar, c.mass, c.boltzmann, c.light_speed, c.alpha
        );
        s.push_str("[potential]\n");
        match &self.potential {
            PotentialSpec::Free => s.push_str("kind = free\n"),
            PotentialSpec::Harmonic { omega } => {
                let _ = writeln!(s, "kind = harmonic\nomega = {omega}");
            }
            PotentialSpec::PowerLaw { strength, exponent } => {
                let _ = writeln!(
                    s,
                    "kind = power_law\nstrength = {strength}\nexponent = {exponent}"
                );
            }
            PotentialSpec::Tabulated(v) => {
                let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "kind = tabulated\nvalues = {}", list.join(", "));
            }
        }
        s.push_str("\n[initial]\n");
        match &self.initial {
            InitialState::Gaussian {
                sigma,
                center,
                momentum,
            } => {
                let _ = writeln!(
                    s,
                    "kind = gaussian\nsigma = {sigma}\ncenter = {center}\nmomentum = {momentum}"
                );
            }
            InitialState::GroundState => s.push_str("kind = ground_state\n"),
            InitialState::PlaneWave { momentum } => {
                let _ = writeln!(s, "kind = plane_wave\nmomentum = {momentum}");
            }
        }
        let n = &self.noise;
        let _ = writeln!(
            s,
            "\n[noise]\ntheta = {}\nmobility = {}\nseed = {}\nzero_mean_projection = {}\naudit_samples = {}\n",
            n.theta, n.mobility, n.seed, n.zero_mean_projection, self.audit_samples
        );
        let _ = writeln!(
            s,
            "[run]\nformulation = {}\ndt = {}\nsteps = {}\noutput_every = {}\nensemble = {}\ntrajectories = {}",
            self.formulation, self.dt, self.steps, self.output_every, self.ensemble, self.trajectories
        );
        if let Some(sweep) = &self.theta_sweep {
            let list: Vec<String> = sweep.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "\n[sweep]\nthetas = {}", list.join(", "));
        }
        s
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("grid", &["length", "points"]),
    (
        "constants",
        &["hbar", "mass", "boltzmann", "light_speed", "alpha"],
    ),
    (
        "potential",
        &["kind", "omega", "strength", "exponent", "values"],
    ),
    ("initial", &["kind", "sigma", "center", "momentum"]),
    (
        "noise",
        &[
            "theta",
            "mobility",
            "seed",
            "zero_mean_projection",
            "audit_samples",
        ],
    ),
    (
        "run",
        &[
            "formulation",
            "dt",
            "steps",
            "output_every",
            "ensemble",
            "trajectories",
        ],
    ),
    ("sweep", &["thetas"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

struct Entries {
    map: BTreeMap<(String, String), Entry>,
}

impl Entries {
    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.map.remove(&(section.to_string(), key.to_string()))
    }

    fn parsed<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        what: &str,
    ) -> Result<Option<T>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(_) => err(
                    Some(e.line),
                    key,
                    format!("expected {what}, got `{}`", e.value),
                ),
            },
        }
    }

    fn float(&mut self, section: &str, key: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        let line = self.line(section, key);
        let v: Option<f64> = self.parsed(section, key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => err(line, key, format!("must be finite, got {x}")),
            Some(x) => Ok(Some((x, line.unwrap_or(0)))),
            None => Ok(None),
        }
    }

    fn positive(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(section, key)? {
            Some((x, line)) if x <= 0.0 => {
                err(Some(line), key, format!("must be positive, got {x}"))
            }
            other => Ok(other.map(|(x, _)| x)),
        }
    }

    fn count(&mut self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(section, key, "a non-negative integer")
    }

    fn list(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.take(section, key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                match item.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => err(
                        Some(e.line),
                        key,
                        format!("`{item}` is not a finite number"),
                    ),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.map
            .get(&(section.to_string(), key.to_string()))
            .map(|e| e.line)
    }

    fn reject_rest(&mut self, section: &str, why: &str) -> Result<(), ConfigError> {
        let leftover = self
            .map
            .iter()
            .find(|((s, _), _)| s == section)
            .map(|((_, k), e)| (k.clone(), e.line));
        match leftover {
            Some((key, line)) => err(Some(line), &key, why.to_string()),
            None => Ok(()),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(Some(line), content, "unterminated section header");
            };
            let name = name.trim();
            match SCHEMA.iter().find(|(s, _)| *s == name) {
                Some((s, _)) => section = Some(s),
                None => return err(Some(line), name, "unknown section"),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(Some(line), content, "expected `key = value`");
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section else {
            return err(Some(line), key, "key appears before any section header");
        };
        let keys = SCHEMA
            .iter()
            .find(|(s, _)| *s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !keys.contains(&key) {
            return err(Some(line), key, format!("unknown key in [{sec}]"));
        }
        if value.is_empty() {
            return err(Some(line), key, "missing value");
        }
        let slot = (sec.to_string(), key.to_string());
        if let Some(prev) = map.get(&slot) {
            let prev: &Entry = prev;
            return err(
                Some(line),
                key,
                format!("duplicate key, first set on line {}", prev.line),
            );
        }
        map.insert(
            slot,
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(Entries { map })
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut e = tokenize(text)?;

    let Some(length) = e.positive("grid", "length")? else {
        return err(None, "length", "missing required key in [grid]");
    };
    let points_line = e.line("grid", "points");
    let Some(points) = e.count("grid", "points")? else {
        return err(None, "points", "missing required key in [grid]");
    };
    let grid =
        Grid1D::new(length, points).or_else(|x| err(points_line, "points", x.to_string()))?;

    let d = PhysicalConstants::default();
    let constants = PhysicalConstants {
        hbar: e.positive("constants", "hbar")?.unwrap_or(d.hbar),
        mass: e.positive("constants", "mass")?.unwrap_or(d.mass),
        boltzmann: e.positive("constants", "boltzmann")?.unwrap_or(d.boltzmann),
        light_speed: e
            .positive("constants", "light_speed")?
            .unwrap_or(d.light_speed),
        alpha: e.positive("constants", "alpha")?.unwrap_or(d.alpha),
    };

    let kind_line = e.line("potential", "kind");
    let Some(kind) = e.take("potential", "kind") else {
        return err(None, "kind", "missing required key in [potential]");
    };
    let potential = match kind.value.as_str() {
        "free" => PotentialSpec::Free,
        "harmonic" => match e.positive("potential", "omega")? {
            Some(omega) => PotentialSpec::Harmonic { omega },
            None => return err(kind_line, "omega", "harmonic potential needs `omega`"),
        },
        "power_law" => {
            let strength = e.float("potential", "strength")?;
            let exponent = e.positive("potential", "exponent")?;
            match (strength, exponent) {
                (Some((strength, _)), Some(exponent)) => {
                    PotentialSpec::PowerLaw { strength, exponent }
                }
                _ => {
                    return err(
                        kind_line,
                        "kind",
                        "power_law needs `strength` and `exponent`",
                    );
                }
            }
        }
        "tabulated" => {
            let line = e.line("potential", "values");
            match e.list("potential", "values")? {
                Some(v) if v.len() == grid.n_points() => PotentialSpec::Tabulated(v),
                Some(v) => {
                    return err(
                        line,
                        "values",
                        format!("{} values for a {}-point grid", v.len(), grid.n_points()),
                    )
                }
                None => return err(kind_line, "values", "tabulated potential needs `values`"),
            }
        }
        other => {
            return err(
                kind_line,
                "kind",
                format!("unknown potential kind `{other}`"),
            )
        }
    };
    e.reject_rest("potential", "not used by this potential kind")?;

    let initial_line = e.line("initial", "kind");
    let initial = match e.take("initial", "kind").map(|k| k.value) {
        None => {
            e.reject_rest("initial", "[initial] keys need `kind`")?;
            InitialState::default()
        }
        Some(k) => match k.as_str() {
            "gaussian" => InitialState::Gaussian {
                sigma: e.positive("initial", "sigma")?.unwrap_or(1.0),
                center: e.float("initial", "center")?.map_or(0.0, |x| x.0),
                momentum: e.float("initial", "momentum")?.map_or(0.0, |x| x.0),
            },
            "ground_state" => InitialState::GroundState,
            "plane_wave" => match e.float("initial", "momentum")? {
                Some((momentum, _)) => InitialState::PlaneWave { momentum },
                None => return err(initial_line, "momentum", "plane_wave needs `momentum`"),
            },
            other => {
                return err(
                    initial_line,
                    "kind",
                    format!("unknown initial state `{other}`"),
                )
            }
        },
    };
    e.reject_rest("initial", "not used by this initial state")?;
    if let Err(x) = initial.validate(&grid, &potential, &constants) {
        return err(initial_line, "kind", x.to_string());
    }

    let theta = match e.float("noise", "theta")? {
        Some((t, line)) if t < 0.0 => {
            return err(
                Some(line),
                "theta",
                format!("must be non-negative, got {t}"),
            )
        }
        Some((t, _)) => t,
        None => 0.0,
    };
    let projection_line = e.line("noise", "zero_mean_projection");
    let noise = NoiseSpec {
        theta,
        mobility: e.positive("noise", "mobility")?.unwrap_or(1.0),
        seed: e
            .parsed("noise", "seed", "a non-negative integer")?
            .unwrap_or(0),
        zero_mean_projection: match e.take("noise", "zero_mean_projection") {
            None => true,
            Some(x) => match x.value.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return err(
                        projection_line,
                        "zero_mean_projection",
                        format!("expected true or false, got `{other}`"),
                    )
                }
            },
        },
    };
    let audit_samples = e.count("noise", "audit_samples")?.unwrap_or(10_000);

    let formulation_line = e.line("run", "formulation");
    let formulation = match e.take("run", "formulation") {
        None => Formulation::Schrodinger,
        Some(f) => match f.value.parse() {
            Ok(v) => v,
            Err(()) => {
                return err(
                    formulation_line,
                    "formulation",
                    format!(
                        "expected hydrodynamic, schrodinger or both, got `{}`",
                        f.value
                    ),
                )
            }
        },
    };
    let dt_line = e.line("run", "dt");
    let dt = e
        .positive("run", "dt")?
        .unwrap_or_else(|| default_dt(&grid, &constants));
    let Some(steps) = e.count("run", "steps")? else {
        return err(None, "steps", "missing required key in [run]");
    };
    let output_every = e.count("run", "output_every")?.unwrap_or(1);
    let ensemble = e.count("run", "ensemble")?.unwrap_or(1);
    let trajectories = e.count("run", "trajectories")?.unwrap_or(0);
    let sweep_line = e.line("sweep", "thetas");
    let theta_sweep = e.list("sweep", "thetas")?;

    let config = SimConfig {
        grid,
        constants,
        potential,
        initial,
        noise,
        audit_samples,
        formulation,
        dt,
        steps,
        output_every,
        ensemble,
        trajectories,
        theta_sweep,
    };
    config.validate().map_err(|mut x| {
        x.line = x.line.or(match x.key.as_str() {
            "dt" => dt_line,
            "thetas" => sweep_line,
            _ => None,
        });
        x
    })?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[grid]
length = 20
points = 256

[potential]
kind = harmonic
omega = 1

[run]
dt = 0.001
steps = 10
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.noise.theta, 0.0);
        assert_eq!(c.noise.seed, 0);
        assert_eq!(c.ensemble, 1);
        assert!(c.noise.zero_mean_projection);
        assert_eq!(c.formulation, Formulation::Schrodinger);
        assert_eq!(c.initial, InitialState::default());
        assert!((c.total_time() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn negative_theta_names_the_key() {
        let text = format!("{MINIMAL}\n[noise]\ntheta = -1\n");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.key, "theta");
        assert_eq!(e.line, Some(14));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_errors() {
        let e = parse_config(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("colour", Some(12)));
        let e = parse_config(&format!("{MINIMAL}steps = 3\n")).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("steps", Some(12)));
        let e = parse_config(&format!("{MINIMAL}[extras]\n")).unwrap_err();
        assert_eq!(e.key, "extras");
    }

    #[test]
    fn type_errors_and_missing_keys() {
        let e = parse_config(&MINIMAL.replace("points = 256", "points = many")).unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("points", Some(3)));
        let e = parse_config(&MINIMAL.replace("steps = 10\n", "")).unwrap_err();
        assert_eq!(e.key, "steps");
        let e = parse_config(&MINIMAL.replace("omega = 1\n", "")).unwrap_err();
        assert_eq!(e.key, "omega");
        let e = parse_config(&MINIMAL.replace("omega = 1", "omega = 1\nexponent = 2")).unwrap_err();
        assert_eq!(e.key, "exponent");
        let e = parse_config(&MINIMAL.replace("points = 256", "points = 255")).unwrap_err();
        assert_eq!(e.key, "points");
    }

    #[test]
    fn unresolvable_theta_is_rejected() {
        let e = parse_config(&format!("{MINIMAL}\n[noise]\ntheta = 500\n")).unwrap_err();
        assert_eq!(e.key, "theta");
        let e = parse_config(&format!("{MINIMAL}\n[sweep]\nthetas = 0.1, 0.01\n")).unwrap_err();
        assert_eq!(e.key, "thetas");
    }

    #[test]
    fn hydro_dt_bound_is_enforced() {
        let text = MINIMAL
            .replace("dt = 0.001", "dt = 0.01")
            .replace("steps = 10", "steps = 10\nformulation = both");
        assert_eq!(parse_config(&text).unwrap_err().key, "dt");
        let text = MINIMAL.replace("dt = 0.001", "dt = 0.01");
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn serialization_round_trips() {
        let text = "\
[grid]
length = 30
points = 128
[constants]
hbar = 1.5
alpha = 3
[potential]
kind = power_law
strength = 0.3
exponent = 1.5
[initial]
kind = gaussian
sigma = 0.7
center = -1.25
momentum = 0.1
[noise]
theta = 0.01
seed = 77
zero_mean_projection = false
[run]
formulation = both
steps = 40
output_every = 4
ensemble = 3
trajectories = 5
[sweep]
thetas = 0.001, 0.01, 0.1
";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(c, again);

        let mut tab = SimConfig::new(Grid1D::new(10.0, 8).unwrap());
        tab.potential =
            PotentialSpec::Tabulated(vec![0.1, 0.2, 1.0 / 3.0, 0.0, 5.0, 6.0, 7.0, 8.0]);
        tab.steps = 2;
        assert_eq!(parse_config(&tab.to_text()).unwrap(), tab);
    }
}
