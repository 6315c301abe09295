//! Flat `key = value` configuration files.
//!
//! Blank lines and everything after `#` are ignored. Overrides use the same
//! `key=value` syntax and are applied after the file. Unknown keys are
//! rejected by name.
//!
//! ```text
//! # learning-rate sweep over 20 seeds
//! hidden_activation = Sigmoid
//! seeds = 0..20
//! alphas = 1e-4, 1e-3, 1e-2, 0.1
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::mlp::{ActivationKind, Dataset};

/// What `dump-trajectory` integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Gradient descent from the first seed's base initialisation.
    Training,
    /// RK4 gradient flow from the same initialisation.
    Flow,
    Linear,
    Lorenz,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryKind::Training => "training",
            TrajectoryKind::Flow => "flow",
            TrajectoryKind::Linear => "linear",
            TrajectoryKind::Lorenz => "lorenz",
        }
    }
}

impl FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "training" => Ok(TrajectoryKind::Training),
            "flow" => Ok(TrajectoryKind::Flow),
            "linear" => Ok(TrajectoryKind::Linear),
            "lorenz" => Ok(TrajectoryKind::Lorenz),
            _ => Err(format!(
                "unknown trajectory kind `{s}` (expected training, flow, linear or lorenz)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySettings {
    pub kind: TrajectoryKind,
    /// Integration step for flow, linear and Lorenz trajectories.
    pub dt: f64,
    /// Row-major 2x2 matrix for the linear system.
    pub linear_matrix: [f64; 4],
    /// Initial state for linear (2) or Lorenz (3) trajectories.
    pub initial_state: Vec<f64>,
    /// Also write per-reference-point estimator diagnostics.
    pub contributions: bool,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        TrajectorySettings {
            kind: TrajectoryKind::Training,
            dt: 0.01,
            linear_matrix: [-1.0, 0.0, 0.0, -2.0],
            initial_state: vec![1.0, 1.0, 1.0],
            contributions: false,
        }
    }
}

/// Everything a CLI run needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    pub trajectory: TrajectorySettings,
}

const KEYS: &[&str] = &[
    "dataset",
    "input_dim",
    "hidden_width",
    "hidden_activation",
    "output_activation",
    "steps",
    "seeds",
    "ensemble_size",
    "perturbation_scale",
    "init_scale",
    "learning_rate",
    "alphas",
    "probe_steps",
    "epsilon",
    "tau",
    "theiler_window",
    "min_neighbors",
    "min_separation",
    "log_base",
    "trajectory",
    "dt",
    "linear_matrix",
    "initial_state",
    "contributions",
];

fn config_err(key: &str, reason: impl fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `a..b` (half-open) or a comma-separated list.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let a: u64 = parse("seeds", a.trim())?;
        let b: u64 = parse("seeds", b.trim())?;
        if b < a {
            return Err(config_err("seeds", format!("empty range `{value}`")));
        }
        return Ok((a..b).collect());
    }
    parse_list("seeds", value)
}

fn fmt_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.len() > 2 && seeds.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        format!("{}..{}", seeds[0], seeds[seeds.len() - 1] + 1)
    } else {
        join(seeds)
    }
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Shortest round-trip form, using exponents for very small or large values.
fn float(v: f64) -> String {
    format!("{v:?}")
}

fn float_list(values: &[f64]) -> String {
    values.iter().map(|&v| float(v)).collect::<Vec<_>>().join(",")
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(key, format!("expected true or false, got `{value}`"))),
    }
}

impl ResolvedConfig {
    /// Applies one `key`/`value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let exp = &mut self.experiment;
        let traj = &mut self.trajectory;
        match key {
            "dataset" => {
                if !value.eq_ignore_ascii_case("xor") {
                    return Err(config_err(
                        key,
                        format!("unknown dataset `{value}` (only xor is built in)"),
                    ));
                }
                exp.dataset = Dataset::xor();
            }
            "input_dim" => exp.net.input_dim = parse(key, value)?,
            "hidden_width" => exp.net.hidden_width = parse(key, value)?,
            "hidden_activation" => exp.net.hidden_activation = parse::<ActivationKind>(key, value)?,
            "output_activation" => exp.net.output_activation = parse::<ActivationKind>(key, value)?,
            "steps" => exp.steps = parse(key, value)?,
            "seeds" => exp.seeds = parse_seeds(value)?,
            "ensemble_size" => exp.ensemble_size = parse(key, value)?,
            "perturbation_scale" => exp.perturbation_scale = parse(key, value)?,
            "init_scale" => exp.init_scale = parse(key, value)?,
            "learning_rate" => exp.learning_rate = parse(key, value)?,
            "alphas" => exp.alphas = parse_list(key, value)?,
            "probe_steps" => {
                exp.probe_steps = match value {
                    "full" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "epsilon" => exp.estimator.epsilon = parse(key, value)?,
            "tau" => exp.estimator.tau = parse(key, value)?,
            "theiler_window" => exp.estimator.theiler_window = parse(key, value)?,
            "min_neighbors" => exp.estimator.min_neighbors = parse(key, value)?,
            "min_separation" => exp.estimator.min_separation = parse(key, value)?,
            "log_base" => exp.estimator.log_base = parse(key, value)?,
            "trajectory" => traj.kind = parse(key, value)?,
            "dt" => traj.dt = parse(key, value)?,
            "linear_matrix" => {
                let m: Vec<f64> = parse_list(key, value)?;
                traj.linear_matrix = m
                    .try_into()
                    .map_err(|_| config_err(key, "expected 4 comma-separated entries"))?;
            }
            "initial_state" => traj.initial_state = parse_list(key, value)?,
            "contributions" => traj.contributions = parse_bool(key, value)?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| config_err(o, "override must look like key=value"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Checks cross-field invariants, reporting the offending key.
    pub fn validate(&self) -> Result<()> {
        let exp = &self.experiment;
        exp.validate().map_err(|e| match e {
            Error::InvalidArgument { name, reason } => config_err(name, reason),
            Error::DimensionMismatch { .. } => config_err("input_dim", e),
            other => other,
        })?;
        let t = &self.trajectory;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(config_err("dt", "must be positive and finite"));
        }
        let want = match t.kind {
            TrajectoryKind::Linear => Some(2),
            TrajectoryKind::Lorenz => Some(3),
            _ => None,
        };
        if let Some(want) = want {
            if t.initial_state.len() != want {
                return Err(config_err(
                    "initial_state",
                    format!("{} trajectories need {want} coordinates", t.kind.as_str()),
                ));
            }
        }
        Ok(())
    }

    /// Canonical `(key, value)` listing of every setting, in a fixed order.
    /// Feeding it back through [`ResolvedConfig::set`] reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let exp = &self.experiment;
        let est = &exp.estimator;
        let t = &self.trajectory;
        let values = [
            "xor".to_string(),
            exp.net.input_dim.to_string(),
            exp.net.hidden_width.to_string(),
            exp.net.hidden_activation.to_string(),
            exp.net.output_activation.to_string(),
            exp.steps.to_string(),
            fmt_seeds(&exp.seeds),
            exp.ensemble_size.to_string(),
            float(exp.perturbation_scale),
            float(exp.init_scale),
            float(exp.learning_rate),
            float_list(&exp.alphas),
            exp.probe_steps.map_or("full".to_string(), |p| p.to_string()),
            float(est.epsilon),
            est.tau.to_string(),
            est.theiler_window.to_string(),
            est.min_neighbors.to_string(),
            float(est.min_separation),
            est.log_base.as_str().to_string(),
            t.kind.as_str().to_string(),
            float(t.dt),
            float_list(&t.linear_matrix),
            float_list(&t.initial_state),
            t.contributions.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}

/// Defaults, then the file at `path` (if any), then `overrides`.
pub fn load_config<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<ResolvedConfig> {
    let mut cfg = ResolvedConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

/// [`load_config`] from in-memory text.
pub fn parse_config<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<ResolvedConfig> {
    let mut cfg = ResolvedConfig::default();
    cfg.apply_text(text)?;
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NONE: &[&str] = &[];

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("", NONE).unwrap();
        assert_eq!(cfg, ResolvedConfig::default());
        assert_eq!(cfg.experiment.net.hidden_width, 2);
        assert_eq!(cfg.experiment.steps, 20_000);
        assert_eq!(cfg.experiment.ensemble_size, 8);
        assert_eq!(cfg.experiment.perturbation_scale, 1e-6);
    }

    #[test]
    fn override_wins() {
        let cfg = parse_config("steps = 500\n", &["steps=100"]).unwrap();
        assert_eq!(cfg.experiment.steps, 100);
    }

    #[test]
    fn comments_and_lists() {
        let text = "# header\nseeds = 3..6  # three seeds\nalphas = 0.1, 0.2\nhidden_activation = ReLU\n";
        let cfg = parse_config(text, NONE).unwrap();
        assert_eq!(cfg.experiment.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.experiment.alphas, vec![0.1, 0.2]);
        assert_eq!(cfg.experiment.net.hidden_activation, ActivationKind::Relu);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("stepz = 3", NONE).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "stepz"), "{err}");
        let err = parse_config("", &["bogus=1"]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn invariant_violation_names_key() {
        let err = parse_config("ensemble_size = 1", NONE).unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "ensemble_size"),
            "{err}"
        );
        let err = parse_config("perturbation_scale = 0", NONE).unwrap_err();
        assert!(err.to_string().contains("perturbation_scale"));
    }

    #[test]
    fn entries_round_trip() {
        let text =
            "seeds = 1,5,9\nalphas = 0.001\nepsilon = 0.25\nprobe_steps = 300\ntrajectory = lorenz\nlog_base = e";
        let cfg = parse_config(text, NONE).unwrap();
        let mut back = ResolvedConfig::default();
        for (k, v) in cfg.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        let defaults = ResolvedConfig::default();
        let mut back = ResolvedConfig::default();
        for (k, v) in defaults.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, defaults);
    }
}
