//! Largest-Lyapunov-exponent estimation.
//!
//! [`estimate_lle`] averages, over every reference state that has enough
//! neighbours within `epsilon`, the log growth of the *mean* neighbour
//! distance over `tau` steps:
//!
//! ```text
//! D_i(0)   = mean_j |x_i - x_j|          D_i(tau) = mean_j |x_{i+tau} - x_{j+tau}|
//! lambda_1 = sum_i log_b(D_i(tau) / D_i(0)) / (M * tau * dt)
//! ```
//!
//! Neighbours evolve along the same recorded trajectory (they are the states
//! `tau` steps later), so only one run is needed.
//!
//! [`estimate_lle_benettin`] is the independent check: it evolves a reference
//! and a perturbed copy of a map and renormalises their separation at fixed
//! intervals.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dynamics::{StepMap, Trajectory};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn ln_base(self) -> f64 {
        match self {
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::E => 1.0,
        }
    }

    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "2" => Ok(LogBase::Two),
            "e" => Ok(LogBase::E),
            other => Err(format!("unknown log base `{other}` (expected 2 or e)")),
        }
    }
}

/// Knobs of the neighbour-averaged estimator. Distances are Euclidean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Neighbour radius in state-space units.
    pub epsilon: f64,
    /// Evolution horizon in steps.
    pub tau: usize,
    /// Neighbours must satisfy `|i - j| > theiler_window`.
    pub theiler_window: usize,
    pub min_neighbors: usize,
    /// Neighbours closer than this are discarded.
    pub min_separation: f64,
    pub log_base: LogBase,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            epsilon: 1e-3,
            tau: 10,
            theiler_window: 0,
            min_neighbors: 1,
            min_separation: 1e-12,
            log_base: LogBase::Two,
        }
    }
}

impl EstimatorConfig {
    /// Radius `1e-3 x` the trajectory's mean per-dimension spread and a
    /// Theiler window of `10 tau`, the defaults for ODE trajectories.
    pub fn for_ode(traj: &Trajectory, tau: usize) -> Self {
        EstimatorConfig {
            epsilon: auto_epsilon(traj, 1e-3),
            tau,
            theiler_window: 10 * tau,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(invalid("epsilon", "neighbour radius must be positive"));
        }
        if self.tau == 0 {
            return Err(invalid("tau", "evolution horizon must be at least 1"));
        }
        if self.min_neighbors == 0 {
            return Err(invalid("min_neighbors", "must be at least 1"));
        }
        if self.min_separation.is_nan() || self.min_separation <= 0.0 {
            return Err(invalid("min_separation", "must be positive"));
        }
        Ok(())
    }
}

/// `factor` times the mean per-dimension standard deviation of `traj`.
pub fn auto_epsilon(traj: &Trajectory, factor: f64) -> f64 {
    factor * traj.mean_std()
}

/// Diagnostics for one reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointContribution {
    pub index: usize,
    pub neighbors: usize,
    pub d0: f64,
    pub dtau: f64,
    /// `log_b(dtau / d0)`.
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Growth rate in `log_base` units per unit time.
    pub lambda1: f64,
    /// Number of reference points (or renormalisations) used.
    pub pairs_used: usize,
    /// Evolution time the rate is normalised by.
    pub total_time: f64,
    /// Set when the trajectory was stationary and the rate is reported as 0.
    pub degenerate: bool,
    pub log_base: LogBase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point_contributions: Option<Vec<PointContribution>>,
}

impl LyapunovEstimate {
    pub fn degenerate(log_base: LogBase) -> Self {
        LyapunovEstimate {
            lambda1: 0.0,
            pairs_used: 0,
            total_time: 0.0,
            degenerate: true,
            log_base,
            per_point_contributions: None,
        }
    }

    /// The rate expressed in another logarithm base.
    pub fn in_base(&self, base: LogBase) -> f64 {
        self.lambda1 * self.log_base.ln_base() / base.ln_base()
    }
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// All valid neighbours of state `i`, ascending. This is the direct
/// definition; [`estimate_lle`] uses a hashed index that returns the same
/// sets.
pub fn find_neighbors(traj: &Trajectory, i: usize, cfg: &EstimatorConfig) -> Vec<usize> {
    let n = traj.len();
    let xi = traj.state(i);
    (0..n)
        .filter(|&j| j.abs_diff(i) > cfg.theiler_window && j + cfg.tau < n)
        .filter(|&j| {
            let d = distance(xi, traj.state(j));
            d >= cfg.min_separation && d <= cfg.epsilon
        })
        .collect()
}

/// Uniform grid over (up to) the first three coordinates with cells of side
/// `epsilon`. Any point within `epsilon` in the full L2 norm lies in an
/// adjacent cell of the projection, so queries are exact after filtering.
struct NeighborIndex<'a> {
    traj: &'a Trajectory,
    cell: f64,
    axes: usize,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> NeighborIndex<'a> {
    fn build(traj: &'a Trajectory, candidates: Range<usize>, epsilon: f64) -> Self {
        let axes = traj.dim().min(3);
        let mut idx = NeighborIndex {
            traj,
            cell: epsilon,
            axes,
            cells: HashMap::new(),
        };
        for j in candidates {
            let key = idx.key(traj.state(j));
            idx.cells.entry(key).or_default().push(j);
        }
        idx
    }

    fn key(&self, x: &[f64]) -> [i64; 3] {
        let mut k = [0i64; 3];
        for (slot, v) in k.iter_mut().zip(&x[..self.axes]) {
            // saturating cast; infinite cells collapse to a single bucket
            *slot = (v / self.cell).floor() as i64;
        }
        k
    }

    fn query(&self, i: usize, cfg: &EstimatorConfig, out: &mut Vec<usize>) {
        out.clear();
        let xi = self.traj.state(i);
        let centre = self.key(xi);
        let span = |a: usize| if a < self.axes { -1..=1i64 } else { 0..=0 };
        for dx in span(0) {
            for dy in span(1) {
                for dz in span(2) {
                    let key = [
                        centre[0].saturating_add(dx),
                        centre[1].saturating_add(dy),
                        centre[2].saturating_add(dz),
                    ];
                    let Some(bucket) = self.cells.get(&key) else { continue };
                    for &j in bucket {
                        if j.abs_diff(i) <= cfg.theiler_window {
                            continue;
                        }
                        let d = distance(xi, self.traj.state(j));
                        if d >= cfg.min_separation && d <= cfg.epsilon {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// True when every state lies within `tol` of the first one.
pub(crate) fn is_stationary<'s>(mut states: impl Iterator<Item = &'s [f64]>, tol: f64) -> bool {
    let Some(first) = states.next() else { return true };
    states.all(|s| distance(first, s) < tol)
}

/// Largest Lyapunov exponent of a whole trajectory.
pub fn estimate_lle(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<LyapunovEstimate> {
    local_lle(traj, 0..traj.len(), cfg)
}

/// [`estimate_lle`] with per-reference-point diagnostics attached.
pub fn estimate_lle_detailed(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<LyapunovEstimate> {
    accumulate(traj, 0..traj.len(), cfg, true)
}

/// Estimate restricted to reference points in `window`; neighbours may come
/// from anywhere in the trajectory. Reference points need `i + tau` inside
/// the window.
pub fn local_lle(traj: &Trajectory, window: Range<usize>, cfg: &EstimatorConfig) -> Result<LyapunovEstimate> {
    accumulate(traj, window, cfg, false)
}

fn accumulate(
    traj: &Trajectory,
    window: Range<usize>,
    cfg: &EstimatorConfig,
    record: bool,
) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let n = traj.len();
    let required = cfg.tau + 2;
    if n < required {
        return Err(Error::TooShort { len: n, required });
    }
    if window.start > window.end || window.end > n {
        return Err(invalid("window", format!("{window:?} is outside 0..{n}")));
    }
    if window.len() < required {
        return Err(Error::TooShort {
            len: window.len(),
            required,
        });
    }

    let index = NeighborIndex::build(traj, 0..n - cfg.tau, cfg.epsilon);
    let mut neighbors = Vec::new();
    let mut contributions = Vec::new();
    let mut sum = 0.0;
    let mut used = 0usize;

    for i in window.start..window.end - cfg.tau {
        index.query(i, cfg, &mut neighbors);
        if neighbors.len() < cfg.min_neighbors {
            continue;
        }
        let u = neighbors.len() as f64;
        let xi = traj.state(i);
        let xi_t = traj.state(i + cfg.tau);
        let d0 = neighbors.iter().map(|&j| distance(xi, traj.state(j))).sum::<f64>() / u;
        let dtau = neighbors
            .iter()
            .map(|&j| distance(xi_t, traj.state(j + cfg.tau)))
            .sum::<f64>()
            / u;
        // merged neighbourhoods carry no finite rate
        if !(dtau > 0.0 && dtau.is_finite()) {
            continue;
        }
        let log_ratio = cfg.log_base.log(dtau / d0);
        sum += log_ratio;
        used += 1;
        if record {
            contributions.push(PointContribution {
                index: i,
                neighbors: neighbors.len(),
                d0,
                dtau,
                log_ratio,
            });
        }
    }

    if used == 0 {
        let states = (window.start..window.end).map(|k| traj.state(k));
        if is_stationary(states, cfg.min_separation) {
            return Ok(LyapunovEstimate::degenerate(cfg.log_base));
        }
        return Err(Error::NoValidPairs);
    }

    let total_time = used as f64 * cfg.tau as f64 * traj.dt();
    Ok(LyapunovEstimate {
        lambda1: sum / total_time,
        pairs_used: used,
        total_time,
        degenerate: false,
        log_base: cfg.log_base,
        per_point_contributions: record.then_some(contributions),
    })
}

/// Two-trajectory estimate with periodic renormalisation.
///
/// The perturbed copy starts at `x0 + perturbation * (1, .., 1) / sqrt(dim)`.
/// Every `renorm_interval` steps the log growth of the separation is
/// accumulated and the copy is pulled back to distance `perturbation` along
/// the current separation direction. `x0` should already lie on the
/// attractor of interest.
pub fn estimate_lle_benettin<M: StepMap + ?Sized>(
    map: &M,
    x0: &[f64],
    perturbation: f64,
    renorm_interval: usize,
    total_steps: usize,
    log_base: LogBase,
) -> Result<LyapunovEstimate> {
    if x0.len() != map.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: map.dim(),
            found: x0.len(),
        });
    }
    if !(perturbation > 0.0 && perturbation.is_finite()) {
        return Err(invalid("perturbation", "must be positive and finite"));
    }
    if renorm_interval == 0 {
        return Err(invalid("renorm_interval", "must be at least 1"));
    }
    let rounds = total_steps / renorm_interval;
    if rounds == 0 {
        return Err(Error::TooShort {
            len: total_steps,
            required: renorm_interval,
        });
    }

    let offset = perturbation / (x0.len() as f64).sqrt();
    let mut x = x0.to_vec();
    let mut y: Vec<f64> = x0.iter().map(|v| v + offset).collect();
    // the offset may round; measure the actual starting separation
    let mut start = distance(&x, &y);
    if start == 0.0 {
        return Err(Error::ZeroSeparation);
    }
    let mut sum = 0.0;
    for _ in 0..rounds {
        for _ in 0..renorm_interval {
            map.step(&mut x);
            map.step(&mut y);
        }
        let d = distance(&x, &y);
        if d == 0.0 {
            return Err(Error::ZeroSeparation);
        }
        if !d.is_finite() {
            return Err(Error::Diverged);
        }
        sum += (d / start).ln();
        let scale = perturbation / d;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi = xi + (*yi - xi) * scale;
        }
        start = distance(&x, &y);
        if start == 0.0 {
            return Err(Error::ZeroSeparation);
        }
    }

    let total_time = (rounds * renorm_interval) as f64 * map.step_time();
    Ok(LyapunovEstimate {
        lambda1: sum / log_base.ln_base() / total_time,
        pairs_used: rounds,
        total_time,
        degenerate: false,
        log_base,
        per_point_contributions: None,
    })
}
