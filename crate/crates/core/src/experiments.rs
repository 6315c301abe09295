//! Learning-rate sweeps, activation comparison and initial-weight selection.
//!
//! Training trajectories are transient rather than recurrent, so the
//! neighbours of a weight vector are taken from an ensemble: one base
//! initialisation per seed plus `ensemble_size - 1` copies perturbed by at
//! most `perturbation_scale` per coordinate. All members are trained with the
//! same learning rate, and at reference steps `0, tau, 2 tau, ..` the
//! neighbours of run 0 are the other members at that same step.
//!
//! Every report is a pure function of the configuration and seed list; rows
//! are computed in parallel but assembled in configuration order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lyapunov::{distance, EstimatorConfig, LogBase, LyapunovEstimate};
use crate::mlp::{self, ActivationKind, Dataset, NetworkConfig};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub net: NetworkConfig,
    pub dataset: Dataset,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub ensemble_size: usize,
    pub perturbation_scale: f64,
    pub estimator: EstimatorConfig,
    /// Initial weights are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Operating point for activation comparison and seed selection.
    pub learning_rate: f64,
    /// Grid for learning-rate sweeps.
    pub alphas: Vec<f64>,
    /// Prefix length for local exponents in seed selection; `None` means
    /// the full run.
    pub probe_steps: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            net: NetworkConfig::default(),
            dataset: Dataset::xor(),
            steps: 20_000,
            seeds: (0..20).collect(),
            ensemble_size: 8,
            perturbation_scale: 1e-6,
            estimator: EstimatorConfig {
                epsilon: f64::INFINITY,
                ..Default::default()
            },
            init_scale: 1.0,
            learning_rate: 0.01,
            alphas: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0],
            probe_steps: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.estimator.validate()?;
        if self.dataset.input_dim() != self.net.input_dim {
            return Err(Error::DimensionMismatch {
                what: "dataset input",
                expected: self.net.input_dim,
                found: self.dataset.input_dim(),
            });
        }
        if self.ensemble_size < 2 {
            return Err(invalid("ensemble_size", "need at least 2 members for neighbours"));
        }
        if !(self.perturbation_scale > 0.0 && self.perturbation_scale.is_finite()) {
            return Err(invalid("perturbation_scale", "must be positive and finite"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(invalid("init_scale", "must be non-negative and finite"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be non-negative and finite"));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(invalid("alphas", "every learning rate must be non-negative and finite"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if let Some(p) = self.probe_steps {
            if p > self.steps {
                return Err(invalid("probe_steps", "must not exceed steps"));
            }
        }
        Ok(())
    }

    fn with_activation(&self, act: ActivationKind) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.net.hidden_activation = act;
        cfg
    }
}

/// Base initialisation followed by its perturbed copies, all drawn from one
/// ChaCha8 stream seeded with `seed`.
pub fn initial_ensemble(cfg: &ExperimentConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.net.param_dim();
    let s = cfg.init_scale;
    let base: Vec<f64> = (0..d).map(|_| rng.gen_range(-s..=s)).collect();
    let p = cfg.perturbation_scale;
    let mut members = Vec::with_capacity(cfg.ensemble_size);
    members.push(base.clone());
    for _ in 1..cfg.ensemble_size {
        members.push(base.iter().map(|v| v + rng.gen_range(-p..=p)).collect());
    }
    members
}

/// Outcome of training one seed's ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub estimate: Result<LyapunovEstimate>,
    pub initial_loss: f64,
    /// Loss of run 0 after the full training length; NaN if it diverged.
    pub final_loss: f64,
    /// Some member produced a non-finite state.
    pub diverged: bool,
}

struct Member {
    x: Vec<f64>,
    grad: Vec<f64>,
    loss: f64,
    alive: bool,
}

/// Trains the ensemble for `cfg.steps` updates, estimating the exponent over
/// reference steps `k` with `k + tau <= horizon`.
///
/// The estimate is degenerate (rate 0) when run 0 never leaves its initial
/// point, or when every surviving member sits at an exact critical point at
/// the end of the horizon, so that no further motion can occur.
pub fn run_ensemble(cfg: &ExperimentConfig, alpha: f64, seed: u64, horizon: usize) -> Result<EnsembleRun> {
    cfg.validate()?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", "learning rate must be non-negative and finite"));
    }
    if horizon > cfg.steps {
        return Err(invalid("horizon", "must not exceed the number of training steps"));
    }
    let net = &cfg.net;
    let data = &cfg.dataset;
    let est = &cfg.estimator;
    let tau = est.tau;
    let mut hidden = vec![(0.0, 0.0); net.hidden_width];

    let mut members: Vec<Member> = initial_ensemble(cfg, seed)
        .into_iter()
        .map(|x| {
            let mut grad = vec![0.0; x.len()];
            let loss = mlp::gradient_unchecked(net, &x, data, &mut grad, &mut hidden);
            let alive = loss.is_finite() && grad.iter().all(|g| g.is_finite());
            Member { x, grad, loss, alive }
        })
        .collect();
    let init = members[0].x.clone();
    let initial_loss = members[0].loss;

    let mut any_diverged = members.iter().any(|m| !m.alive);
    let mut stationary = true;
    let mut frozen_at_horizon = false;
    // neighbour distances at the previous reference step (NaN = not a neighbour)
    let mut pending: Option<Vec<f64>> = None;
    let mut sum = 0.0;
    let mut used = 0usize;

    for step in 0..=cfg.steps {
        if step <= horizon && step % tau == 0 && members[0].alive {
            let x0 = &members[0].x;
            let dist: Vec<f64> = members
                .iter()
                .map(|m| if m.alive { distance(x0, &m.x) } else { f64::NAN })
                .collect();
            if let Some(prev) = pending.take() {
                let pairs: Vec<(f64, f64)> = (1..members.len())
                    .filter(|&j| prev[j].is_finite() && dist[j].is_finite())
                    .map(|j| (prev[j], dist[j]))
                    .collect();
                if pairs.len() >= est.min_neighbors {
                    let u = pairs.len() as f64;
                    let d0 = pairs.iter().map(|p| p.0).sum::<f64>() / u;
                    let dtau = pairs.iter().map(|p| p.1).sum::<f64>() / u;
                    if dtau > 0.0 && dtau.is_finite() {
                        sum += est.log_base.log(dtau / d0);
                        used += 1;
                    }
                }
            }
            if step + tau <= horizon {
                pending = Some(
                    dist.iter()
                        .enumerate()
                        .map(|(j, &d)| {
                            if j > 0 && d >= est.min_separation && d <= est.epsilon {
                                d
                            } else {
                                f64::NAN
                            }
                        })
                        .collect(),
                );
            }
        }
        if step == horizon {
            frozen_at_horizon = members
                .iter()
                .filter(|m| m.alive)
                .all(|m| m.grad.iter().all(|&g| g == 0.0));
        }
        if step == cfg.steps {
            break;
        }

        let active = if step < horizon { members.len() } else { 1 };
        for m in members[..active].iter_mut().filter(|m| m.alive) {
            for (p, g) in m.x.iter_mut().zip(&m.grad) {
                *p -= alpha * g;
            }
            m.loss = mlp::gradient_unchecked(net, &m.x, data, &mut m.grad, &mut hidden);
            if !(m.loss.is_finite() && m.x.iter().all(|v| v.is_finite())) {
                m.alive = false;
                any_diverged = true;
            }
        }
        if step < horizon && members[0].alive && stationary {
            stationary = distance(&init, &members[0].x) < est.min_separation;
        }
    }

    let run0 = &members[0];
    let final_loss = if run0.alive { run0.loss } else { f64::NAN };
    let estimate = if (stationary && run0.alive) || frozen_at_horizon {
        Ok(LyapunovEstimate::degenerate(est.log_base))
    } else if used == 0 {
        if members.iter().all(|m| !m.alive) || !run0.alive {
            Err(Error::Diverged)
        } else {
            Err(Error::NoValidPairs)
        }
    } else {
        let total_time = (used * tau) as f64;
        Ok(LyapunovEstimate {
            lambda1: sum / total_time,
            pairs_used: used,
            total_time,
            degenerate: false,
            log_base: est.log_base,
            per_point_contributions: None,
        })
    };

    Ok(EnsembleRun {
        estimate,
        initial_loss,
        final_loss,
        diverged: any_diverged,
    })
}

/// Largest Lyapunov exponent (per iteration) of one seed's ensemble.
pub fn ensemble_lle(cfg: &ExperimentConfig, alpha: f64, seed: u64) -> Result<LyapunovEstimate> {
    run_ensemble(cfg, alpha, seed, cfg.steps)?.estimate
}

/// One evaluated (configuration, seed) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub seed: u64,
    /// NaN when no estimate could be formed.
    pub lambda1: f64,
    pub final_loss: f64,
    pub degenerate: bool,
    pub diverged: bool,
}

impl RunRow {
    fn from_run(seed: u64, run: &EnsembleRun) -> Self {
        let (lambda1, degenerate) = match &run.estimate {
            Ok(e) => (e.lambda1, e.degenerate),
            Err(_) => (f64::NAN, false),
        };
        RunRow {
            seed,
            lambda1,
            final_loss: run.final_loss,
            degenerate,
            diverged: run.diverged,
        }
    }

    /// Rows that count towards means.
    fn usable(&self) -> bool {
        !self.diverged && self.lambda1.is_finite()
    }
}

fn mean_over<'a>(rows: impl Iterator<Item = &'a RunRow> + Clone) -> (Option<f64>, Option<f64>, usize) {
    let usable = rows.filter(|r| r.usable());
    (
        stats::finite_mean(usable.clone().map(|r| r.lambda1)),
        stats::finite_mean(usable.clone().map(|r| r.final_loss)),
        usable.count(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    #[serde(flatten)]
    pub run: RunRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    /// Mean over rows that neither diverged nor failed to estimate.
    pub mean_lambda1: Option<f64>,
    pub mean_final_loss: Option<f64>,
    pub usable_rows: usize,
    pub diverged_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub activation: ActivationKind,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<AlphaSummary>,
}

fn parallel_rows<T: Send, F>(jobs: &[(f64, u64)], f: F) -> Vec<T>
where
    F: Fn(f64, u64) -> T + Sync + Send,
{
    jobs.par_iter().map(|&(a, s)| f(a, s)).collect()
}

pub fn sweep_learning_rate(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<SweepReport> {
    cfg.validate()?;
    if alphas.is_empty() {
        return Err(invalid("alphas", "learning-rate grid is empty"));
    }
    if alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(invalid("alphas", "every learning rate must be non-negative and finite"));
    }
    let jobs: Vec<(f64, u64)> = alphas
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = parallel_rows(&jobs, |a, s| run_ensemble(cfg, a, s, cfg.steps));
    let mut rows = Vec::with_capacity(jobs.len());
    for (&(alpha, seed), run) in jobs.iter().zip(runs) {
        rows.push(SweepRow {
            alpha,
            run: RunRow::from_run(seed, &run?),
        });
    }
    let summary = alphas
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let block = &rows[k * cfg.seeds.len()..(k + 1) * cfg.seeds.len()];
            let (mean_lambda1, mean_final_loss, usable_rows) = mean_over(block.iter().map(|r| &r.run));
            AlphaSummary {
                alpha,
                mean_lambda1,
                mean_final_loss,
                usable_rows,
                diverged_rows: block.iter().filter(|r| r.run.diverged).count(),
            }
        })
        .collect();
    Ok(SweepReport {
        activation: cfg.net.hidden_activation,
        rows,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationRow {
    pub activation: ActivationKind,
    #[serde(flatten)]
    pub run: RunRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationSummary {
    pub activation: ActivationKind,
    pub mean_lambda1: Option<f64>,
    pub mean_final_loss: Option<f64>,
    pub usable_rows: usize,
    /// 1-based rank by ascending mean exponent.
    pub lambda_rank: usize,
    /// 1-based rank by ascending mean final loss.
    pub loss_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationReport {
    pub alpha: f64,
    pub rows: Vec<ActivationRow>,
    pub summary: Vec<ActivationSummary>,
    pub lambda_argmin: Option<ActivationKind>,
    pub loss_argmin: Option<ActivationKind>,
    /// The activation with the lowest mean exponent also has the lowest
    /// mean final loss.
    pub ranks_agree: bool,
}

/// Compares Sigmoid, Linear and ReLU hidden layers at one learning rate.
pub fn compare_activations(cfg: &ExperimentConfig, alpha: f64) -> Result<ActivationReport> {
    compare_activations_for(cfg, alpha, &ActivationKind::ALL)
}

pub fn compare_activations_for(
    cfg: &ExperimentConfig,
    alpha: f64,
    activations: &[ActivationKind],
) -> Result<ActivationReport> {
    cfg.validate()?;
    if activations.is_empty() {
        return Err(invalid("activations", "nothing to compare"));
    }
    let configs: Vec<ExperimentConfig> = activations.iter().map(|&a| cfg.with_activation(a)).collect();
    let jobs: Vec<(usize, u64)> = (0..activations.len())
        .flat_map(|k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let runs: Vec<Result<EnsembleRun>> = jobs
        .par_iter()
        .map(|&(k, s)| run_ensemble(&configs[k], alpha, s, cfg.steps))
        .collect();
    let mut rows = Vec::with_capacity(jobs.len());
    for (&(k, seed), run) in jobs.iter().zip(runs) {
        rows.push(ActivationRow {
            activation: activations[k],
            run: RunRow::from_run(seed, &run?),
        });
    }

    let means: Vec<(Option<f64>, Option<f64>, usize)> = (0..activations.len())
        .map(|k| {
            let block = &rows[k * cfg.seeds.len()..(k + 1) * cfg.seeds.len()];
            mean_over(block.iter().map(|r| &r.run))
        })
        .collect();
    let rank_by = |key: &dyn Fn(usize) -> Option<f64>| -> Vec<usize> {
        let mut order: Vec<usize> = (0..activations.len()).collect();
        order.sort_by(|&a, &b| cmp_option(key(a), key(b)));
        let mut rank = vec![0; activations.len()];
        for (r, &k) in order.iter().enumerate() {
            rank[k] = r + 1;
        }
        rank
    };
    let lambda_rank = rank_by(&|k| means[k].0);
    let loss_rank = rank_by(&|k| means[k].1);
    let summary: Vec<ActivationSummary> = activations
        .iter()
        .enumerate()
        .map(|(k, &activation)| ActivationSummary {
            activation,
            mean_lambda1: means[k].0,
            mean_final_loss: means[k].1,
            usable_rows: means[k].2,
            lambda_rank: lambda_rank[k],
            loss_rank: loss_rank[k],
        })
        .collect();
    let argmin = |ranks: &[usize], key: &dyn Fn(usize) -> Option<f64>| {
        (0..activations.len())
            .find(|&k| ranks[k] == 1 && key(k).is_some())
            .map(|k| activations[k])
    };
    let lambda_argmin = argmin(&lambda_rank, &|k| means[k].0);
    let loss_argmin = argmin(&loss_rank, &|k| means[k].1);
    Ok(ActivationReport {
        alpha,
        rows,
        summary,
        lambda_argmin,
        loss_argmin,
        ranks_agree: lambda_argmin.is_some() && lambda_argmin == loss_argmin,
    })
}

/// Ascending with missing values last.
fn cmp_option(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Less,
        (None, Some(_)) => Greater,
        (None, None) => Equal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqrBounds {
    pub eps_lb: f64,
    pub eps_ub: f64,
}

impl IqrBounds {
    pub fn contains(&self, v: f64) -> bool {
        self.eps_lb <= v && v <= self.eps_ub
    }
}

/// Interquartile bounds (linear-interpolation quantiles) and the mask of
/// values inside them, inclusive. Non-finite values are never kept.
pub fn iqr_filter(values: &[f64]) -> Result<(IqrBounds, Vec<bool>)> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(invalid("values", "need at least one finite value"));
    }
    sorted.sort_by(f64::total_cmp);
    let bounds = IqrBounds {
        eps_lb: stats::quantile_sorted(&sorted, 0.25),
        eps_ub: stats::quantile_sorted(&sorted, 0.75),
    };
    let mask = values.iter().map(|&v| bounds.contains(v)).collect();
    Ok((bounds, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    pub seed: u64,
    pub initial_loss: f64,
    /// Inside the initial-loss IQR.
    pub kept: bool,
    /// Exponent over the probe prefix; NaN for discarded candidates.
    pub local_lambda1: f64,
    pub final_loss: f64,
    pub degenerate: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSelectionReport {
    pub alpha: f64,
    pub probe_steps: usize,
    pub bounds: IqrBounds,
    pub rows: Vec<CandidateRow>,
    pub survivors: usize,
    /// Spearman correlation of local exponent against final loss over
    /// survivors; `None` when undefined.
    pub spearman_rho: Option<f64>,
    pub recommended_seed: u64,
}

/// Ranks candidate initialisations by their local exponent over the first
/// `probe_steps` updates.
pub fn select_initial_weights(cfg: &ExperimentConfig, alpha: f64, probe_steps: usize) -> Result<SeedSelectionReport> {
    cfg.validate()?;
    if probe_steps > cfg.steps {
        return Err(invalid("probe_steps", "must not exceed steps"));
    }
    let initial_losses: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let base = &initial_ensemble(cfg, s)[0];
            mlp::mse_loss(&cfg.net, base, &cfg.dataset)
        })
        .collect::<Result<_>>()?;
    let (bounds, mask) = iqr_filter(&initial_losses)?;
    let survivors = mask.iter().filter(|&&k| k).count();
    if survivors < 2 {
        return Err(Error::InsufficientCandidates { found: survivors });
    }

    let runs: Vec<Option<Result<EnsembleRun>>> = cfg
        .seeds
        .par_iter()
        .zip(mask.par_iter())
        .map(|(&s, &keep)| keep.then(|| run_ensemble(cfg, alpha, s, probe_steps)))
        .collect();
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for ((&seed, &initial_loss), run) in cfg.seeds.iter().zip(&initial_losses).zip(runs) {
        let row = match run {
            None => CandidateRow {
                seed,
                initial_loss,
                kept: false,
                local_lambda1: f64::NAN,
                final_loss: f64::NAN,
                degenerate: false,
                diverged: false,
            },
            Some(run) => {
                let r = RunRow::from_run(seed, &run?);
                CandidateRow {
                    seed,
                    initial_loss,
                    kept: true,
                    local_lambda1: r.lambda1,
                    final_loss: r.final_loss,
                    degenerate: r.degenerate,
                    diverged: r.diverged,
                }
            }
        };
        rows.push(row);
    }

    let scored: Vec<&CandidateRow> = rows
        .iter()
        .filter(|r| r.kept && r.local_lambda1.is_finite() && r.final_loss.is_finite())
        .collect();
    let lambdas: Vec<f64> = scored.iter().map(|r| r.local_lambda1).collect();
    let losses: Vec<f64> = scored.iter().map(|r| r.final_loss).collect();
    let spearman_rho = stats::spearman(&lambdas, &losses);

    let recommended = rows
        .iter()
        .filter(|r| r.kept)
        .min_by(|a, b| {
            let lam = |r: &CandidateRow| r.local_lambda1.is_finite().then_some(r.local_lambda1);
            cmp_option(lam(a), lam(b))
                .then(a.initial_loss.total_cmp(&b.initial_loss))
                .then(a.seed.cmp(&b.seed))
        })
        .map(|r| r.seed)
        .expect("at least two survivors");

    Ok(SeedSelectionReport {
        alpha,
        probe_steps,
        bounds,
        rows,
        survivors,
        spearman_rho,
        recommended_seed: recommended,
    })
}

/// Log base of the rates in a report built from `cfg`.
pub fn report_log_base(cfg: &ExperimentConfig) -> LogBase {
    cfg.estimator.log_base
}
