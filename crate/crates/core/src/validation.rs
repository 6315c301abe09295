//! Reference systems with known exponents, used to validate the estimator.

use serde::Serialize;

use crate::dynamics::{simulate_linear_ode, simulate_lorenz, FlowMap, LinearSystem2D, LorenzParams, Trajectory};
use crate::error::Result;
use crate::lyapunov::{auto_epsilon, estimate_lle, estimate_lle_benettin, EstimatorConfig, LogBase};

/// Two parallel straight segments whose gap grows exactly as
/// `delta0 * 2^(lambda k)`. Point `k` of the first segment is `(0, k)`, of
/// the second `(delta0 * 2^(lambda k), k)`; the trajectory lists the first
/// segment then the second, `2 n` states with unit time step.
///
/// With the returned estimator configuration every reference point's only
/// neighbour is its partner on the other segment, so the estimate equals
/// `lambda` bits per step up to rounding.
pub fn exponential_pair_fixture(lambda: f64, n: usize) -> Result<(Trajectory, EstimatorConfig)> {
    let delta0 = 1e-8;
    let mut states = Vec::with_capacity(2 * n);
    states.extend((0..n).map(|k| [0.0, k as f64]));
    states.extend((0..n).map(|k| [delta0 * (lambda * k as f64).exp2(), k as f64]));
    let traj = Trajectory::from_states(&states, 1.0)?;
    let cfg = EstimatorConfig {
        epsilon: 1e-3,
        tau: 10,
        theiler_window: 0,
        ..Default::default()
    };
    Ok((traj, cfg))
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub system: String,
    pub expected: f64,
    pub estimated: f64,
    /// Absolute for `bits/time` and `nats/time`; relative for `relative`.
    pub tolerance: f64,
    pub units: &'static str,
    pub pass: bool,
}

impl OracleCheck {
    fn absolute(system: impl Into<String>, expected: f64, estimated: f64, tolerance: f64, units: &'static str) -> Self {
        OracleCheck {
            system: system.into(),
            expected,
            estimated,
            tolerance,
            units,
            pass: (estimated - expected).abs() <= tolerance,
        }
    }

    /// `estimated` is compared with `expected` as `|e - x| / |x|`.
    fn relative(system: impl Into<String>, expected: f64, estimated: f64, tolerance: f64) -> Self {
        OracleCheck {
            system: system.into(),
            expected,
            estimated,
            tolerance,
            units: "relative",
            pass: ((estimated - expected) / expected).abs() <= tolerance,
        }
    }
}

/// Settings for single-trajectory estimates on the 2-D linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOdeSettings {
    pub x0: [f64; 2],
    pub dt: f64,
    pub steps: usize,
    /// Leading steps dropped so the slowest mode dominates.
    pub transient: usize,
    pub tau: usize,
    /// Neighbour radius as a multiple of the mean per-dimension spread.
    pub epsilon_factor: f64,
}

impl Default for LinearOdeSettings {
    fn default() -> Self {
        LinearOdeSettings {
            x0: [1.0, 1.0],
            dt: 0.01,
            steps: 2_000,
            transient: 500,
            tau: 10,
            epsilon_factor: 0.05,
        }
    }
}

/// Estimated largest exponent (bits per unit time) of `sys`.
pub fn linear_ode_estimate(sys: &LinearSystem2D, s: &LinearOdeSettings) -> Result<f64> {
    let traj = simulate_linear_ode(sys, s.x0, s.dt, s.steps)?.skip(s.transient)?;
    let cfg = EstimatorConfig {
        epsilon: auto_epsilon(&traj, s.epsilon_factor),
        tau: s.tau,
        theiler_window: 0,
        ..Default::default()
    };
    Ok(estimate_lle(&traj, &cfg)?.lambda1)
}

pub fn check_linear_ode(sys: &LinearSystem2D, tolerance: f64, s: &LinearOdeSettings) -> Result<OracleCheck> {
    let expected = sys.largest_exponent() / std::f64::consts::LN_2;
    let estimated = linear_ode_estimate(sys, s)?;
    let name = format!("linear [[{}, {}], [{}, {}]]", sys.a, sys.b, sys.c, sys.d);
    Ok(OracleCheck::absolute(name, expected, estimated, tolerance, "bits/time"))
}

/// Settings for the Lorenz checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzSettings {
    pub x0: [f64; 3],
    pub dt: f64,
    /// Steps discarded before the attractor is reached.
    pub transient: usize,
    /// Length of the trajectory fed to the neighbour estimator.
    pub steps: usize,
    pub tau: usize,
    pub epsilon_factor: f64,
    pub benettin_steps: usize,
    pub benettin_perturbation: f64,
    pub benettin_renorm: usize,
}

impl Default for LorenzSettings {
    fn default() -> Self {
        LorenzSettings {
            x0: [1.0, 1.0, 1.0],
            dt: 0.01,
            transient: 10_000,
            steps: 200_000,
            tau: 700,
            epsilon_factor: 1e-3,
            benettin_steps: 200_000,
            benettin_perturbation: 1e-8,
            benettin_renorm: 10,
        }
    }
}

/// Accepted value of the Lorenz system's largest exponent (nats per unit
/// time) at the standard parameters.
pub const LORENZ_LAMBDA: f64 = 0.906;

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzEstimates {
    pub neighbor: f64,
    pub benettin: f64,
    pub benettin_doubled: f64,
}

/// Neighbour and two-trajectory estimates in nats per unit time.
pub fn lorenz_estimates(s: &LorenzSettings) -> Result<LorenzEstimates> {
    let p = LorenzParams::default();
    let warm = simulate_lorenz(&p, s.x0, s.dt, s.transient)?;
    let start: [f64; 3] = warm.last_state().try_into().expect("3-D state");
    let traj = simulate_lorenz(&p, start, s.dt, s.steps)?;
    let cfg = EstimatorConfig {
        epsilon: auto_epsilon(&traj, s.epsilon_factor),
        tau: s.tau,
        theiler_window: 10 * s.tau,
        log_base: LogBase::E,
        ..Default::default()
    };
    let (neighbor, (benettin, benettin_doubled)) = rayon::join(
        || estimate_lle(&traj, &cfg).map(|e| e.lambda1),
        || {
            let map = FlowMap { field: p, dt: s.dt };
            let run = |steps| {
                estimate_lle_benettin(
                    &map,
                    &start,
                    s.benettin_perturbation,
                    s.benettin_renorm,
                    steps,
                    LogBase::E,
                )
                .map(|e| e.lambda1)
            };
            rayon::join(|| run(s.benettin_steps), || run(2 * s.benettin_steps))
        },
    );
    Ok(LorenzEstimates {
        neighbor: neighbor?,
        benettin: benettin?,
        benettin_doubled: benettin_doubled?,
    })
}

pub fn check_lorenz(s: &LorenzSettings) -> Result<Vec<OracleCheck>> {
    let e = lorenz_estimates(s)?;
    Ok(vec![
        OracleCheck::relative("lorenz benettin", LORENZ_LAMBDA, e.benettin, 0.05),
        OracleCheck::relative("lorenz benettin doubled run", e.benettin, e.benettin_doubled, 0.02),
        OracleCheck::relative("lorenz neighbour vs benettin", e.benettin, e.neighbor, 0.15),
    ])
}

/// Every oracle check at its default settings.
pub fn run_all() -> Result<Vec<OracleCheck>> {
    let lin = LinearOdeSettings::default();
    let mut checks = vec![
        check_linear_ode(&LinearSystem2D::diagonal(-1.0, -2.0), 0.15, &lin)?,
        check_linear_ode(&LinearSystem2D::diagonal(0.5, -1.0), 0.08, &lin)?,
    ];
    checks.extend(check_lorenz(&LorenzSettings::default())?);
    Ok(checks)
}
