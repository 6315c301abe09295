//! Benchmark fixtures shared by the criterion benches.

use lyapopt::dynamics::simulate_lorenz;
use lyapopt::{ExperimentConfig, LorenzParams, NetworkConfig, Trajectory};

/// Lorenz trajectory of `steps` points starting on the attractor.
pub fn lorenz_trajectory(steps: usize) -> Trajectory {
    let p = LorenzParams::default();
    let warm = simulate_lorenz(&p, [1.0, 1.0, 1.0], 0.01, 5_000).expect("valid settings");
    let start: [f64; 3] = warm.last_state().try_into().expect("3-D state");
    simulate_lorenz(&p, start, 0.01, steps).expect("valid settings")
}

/// Small experiment configuration with the given number of training steps.
pub fn small_experiment(steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        net: NetworkConfig::default(),
        steps,
        seeds: vec![0],
        ..Default::default()
    }
}
