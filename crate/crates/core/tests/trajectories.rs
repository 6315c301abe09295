use lyapopt::dynamics::{integrate_gradient_flow, run_training_trajectory, simulate_linear_ode, FlowMap};
use lyapopt::lyapunov::{auto_epsilon, estimate_lle, estimate_lle_benettin};
use lyapopt::mlp::Dataset;
use lyapopt::{ActivationKind, EstimatorConfig, LinearSystem2D, LogBase, NetworkConfig};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn rk4_order_on_linear_system() {
    let sys = LinearSystem2D::new(-0.5, 2.0, -2.0, -0.5);
    let x0 = [1.0, 0.5];
    let exact = sys.exact_state(x0, 2.0);
    let err = |dt: f64| {
        let t = simulate_linear_ode(&sys, x0, dt, (2.0 / dt).round() as usize).unwrap();
        dist(t.last_state(), &exact)
    };
    let order = (err(0.04) / err(0.02)).log2();
    assert!((3.5..4.5).contains(&order), "order {order}");
    let order = (err(0.02) / err(0.01)).log2();
    assert!((3.5..4.5).contains(&order), "order {order}");
}

/// Largest distance between gradient-descent iterate `k` and the gradient
/// flow at time `k alpha`, over a fixed time horizon.
fn sgd_flow_gap(alpha: f64, horizon: f64) -> f64 {
    let net = NetworkConfig::with_hidden(ActivationKind::Sigmoid);
    let data = Dataset::xor();
    let init = [0.5, -0.4, 0.3, 0.8, -0.2, 0.1, 0.7, -0.6, 0.05];
    let steps = (horizon / alpha).round() as usize;
    let gd = run_training_trajectory(&net, &init, &data, alpha, steps).unwrap();
    let flow = integrate_gradient_flow(&net, &init, &data, alpha, steps).unwrap();
    (0..=steps)
        .map(|k| dist(gd.state(k), flow.state(k)))
        .fold(0.0, f64::max)
}

#[test]
fn gradient_descent_approaches_flow_linearly() {
    let alphas = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let gaps: Vec<f64> = alphas.iter().map(|&a| sgd_flow_gap(a, 1.0)).collect();
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
        let order = (w[0] / w[1]).log2();
        assert!(order > 0.9, "order {order} in {gaps:?}");
    }
}

#[test]
fn neighbour_estimator_agrees_with_benettin_on_linear_systems() {
    for (a, d) in [(-1.0, -2.0), (0.5, -1.0), (-0.2, -3.0)] {
        let sys = LinearSystem2D::diagonal(a, d);
        let traj = simulate_linear_ode(&sys, [1.0, 1.0], 0.01, 2_000)
            .unwrap()
            .skip(500)
            .unwrap();
        let cfg = EstimatorConfig {
            epsilon: auto_epsilon(&traj, 0.05),
            tau: 10,
            log_base: LogBase::E,
            ..Default::default()
        };
        let neighbour = estimate_lle(&traj, &cfg).unwrap().lambda1;
        let map = FlowMap { field: sys, dt: 0.01 };
        // short enough that the growing state keeps the offset representable
        let benettin = estimate_lle_benettin(&map, &[1.0, 1.0], 1e-6, 10, 2_000, LogBase::E)
            .unwrap()
            .lambda1;
        let tolerance = if benettin.abs() < 0.3 {
            0.05
        } else {
            0.15 * benettin.abs()
        };
        assert!(
            (neighbour - benettin).abs() <= tolerance,
            "{a},{d}: {neighbour} vs {benettin}"
        );
        // the initial offset direction mixes both modes for the first interval
        assert!((benettin - a.max(d)).abs() < 0.02, "{benettin}");
        if a.max(d) < 0.0 {
            assert!(neighbour < 0.0);
        }
    }
}

#[test]
fn stationary_training_is_degenerate() {
    let net = NetworkConfig::with_hidden(ActivationKind::Sigmoid);
    let init = vec![0.3; net.param_dim()];
    let traj = run_training_trajectory(&net, &init, &Dataset::xor(), 0.0, 200).unwrap();
    let est = estimate_lle(&traj, &EstimatorConfig::default()).unwrap();
    assert!(est.degenerate);
    assert_eq!(est.lambda1, 0.0);
}
