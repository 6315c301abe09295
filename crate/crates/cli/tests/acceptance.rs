//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails or exceeds its time budget.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lyapopt::dynamics::{integrate_gradient_flow, run_training_trajectory};
use lyapopt::experiments::{compare_activations, select_initial_weights, sweep_learning_rate};
use lyapopt::lyapunov::estimate_lle;
use lyapopt::mlp::{gradient, mse_loss, Dataset};
use lyapopt::validation::{
    check_linear_ode, check_lorenz, exponential_pair_fixture, LinearOdeSettings, LorenzSettings,
};
use lyapopt::{ActivationKind, ExperimentConfig, LinearSystem2D, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Learning rate used for the activation comparison and seed selection.
const STABLE_ALPHA: f64 = 0.01;

fn run(n: u32, name: &str, budget: Duration, f: impl FnOnce() -> (bool, String)) -> bool {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let pass = ok && elapsed < budget;
    println!(
        "criterion {n:>2} {} | {name} | {detail} | {:.2}s of {}s",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn gradient_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for act in ActivationKind::ALL {
        let mut draws = 0;
        while draws < 100 {
            let input_dim = rng.gen_range(1..=3);
            let net = NetworkConfig {
                input_dim,
                hidden_width: rng.gen_range(1..=4),
                hidden_activation: act,
                ..Default::default()
            };
            let m = rng.gen_range(1..=6);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..input_dim).map(|_| rng.gen_range(-1.5..1.5)).collect())
                .collect();
            let targets: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let data = Dataset::new(&rows, &targets).unwrap();
            let params: Vec<f64> = (0..net.param_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if act == ActivationKind::Relu && near_kink(&net, &params, &data) {
                continue;
            }
            draws += 1;
            let g = gradient(&net, &params, &data).unwrap();
            for k in 0..params.len() {
                let h = 1e-6;
                let mut p = params.clone();
                p[k] += h;
                let up = mse_loss(&net, &p, &data).unwrap();
                p[k] -= 2.0 * h;
                let down = mse_loss(&net, &p, &data).unwrap();
                let fd = (up - down) / (2.0 * h);
                let abs = (g[k] - fd).abs();
                if abs >= 1e-9 {
                    worst = worst.max(abs / g[k].abs().max(fd.abs()));
                }
            }
            checked += 1;
        }
    }
    (
        worst < 1e-6,
        format!("{checked} draws, worst relative error {worst:.2e}"),
    )
}

/// A ReLU pre-activation within the difference step of its kink.
fn near_kink(net: &NetworkConfig, params: &[f64], data: &Dataset) -> bool {
    let (n, h) = (net.input_dim, net.hidden_width);
    data.examples().any(|(x, _)| {
        (0..h).any(|j| {
            let z = params[j * n..(j + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + params[h * n + j];
            z.abs() < 1e-4
        })
    })
}

fn estimator_exactness() -> (bool, String) {
    let (traj, cfg) = exponential_pair_fixture(0.1, 100).unwrap();
    let est = estimate_lle(&traj, &cfg).unwrap();
    let err = (est.lambda1 - 0.1).abs();
    (
        err < 1e-9,
        format!("lambda1 {:.15} bits/iter, error {err:.1e}", est.lambda1),
    )
}

fn linear_ode_oracle() -> (bool, String) {
    let s = LinearOdeSettings::default();
    let checks = [
        check_linear_ode(&LinearSystem2D::diagonal(-1.0, -2.0), 0.15, &s).unwrap(),
        check_linear_ode(&LinearSystem2D::diagonal(0.5, -1.0), 0.08, &s).unwrap(),
    ];
    let detail = checks
        .iter()
        .map(|c| {
            format!(
                "{}: {:.4} (expected {:.4} +/- {})",
                c.system, c.estimated, c.expected, c.tolerance
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    (checks.iter().all(|c| c.pass), detail)
}

fn lorenz_oracle() -> (bool, String) {
    let checks = check_lorenz(&LorenzSettings::default()).unwrap();
    let detail = checks
        .iter()
        .map(|c| format!("{}: {:.4} vs {:.4}", c.system, c.estimated, c.expected))
        .collect::<Vec<_>>()
        .join("; ");
    (checks.iter().all(|c| c.pass), detail)
}

fn flow_consistency() -> (bool, String) {
    let net = NetworkConfig::with_hidden(ActivationKind::Sigmoid);
    let data = Dataset::xor();
    let init = [0.5, -0.4, 0.3, 0.8, -0.2, 0.1, 0.7, -0.6, 0.05];
    let gaps: Vec<f64> = [1e-2f64, 5e-3, 2.5e-3, 1.25e-3]
        .iter()
        .map(|&alpha| {
            let steps = (1.0 / alpha).round() as usize;
            let gd = run_training_trajectory(&net, &init, &data, alpha, steps).unwrap();
            let flow = integrate_gradient_flow(&net, &init, &data, alpha, steps).unwrap();
            (0..=steps)
                .map(|k| {
                    gd.state(k)
                        .iter()
                        .zip(flow.state(k))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.3e}")).collect();
    (monotone, format!("max gap over t <= 1: [{}]", shown.join(", ")))
}

fn shown<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn chaos_onset() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for act in [ActivationKind::Sigmoid, ActivationKind::Linear] {
        let cfg = ExperimentConfig {
            net: NetworkConfig::with_hidden(act),
            seeds: (0..20).collect(),
            ..Default::default()
        };
        let report = sweep_learning_rate(&cfg, &cfg.alphas).unwrap();
        let means: Vec<(f64, f64)> = report
            .summary
            .iter()
            .filter_map(|s| s.mean_lambda1.map(|m| (s.alpha, m)))
            .collect();
        let positive = means.iter().find(|(_, m)| *m > 0.0);
        let negative = means.iter().find(|(_, m)| *m < 0.0);
        ok &= positive.is_some() && negative.is_some();
        parts.push(format!(
            "{act}: positive at alpha {}, negative at alpha {}",
            shown(positive.map(|p| p.0)),
            shown(negative.map(|n| n.0))
        ));
    }
    (ok, parts.join("; "))
}

fn relu_dead_regime() -> (bool, String) {
    let mut net = NetworkConfig::with_hidden(ActivationKind::Relu);
    net.output_activation = ActivationKind::Relu;
    let cfg = ExperimentConfig {
        net,
        seeds: (0..20).collect(),
        ..Default::default()
    };
    let alpha = 5.0;
    let report = sweep_learning_rate(&cfg, &[alpha]).unwrap();
    let dead = report
        .rows
        .iter()
        .filter(|r| r.run.degenerate && r.run.lambda1 == 0.0)
        .count();
    (
        dead == report.rows.len(),
        format!(
            "alpha {alpha}: {dead}/{} seeds degenerate with lambda1 = 0",
            report.rows.len()
        ),
    )
}

fn table_ranks() -> (bool, String) {
    let cfg = ExperimentConfig {
        seeds: (0..100).collect(),
        ..Default::default()
    };
    let report = compare_activations(&cfg, STABLE_ALPHA).unwrap();
    let mean = |a: ActivationKind| {
        report
            .summary
            .iter()
            .find(|s| s.activation == a)
            .and_then(|s| s.mean_lambda1)
            .unwrap_or(f64::NAN)
    };
    let (sig, lin, relu) = (
        mean(ActivationKind::Sigmoid),
        mean(ActivationKind::Linear),
        mean(ActivationKind::Relu),
    );
    let ordered = relu < lin && lin < sig;
    let losses = report
        .summary
        .iter()
        .map(|s| format!("{} {:.4}", s.activation, s.mean_final_loss.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ");
    (
        ordered && report.ranks_agree,
        format!(
            "alpha {STABLE_ALPHA}: lambda1 ReLU {relu:.3e} < Linear {lin:.3e} < Sigmoid {sig:.3e}: {ordered}; \
             loss {losses}; argmin lambda {} = argmin loss {}: {}",
            shown(report.lambda_argmin),
            shown(report.loss_argmin),
            report.ranks_agree
        ),
    )
}

fn selection_trend() -> (bool, String) {
    let cfg = ExperimentConfig {
        seeds: (0..200).collect(),
        ..Default::default()
    };
    let report = select_initial_weights(&cfg, STABLE_ALPHA, cfg.steps).unwrap();
    let rho = report.spearman_rho;
    (
        report.survivors >= 100 && rho.is_some_and(|r| r > 0.0),
        format!(
            "alpha {STABLE_ALPHA}: {} IQR survivors, spearman rho {}",
            report.survivors,
            shown(rho.map(|r| format!("{r:.4}")))
        ),
    )
}

fn cli_determinism() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_lyapopt");
    let invocations: [(&str, &[&str]); 5] = [
        (
            "sweep-lr",
            &[
                "--set",
                "steps=400",
                "--set",
                "seeds=0..4",
                "--set",
                "alphas=0,0.01,0.5",
            ],
        ),
        ("compare-activations", &["--set", "steps=400", "--set", "seeds=0..4"]),
        (
            "select-init",
            &["--set", "steps=400", "--set", "seeds=0..12", "--set", "probe_steps=200"],
        ),
        ("validate-estimator", &[]),
        (
            "dump-trajectory",
            &[
                "--set",
                "steps=300",
                "--set",
                "contributions=true",
                "--set",
                "epsilon=0.05",
            ],
        ),
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut failures = Vec::new();
    let mut files = 0;
    for (sub, extra) in invocations {
        for dir in &dirs {
            let status = Command::new(bin)
                .arg(sub)
                .args(extra)
                .args([
                    "--format",
                    "both",
                    "--timestamp",
                    "2024-05-01T12:00:00Z",
                    "--output-dir",
                ])
                .arg(dir.path())
                .output()
                .unwrap();
            if !status.status.success() {
                failures.push(format!("{sub} exited with {:?}", status.status.code()));
            }
        }
    }
    let listing = |d: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names
    };
    let (a, b) = (listing(dirs[0].path()), listing(dirs[1].path()));
    if a != b {
        failures.push("file sets differ".into());
    }
    for name in &a {
        files += 1;
        let x = std::fs::read(dirs[0].path().join(name)).unwrap();
        let y = std::fs::read(dirs[1].path().join(name)).ok();
        if Some(x) != y {
            failures.push(format!("{} differs", name.to_string_lossy()));
        }
    }
    let ok = failures.is_empty() && files >= 12;
    let detail = if failures.is_empty() {
        format!("{files} files byte-identical across reruns")
    } else {
        failures.join("; ")
    };
    (ok, detail)
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "gradient oracle", secs(10), gradient_oracle),
        run(2, "estimator exactness", secs(1), estimator_exactness),
        run(3, "linear-ODE oracle", secs(30), linear_ode_oracle),
        run(4, "Lorenz oracle", secs(120), lorenz_oracle),
        run(5, "gradient-flow consistency", secs(60), flow_consistency),
        run(6, "chaos onset", secs(300), chaos_onset),
        run(7, "ReLU dead regime", secs(60), relu_dead_regime),
        run(8, "activation rank agreement", secs(600), table_ranks),
        run(9, "initial-weight selection trend", secs(600), selection_trend),
        run(10, "CLI determinism", secs(60), cli_determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
