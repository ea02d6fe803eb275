//! Acceptance criteria 1 to 11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use randsum::data_io::{ring_width_to_bai, write_panel, RawTreeSeries};
use randsum::link::{softplus, softplus_deriv, softplus_inverse};
use randsum::rng::StreamKey;
use randsum::simulator::{simulate_replicate, TrueParameters};
use randsum::{
    conditional_moments, loss, loss_gradient, simulate_panel, FitOptions, FitResult, PanelSeries, ParameterVector,
    Scenario, SimulationConfig, SiteSeries, UnitDistribution,
};
use randsum_cli::{cmd_compare, run_study, McConfig, McSummary, StudyCell};

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Fits collected for the sandwich checks.
#[derive(Default)]
struct Shared {
    fits: Vec<(String, FitResult)>,
}

fn alpha_index(cell: &StudyCell) -> usize {
    cell.names.iter().position(|n| n == "alpha[1]").expect("alpha column")
}

fn scenario1(k: usize, t: usize) -> SimulationConfig {
    SimulationConfig::benchmark(Scenario::Scenario1, k, t, SEED)
}

fn study(k: usize, t: usize, reps: usize) -> McSummary {
    run_study(&McConfig::from_simulation(scenario1(k, t)), reps, None).expect("study runs")
}

// 1. Analytic gradient against central differences.
fn random_instance(seed: u64) -> (PanelSeries, ParameterVector) {
    let mut rng = StreamKey::root(seed).child(7).rng();
    let k: usize = rng.random_range(1..=5);
    let t: usize = rng.random_range(2..=50);
    let p: usize = rng.random_range(0..=2);
    let m: usize = rng.random_range(0..=10);
    let sites = (0..k)
        .map(|s| SiteSeries {
            id: format!("s{s}"),
            y: (0..t).map(|_| rng.random_range(0.2..6.0)).collect(),
            n: (0..t).map(|_| rng.random_range(1..6)).collect(),
            x: (0..t * m).map(|_| rng.random_range(-1.5..1.5)).collect(),
            presample_y: (0..p).map(|_| rng.random_range(0.2..6.0)).collect(),
            presample_n: (0..p).map(|_| rng.random_range(1..6)).collect(),
        })
        .collect();
    let names = (0..m).map(|i| format!("x{i}")).collect();
    let panel = PanelSeries::new(sites, (1..=t as i32).collect(), (1 - p as i32..=0).collect(), names).unwrap();
    let theta = ParameterVector::new(
        rng.random_range(0.05..2.0),
        (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..p).map(|_| rng.random_range(-0.4..0.4)).collect(),
        (0..m).map(|_| rng.random_range(-0.5..0.5)).collect(),
    );
    (panel, theta)
}

fn criterion_1(_: &mut Shared) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for seed in 0..50 {
        let (panel, theta) = random_instance(seed);
        let g = loss_gradient(&panel, &theta).unwrap();
        let base = theta.to_vec();
        let layout = theta.layout();
        for i in 0..base.len() {
            let h = 1e-4 * base[i].abs().max(1.0);
            let at = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                loss(&panel, &ParameterVector::from_slice(layout, &v).unwrap()).unwrap()
            };
            // Fourth-order central difference.
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(g[i].abs());
            worst = worst.max(if rel.is_nan() { 0.0 } else { rel });
            coords += 1;
        }
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e} over {coords} coordinates"))
}

// 2. Link identities.
fn criterion_2(_: &mut Shared) -> Outcome {
    let deltas = [0.0, 1e-4, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];
    let xs: Vec<f64> = (0..100).map(|i| -30.0 + 60.0 * i as f64 / 99.0).collect();
    let mut worst_round = (0.0f64, 0.0, 0.0);
    let mut round_failures = 0;
    let mut bound_failures = 0;
    let mut worst_deriv: f64 = 0.0;
    for &d in &deltas {
        for &x in &xs {
            let lam = softplus(d, x).unwrap();
            let back = softplus_inverse(d, lam).map(|b| (b - x).abs()).unwrap_or(f64::INFINITY);
            if back >= 1e-10 {
                round_failures += 1;
            }
            if back > worst_round.0 {
                worst_round = (back, d, x);
            }
            if lam <= (1.0 + d).ln() {
                bound_failures += 1;
            }
            let (de, dd) = softplus_deriv(d, x).unwrap();
            worst_deriv = worst_deriv.max((de + (1.0 + d) * dd - 1.0).abs());
        }
    }
    let pass = round_failures == 0 && bound_failures == 0 && worst_deriv <= 1e-12;
    outcome(
        pass,
        format!(
            "roundtrip failures {round_failures}/1000 (worst {:.1e} at delta={}, x={:.2}); lower-bound failures {bound_failures}; derivative identity max {worst_deriv:.1e}",
            worst_round.0, worst_round.1, worst_round.2
        ),
    )
}

// 3. Conditional moments of the random sum.
fn criterion_3(_: &mut Shared) -> Outcome {
    let (lam, n, reps) = (2.0, 3u32, 100_000);
    let cases = [
        ("exponential", UnitDistribution::Exponential, 12.0),
        ("gamma(2)", UnitDistribution::Gamma { shape: 2.0 }, 3.0),
        ("lognormal(0.5)", UnitDistribution::LogNormal { sigma: 0.5 }, 3.0 * 16.0 * (0.25f64.exp() - 1.0)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (label, unit, target_var)) in cases.into_iter().enumerate() {
        let mut rng = StreamKey::root(SEED).child(100 + i as u64).rng();
        let draws: Vec<f64> = (0..reps).map(|_| unit.sample_sum(lam, n, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let mean_ok = (mean - 6.0).abs() < 4.0 * se;
        let var_ok = ((var - target_var) / target_var).abs() < 0.1;
        pass &= mean_ok && var_ok;
        let model_var = conditional_moments(unit, lam, n).unwrap().1;
        parts.push(format!(
            "{label}: mean {mean:.3} ({}) var {var:.3} vs {target_var:.3} ({}; model {model_var:.3})",
            if mean_ok { "ok" } else { "off" },
            if var_ok { "ok" } else { "off" }
        ));
    }
    outcome(pass, parts.join("; "))
}

// 4. Consistency at K=20, T=400.
fn criterion_4(shared: &mut Shared) -> Outcome {
    let config = scenario1(20, 400);
    let design = config.resolve().unwrap();
    let panel = simulate_replicate(&config, &design, 0).unwrap();
    let truth = config.true_theta(&design);
    let res = randsum::estimator::fit_default(&panel, 1, &FitOptions::default()).unwrap();
    let est = &res.theta_hat;
    let err = est
        .alpha
        .iter()
        .zip(&truth.alpha)
        .chain(est.beta.iter().zip(&truth.beta))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pass = res.converged && err < 0.15;
    let detail = format!("converged={} max |error| over (alpha, beta) {err:.4}", res.converged);
    if res.converged {
        shared.fits.push(("K=20 T=400".into(), res));
    }
    outcome(pass, detail)
}

fn collect_fits(shared: &mut Shared, label: &str, summary: &McSummary) {
    for cell in &summary.cells {
        for (b, f) in cell.outcomes.iter().enumerate() {
            if let Some(f) = f.converged() {
                shared.fits.push((format!("{label} rep {b}"), f.clone()));
            }
        }
    }
}

// 5. Table band at K=5, T=50.
fn criterion_5(shared: &mut Shared) -> Outcome {
    let summary = study(5, 50, 100);
    let cell = &summary.cells[0];
    let a = alpha_index(cell);
    let eqml = cell.eqml()[a].unwrap_or(f64::NAN);
    let tse = cell.tse_mean()[a].unwrap_or(f64::NAN);
    collect_fits(shared, "K=5 T=50", &summary);
    let pass = (0.467..=0.667).contains(&eqml) && (0.03..=0.09).contains(&tse);
    outcome(
        pass,
        format!(
            "mean alpha {eqml:.4}, mean TSE {tse:.4}, emp. SD {:.4}, converged {}/100",
            cell.empirical_sd()[a].unwrap_or(f64::NAN),
            cell.n_converged()
        ),
    )
}

// 6. Coverage at K=10, T=200.
fn criterion_6(shared: &mut Shared) -> Outcome {
    let summary = study(10, 200, 200);
    let cell = &summary.cells[0];
    let a = alpha_index(cell);
    let cov = cell.coverage()[a].unwrap_or(f64::NAN);
    collect_fits(shared, "K=10 T=200", &summary);
    outcome(
        (0.90..=1.0).contains(&cov),
        format!("coverage of alpha {cov:.3} over {} converged replicates", cell.n_converged()),
    )
}

// 7. Sandwich structure on every fit from 4 to 6.
fn criterion_7(shared: &mut Shared) -> Outcome {
    let mut bad = Vec::new();
    let mut worst_asym: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for (label, f) in &shared.fits {
        let s = &f.sandwich;
        let asym = (&s.j_hat - s.j_hat.transpose()).amax().max((&s.v_hat - s.v_hat.transpose()).amax());
        worst_asym = worst_asym.max(asym);
        let eig = s.v_hat.clone().symmetric_eigen().eigenvalues.min();
        min_eig = min_eig.min(eig);
        let tse_ok = f.tse().is_some_and(|t| t.iter().all(|v| *v > 0.0));
        if asym > 1e-10 || eig <= -1e-8 || !tse_ok {
            bad.push(label.clone());
        }
    }
    let pass = !shared.fits.is_empty() && bad.is_empty();
    outcome(
        pass,
        format!(
            "{} fits, max asymmetry {worst_asym:.1e}, min V eigenvalue {min_eig:.2e}, violations {}",
            shared.fits.len(),
            if bad.is_empty() { "none".to_string() } else { bad.join(", ") }
        ),
    )
}

// 8. BAI telescoping.
fn criterion_8(_: &mut Shared) -> Outcome {
    let mut rng = StreamKey::root(SEED).child(8).rng();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let len: usize = rng.random_range(1..300);
        let widths: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..6.0)).collect();
        let tree = RawTreeSeries::new("s".into(), format!("t{i}"), (0..len as i32).collect(), widths.clone()).unwrap();
        let total: f64 = ring_width_to_bai(&tree).unwrap().iter().sum();
        let r = widths.iter().sum::<f64>() / 10.0;
        let area = PI * r * r;
        worst = worst.max((total - area).abs() / area.max(1.0));
    }
    let tree = RawTreeSeries::new("s".into(), "two".into(), vec![2000, 2001], vec![10.0, 10.0]).unwrap();
    let two = ring_width_to_bai(&tree).unwrap();
    let exact = two == vec![PI, 3.0 * PI];
    outcome(
        worst < 1e-10 && exact,
        format!("max scaled telescoping error {worst:.1e}; two-ring example exact: {exact}"),
    )
}

// 9. Nested samples.
fn criterion_9(_: &mut Shared) -> Outcome {
    let short = simulate_panel(&scenario1(5, 50)).unwrap();
    let long = simulate_panel(&scenario1(5, 100)).unwrap();
    let same = short.sites().iter().zip(long.sites()).all(|(a, b)| {
        a.y.iter().zip(&b.y[..50]).all(|(u, v)| u.to_bits() == v.to_bits())
            && a.n[..] == b.n[..50]
            && a.x.iter().zip(&b.x[..500]).all(|(u, v)| u.to_bits() == v.to_bits())
            && a.presample_y == b.presample_y
    });
    outcome(same, "T=50 panel against first 50 points of T=100")
}

// 10. QAIC prefers the model without null interactions.
fn criterion_10(_: &mut Shared) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let main = ["tmax_spring", "tmax_summer", "tmax_spring_prev", "tmax_summer_prev", "defol_lag1"];
    let inter: Vec<String> = main[..4].iter().map(|c| format!("defol_lag1:{c}")).collect();
    let main_spec = dir.path().join("main.json");
    let inter_spec = dir.path().join("interaction.json");
    fs::write(&main_spec, serde_json::json!({ "name": "main", "covariates": main }).to_string()).unwrap();
    fs::write(
        &inter_spec,
        serde_json::json!({ "name": "interaction", "covariates": main, "interactions": inter }).to_string(),
    )
    .unwrap();
    let mut wins = 0;
    let mut errors = 0;
    for seed in 0..100 {
        let config = SimulationConfig {
            scenario: Scenario::Custom,
            k: 5,
            t: 50,
            theta: TrueParameters { delta: 0.5, omega: None, alpha: vec![0.6], beta: vec![0.5, -0.5, 0.3, -0.3, 0.4] },
            unit_dist: UnitDistribution::Exponential,
            covariate_means: None,
            covariate_names: Some(main.iter().map(|s| s.to_string()).collect()),
            size: Default::default(),
            burn_in: 500,
            seed,
        };
        let panel = simulate_panel(&config).unwrap();
        let panel_path = dir.path().join("panel.csv");
        write_panel(&panel, fs::File::create(&panel_path).unwrap()).unwrap();
        let out = dir.path().join("ranking.csv");
        match cmd_compare(&panel_path, &[main_spec.clone(), inter_spec.clone()], &out) {
            Ok(_) => {
                let text = fs::read_to_string(&out).unwrap();
                let first = text.lines().nth(1).unwrap_or("");
                if first.split(',').nth(1) == Some("main") {
                    wins += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    outcome(wins >= 80, format!("main-effects model ranked first in {wins}/100 datasets ({errors} errors)"))
}

// 11. Worker count does not change the study table.
fn criterion_11(_: &mut Shared) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    fs::write(&config, serde_json::to_string(&McConfig::from_simulation(scenario1(5, 50))).unwrap()).unwrap();
    let run = |jobs: &str, out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_randsum"))
            .args(["mc-study", "--config"])
            .arg(&config)
            .args(["--reps", "40", "--jobs", jobs, "--out"])
            .arg(out)
            .env_remove("RANDSUM_SEED")
            .status()
            .unwrap()
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let (sa, sb) = (run("1", &a), run("8", &b));
    let same = sa.success() && sb.success() && fs::read(&a).unwrap() == fs::read(&b).unwrap();
    outcome(same, format!("exit codes {:?}/{:?}; tables byte-identical: {same}", sa.code(), sb.code()))
}

type Criterion = fn(&mut Shared) -> Outcome;

fn main() {
    let criteria: [(&str, Criterion, Duration); 11] = [
        ("gradient matches finite differences", criterion_1, Duration::from_secs(30)),
        ("link identities", criterion_2, Duration::from_secs(1)),
        ("conditional moment laws", criterion_3, Duration::from_secs(10)),
        ("consistency K=20 T=400", criterion_4, Duration::from_secs(120)),
        ("band K=5 T=50 B=100", criterion_5, Duration::from_secs(600)),
        ("coverage K=10 T=200 B=200", criterion_6, Duration::from_secs(900)),
        ("sandwich structure", criterion_7, Duration::from_secs(60)),
        ("BAI telescoping", criterion_8, Duration::from_secs(10)),
        ("nested samples", criterion_9, Duration::from_secs(10)),
        ("QAIC direction", criterion_10, Duration::from_secs(600)),
        ("determinism across workers", criterion_11, Duration::from_secs(600)),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run(&mut shared))).unwrap_or_else(|_| outcome(false, "panicked"));
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s of {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
