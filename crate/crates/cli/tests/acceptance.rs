//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pinned tolerances:
//! - GP equivalence: absolute 1e-8 on mean and std.
//! - Coverage: fraction >= 0.9 - 3 sqrt(0.9 * 0.1 / 200).
//! - Penalty, argmax, degeneration, bound replay, determinism: exact.
//! - Trends: exact comparisons on seed means, every consecutive round where
//!   a range must be non-increasing.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rpol::commands::{self, penalty_failures};
use rpol::config::{resolve, DelayCfg, RawConfig, WindowCfg};
use rpol::io;
use rpol_core::estimators::improved_scalers;
use rpol_core::metrics::SummaryRow;
use rpol_core::policy::select_action;
use rpol_core::{
    BoxDomain, Channel, ConfidenceParams, GpState, Grid, GridSpec, KernelSpec, Trace,
    TrackedPosterior,
};

const HORIZON: usize = 500;
const SEEDS: u64 = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn dense_posterior(
    points: &[Vec<f64>],
    y: &[f64],
    kernel: KernelSpec,
    lambda: f64,
    x: &[f64],
) -> (f64, f64) {
    let n = points.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        kernel.eval(&points[i], &points[j]) + if i == j { lambda } else { 0.0 }
    });
    let k = DVector::from_fn(n, |i, _| kernel.eval(&points[i], x));
    let lu = gram.lu();
    let alpha = lu
        .solve(&DVector::from_column_slice(y))
        .expect("regularised Gram matrix is invertible");
    let beta = lu.solve(&k).expect("regularised Gram matrix is invertible");
    let var = (kernel.eval(x, x) - k.dot(&beta)).max(0.0);
    (k.dot(&alpha), var.sqrt())
}

fn uniform_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)]
}

/// Incremental and windowed posteriors against a dense direct solve.
fn gp_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for dataset in 0..100 {
        let n = rng.random_range(1..=50usize);
        let kernel = KernelSpec::square_exponential(rng.random_range(0.5..2.0)).unwrap();
        let lambda = 1.0 + 2.0 / rng.random_range(1..=1000usize) as f64;
        let points: Vec<Vec<f64>> = (0..n).map(|_| uniform_point(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let queries: Vec<Vec<f64>> = (0..50).map(|_| uniform_point(&mut rng)).collect();

        let mut state = GpState::new(kernel, lambda, Channel::Reward).unwrap();
        let flat: Vec<f64> = queries.iter().flatten().copied().collect();
        let mut tracked = TrackedPosterior::new(flat, 2, 4).unwrap();
        for (p, v) in points.iter().zip(&y) {
            state.append(p, *v).unwrap();
            tracked.extend(&state).unwrap();
        }
        // Every other dataset also drops its oldest points, as a window does.
        let dropped = if dataset % 2 == 1 { n / 3 } else { 0 };
        for _ in 0..dropped {
            let rot = state.drop_oldest().unwrap();
            tracked.rotate_out(&rot);
        }
        let kept = &points[dropped..];
        let kept_y = &y[dropped..];
        for (qi, x) in queries.iter().enumerate() {
            let (mu, sd) = dense_posterior(kept, kept_y, kernel, lambda, x);
            let post = state.posterior(x).unwrap();
            let tm = tracked.mean(qi, state.weights());
            let ts = tracked.std(qi);
            for err in [post.mean - mu, post.std - sd, tm - mu, ts - sd] {
                worst = worst.max(err.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0,
        format!("max abs error {worst:.3e} over 100 datasets x 50 queries, {secs:.2} s"),
    )
}

/// Random SE expansion `sum a_i k(., z_i)` with RKHS norm `scale * bound`.
fn random_expansion(
    rng: &mut ChaCha8Rng,
    kernel: KernelSpec,
    bound: f64,
) -> impl Fn(&[f64]) -> f64 {
    let centers: Vec<Vec<f64>> = (0..10).map(|_| uniform_point(rng)).collect();
    let mut alpha: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
    let mut norm2 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            norm2 += alpha[i] * alpha[j] * kernel.eval(&centers[i], &centers[j]);
        }
    }
    let target = bound * rng.random_range(0.5..1.0);
    let s = target / norm2.sqrt();
    alpha.iter_mut().for_each(|a| *a *= s);
    move |x: &[f64]| {
        centers
            .iter()
            .zip(&alpha)
            .map(|(c, a)| a * kernel.eval(c, x))
            .sum()
    }
}

/// All-rounds, all-grid-points coverage of the full-history UCB band.
fn coverage() -> Outcome {
    let start = Instant::now();
    let (horizon, p, seeds) = (200usize, 0.1, 200u64);
    let kernel = KernelSpec::default();
    let lambda = 1.0 + 2.0 / horizon as f64;
    let params = ConfidenceParams {
        reward_bound: 2.0,
        cost_bound: 2.0,
        reward_noise: 0.05f64.sqrt(),
        cost_noise: 0.05f64.sqrt(),
        failure_prob: p,
        horizon,
    };
    let grid = Grid::new(
        &BoxDomain::cube(2, 0.0, 6.0).unwrap(),
        GridSpec::new(20).unwrap(),
    )
    .unwrap();
    let mut covered = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let f = random_expansion(&mut rng, kernel, params.reward_bound);
        let truth: Vec<f64> = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        let mut state = GpState::new(kernel, lambda, Channel::Reward).unwrap();
        let mut tracked = TrackedPosterior::new(grid.flat_points().to_vec(), 2, horizon).unwrap();
        let mut ok = true;
        for _t in 1..=horizon {
            let beta = improved_scalers(state.info_gain(), state.info_gain(), &params)
                .unwrap()
                .beta_f;
            let mut best = (f64::NEG_INFINITY, 0);
            for q in 0..grid.len() {
                let (mu, sd) = (tracked.mean(q, state.weights()), tracked.std(q));
                if (truth[q] - mu).abs() > beta * sd {
                    ok = false;
                }
                let ucb = mu + beta * sd;
                if ucb > best.0 {
                    best = (ucb, q);
                }
            }
            let noise: f64 = rng.sample(StandardNormal);
            let y = truth[best.1] + params.reward_noise * noise;
            state.append(grid.point(best.1), y).unwrap();
            tracked.extend(&state).unwrap();
        }
        covered += ok as usize;
    }
    let frac = covered as f64 / seeds as f64;
    let threshold = (1.0 - p) - 3.0 * ((1.0 - p) * p / seeds as f64).sqrt();
    outcome(
        frac >= threshold,
        format!(
            "coverage {frac:.3} >= {threshold:.4} ({covered}/{seeds} seeds), {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

/// `select_action` against exhaustive enumeration on random tables.
fn argmax_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for table in 0..1000 {
        let n = rng.random_range(1..=64usize);
        // Half the tables draw from a small lattice to force ties.
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if table % 2 == 0 {
                rng.random_range(-3..=3) as f64 * 0.5
            } else {
                rng.random_range(-3.0..3.0)
            }
        };
        let f: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let g: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let q = if table % 3 == 0 {
            1.0
        } else {
            rng.random_range(1.0..30.0)
        };
        let mut expected = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            let v = f[i] - q * g[i].max(0.0);
            if v > best {
                best = v;
                expected = i;
            }
        }
        if select_action(&f, &g, q).unwrap() != expected {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 1000 tables"),
    )
}

fn single_run(raw: &RawConfig, seed: u64) -> Trace {
    let cfg = resolve(raw).unwrap();
    rpol_core::run(&cfg.environment, &cfg.run_config().unwrap(), seed).unwrap()
}

fn base(env: &str, variant: &str, horizon: usize) -> RawConfig {
    RawConfig {
        environment: Some(env.into()),
        horizon: Some(horizon as i64),
        variant: Some(variant.into()),
        output: Some("unused".into()),
        ..RawConfig::default()
    }
}

/// Censored with zero delays and `m >= T`, and a window of length `T`,
/// both reproduce the full-history path under the matching scalers.
fn degeneration(traces: &mut Vec<Trace>) -> Outcome {
    let t = 50;
    let mut details = Vec::new();
    let mut passed = true;

    let mut censored = base("scbwc", "rpol-censored-ucb", t);
    censored.delay = Some(DelayCfg::Fixed(0));
    censored.m = Some(t as i64);
    let mut full = base("scbwc", "rpol-ucb", t);
    full.scalers = Some("censored".into());
    full.m = Some(t as i64);
    for seed in 0..5 {
        let (a, b) = (single_run(&censored, seed), single_run(&full, seed));
        let same = a.rounds == b.rounds && a.final_penalty == b.final_penalty;
        passed &= same;
        if !same {
            details.push(format!("(a) seed {seed} diverges"));
        }
        traces.extend([a, b]);
    }

    let mut window = base("scbwc", "rpol-sw-ucb", t);
    window.window = Some(WindowCfg::Rounds(t as i64));
    let mut full = base("scbwc", "rpol-ucb", t);
    full.scalers = Some("sliding-window".into());
    full.window = Some(WindowCfg::Rounds(t as i64));
    for seed in 0..5 {
        let (a, b) = (single_run(&window, seed), single_run(&full, seed));
        let same = a.rounds == b.rounds && a.final_penalty == b.final_penalty;
        passed &= same;
        if !same {
            details.push(format!("(b) seed {seed} diverges"));
        }
        traces.extend([a, b]);
    }
    if passed {
        details.push("(a) and (b) identical action paths over 5 seeds at T=50".into());
    }
    outcome(passed, details.join("; "))
}

struct Experiment {
    dir: PathBuf,
    summary: Vec<SummaryRow>,
    traces: Vec<Trace>,
}

impl Experiment {
    fn avg_violation(&self, t: usize) -> f64 {
        self.summary[t - 1].mean_avg_violation
    }

    fn avg_regret(&self, t: usize) -> f64 {
        self.summary[t - 1].mean_avg_regret
    }

    /// Seed mean of the per-round true reward over rounds `from..=to`.
    fn mean_reward(&self, from: usize, to: usize) -> f64 {
        let mut acc = 0.0;
        for tr in &self.traces {
            acc += tr.rounds[from - 1..to]
                .iter()
                .map(|r| r.f_true)
                .sum::<f64>();
        }
        acc / (self.traces.len() * (to - from + 1)) as f64
    }
}

fn sweep(root: &Path, name: &str, mut raw: RawConfig) -> Experiment {
    let dir = root.join(name);
    raw.seeds = Some((0..SEEDS).collect());
    raw.output = Some(dir.to_string_lossy().into_owned());
    let cfg = resolve(&raw).unwrap();
    let start = Instant::now();
    commands::sweep(&cfg).unwrap();
    println!(
        "  swept {name}: {} seeds in {:.1} s",
        SEEDS,
        start.elapsed().as_secs_f64()
    );
    let summary = io::read_summary(&dir.join(io::SUMMARY_FILE)).unwrap();
    let traces = commands::trace_files(&dir)
        .unwrap()
        .iter()
        .map(|p| io::read_trace(p).unwrap())
        .collect();
    Experiment {
        dir,
        summary,
        traces,
    }
}

fn first_increase(
    exp: &Experiment,
    from: usize,
    to: usize,
    pick: fn(&SummaryRow) -> f64,
) -> Option<usize> {
    (from + 1..=to).find(|&t| pick(&exp.summary[t - 1]) > pick(&exp.summary[t - 2]))
}

fn stationary_trend(ucb: &Experiment, unconstrained: &Experiment) -> Outcome {
    let v = |t| ucb.avg_violation(t);
    let mono = first_increase(ucb, 100, HORIZON, |r| r.mean_avg_violation);
    let a = mono.is_none() && v(HORIZON) <= 0.5 * v(50);
    let b = ucb.avg_regret(HORIZON) <= 0.6 * ucb.avg_regret(100);
    let c = v(HORIZON) < unconstrained.avg_violation(HORIZON);
    outcome(
        a && b && c,
        format!(
            "(a) {}: V/t at 50 {:.4}, 500 {:.4}, ratio {:.3} <= 0.5, first increase after 100: {:?}; \
             (b) {}: R/t at 100 {:.4}, 500 {:.4}; (c) {}: V/T {:.4} vs unconstrained {:.4}",
            verdict(a),
            v(50),
            v(HORIZON),
            v(HORIZON) / v(50),
            mono,
            verdict(b),
            ucb.avg_regret(100),
            ucb.avg_regret(HORIZON),
            verdict(c),
            v(HORIZON),
            unconstrained.avg_violation(HORIZON),
        ),
    )
}

fn delayed_trend(exp: &Experiment) -> Outcome {
    let half = HORIZON / 2;
    let finite = exp
        .summary
        .iter()
        .all(|r| r.mean_avg_violation.is_finite() && r.mean_avg_regret.is_finite());
    let v_mono = first_increase(exp, half, HORIZON, |r| r.mean_avg_violation);
    let r_mono = first_increase(exp, half, HORIZON, |r| r.mean_avg_regret);
    let ratio = exp.avg_violation(HORIZON) / exp.avg_violation(100);
    let passed = finite && v_mono.is_none() && r_mono.is_none() && ratio <= 0.6;
    outcome(
        passed,
        format!(
            "finite {finite}; first increase over rounds {half}-{HORIZON}: V/t {v_mono:?}, R/t {r_mono:?}; \
             V/t at 100 {:.4}, 500 {:.4}, ratio {ratio:.3} <= 0.6",
            exp.avg_violation(100),
            exp.avg_violation(HORIZON)
        ),
    )
}

fn nonstationary_trend(window: &Experiment, full: &Experiment) -> Outcome {
    let (sw, fh) = (
        window.mean_reward(401, HORIZON),
        full.mean_reward(401, HORIZON),
    );
    let recovers = sw > fh;
    let (v350, v500) = (window.avg_violation(350), window.avg_violation(HORIZON));
    let decreases = v500 < v350;
    outcome(
        recovers && decreases,
        format!(
            "{}: mean f over rounds 401-500 {sw:.4} vs full history {fh:.4}; {}: V/t at 350 {v350:.4}, 500 {v500:.4}",
            verdict(recovers),
            verdict(decreases)
        ),
    )
}

fn bound_replay(experiments: &[&Experiment]) -> Outcome {
    let mut checked = 0;
    let mut failed = Vec::new();
    for exp in experiments {
        for r in commands::verify(&exp.dir).unwrap() {
            if r.name.contains("width sum") || r.name.contains("sum sigma") {
                checked += 1;
                if !r.passed {
                    failed.push(format!("{} {}: {}", r.trace.display(), r.name, r.detail));
                }
            }
        }
    }
    if failed.is_empty() {
        outcome(true, format!("{checked} bound checks hold"))
    } else {
        outcome(
            false,
            format!(
                "{} of {checked} failed: {}",
                failed.len(),
                failed.join("; ")
            ),
        )
    }
}

fn determinism(root: &Path, traces: &mut Vec<Trace>) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rpol");
    let config = root.join("determinism.toml");
    std::fs::write(
        &config,
        "environment = \"scbwc-delayed\"\nT = 120\nvariant = \"rpol-censored-ucb\"\nseed = 17\n",
    )
    .unwrap();
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let out = root.join(format!("determinism-{run}"));
        let status = Command::new(bin)
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--output")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        let trace = io::trace_path(&out, 17);
        files.push([
            std::fs::read(&trace).unwrap(),
            std::fs::read(io::sidecar_path(&trace)).unwrap(),
            std::fs::read(io::metrics_path(&out, 17)).unwrap(),
        ]);
        traces.push(io::read_trace(&trace).unwrap());
    }
    let same = files[0] == files[1];
    outcome(
        same,
        format!("trace, sidecar and metrics files byte-identical: {same}"),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fails"
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n:>2} {name}: {} ({})",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    let mut all_traces: Vec<Trace> = Vec::new();

    report(1, "GP oracle equivalence", gp_equivalence());
    report(2, "confidence coverage", coverage());
    report(4, "argmax oracle", argmax_oracle());
    report(5, "variant degeneration", degeneration(&mut all_traces));

    let start = Instant::now();
    let configs = commands::repro_configs(HORIZON, SEEDS, root);
    let stationary = sweep(root, "stationary", configs[0].1.clone());
    let mut comparator = base("scbwc", "primal-dual", HORIZON);
    comparator.step = Some(0.0);
    let unconstrained = sweep(root, "unconstrained", comparator);
    let delayed = sweep(root, "delayed", configs[1].1.clone());
    let windowed = sweep(root, "windowed", configs[2].1.clone());
    let full_history = sweep(
        root,
        "full-history",
        base("scbwc-nonstationary", "rpol-ucb", HORIZON),
    );
    println!("  experiments took {:.1} s", start.elapsed().as_secs_f64());

    report(
        6,
        "bound replay",
        bound_replay(&[
            &stationary,
            &unconstrained,
            &delayed,
            &windowed,
            &full_history,
        ]),
    );
    report(
        7,
        "stationary trend",
        stationary_trend(&stationary, &unconstrained),
    );
    report(8, "delayed trend", delayed_trend(&delayed));
    report(
        9,
        "non-stationary trend",
        nonstationary_trend(&windowed, &full_history),
    );
    report(10, "determinism", determinism(root, &mut all_traces));

    for exp in [
        &stationary,
        &unconstrained,
        &delayed,
        &windowed,
        &full_history,
    ] {
        all_traces.extend(exp.traces.iter().cloned());
    }
    // The unconstrained comparator's Q column is a dual variable, not a penalty.
    all_traces.retain(|t| t.meta.pricing == "rectified");
    let bad: Vec<String> = all_traces
        .iter()
        .flat_map(|t| {
            penalty_failures(t)
                .into_iter()
                .map(move |f| format!("{} seed {}: {f}", t.meta.variant, t.meta.seed))
        })
        .collect();
    report(
        3,
        "penalty invariants",
        outcome(
            bad.is_empty(),
            if bad.is_empty() {
                format!("0 violations over {} traces", all_traces.len())
            } else {
                bad.join("; ")
            },
        ),
    );

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results
        .iter()
        .filter(|r| !r.2.passed)
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failing: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
