//! Subcommands: run, sweep, oracle, verify and repro.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rpol_core::bounds::{self, BoundCheck};
use rpol_core::estimators::observation_bound;
use rpol_core::metrics::{aggregate, metric_series, SummaryRow};
use rpol_core::{Environment, GridSpec, RunConfig, ScalerRule, Trace};

use crate::config::{resolve, ExperimentConfig, RawConfig, VariantName, WindowCfg};
use crate::error::{CliError, CliResult};
use crate::io::{self, OracleFixture, OracleSegment};

/// Constrained optimum of each segment, on the config's oracle grid.
pub fn compute_oracle(env: &Environment, grid: &GridSpec) -> CliResult<OracleFixture> {
    let optima = env.segment_optima(grid)?;
    let segments = env
        .schedule
        .segments()
        .iter()
        .zip(optima)
        .map(|(seg, (x, f))| {
            Ok(OracleSegment {
                start_round: seg.start_round,
                g_at_x_star: seg.cost.eval(&x),
                x_star: x,
                f_star: f,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(OracleFixture {
        environment: env.name.clone(),
        grid: grid.resolution,
        refine_steps: grid.refine_steps,
        segments,
    })
}

/// The frozen fixture named in the config, or a fresh brute-force solve.
pub fn load_or_compute_oracle(cfg: &ExperimentConfig) -> CliResult<OracleFixture> {
    match &cfg.oracle_fixture {
        Some(path) => {
            let fx = io::read_oracle(path)?;
            let starts: Vec<usize> = cfg
                .environment
                .schedule
                .segments()
                .iter()
                .map(|s| s.start_round)
                .collect();
            let fx_starts: Vec<usize> = fx.segments.iter().map(|s| s.start_round).collect();
            if fx.environment != cfg.environment.name || starts != fx_starts {
                return Err(CliError::config(format!(
                    "oracle_fixture {} was built for `{}` with segments at {:?}",
                    path.display(),
                    fx.environment,
                    fx_starts
                )));
            }
            Ok(fx)
        }
        None => compute_oracle(&cfg.environment, &cfg.oracle_grid_spec()),
    }
}

fn write_config(cfg: &ExperimentConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(cfg.output.join(io::CONFIG_FILE), cfg.resolved.to_toml())?;
    Ok(())
}

fn run_one(cfg: &ExperimentConfig, rc: &RunConfig, seed: u64, optimum: &[f64]) -> CliResult<Trace> {
    let trace = rpol_core::run(&cfg.environment, rc, seed)
        .map_err(|e| CliError::runtime(format!("seed {seed}: {e}")))?;
    io::write_trace(&io::trace_path(&cfg.output, seed), &trace)?;
    let metrics = metric_series(&trace, optimum)?;
    io::write_metrics(&io::metrics_path(&cfg.output, seed), &metrics)?;
    Ok(trace)
}

pub struct RunOutcome {
    pub trace: Trace,
    pub trace_file: PathBuf,
}

/// Single seed: trace, sidecar, metrics and the resolved config.
pub fn run(cfg: &ExperimentConfig, seed: Option<u64>) -> CliResult<RunOutcome> {
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let rc = cfg.run_config()?;
    let optimum = load_or_compute_oracle(cfg)?.optimum_per_round(cfg.horizon);
    write_config(cfg)?;
    let trace = run_one(cfg, &rc, seed, &optimum)?;
    Ok(RunOutcome {
        trace,
        trace_file: io::trace_path(&cfg.output, seed),
    })
}

/// All seeds in parallel, then the seed summary.
pub fn sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SummaryRow>> {
    let rc = cfg.run_config()?;
    let optimum = load_or_compute_oracle(cfg)?.optimum_per_round(cfg.horizon);
    write_config(cfg)?;
    let traces = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_one(cfg, &rc, seed, &optimum))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = aggregate(&traces, &optimum)?;
    io::write_summary(&cfg.output.join(io::SUMMARY_FILE), &rows)?;
    Ok(rows)
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path) -> CliResult<OracleFixture> {
    let fx = compute_oracle(&cfg.environment, &cfg.oracle_grid_spec())?;
    io::write_oracle(out, &fx)?;
    Ok(fx)
}

/// One named check on one trace.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub trace: PathBuf,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn bound_result(trace: &Path, check: BoundCheck, channel: &str) -> CheckResult {
    CheckResult {
        trace: trace.to_path_buf(),
        name: format!("{} ({channel})", check.name),
        passed: check.holds(),
        detail: format!("{} <= {}", check.lhs, check.rhs),
    }
}

/// Penalty invariants, phrased per trace row: `Q_t` is the value in row `t`
/// and `Q_{T+1}` comes from the sidecar.
pub fn penalty_failures(trace: &Trace) -> Vec<String> {
    let q = trace.penalties();
    let mut out = Vec::new();
    let row = |t: usize| {
        if t <= trace.horizon() {
            format!("round {t}")
        } else {
            format!("round {t} (after the final update)")
        }
    };
    if q[0] < 1.0 {
        out.push(format!("Q_1 = {} is below 1 at round 1", q[0]));
    }
    for t in 2..=q.len() {
        let (prev, cur) = (q[t - 2], q[t - 1]);
        if cur < prev {
            out.push(format!("Q decreased at {}: {} -> {}", row(t), prev, cur));
        }
        if cur < ((t - 1) as f64).sqrt() {
            out.push(format!(
                "Q = {} is below sqrt({}) at {}",
                cur,
                t - 1,
                row(t)
            ));
        }
    }
    out
}

fn finite_failures(trace: &Trace) -> Vec<String> {
    let mut out = Vec::new();
    for r in &trace.rounds {
        let values = [
            ("f_true", r.f_true),
            ("g_true", r.g_true),
            ("Q", r.q),
            ("beta_f", r.beta_f),
            ("beta_g", r.beta_g),
            ("extra_scaler", r.extra_scaler),
            ("sigma_f", r.sigma_f),
            ("sigma_g", r.sigma_g),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                out.push(format!("{name} is not finite at round {}", r.t));
            }
        }
        if r.x.iter().any(|v| !v.is_finite()) {
            out.push(format!("x is not finite at round {}", r.t));
        }
    }
    out
}

/// Replays every invariant and width-sum bound on one stored trace.
pub fn verify_trace(
    path: &Path,
    cfg: &ExperimentConfig,
    optimum: &[f64],
) -> CliResult<Vec<CheckResult>> {
    let trace = io::read_trace(path)?;
    let mut results = Vec::new();
    let mut push = |name: &str, failures: Vec<String>, ok_detail: String| {
        results.push(CheckResult {
            trace: path.to_path_buf(),
            name: name.to_string(),
            passed: failures.is_empty(),
            detail: if failures.is_empty() {
                ok_detail
            } else {
                failures.join("; ")
            },
        })
    };

    let len_fail = if trace.horizon() == cfg.horizon {
        vec![]
    } else {
        vec![format!(
            "trace has {} rounds, config has T = {}",
            trace.horizon(),
            cfg.horizon
        )]
    };
    push("length", len_fail, format!("{} rounds", trace.horizon()));
    let rows_fail: Vec<String> = trace
        .rounds
        .iter()
        .enumerate()
        .filter(|(i, r)| r.t != i + 1)
        .map(|(i, r)| format!("row {} carries round index {}", i + 1, r.t))
        .take(1)
        .collect();
    push("round index", rows_fail, "1..T".into());
    // The primal-dual comparator stores its dual variable in the Q column.
    if trace.meta.pricing == "rectified" {
        push(
            "penalty invariants",
            penalty_failures(&trace),
            "Q non-decreasing, Q_{t+1} >= sqrt(t)".into(),
        );
    }
    let finite = finite_failures(&trace);
    let finite_ok = finite.is_empty();
    push("finite diagnostics", finite, "all finite".into());

    if finite_ok && !trace.rounds.is_empty() {
        let points: Vec<Vec<f64>> = trace.rounds.iter().map(|r| r.x.clone()).collect();
        let col = |f: fn(&rpol_core::metrics::RoundRecord) -> f64| -> Vec<f64> {
            trace.rounds.iter().map(f).collect()
        };
        let (bf, bg, sf, sg, extra) = (
            col(|r| r.beta_f),
            col(|r| r.beta_g),
            col(|r| r.sigma_f),
            col(|r| r.sigma_g),
            col(|r| r.extra_scaler),
        );
        let kernel = cfg.kernel();
        let lambda = cfg.lambda;
        match cfg.variant {
            VariantName::RpolSwUcb => {
                for (ch, b, s) in [("f", &bf, &sf), ("g", &bg, &sg)] {
                    let c = bounds::window_width_sum(b, s, &points, kernel, lambda, cfg.window)?;
                    results.push(bound_result(path, c, ch));
                }
            }
            _ => {
                results.push(bound_result(
                    path,
                    bounds::sigma_sum(&sf, &points, kernel, lambda)?,
                    "f",
                ));
                for (ch, b, s) in [("f", &bf, &sf), ("g", &bg, &sg)] {
                    results.push(bound_result(
                        path,
                        bounds::full_history_width_sum(b, s, &points, kernel, lambda)?,
                        ch,
                    ));
                }
                if let ScalerRule::Censored { cap } = cfg.scaler_rule() {
                    let b_r = observation_bound(
                        cfg.params.reward_bound,
                        cfg.params.reward_noise,
                        cfg.horizon as f64,
                    );
                    let c = bounds::censored_width_sum(
                        &extra, &bf, &sf, &points, kernel, lambda, cap, b_r,
                    )?;
                    results.push(bound_result(path, c, "f"));
                }
            }
        }
    }

    let mpath = io::metrics_path(path.parent().unwrap_or(Path::new(".")), trace.meta.seed);
    if mpath.exists() {
        let stored = io::read_metrics(&mpath)?;
        let fresh = metric_series(&trace, optimum)?;
        let same = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        let mut fail = Vec::new();
        if !same(&stored.regret, &fresh.regret) {
            fail.push("regret differs from recomputation".to_string());
        }
        if !same(&stored.violation, &fresh.violation)
            || !same(&stored.soft_violation, &fresh.soft_violation)
        {
            fail.push("violation differs from recomputation".to_string());
        }
        results.push(CheckResult {
            trace: path.to_path_buf(),
            name: "metrics recomputation".into(),
            passed: fail.is_empty(),
            detail: if fail.is_empty() {
                "bit-identical".into()
            } else {
                fail.join("; ")
            },
        });
    }
    Ok(results)
}

/// Trace files under `target`: the file itself, or every `trace_seed*.csv`
/// in a directory (sorted).
pub fn trace_files(target: &Path) -> CliResult<Vec<PathBuf>> {
    if target.is_file() {
        return Ok(vec![target.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(target)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", target.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("trace_seed"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::runtime(format!(
            "no trace files in {}",
            target.display()
        )));
    }
    Ok(files)
}

/// Verifies stored traces against the `config.toml` next to them. Returns
/// every check; fails with exit code 3 if any check failed.
pub fn verify(target: &Path) -> CliResult<Vec<CheckResult>> {
    let files = trace_files(target)?;
    let mut all = Vec::new();
    let mut cache: Option<(PathBuf, ExperimentConfig, Vec<f64>)> = None;
    for file in &files {
        let dir = file.parent().unwrap_or(Path::new(".")).to_path_buf();
        if cache.as_ref().map(|c| &c.0) != Some(&dir) {
            let cfg = resolve(&RawConfig::load(&dir.join(io::CONFIG_FILE))?)?;
            let optimum = load_or_compute_oracle(&cfg)?.optimum_per_round(cfg.horizon);
            cache = Some((dir.clone(), cfg, optimum));
        }
        let (_, cfg, optimum) = cache.as_ref().expect("filled above");
        all.extend(verify_trace(file, cfg, optimum)?);
    }
    Ok(all)
}

pub fn verify_failures(results: &[CheckResult]) -> Option<CliError> {
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}: {}: {}", r.trace.display(), r.name, r.detail))
        .collect();
    (!failed.is_empty()).then(|| CliError::Verify(failed.join("\n")))
}

/// The three synthetic experiments.
pub fn repro_configs(horizon: usize, seeds: u64, root: &Path) -> Vec<(String, RawConfig)> {
    let base = |env: &str, variant: &str| RawConfig {
        environment: Some(env.into()),
        horizon: Some(horizon as i64),
        variant: Some(variant.into()),
        seeds: Some((0..seeds).collect()),
        output: Some(
            root.join(format!("{env}-{variant}"))
                .to_string_lossy()
                .into_owned(),
        ),
        ..RawConfig::default()
    };
    let stationary = base("scbwc", "rpol-ucb");
    let mut delayed = base("scbwc-delayed", "rpol-censored-ucb");
    delayed.m = Some(25);
    let mut drifting = base("scbwc-nonstationary", "rpol-sw-ucb");
    drifting.window = Some(WindowCfg::Rounds(50));
    [stationary, delayed, drifting]
        .into_iter()
        .map(|c| {
            let name = format!(
                "{}-{}",
                c.environment.as_deref().unwrap_or(""),
                c.variant.as_deref().unwrap_or("")
            );
            (name, c)
        })
        .collect()
}

/// Writes each experiment config into its output directory and sweeps it.
pub fn repro(horizon: usize, seeds: u64, root: &Path) -> CliResult<Vec<PathBuf>> {
    let mut summaries = Vec::new();
    for (_, raw) in repro_configs(horizon, seeds, root) {
        let cfg = resolve(&raw)?;
        write_config(&cfg)?;
        sweep(&cfg)?;
        summaries.push(cfg.output.join(io::SUMMARY_FILE));
    }
    Ok(summaries)
}
