//! Argument parsing. Flags mirror config keys in kebab case and override
//! values read from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{self, resolve, RawConfig, WindowCfg};
use crate::error::CliResult;
use crate::io;

#[derive(Debug, Parser)]
#[command(
    name = "rpol",
    version,
    about = "Constrained GP bandit simulator (rectified pessimistic-optimistic learning)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seed and write its trace and metrics.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every seed in parallel and write the seed summary.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Solve each segment's constrained problem by brute force and freeze it.
    Oracle {
        /// Built-in environment name (or use --config).
        name: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Fixture path [default: <output root>/oracle-<environment>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay invariants and width-sum bounds on stored traces.
    Verify {
        /// A trace CSV or a run directory.
        path: PathBuf,
    },
    /// Write and sweep the three synthetic experiment configs.
    Repro {
        #[arg(long = "T", visible_alias = "horizon", default_value_t = 500)]
        horizon: usize,
        /// Number of seeds, 0..n.
        #[arg(long, default_value_t = config::DEFAULT_SEED_COUNT)]
        seeds: u64,
        /// Root directory [default: $RPOL_OUTPUT_DIR or ./runs].
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub environment: Option<String>,
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<i64>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long = "b-f")]
    pub b_f: Option<f64>,
    #[arg(long = "b-g")]
    pub b_g: Option<f64>,
    #[arg(long = "r-f")]
    pub r_f: Option<f64>,
    #[arg(long = "r-g")]
    pub r_g: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub grid: Option<i64>,
    #[arg(long = "oracle-grid")]
    pub oracle_grid: Option<i64>,
    #[arg(long = "oracle-refine")]
    pub oracle_refine: Option<i64>,
    #[arg(long = "oracle-fixture")]
    pub oracle_fixture: Option<String>,
    #[arg(long)]
    pub m: Option<i64>,
    /// Window length, or `theorem5`.
    #[arg(long = "W", visible_alias = "window")]
    pub window: Option<String>,
    #[arg(long = "P-T", visible_alias = "p-t")]
    pub p_t: Option<f64>,
    #[arg(long = "gamma-hat")]
    pub gamma_hat: Option<f64>,
    #[arg(long = "gamma-cap")]
    pub gamma_cap: Option<f64>,
    #[arg(long)]
    pub variation: Option<String>,
    #[arg(long)]
    pub scalers: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub output: Option<String>,
}

impl ConfigArgs {
    /// Config file (if any) with flag overrides applied.
    pub fn raw(&self) -> CliResult<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    raw.$field = Some(v.clone());
                }
            )*};
        }
        set!(
            environment,
            horizon,
            variant,
            b_f,
            b_g,
            r_f,
            r_g,
            p,
            u,
            lambda,
            grid,
            oracle_grid,
            oracle_refine,
            oracle_fixture,
            m,
            p_t,
            gamma_hat,
            gamma_cap,
            variation,
            scalers,
            step,
            output
        );
        if let Some(s) = self.seed {
            raw.seed = Some(s);
            raw.seeds = None;
        }
        if let Some(list) = &self.seeds {
            raw.seeds = Some(list.clone());
            raw.seed = None;
        }
        if let Some(w) = &self.window {
            raw.window = Some(match w.parse::<i64>() {
                Ok(n) => WindowCfg::Rounds(n),
                Err(_) => WindowCfg::Rule(w.clone()),
            });
        }
        Ok(raw)
    }
}

fn output_root(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(config::OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUTPUT_ROOT))
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = resolve(&config.raw()?)?;
            let out = commands::run(&cfg, config.seed)?;
            let last = out.trace.rounds.last();
            println!("trace: {}", out.trace_file.display());
            if let Some(r) = last {
                println!("Q_T = {}  final penalty = {}", r.q, out.trace.final_penalty);
            }
        }
        Command::Sweep { config } => {
            let cfg = resolve(&config.raw()?)?;
            let rows = commands::sweep(&cfg)?;
            if let Some(r) = rows.last() {
                println!(
                    "T = {}: R/T = {} ± {}, V/T = {} ± {}",
                    r.t,
                    r.mean_avg_regret,
                    r.std_avg_regret,
                    r.mean_avg_violation,
                    r.std_avg_violation
                );
            }
            println!("summary: {}", cfg.output.join(io::SUMMARY_FILE).display());
        }
        Command::Oracle { name, config, out } => {
            let mut raw = config.raw()?;
            if name.is_some() {
                raw.environment = name;
            }
            raw.horizon.get_or_insert(1);
            let cfg = resolve(&raw)?;
            let path = out.unwrap_or_else(|| {
                output_root(None).join(format!("oracle-{}.json", cfg.environment.name))
            });
            let fx = commands::oracle(&cfg, &path)?;
            for s in &fx.segments {
                println!(
                    "from round {}: x* = {:?}, f* = {}",
                    s.start_round, s.x_star, s.f_star
                );
            }
            println!("fixture: {}", path.display());
        }
        Command::Verify { path } => {
            let results = commands::verify(&path)?;
            for r in &results {
                println!(
                    "{} {} [{}]: {}",
                    if r.passed { "ok  " } else { "FAIL" },
                    r.trace.display(),
                    r.name,
                    r.detail
                );
            }
            if let Some(e) = commands::verify_failures(&results) {
                return Err(e);
            }
        }
        Command::Repro {
            horizon,
            seeds,
            output,
        } => {
            let root = output_root(output);
            for path in commands::repro(horizon, seeds, &root)? {
                println!("summary: {}", path.display());
            }
        }
    }
    Ok(())
}
