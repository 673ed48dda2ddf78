//! On-disk formats: trace CSV plus JSON sidecar, per-seed metrics, seed
//! summaries and oracle fixtures.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! value read back is bit-identical to the one written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rpol_core::metrics::{MetricSeries, RoundRecord, SummaryRow, TraceMeta};
use rpol_core::Trace;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const SUMMARY_HEADER: [&str; 7] = [
    "t",
    "mean_avg_regret",
    "std_avg_regret",
    "mean_avg_violation",
    "std_avg_violation",
    "mean_avg_soft_violation",
    "std_avg_soft_violation",
];

pub const METRICS_HEADER: [&str; 7] = [
    "t",
    "regret",
    "violation",
    "soft_violation",
    "avg_regret",
    "avg_violation",
    "avg_soft_violation",
];

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("trace_seed{seed}.csv"))
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

/// Sidecar of a trace CSV: `trace_seed3.csv` -> `trace_seed3.json`.
pub fn sidecar_path(trace: &Path) -> PathBuf {
    trace.with_extension("json")
}

pub fn trace_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dim).map(|i| format!("x_{i}")));
    h.extend(
        [
            "f_true",
            "g_true",
            "r_obs",
            "c_obs",
            "Q",
            "beta_f",
            "beta_g",
            "extra_scaler",
            "sigma_f",
            "sigma_g",
        ]
        .map(String::from),
    );
    h
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config_id: String,
    pub seed: u64,
    pub variant: String,
    pub pricing: String,
    pub dim: usize,
    pub horizon: usize,
    /// `Q_{T+1}`, the penalty after the last update.
    pub final_penalty: f64,
}

pub fn write_trace(path: &Path, trace: &Trace) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(trace_header(trace.meta.dim))?;
    for r in &trace.rounds {
        let mut row = vec![r.t.to_string()];
        row.extend(r.x.iter().copied().map(num));
        row.extend([
            num(r.f_true),
            num(r.g_true),
            opt(r.r_obs),
            opt(r.c_obs),
            num(r.q),
            num(r.beta_f),
            num(r.beta_g),
            num(r.extra_scaler),
            num(r.sigma_f),
            num(r.sigma_g),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        config_id: trace.meta.config_id.clone(),
        seed: trace.meta.seed,
        variant: trace.meta.variant.clone(),
        pricing: trace.meta.pricing.clone(),
        dim: trace.meta.dim,
        horizon: trace.horizon(),
        final_penalty: trace.final_penalty,
    };
    let mut f = create(&sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).map_err(CliError::runtime)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn parse_f64(field: &str, col: &str, t: usize) -> CliResult<f64> {
    field.parse().map_err(|_| {
        CliError::runtime(format!(
            "round {t}: column {col} is not a number: `{field}`"
        ))
    })
}

/// Reads a trace and its sidecar. The header must match the trace schema.
pub fn read_trace(path: &Path) -> CliResult<Trace> {
    let sidecar_file = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar_file)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", sidecar_file.display())))?;
    let side: Sidecar = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{}: {e}", sidecar_file.display())))?;

    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let expected = trace_header(side.dim);
    if header != expected {
        return Err(CliError::runtime(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            header,
            expected
        )));
    }
    let d = side.dim;
    let mut rounds = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t: usize = rec[0]
            .parse()
            .map_err(|_| CliError::runtime(format!("bad round index `{}`", &rec[0])))?;
        let col = |i: usize| parse_f64(&rec[i], &expected[i], t);
        let optional = |i: usize| -> CliResult<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                col(i).map(Some)
            }
        };
        let x = (1..=d).map(col).collect::<CliResult<Vec<f64>>>()?;
        rounds.push(RoundRecord {
            t,
            x,
            f_true: col(d + 1)?,
            g_true: col(d + 2)?,
            r_obs: optional(d + 3)?,
            c_obs: optional(d + 4)?,
            q: col(d + 5)?,
            beta_f: col(d + 6)?,
            beta_g: col(d + 7)?,
            extra_scaler: col(d + 8)?,
            sigma_f: col(d + 9)?,
            sigma_g: col(d + 10)?,
        });
    }
    Ok(Trace {
        meta: TraceMeta {
            config_id: side.config_id,
            seed: side.seed,
            variant: side.variant,
            pricing: side.pricing,
            dim: side.dim,
        },
        rounds,
        final_penalty: side.final_penalty,
    })
}

pub fn write_metrics(path: &Path, m: &MetricSeries) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(METRICS_HEADER)?;
    let (ar, av, asv) = (m.avg_regret(), m.avg_violation(), m.avg_soft_violation());
    for i in 0..m.regret.len() {
        w.write_record([
            (i + 1).to_string(),
            num(m.regret[i]),
            num(m.violation[i]),
            num(m.soft_violation[i]),
            num(ar[i]),
            num(av[i]),
            num(asv[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> CliResult<MetricSeries> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(METRICS_HEADER) {
        return Err(CliError::runtime(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut m = MetricSeries {
        regret: Vec::new(),
        violation: Vec::new(),
        soft_violation: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t = i + 1;
        m.regret.push(parse_f64(&rec[1], "regret", t)?);
        m.violation.push(parse_f64(&rec[2], "violation", t)?);
        m.soft_violation
            .push(parse_f64(&rec[3], "soft_violation", t)?);
    }
    Ok(m)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            num(r.mean_avg_regret),
            num(r.std_avg_regret),
            num(r.mean_avg_violation),
            num(r.std_avg_violation),
            num(r.mean_avg_soft_violation),
            num(r.std_avg_soft_violation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> CliResult<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(SUMMARY_HEADER) {
        return Err(CliError::runtime(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t: usize = rec[0]
            .parse()
            .map_err(|_| CliError::runtime(format!("bad round index `{}`", &rec[0])))?;
        let c = |i: usize| parse_f64(&rec[i], SUMMARY_HEADER[i], t);
        rows.push(SummaryRow {
            t,
            mean_avg_regret: c(1)?,
            std_avg_regret: c(2)?,
            mean_avg_violation: c(3)?,
            std_avg_violation: c(4)?,
            mean_avg_soft_violation: c(5)?,
            std_avg_soft_violation: c(6)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSegment {
    pub start_round: usize,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub g_at_x_star: f64,
}

/// Frozen constrained optimum of every schedule segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub environment: String,
    pub grid: usize,
    pub refine_steps: usize,
    pub segments: Vec<OracleSegment>,
}

impl OracleFixture {
    /// `f_t(x_t*)` for `t = 1..=horizon`.
    pub fn optimum_per_round(&self, horizon: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(horizon);
        let mut seg = 0;
        for t in 1..=horizon {
            while seg + 1 < self.segments.len() && self.segments[seg + 1].start_round <= t {
                seg += 1;
            }
            out.push(self.segments[seg].f_star);
        }
        out
    }
}

pub fn write_oracle(path: &Path, fixture: &OracleFixture) -> CliResult<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, fixture).map_err(CliError::runtime)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn read_oracle(path: &Path) -> CliResult<OracleFixture> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::config(format!(
            "oracle_fixture: cannot read {}: {e}",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("oracle_fixture: {e}")))
}
