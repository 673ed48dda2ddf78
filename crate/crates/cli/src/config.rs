//! Experiment configuration: the TOML schema, defaults and validation.
//!
//! A config file is parsed into [`RawConfig`] (every key optional), command
//! line overrides are applied on top, and [`resolve`] turns the result into
//! an [`ExperimentConfig`]. The resolved form can be written back as a
//! self-contained [`RawConfig`] with every default filled in.

use std::path::{Path, PathBuf};

use rpol_core::domain::BoxDomain;
use rpol_core::env::{FunctionSchedule, Response, Segment};
use rpol_core::estimators::ConfidenceParams;
use rpol_core::gp::default_lambda;
use rpol_core::harness::{RunConfig, VariationMode};
use rpol_core::policy::{DEFAULT_GAMMA_CAP, DEFAULT_GRID};
use rpol_core::{
    DelaySpec, Environment, GridSpec, KernelSpec, NoiseSpec, PolicyConfig, PolicyVariant, Pricing,
    ScalerRule,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const OUTPUT_ENV: &str = "RPOL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const DEFAULT_ORACLE_GRID: usize = 1001;
pub const DEFAULT_ORACLE_REFINE: usize = 0;
pub const DEFAULT_SEED_COUNT: u64 = 20;
pub const DEFAULT_CAP: usize = 25;
pub const DEFAULT_WINDOW: usize = 50;

/// Closed-form response families available to inline schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ResponseSpec {
    /// `-sin(x1 + shift) - x2`
    SinShift { shift: f64 },
    /// `sin(x1 + a) sin(x2 + b) + offset`
    SinProduct { shift: [f64; 2], offset: f64 },
}

impl ResponseSpec {
    fn build(&self) -> Response {
        match *self {
            ResponseSpec::SinShift { shift } => Response::SinShift { shift },
            ResponseSpec::SinProduct { shift, offset } => Response::SinProduct { shift, offset },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start_round: usize,
    pub reward: ResponseSpec,
    pub cost: ResponseSpec,
    #[serde(default)]
    pub variation_f: f64,
    #[serde(default)]
    pub variation_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Noise given either as variances or as standard deviations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DelayCfg {
    None,
    Poisson(f64),
    Fixed(u64),
}

/// `W` is either a number of rounds or `"theorem5"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowCfg {
    Rounds(i64),
    Rule(String),
}

/// The on-disk schema. Key names follow the experiment description
/// (`T`, `B_f`, `W`, `P_T`, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    #[serde(
        rename = "T",
        alias = "horizon",
        skip_serializing_if = "Option::is_none"
    )]
    pub horizon: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(rename = "B_f", skip_serializing_if = "Option::is_none")]
    pub b_f: Option<f64>,
    #[serde(rename = "B_g", skip_serializing_if = "Option::is_none")]
    pub b_g: Option<f64>,
    #[serde(rename = "R_f", skip_serializing_if = "Option::is_none")]
    pub r_f: Option<f64>,
    #[serde(rename = "R_g", skip_serializing_if = "Option::is_none")]
    pub r_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_grid: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_refine: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_fixture: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(rename = "W", skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowCfg>,
    #[serde(rename = "P_T", skip_serializing_if = "Option::is_none")]
    pub p_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variation_norms: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalers: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<SegmentSpec>>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.message()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantName {
    RpolUcb,
    RpolCensoredUcb,
    RpolSwUcb,
    /// Primal-dual stand-in comparator on full-history estimators.
    PrimalDual,
}

impl VariantName {
    pub const ALL: [&'static str; 4] = [
        "rpol-ucb",
        "rpol-censored-ucb",
        "rpol-sw-ucb",
        "primal-dual",
    ];

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "rpol-ucb" => Ok(Self::RpolUcb),
            "rpol-censored-ucb" => Ok(Self::RpolCensoredUcb),
            "rpol-sw-ucb" => Ok(Self::RpolSwUcb),
            "primal-dual" => Ok(Self::PrimalDual),
            _ => Err(CliError::config(format!(
                "variant must be one of {}, got `{s}`",
                Self::ALL.join(", ")
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RpolUcb => Self::ALL[0],
            Self::RpolCensoredUcb => Self::ALL[1],
            Self::RpolSwUcb => Self::ALL[2],
            Self::PrimalDual => Self::ALL[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerChoice {
    Native,
    Improved,
    Censored,
    SlidingWindow,
}

impl ScalerChoice {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "native" => Ok(Self::Native),
            "improved" => Ok(Self::Improved),
            "censored" => Ok(Self::Censored),
            "sliding-window" => Ok(Self::SlidingWindow),
            _ => Err(CliError::config(format!(
                "scalers must be one of native, improved, censored, sliding-window, got `{s}`"
            ))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Self::Native => "native",
            Self::Improved => "improved",
            Self::Censored => "censored",
            Self::SlidingWindow => "sliding-window",
        }
    }
}

/// A validated experiment with all defaults applied.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub environment: Environment,
    pub horizon: usize,
    pub variant: VariantName,
    pub seeds: Vec<u64>,
    pub params: ConfidenceParams,
    pub lengthscale: f64,
    pub lambda: f64,
    pub grid: usize,
    pub oracle_grid: usize,
    pub oracle_refine: usize,
    pub oracle_fixture: Option<PathBuf>,
    pub cap: usize,
    pub window: usize,
    pub p_t: f64,
    pub gamma_cap: f64,
    pub variation: VariationMode,
    pub scalers: ScalerChoice,
    pub step: f64,
    pub output: PathBuf,
    /// Fully resolved form, written next to every run.
    pub resolved: RawConfig,
}

fn err(msg: impl std::fmt::Display) -> CliError {
    CliError::config(msg)
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(err(format!("{name} must be > 0, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(err(format!("{name} must be ≥ 0, got {v}")))
    }
}

fn at_least(name: &str, v: i64, min: i64) -> CliResult<usize> {
    if v >= min {
        Ok(v as usize)
    } else {
        Err(err(format!("{name} must be ≥ {min}")))
    }
}

/// `W = gamma^(1/4) (T / P_T)^(1/2)`, rounded, at least 1.
pub fn rate_window(gamma_hat: f64, horizon: usize, p_t: f64) -> CliResult<usize> {
    positive("P_T", p_t).map_err(|_| err("W = \"theorem5\" requires P_T > 0"))?;
    nonnegative("gamma_hat", gamma_hat)?;
    let w = gamma_hat.powf(0.25) * (horizon as f64 / p_t).sqrt();
    Ok((w.round() as usize).max(1))
}

fn build_schedule(segments: &[SegmentSpec]) -> CliResult<FunctionSchedule> {
    let segs = segments
        .iter()
        .map(|s| Segment {
            start_round: s.start_round,
            reward: s.reward.build(),
            cost: s.cost.build(),
            variation_f: s.variation_f,
            variation_g: s.variation_g,
        })
        .collect();
    FunctionSchedule::new(segs).map_err(|e| err(format!("schedule: {e}")))
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Applies defaults and validates every key.
pub fn resolve(raw: &RawConfig) -> CliResult<ExperimentConfig> {
    let horizon = at_least("T", raw.horizon.ok_or_else(|| err("T is required"))?, 1)?;
    let variant = VariantName::parse(raw.variant.as_deref().unwrap_or("rpol-ucb"))?;

    let (mut environment, env_name) = match (&raw.environment, &raw.schedule) {
        (_, Some(segments)) => {
            let domain = match &raw.domain {
                Some(d) => BoxDomain::new(d.lower.clone(), d.upper.clone())
                    .map_err(|e| err(format!("domain: {e}")))?,
                None => BoxDomain::cube(2, 0.0, 6.0).expect("static domain"),
            };
            let name = raw
                .environment
                .clone()
                .unwrap_or_else(|| "inline".to_string());
            let env = Environment::new(
                name.clone(),
                build_schedule(segments)?,
                domain,
                NoiseSpec::new(
                    rpol_core::env::BUILTIN_NOISE_VAR,
                    rpol_core::env::BUILTIN_NOISE_VAR,
                )
                .expect("static noise"),
                DelaySpec::None,
            )
            .map_err(|e| err(format!("schedule: {e}")))?;
            (env, name)
        }
        (Some(name), None) => {
            if raw.domain.is_some() {
                return Err(err("domain is only allowed together with schedule"));
            }
            (
                Environment::builtin(name).map_err(|e| err(format!("environment: {e}")))?,
                name.clone(),
            )
        }
        (None, None) => return Err(err("environment (or an inline schedule) is required")),
    };

    if let Some(norms) = &raw.variation_norms {
        if raw.schedule.is_some() {
            return Err(err("variation_norms only applies to built-in environments; set variation_f/variation_g per segment"));
        }
        let changes = environment.schedule.segments().len() - 1;
        if norms.len() != changes {
            return Err(err(format!(
                "variation_norms must list {changes} [f, g] pairs for environment `{env_name}`"
            )));
        }
        let mut segs = environment.schedule.segments().to_vec();
        for (seg, [vf, vg]) in segs[1..].iter_mut().zip(norms) {
            seg.variation_f = nonnegative("variation_norms", *vf)?;
            seg.variation_g = nonnegative("variation_norms", *vg)?;
        }
        environment.schedule =
            FunctionSchedule::new(segs).map_err(|e| err(format!("variation_norms: {e}")))?;
    }

    if let Some(n) = &raw.noise {
        let pick =
            |var: Option<f64>, std: Option<f64>, channel: &str, current: f64| -> CliResult<f64> {
                match (var, std) {
                    (Some(_), Some(_)) => Err(err(format!(
                        "noise: give either {channel}_var or {channel}_std, not both"
                    ))),
                    (Some(v), None) => nonnegative(&format!("noise.{channel}_var"), v),
                    (None, Some(s)) => {
                        nonnegative(&format!("noise.{channel}_std"), s).map(|s| s * s)
                    }
                    (None, None) => Ok(current),
                }
            };
        environment.noise = NoiseSpec {
            reward_var: pick(
                n.reward_var,
                n.reward_std,
                "reward",
                environment.noise.reward_var,
            )?,
            cost_var: pick(n.cost_var, n.cost_std, "cost", environment.noise.cost_var)?,
        };
    }
    if let Some(d) = raw.delay {
        environment.delay = match d {
            DelayCfg::None => DelaySpec::None,
            DelayCfg::Poisson(mean) => DelaySpec::Poisson {
                mean: positive("delay.poisson", mean)?,
            },
            DelayCfg::Fixed(d) => DelaySpec::Fixed(d),
        };
    }
    if environment.delay.is_delayed() && variant != VariantName::RpolCensoredUcb {
        return Err(err(format!(
            "variant `{}` cannot run with delayed feedback; use rpol-censored-ucb or delay = \"none\"",
            variant.as_str()
        )));
    }

    let seeds = match (raw.seed, &raw.seeds) {
        (Some(_), Some(_)) => return Err(err("give either seed or seeds, not both")),
        (Some(s), None) => vec![s],
        (None, Some(list)) if list.is_empty() => return Err(err("seeds must not be empty")),
        (None, Some(list)) => list.clone(),
        (None, None) => (0..DEFAULT_SEED_COUNT).collect(),
    };

    let b_f = positive("B_f", raw.b_f.unwrap_or(2.0))?;
    let b_g = positive("B_g", raw.b_g.unwrap_or(2.0))?;
    let r_f = nonnegative(
        "R_f",
        raw.r_f
            .unwrap_or_else(|| environment.noise.reward_var.sqrt()),
    )?;
    let r_g = nonnegative(
        "R_g",
        raw.r_g.unwrap_or_else(|| environment.noise.cost_var.sqrt()),
    )?;
    let p = raw.p.unwrap_or(0.05);
    if !(p > 0.0 && p < 1.0) {
        return Err(err(format!("p must lie in (0, 1), got {p}")));
    }
    let lengthscale = positive("u", raw.u.unwrap_or(1.0))?;
    let lambda = positive(
        "lambda",
        raw.lambda.unwrap_or_else(|| default_lambda(horizon)),
    )?;
    let grid = at_least("grid", raw.grid.unwrap_or(DEFAULT_GRID as i64), 2)?;
    let oracle_grid = at_least(
        "oracle_grid",
        raw.oracle_grid.unwrap_or(DEFAULT_ORACLE_GRID as i64),
        2,
    )?;
    let oracle_refine = at_least(
        "oracle_refine",
        raw.oracle_refine.unwrap_or(DEFAULT_ORACLE_REFINE as i64),
        0,
    )?;
    let cap = at_least("m", raw.m.unwrap_or(DEFAULT_CAP as i64), 1)?;
    let gamma_cap = nonnegative("gamma_cap", raw.gamma_cap.unwrap_or(DEFAULT_GAMMA_CAP))?;
    let step = nonnegative("step", raw.step.unwrap_or(0.0))?;

    let drift = environment.schedule.drift_profile(horizon);
    let budget = drift
        .iter()
        .fold((0.0, 0.0), |acc, d| (acc.0 + d.0, acc.1 + d.1));
    let p_t = match raw.p_t {
        Some(v) => nonnegative("P_T", v)?,
        None => budget.0.max(budget.1),
    };
    let window = match &raw.window {
        None => DEFAULT_WINDOW,
        Some(WindowCfg::Rounds(w)) => at_least("W", *w, 1)?,
        Some(WindowCfg::Rule(rule)) if rule == "theorem5" => {
            let gamma = raw
                .gamma_hat
                .ok_or_else(|| err("W = \"theorem5\" requires gamma_hat"))?;
            rate_window(gamma, horizon, p_t)?
        }
        Some(WindowCfg::Rule(other)) => {
            return Err(err(format!(
                "W must be a positive integer or \"theorem5\", got `{other}`"
            )))
        }
    };
    let variation = match raw.variation.as_deref().unwrap_or("oracle") {
        "oracle" => VariationMode::Oracle,
        "practical" => VariationMode::Practical,
        other => {
            return Err(err(format!(
                "variation must be oracle or practical, got `{other}`"
            )))
        }
    };
    let scalers = ScalerChoice::parse(raw.scalers.as_deref().unwrap_or("native"))?;

    let params = ConfidenceParams {
        reward_bound: b_f,
        cost_bound: b_g,
        reward_noise: r_f,
        cost_noise: r_g,
        failure_prob: p,
        horizon,
    };

    let mut resolved = RawConfig {
        environment: Some(env_name.clone()),
        horizon: Some(horizon as i64),
        variant: Some(variant.as_str().to_string()),
        seed: None,
        seeds: Some(seeds.clone()),
        b_f: Some(b_f),
        b_g: Some(b_g),
        r_f: Some(r_f),
        r_g: Some(r_g),
        p: Some(p),
        u: Some(lengthscale),
        lambda: Some(lambda),
        grid: Some(grid as i64),
        oracle_grid: Some(oracle_grid as i64),
        oracle_refine: Some(oracle_refine as i64),
        oracle_fixture: raw.oracle_fixture.clone(),
        m: Some(cap as i64),
        window: Some(WindowCfg::Rounds(window as i64)),
        p_t: Some(p_t),
        gamma_hat: raw.gamma_hat,
        gamma_cap: Some(gamma_cap),
        variation: Some(
            match variation {
                VariationMode::Oracle => "oracle",
                VariationMode::Practical => "practical",
            }
            .to_string(),
        ),
        variation_norms: if raw.schedule.is_none() && environment.schedule.segments().len() > 1 {
            Some(
                environment.schedule.segments()[1..]
                    .iter()
                    .map(|s| [s.variation_f, s.variation_g])
                    .collect(),
            )
        } else {
            None
        },
        scalers: Some(scalers.as_str().to_string()),
        step: Some(step),
        output: None,
        noise: Some(NoiseCfg {
            reward_var: Some(environment.noise.reward_var),
            cost_var: Some(environment.noise.cost_var),
            reward_std: None,
            cost_std: None,
        }),
        delay: Some(match environment.delay {
            DelaySpec::None => DelayCfg::None,
            DelaySpec::Poisson { mean } => DelayCfg::Poisson(mean),
            DelaySpec::Fixed(d) => DelayCfg::Fixed(d),
        }),
        domain: raw.schedule.as_ref().map(|_| DomainSpec {
            lower: environment.domain.lower().to_vec(),
            upper: environment.domain.upper().to_vec(),
        }),
        schedule: raw.schedule.clone(),
    };

    let output = match &raw.output {
        Some(o) => PathBuf::from(o),
        None => output_root().join(format!(
            "{}-{}-{}",
            env_name,
            variant.as_str(),
            &config_hash(&resolved)[..12]
        )),
    };
    resolved.output = Some(output.to_string_lossy().into_owned());

    let cfg = ExperimentConfig {
        environment,
        horizon,
        variant,
        seeds,
        params,
        lengthscale,
        lambda,
        grid,
        oracle_grid,
        oracle_refine,
        oracle_fixture: raw.oracle_fixture.as_ref().map(PathBuf::from),
        cap,
        window,
        p_t,
        gamma_cap,
        variation,
        scalers,
        step,
        output,
        resolved,
    };
    cfg.run_config()?
        .policy
        .validate()
        .map_err(|e| err(e.to_string()))?;
    Ok(cfg)
}

/// SHA-256 of the resolved config with seeds and output location removed,
/// so all seeds of one experiment share an id.
pub fn config_hash(resolved: &RawConfig) -> String {
    let mut canonical = resolved.clone();
    canonical.seeds = None;
    canonical.seed = None;
    canonical.output = None;
    let digest = Sha256::digest(canonical.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    pub fn config_id(&self) -> String {
        config_hash(&self.resolved)
    }

    pub fn policy_variant(&self) -> PolicyVariant {
        match self.variant {
            VariantName::RpolUcb | VariantName::PrimalDual => PolicyVariant::RpolUcb,
            VariantName::RpolCensoredUcb => PolicyVariant::RpolCensoredUcb { cap: self.cap },
            VariantName::RpolSwUcb => PolicyVariant::RpolSwUcb {
                window: self.window,
            },
        }
    }

    pub fn scaler_rule(&self) -> ScalerRule {
        match self.scalers {
            ScalerChoice::Native => self.policy_variant().native_scalers(self.gamma_cap),
            ScalerChoice::Improved => ScalerRule::Improved,
            ScalerChoice::Censored => ScalerRule::Censored { cap: self.cap },
            ScalerChoice::SlidingWindow => ScalerRule::SlidingWindow {
                window: self.window,
                gamma_cap: self.gamma_cap,
            },
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::square_exponential(self.lengthscale).expect("validated lengthscale")
    }

    pub fn run_config(&self) -> CliResult<RunConfig> {
        let policy = PolicyConfig {
            variant: self.policy_variant(),
            scalers: self.scaler_rule(),
            pricing: match self.variant {
                VariantName::PrimalDual => Pricing::PrimalDual { step: self.step },
                _ => Pricing::Rectified,
            },
            params: self.params,
            kernel: self.kernel(),
            lambda: self.lambda,
            grid: GridSpec::new(self.grid).map_err(|e| err(format!("grid: {e}")))?,
        };
        Ok(RunConfig {
            policy,
            variation: self.variation,
            config_id: self.config_id(),
        })
    }

    pub fn oracle_grid_spec(&self) -> GridSpec {
        GridSpec::new(self.oracle_grid)
            .expect("validated oracle grid")
            .with_refinement(self.oracle_refine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let raw = RawConfig::from_toml(
            "environment = \"scbwc\"\nT = 500\nvariant = \"rpol-ucb\"\nseed = 1\n",
        )
        .unwrap();
        let cfg = resolve(&raw).unwrap();
        assert_eq!(cfg.lengthscale, 1.0);
        assert_eq!(cfg.lambda, 1.0 + 2.0 / 500.0);
        assert_eq!(cfg.grid, 100);
        assert_eq!(cfg.params.failure_prob, 0.05);
        assert_eq!((cfg.params.reward_bound, cfg.params.cost_bound), (2.0, 2.0));
        assert_eq!(cfg.params.reward_noise, 0.05f64.sqrt());
        assert_eq!(cfg.params.cost_noise, 0.05f64.sqrt());
        assert_eq!(cfg.seeds, vec![1]);
    }

    #[test]
    fn window_rule_arithmetic() {
        assert_eq!(rate_window(16.0, 100, 1.0).unwrap(), 20);
        let raw = RawConfig::from_toml(
            "environment = \"scbwc\"\nT = 100\nvariant = \"rpol-sw-ucb\"\nW = \"theorem5\"\ngamma_hat = 16\nP_T = 1\n",
        )
        .unwrap();
        assert_eq!(resolve(&raw).unwrap().window, 20);
        let raw = RawConfig::from_toml(
            "environment = \"scbwc\"\nT = 100\nvariant = \"rpol-sw-ucb\"\nW = \"theorem5\"\ngamma_hat = 16\n",
        )
        .unwrap();
        let e = resolve(&raw).unwrap_err().to_string();
        assert!(e.contains("P_T > 0"), "{e}");
    }

    #[test]
    fn zero_horizon_is_rejected_by_name() {
        let raw = RawConfig::from_toml("environment = \"scbwc\"\nT = 0\n").unwrap();
        let e = resolve(&raw).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("T must be ≥ 1"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RawConfig::from_toml("environment = \"scbwc\"\nT = 5\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn out_of_range_values_are_named() {
        for (text, key) in [
            ("p = 1.5", "p must"),
            ("u = -1", "u must"),
            ("grid = 1", "grid must"),
            ("variant = \"rpol-censored-ucb\"\nm = 0", "m must"),
            ("variant = \"nope\"", "variant must"),
            ("W = \"sometimes\"", "W must"),
        ] {
            let raw =
                RawConfig::from_toml(&format!("environment = \"scbwc\"\nT = 5\n{text}\n")).unwrap();
            let e = resolve(&raw).unwrap_err().to_string();
            assert!(e.contains(key), "{text}: {e}");
        }
    }

    #[test]
    fn delayed_environment_requires_censored_variant() {
        let raw = RawConfig::from_toml("environment = \"scbwc-delayed\"\nT = 5\n").unwrap();
        assert!(resolve(&raw).is_err());
        let raw = RawConfig::from_toml(
            "environment = \"scbwc-delayed\"\nT = 5\nvariant = \"rpol-censored-ucb\"\n",
        )
        .unwrap();
        assert!(resolve(&raw).is_ok());
    }

    #[test]
    fn resolved_config_round_trips() {
        let raw = RawConfig::from_toml(
            "environment = \"scbwc-nonstationary\"\nT = 500\nvariant = \"rpol-sw-ucb\"\nseeds = [3, 4]\nnoise = { reward_std = 0.1, cost_std = 0.2 }\noutput = \"x\"\n",
        )
        .unwrap();
        let cfg = resolve(&raw).unwrap();
        assert!((cfg.environment.noise.cost_var - 0.04).abs() < 1e-15);
        let text = cfg.resolved.to_toml();
        let again = resolve(&RawConfig::from_toml(&text).unwrap()).unwrap();
        assert_eq!(again.resolved, cfg.resolved);
        assert_eq!(again.config_id(), cfg.config_id());
        assert_eq!(cfg.p_t, 4.31 + 7.09);
    }

    #[test]
    fn inline_schedule() {
        let text = r#"
T = 20
variant = "rpol-ucb"
delay = "none"

[[schedule]]
start_round = 1
reward = { kind = "sin-shift", shift = 0.0 }
cost = { kind = "sin-product", shift = [0.0, 0.0], offset = 0.95 }

[[schedule]]
start_round = 11
reward = { kind = "sin-shift", shift = 1.0 }
cost = { kind = "sin-product", shift = [0.0, 1.0], offset = 0.5 }
variation_f = 1.5
variation_g = 0.5
"#;
        let cfg = resolve(&RawConfig::from_toml(text).unwrap()).unwrap();
        assert_eq!(cfg.environment.name, "inline");
        assert_eq!(cfg.environment.schedule.segments().len(), 2);
        assert_eq!(cfg.p_t, 1.5);
    }
}
