//! End-to-end runs: an environment, a learner and the reveal queue between
//! them.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{Environment, Substreams};
use crate::error::{Error, Result};
use crate::feedback::RoundFeedback;
use crate::metrics::{RoundRecord, Trace, TraceMeta};
use crate::policy::{PolicyConfig, PolicyVariant, Pricing, Rpol};

/// Source of the drift norms used by the sliding-window scalers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationMode {
    /// Norms exposed by the environment schedule.
    Oracle,
    /// Drift treated as zero.
    Practical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub policy: PolicyConfig,
    pub variation: VariationMode,
    /// Identifier written into trace metadata (for example a config hash).
    pub config_id: String,
}

impl RunConfig {
    pub fn new(policy: PolicyConfig) -> Self {
        Self {
            policy,
            variation: VariationMode::Oracle,
            config_id: String::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.policy.params.horizon
    }
}

/// Comparator configuration: same estimators, primal-dual pricing. With
/// `step = 0` this is plain unconstrained UCB on the reward.
pub fn primal_dual_baseline(mut cfg: RunConfig, step: f64) -> RunConfig {
    cfg.policy.pricing = Pricing::PrimalDual { step };
    cfg
}

/// Runs `T` rounds. Errors carry the round at which they happened.
pub fn run(env: &Environment, cfg: &RunConfig, seed: u64) -> Result<Trace> {
    let horizon = cfg.horizon();
    if env.delay.is_delayed()
        && !matches!(cfg.policy.variant, PolicyVariant::RpolCensoredUcb { .. })
    {
        return Err(Error::invalid(
            "variant",
            "delayed feedback needs the censored variant",
        ));
    }
    let mut policy = Rpol::new(cfg.policy.clone(), &env.domain)?;
    if cfg.variation == VariationMode::Oracle {
        policy = policy.with_drift(env.schedule.drift_profile(horizon));
    }
    let mut streams = Substreams::new(seed);
    // Reveal queues indexed by round; entries past the horizon are dropped.
    let mut reveal: Vec<RoundFeedback> = vec![RoundFeedback::default(); horizon + 1];
    let mut rounds = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let decision = policy.decide().map_err(|e| e.at_round(t))?;
        let (f_true, g_true) = env
            .true_values(&decision.point, t)
            .map_err(|e| e.at_round(t))?;
        let event = env
            .step(&decision.point, t, &mut streams)
            .map_err(|e| e.at_round(t))?;
        let r_round = t + event.reward_delay as usize;
        let c_round = t + event.cost_delay as usize;
        if r_round <= horizon {
            reveal[r_round].rewards.push((t, event.reward_obs));
        }
        if c_round <= horizon {
            reveal[c_round].costs.push((t, event.cost_obs));
        }
        let feedback = core::mem::take(&mut reveal[t]);
        policy.observe(&feedback).map_err(|e| e.at_round(t))?;
        let d = &decision.diagnostics;
        rounds.push(RoundRecord {
            t,
            x: decision.point,
            f_true,
            g_true,
            r_obs: (r_round <= horizon).then_some(event.reward_obs),
            c_obs: (c_round <= horizon).then_some(event.cost_obs),
            q: decision.q,
            beta_f: d.beta_f,
            beta_g: d.beta_g,
            extra_scaler: d.extra_scaler(),
            sigma_f: decision.sigma_f,
            sigma_g: decision.sigma_g,
        });
    }
    Ok(Trace {
        meta: TraceMeta {
            config_id: cfg.config_id.clone(),
            seed,
            variant: cfg.policy.variant.label().to_string(),
            pricing: cfg.policy.pricing.label().to_string(),
            dim: env.dim(),
        },
        rounds,
        final_penalty: policy.penalty(),
    })
}
