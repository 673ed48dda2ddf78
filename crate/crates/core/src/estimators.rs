//! Optimistic reward and pessimistic constraint estimators.
//!
//! Every variant has the form
//! `f_hat(x) = mu_f(x) + width_f * sigma_f(x) + shift_f` and
//! `g_check(x) = mu_g(x) - width_g * sigma_g(x) - shift_g`; the variants differ
//! only in how the widths and shifts are computed.

use crate::error::{Error, Result};
use crate::gp::GpState;

/// Norm bounds, noise scales, failure probability and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    pub reward_bound: f64,
    pub cost_bound: f64,
    pub reward_noise: f64,
    pub cost_noise: f64,
    pub failure_prob: f64,
    pub horizon: usize,
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("B_f", self.reward_bound),
            ("B_g", self.cost_bound),
            ("R_f", self.reward_noise),
            ("R_g", self.cost_noise),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be a nonnegative finite number"));
            }
        }
        check_prob(self.failure_prob)?;
        if self.horizon == 0 {
            return Err(Error::invalid("T", "T must be >= 1"));
        }
        Ok(())
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "p",
            "failure probability must lie in (0, 1)",
        ))
    }
}

/// `B + R sqrt(2 (gamma + 1 + ln(2 / p)))`.
pub fn beta(bound: f64, noise: f64, gamma: f64, p: f64) -> Result<f64> {
    check_prob(p)?;
    Ok(bound + noise * libm::sqrt(2.0 * (gamma + 1.0 + libm::log(2.0 / p))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalerKind {
    Improved,
    /// Observation bounds `B_r`, `B_c`.
    Censored {
        reward_obs_bound: f64,
        cost_obs_bound: f64,
    },
    /// Drift coefficients `C_f`, `C_g`.
    SlidingWindow {
        drift_coef_f: f64,
        drift_coef_g: f64,
    },
}

/// Per-round scalers of an estimator pair, recorded in traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub beta_f: f64,
    pub beta_g: f64,
    /// Multiplier of `sigma_f` (beta, or `v` for censored feedback).
    pub width_f: f64,
    pub width_g: f64,
    /// Additive drift term `Gamma` (zero outside the sliding-window variant).
    pub shift_f: f64,
    pub shift_g: f64,
    pub gamma_f: f64,
    pub gamma_g: f64,
    pub kind: ScalerKind,
}

impl Diagnostics {
    #[inline]
    pub fn optimistic(&self, mean: f64, std: f64) -> f64 {
        mean + self.width_f * std + self.shift_f
    }

    #[inline]
    pub fn pessimistic(&self, mean: f64, std: f64) -> f64 {
        mean - self.width_g * std - self.shift_g
    }

    /// Variant-specific scaler written to the trace: `v_f` for censored
    /// feedback, `Gamma_f` for sliding windows, zero otherwise.
    pub fn extra_scaler(&self) -> f64 {
        match self.kind {
            ScalerKind::Improved => 0.0,
            ScalerKind::Censored { .. } => self.width_f,
            ScalerKind::SlidingWindow { .. } => self.shift_f,
        }
    }
}

pub fn improved_scalers(
    gamma_f: f64,
    gamma_g: f64,
    params: &ConfidenceParams,
) -> Result<Diagnostics> {
    let beta_f = beta(
        params.reward_bound,
        params.reward_noise,
        gamma_f,
        params.failure_prob,
    )?;
    let beta_g = beta(
        params.cost_bound,
        params.cost_noise,
        gamma_g,
        params.failure_prob,
    )?;
    Ok(Diagnostics {
        beta_f,
        beta_g,
        width_f: beta_f,
        width_g: beta_g,
        shift_f: 0.0,
        shift_g: 0.0,
        gamma_f,
        gamma_g,
        kind: ScalerKind::Improved,
    })
}

/// `B + R sqrt(2 ln T)`.
pub fn observation_bound(bound: f64, noise: f64, horizon: f64) -> f64 {
    bound + noise * libm::sqrt(2.0 * libm::log(horizon))
}

/// Scalers for censored delayed feedback. `recent_sigma_*` are the sums of
/// the current posterior deviations at the last `m` chosen points.
pub fn censored_scalers(
    gamma_f: f64,
    gamma_g: f64,
    recent_sigma_f: f64,
    recent_sigma_g: f64,
    params: &ConfidenceParams,
    cap: usize,
) -> Result<Diagnostics> {
    if cap == 0 {
        return Err(Error::invalid("m", "censoring cap must be at least 1"));
    }
    check_prob(params.failure_prob)?;
    let b_r = observation_bound(
        params.reward_bound,
        params.reward_noise,
        params.horizon as f64,
    );
    let b_c = observation_bound(params.cost_bound, params.cost_noise, params.horizon as f64);
    let ln4p = libm::log(4.0 / params.failure_prob);
    let beta_f = params.reward_bound
        + (params.reward_noise + b_r) * libm::sqrt(2.0 * (gamma_f + 1.0 + ln4p));
    let beta_g =
        params.cost_bound + (params.cost_noise + b_c) * libm::sqrt(2.0 * (gamma_g + 1.0 + ln4p));
    Ok(Diagnostics {
        beta_f,
        beta_g,
        width_f: b_r * recent_sigma_f + beta_f,
        width_g: b_c * recent_sigma_g + beta_g,
        shift_f: 0.0,
        shift_g: 0.0,
        gamma_f,
        gamma_g,
        kind: ScalerKind::Censored {
            reward_obs_bound: b_r,
            cost_obs_bound: b_c,
        },
    })
}

/// `(1 / lambda) sqrt(2 W (1 + lambda) gamma)`.
pub fn drift_coefficient(lambda: f64, window: usize, gamma: f64) -> f64 {
    libm::sqrt(2.0 * window as f64 * (1.0 + lambda) * gamma) / lambda
}

/// Scalers for the sliding-window estimators. `gamma_*` is the plug-in gain
/// of the current window; inside the drift coefficient it is capped at
/// `gamma_cap`. `variation` holds the summed drift norms inside the window.
pub fn sw_scalers(
    gamma_f: f64,
    gamma_g: f64,
    variation: (f64, f64),
    params: &ConfidenceParams,
    lambda: f64,
    window: usize,
    gamma_cap: f64,
) -> Result<Diagnostics> {
    if window == 0 {
        return Err(Error::invalid("W", "window must be at least 1"));
    }
    check_prob(params.failure_prob)?;
    let log_term = 2.0 * libm::log(2.0 * params.horizon as f64 / params.failure_prob);
    let inv_sqrt_lambda = 1.0 / libm::sqrt(lambda);
    let beta_f = params.reward_bound
        + inv_sqrt_lambda * params.reward_noise * libm::sqrt(2.0 * gamma_f + log_term);
    let beta_g = params.cost_bound
        + inv_sqrt_lambda * params.cost_noise * libm::sqrt(2.0 * gamma_g + log_term);
    let c_f = drift_coefficient(lambda, window, gamma_f.min(gamma_cap));
    let c_g = drift_coefficient(lambda, window, gamma_g.min(gamma_cap));
    Ok(Diagnostics {
        beta_f,
        beta_g,
        width_f: beta_f,
        width_g: beta_g,
        shift_f: c_f * variation.0,
        shift_g: c_g * variation.1,
        gamma_f,
        gamma_g,
        kind: ScalerKind::SlidingWindow {
            drift_coef_f: c_f,
            drift_coef_g: c_g,
        },
    })
}

/// Optimistic/pessimistic estimators backed by two GP posteriors.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorPair<'a> {
    pub reward: &'a GpState,
    pub cost: &'a GpState,
    pub diagnostics: Diagnostics,
}

impl EstimatorPair<'_> {
    pub fn f_hat(&self, x: &[f64]) -> Result<f64> {
        let p = self.reward.posterior(x)?;
        Ok(self.diagnostics.optimistic(p.mean, p.std))
    }

    pub fn g_check(&self, x: &[f64]) -> Result<f64> {
        let p = self.cost.posterior(x)?;
        Ok(self.diagnostics.pessimistic(p.mean, p.std))
    }
}

pub fn ucb_pair<'a>(
    gp_f: &'a GpState,
    gp_g: &'a GpState,
    params: &ConfidenceParams,
) -> Result<EstimatorPair<'a>> {
    let diagnostics = improved_scalers(gp_f.info_gain(), gp_g.info_gain(), params)?;
    Ok(EstimatorPair {
        reward: gp_f,
        cost: gp_g,
        diagnostics,
    })
}

/// Censored-feedback pair; only the last `cap` entries of `recent_points`
/// enter the deviation sums.
pub fn censored_pair<'a>(
    gp_f: &'a GpState,
    gp_g: &'a GpState,
    recent_points: &[alloc::vec::Vec<f64>],
    params: &ConfidenceParams,
    cap: usize,
) -> Result<EstimatorPair<'a>> {
    if cap == 0 {
        return Err(Error::invalid("m", "censoring cap must be at least 1"));
    }
    let start = recent_points.len().saturating_sub(cap);
    let (mut sum_f, mut sum_g) = (0.0, 0.0);
    for x in &recent_points[start..] {
        sum_f += gp_f.posterior(x)?.std;
        sum_g += gp_g.posterior(x)?.std;
    }
    let diagnostics = censored_scalers(
        gp_f.info_gain(),
        gp_g.info_gain(),
        sum_f,
        sum_g,
        params,
        cap,
    )?;
    Ok(EstimatorPair {
        reward: gp_f,
        cost: gp_g,
        diagnostics,
    })
}

pub fn sw_pair<'a>(
    gp_f: &'a GpState,
    gp_g: &'a GpState,
    variation_in_window: (f64, f64),
    params: &ConfidenceParams,
    window: usize,
    gamma_cap: f64,
) -> Result<EstimatorPair<'a>> {
    let diagnostics = sw_scalers(
        gp_f.info_gain(),
        gp_g.info_gain(),
        variation_in_window,
        params,
        gp_f.lambda(),
        window,
        gamma_cap,
    )?;
    Ok(EstimatorPair {
        reward: gp_f,
        cost: gp_g,
        diagnostics,
    })
}
