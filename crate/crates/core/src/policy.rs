//! Rectified penalty, action selection and the per-run learner state.
//!
//! The learner sees the world only through [`RoundFeedback`] values handed
//! to [`Rpol::observe`]; it never touches an environment.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{Best, BoxDomain, Grid, GridSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    censored_scalers, improved_scalers, sw_scalers, ConfidenceParams, Diagnostics, EstimatorPair,
};
use crate::feedback::{Channel, RoundFeedback};
use crate::gp::{default_lambda, window_start, GpState, TrackedPosterior};
use crate::kernel::KernelSpec;

/// Cap on the plug-in gain inside the sliding-window drift coefficient.
pub const DEFAULT_GAMMA_CAP: f64 = 50.0;

/// Points per axis of the policy grid.
pub const DEFAULT_GRID: usize = 100;

/// How data reach the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyVariant {
    /// Full history, immediate feedback.
    RpolUcb,
    /// Delayed feedback, censored at `cap` rounds.
    RpolCensoredUcb { cap: usize },
    /// Only the last `window` rounds are kept.
    RpolSwUcb { window: usize },
}

impl PolicyVariant {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyVariant::RpolUcb => "rpol-ucb",
            PolicyVariant::RpolCensoredUcb { .. } => "rpol-censored-ucb",
            PolicyVariant::RpolSwUcb { .. } => "rpol-sw-ucb",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyVariant::RpolCensoredUcb { cap: 0 } => Err(Error::invalid("m", "m must be >= 1")),
            PolicyVariant::RpolSwUcb { window: 0 } => Err(Error::invalid("W", "W must be >= 1")),
            _ => Ok(()),
        }
    }

    /// The scaler rule that belongs to this variant.
    pub fn native_scalers(&self, gamma_cap: f64) -> ScalerRule {
        match *self {
            PolicyVariant::RpolUcb => ScalerRule::Improved,
            PolicyVariant::RpolCensoredUcb { cap } => ScalerRule::Censored { cap },
            PolicyVariant::RpolSwUcb { window } => ScalerRule::SlidingWindow { window, gamma_cap },
        }
    }
}

/// How confidence widths are computed; independent of the data wiring so
/// that a variant can be run with another variant's scalers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalerRule {
    Improved,
    Censored { cap: usize },
    SlidingWindow { window: usize, gamma_cap: f64 },
}

/// How the constraint estimate is priced into the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pricing {
    /// `f_hat - Q max(g_check, 0)` with the rectified penalty `Q`.
    Rectified,
    /// Primal-dual stand-in: `f_hat - y g_check`, `y <- max(y + step g_check(x_t), 0)`.
    PrimalDual { step: f64 },
}

impl Pricing {
    pub fn label(&self) -> &'static str {
        match self {
            Pricing::Rectified => "rectified",
            Pricing::PrimalDual { .. } => "primal-dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub variant: PolicyVariant,
    pub scalers: ScalerRule,
    pub pricing: Pricing,
    pub params: ConfidenceParams,
    pub kernel: KernelSpec,
    pub lambda: f64,
    /// Refinement is ignored; the policy searches the grid only.
    pub grid: GridSpec,
}

impl PolicyConfig {
    /// Defaults: the variant's own scalers, rectified pricing, unit
    /// lengthscale, `lambda = 1 + 2 / T`, 100 points per axis.
    pub fn new(variant: PolicyVariant, params: ConfidenceParams) -> Result<Self> {
        Ok(Self {
            variant,
            scalers: variant.native_scalers(DEFAULT_GAMMA_CAP),
            pricing: Pricing::Rectified,
            params,
            kernel: KernelSpec::default(),
            lambda: default_lambda(params.horizon.max(1)),
            grid: GridSpec::new(DEFAULT_GRID)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        self.params.validate()?;
        match self.scalers {
            ScalerRule::Censored { cap: 0 } => return Err(Error::invalid("m", "m must be >= 1")),
            ScalerRule::SlidingWindow { window: 0, .. } => {
                return Err(Error::invalid("W", "W must be >= 1"))
            }
            ScalerRule::SlidingWindow { gamma_cap, .. } if !(gamma_cap >= 0.0) => {
                return Err(Error::invalid("gamma_cap", "must be nonnegative"))
            }
            _ => {}
        }
        if let Pricing::PrimalDual { step } = self.pricing {
            if !(step >= 0.0 && step.is_finite()) {
                return Err(Error::invalid("step", "dual step must be nonnegative"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        GridSpec::new(self.grid.resolution)?;
        Ok(())
    }
}

/// `Q_{t+1} = max(Q_t + c_plus, sqrt(t))`.
pub fn update_penalty(q: f64, c_plus: f64, t: usize) -> Result<f64> {
    if !(c_plus >= 0.0) {
        return Err(Error::NegativeCost(c_plus));
    }
    Ok((q + c_plus).max(libm::sqrt(t as f64)))
}

/// Delayed form: every cost revealed at round `t` is rectified on its own.
pub fn update_penalty_delayed(q: f64, revealed: &[f64], t: usize) -> f64 {
    let mut acc = q;
    for c in revealed {
        acc += c.max(0.0);
    }
    acc.max(libm::sqrt(t as f64))
}

/// Penalty `Q_t` together with the round `t` it applies to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyState {
    q: f64,
    round: usize,
}

impl Default for PenaltyState {
    fn default() -> Self {
        Self { q: 1.0, round: 1 }
    }
}

impl PenaltyState {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn advance(&mut self, c_plus: f64) -> Result<f64> {
        self.q = update_penalty(self.q, c_plus, self.round)?;
        self.round += 1;
        Ok(self.q)
    }

    pub fn advance_delayed(&mut self, revealed: &[f64]) -> f64 {
        self.q = update_penalty_delayed(self.q, revealed, self.round);
        self.round += 1;
        self.q
    }
}

#[inline]
pub fn rectified_surrogate(f_hat: f64, g_check: f64, q: f64) -> f64 {
    f_hat - q * g_check.max(0.0)
}

fn argmax(
    values: impl Iterator<Item = f64>,
    point_of: impl Fn(usize) -> Vec<f64>,
) -> Result<usize> {
    match crate::domain::argmax_index(values) {
        Ok(Some(Best { index, .. })) => Ok(index),
        Ok(None) => Err(Error::EmptyCandidates),
        Err(index) => Err(Error::NonFiniteObjective {
            index,
            point: point_of(index),
        }),
    }
}

/// Index maximising `f_hat - q max(g_check, 0)` over a candidate table,
/// lowest index on ties.
pub fn select_action(f_hat: &[f64], g_check: &[f64], q: f64) -> Result<usize> {
    if f_hat.len() != g_check.len() {
        return Err(Error::DimensionMismatch {
            expected: f_hat.len(),
            got: g_check.len(),
        });
    }
    if !(q >= 1.0) {
        return Err(Error::invalid("Q", "penalty must be at least 1"));
    }
    argmax(
        f_hat
            .iter()
            .zip(g_check)
            .map(|(f, g)| rectified_surrogate(*f, *g, q)),
        |i| vec![i as f64],
    )
}

/// Pointwise selection over a grid through the estimator closures.
pub fn select_action_with(pair: &EstimatorPair<'_>, q: f64, grid: &Grid) -> Result<usize> {
    if !(q >= 1.0) {
        return Err(Error::invalid("Q", "penalty must be at least 1"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.point(i);
        values.push(rectified_surrogate(pair.f_hat(x)?, pair.g_check(x)?, q));
    }
    argmax(values.into_iter(), |i| grid.point(i).to_vec())
}

/// Everything the learner used and chose in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub round: usize,
    pub point: Vec<f64>,
    pub grid_index: usize,
    /// Penalty `Q_t` (or the dual variable under primal-dual pricing).
    pub q: f64,
    pub diagnostics: Diagnostics,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub g_check: f64,
    /// Observations carrying information in the posterior.
    pub observations_used: usize,
    /// Latest round at which any of those observations became visible.
    pub latest_reveal: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Revealed {
    value: f64,
    reveal_round: usize,
}

/// Learner state of one run.
#[derive(Debug, Clone)]
pub struct Rpol {
    config: PolicyConfig,
    grid: Grid,
    gp_f: GpState,
    gp_g: GpState,
    tracked: TrackedPosterior,
    penalty: PenaltyState,
    dual: f64,
    round: usize,
    chosen: Vec<usize>,
    // Rounds of the observations currently held by the posteriors start here.
    first_round: usize,
    revealed_f: Vec<Option<Revealed>>,
    revealed_g: Vec<Option<Revealed>>,
    drift: Vec<(f64, f64)>,
    pending: Option<Decision>,
    mean_f: Vec<f64>,
    mean_g: Vec<f64>,
    std: Vec<f64>,
    surrogate: Vec<f64>,
}

impl Rpol {
    pub fn new(config: PolicyConfig, domain: &BoxDomain) -> Result<Self> {
        config.validate()?;
        let grid = Grid::new(domain, GridSpec::new(config.grid.resolution)?)?;
        let capacity = match config.variant {
            PolicyVariant::RpolSwUcb { window } => window + 1,
            _ => config.params.horizon,
        };
        let tracked =
            TrackedPosterior::new(grid.flat_points().to_vec(), grid.dim(), capacity.min(1024))?;
        let n = grid.len();
        Ok(Self {
            gp_f: GpState::new(config.kernel, config.lambda, Channel::Reward)?,
            gp_g: GpState::new(config.kernel, config.lambda, Channel::Cost)?,
            tracked,
            penalty: PenaltyState::default(),
            dual: 0.0,
            round: 1,
            chosen: Vec::new(),
            first_round: 1,
            revealed_f: Vec::new(),
            revealed_g: Vec::new(),
            drift: Vec::new(),
            pending: None,
            mean_f: vec![0.0; n],
            mean_g: vec![0.0; n],
            std: vec![0.0; n],
            surrogate: vec![0.0; n],
            grid,
            config,
        })
    }

    /// Per-round drift norms `(||f_s - f_{s+1}||, ||g_s - g_{s+1}||)` at index
    /// `s - 1`, consumed by the sliding-window scalers. Absent entries are 0.
    pub fn with_drift(mut self, drift: Vec<(f64, f64)>) -> Self {
        self.drift = drift;
        self
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn penalty(&self) -> f64 {
        match self.config.pricing {
            Pricing::Rectified => self.penalty.q(),
            Pricing::PrimalDual { .. } => self.dual,
        }
    }

    pub fn reward_gp(&self) -> &GpState {
        &self.gp_f
    }

    pub fn cost_gp(&self) -> &GpState {
        &self.gp_g
    }

    /// Pair backed by the current posteriors and the given diagnostics.
    pub fn estimator_pair(&self, diagnostics: Diagnostics) -> EstimatorPair<'_> {
        EstimatorPair {
            reward: &self.gp_f,
            cost: &self.gp_g,
            diagnostics,
        }
    }

    fn drift_sum(&self, t: usize, window: usize) -> (f64, f64) {
        let mut acc = (0.0, 0.0);
        for s in window_start(t, window)..t {
            if let Some(d) = self.drift.get(s - 1) {
                acc.0 += d.0;
                acc.1 += d.1;
            }
        }
        acc
    }

    fn diagnostics(&self, t: usize) -> Result<Diagnostics> {
        let gamma_f = self.gp_f.info_gain();
        let gamma_g = self.gp_g.info_gain();
        let params = &self.config.params;
        match self.config.scalers {
            ScalerRule::Improved => improved_scalers(gamma_f, gamma_g, params),
            ScalerRule::Censored { cap } => {
                let start = self.chosen.len().saturating_sub(cap);
                let mut sum = 0.0;
                for &i in &self.chosen[start..] {
                    sum += self.std[i];
                }
                censored_scalers(gamma_f, gamma_g, sum, sum, params, cap)
            }
            ScalerRule::SlidingWindow { window, gamma_cap } => sw_scalers(
                gamma_f,
                gamma_g,
                self.drift_sum(t, window),
                params,
                self.config.lambda,
                window,
                gamma_cap,
            ),
        }
    }

    fn informative(&self) -> (usize, Option<usize>) {
        match self.config.variant {
            PolicyVariant::RpolCensoredUcb { cap } => {
                let mut used = 0;
                let mut latest = None;
                for store in [&self.revealed_f, &self.revealed_g] {
                    for (s, r) in store.iter().enumerate() {
                        if let Some(r) = r {
                            if r.reveal_round - (s + 1) <= cap {
                                used += 1;
                                latest = latest.max(Some(r.reveal_round));
                            }
                        }
                    }
                }
                (used, latest)
            }
            _ => {
                let n = self.gp_f.len();
                (2 * n, if n == 0 { None } else { Some(self.round - 1) })
            }
        }
    }

    /// Chooses the action of the current round.
    pub fn decide(&mut self) -> Result<Decision> {
        let t = self.round;
        if self.pending.is_some() {
            return Err(Error::MissingFeedback(t));
        }
        if t > self.config.params.horizon {
            return Err(Error::RoundOutOfRange { round: t });
        }
        self.tracked.means_into(
            self.gp_f.weights(),
            self.gp_g.weights(),
            &mut self.mean_f,
            &mut self.mean_g,
        );
        self.tracked.stds_into(&mut self.std);
        let diag = self.diagnostics(t)?;
        let price = self.penalty();
        let rectified = matches!(self.config.pricing, Pricing::Rectified);
        for q in 0..self.surrogate.len() {
            let f = diag.optimistic(self.mean_f[q], self.std[q]);
            let g = diag.pessimistic(self.mean_g[q], self.std[q]);
            self.surrogate[q] = if rectified {
                rectified_surrogate(f, g, price)
            } else {
                f - price * g
            };
        }
        let grid = &self.grid;
        let index = argmax(self.surrogate.iter().copied(), |i| grid.point(i).to_vec())?;
        let (observations_used, latest_reveal) = self.informative();
        let decision = Decision {
            round: t,
            point: self.grid.point(index).to_vec(),
            grid_index: index,
            q: price,
            diagnostics: diag,
            sigma_f: self.std[index],
            sigma_g: self.std[index],
            g_check: diag.pessimistic(self.mean_g[index], self.std[index]),
            observations_used,
            latest_reveal,
        };
        self.pending = Some(decision.clone());
        Ok(decision)
    }

    fn take_own(feedback: &[(usize, f64)], t: usize) -> Result<f64> {
        match feedback {
            [(s, v)] if *s == t => Ok(*v),
            _ => Err(Error::MissingFeedback(t)),
        }
    }

    /// Ingests what became visible during the current round and moves to the
    /// next one.
    pub fn observe(&mut self, feedback: &RoundFeedback) -> Result<()> {
        let decision = self
            .pending
            .take()
            .ok_or(Error::MissingFeedback(self.round))?;
        let t = self.round;
        let x = &decision.point;
        match self.config.variant {
            PolicyVariant::RpolCensoredUcb { cap } => {
                self.revealed_f.push(None);
                self.revealed_g.push(None);
                for (store, items) in [
                    (&mut self.revealed_f, &feedback.rewards),
                    (&mut self.revealed_g, &feedback.costs),
                ] {
                    for &(s, value) in items.iter() {
                        if s == 0 || s > t {
                            return Err(Error::invalid(
                                "feedback",
                                "revealed observation from the future",
                            ));
                        }
                        store[s - 1] = Some(Revealed {
                            value,
                            reveal_round: t,
                        });
                    }
                }
                self.gp_f.append(x, 0.0)?;
                self.gp_g.append(x, 0.0)?;
                let targets = |store: &[Option<Revealed>]| -> Vec<f64> {
                    store
                        .iter()
                        .enumerate()
                        .map(|(s, r)| match r {
                            Some(r) if r.reveal_round - (s + 1) <= cap => r.value,
                            _ => 0.0,
                        })
                        .collect()
                };
                self.gp_f.set_targets(&targets(&self.revealed_f))?;
                self.gp_g.set_targets(&targets(&self.revealed_g))?;
                self.tracked.extend(&self.gp_f)?;
            }
            PolicyVariant::RpolUcb | PolicyVariant::RpolSwUcb { .. } => {
                let r = Self::take_own(&feedback.rewards, t)?;
                let c = Self::take_own(&feedback.costs, t)?;
                self.gp_f.append(x, r)?;
                self.gp_g.append(x, c)?;
                self.tracked.extend(&self.gp_f)?;
                if let PolicyVariant::RpolSwUcb { window } = self.config.variant {
                    while self.gp_f.len() > window {
                        let rotations = self.gp_f.drop_oldest().unwrap_or_default();
                        self.gp_g.drop_oldest();
                        self.tracked.rotate_out(&rotations);
                        self.first_round += 1;
                    }
                }
            }
        }
        match self.config.pricing {
            Pricing::Rectified => match self.config.variant {
                PolicyVariant::RpolCensoredUcb { .. } => {
                    let costs: Vec<f64> = feedback.costs.iter().map(|c| c.1).collect();
                    self.penalty.advance_delayed(&costs);
                }
                _ => {
                    let c = Self::take_own(&feedback.costs, t)?;
                    self.penalty.advance(c.max(0.0))?;
                }
            },
            Pricing::PrimalDual { step } => {
                self.dual = (self.dual + step * decision.g_check).max(0.0);
            }
        }
        self.chosen.push(decision.grid_index);
        self.round += 1;
        Ok(())
    }

    /// One full round: decide, obtain feedback from `respond`, observe.
    pub fn step<F>(&mut self, respond: F) -> Result<Decision>
    where
        F: FnOnce(&Decision) -> Result<RoundFeedback>,
    {
        let decision = self.decide()?;
        let feedback = respond(&decision)?;
        self.observe(&feedback)?;
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_table() {
        assert_eq!(select_action(&[1.0, 2.0], &[-1.0, 3.0], 1.0).unwrap(), 0);
    }

    #[test]
    fn nonpositive_constraint_ignores_penalty() {
        let f = [0.3, 1.7, -0.2, 1.7];
        let g = [-0.1, -2.0, 0.0, -5.0];
        for q in [1.0, 10.0, 1e6] {
            assert_eq!(select_action(&f, &g, q).unwrap(), 1);
        }
    }

    #[test]
    fn selection_errors() {
        assert_eq!(select_action(&[], &[], 1.0), Err(Error::EmptyCandidates));
        assert!(select_action(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(select_action(&[1.0], &[1.0], 0.5).is_err());
        assert!(matches!(
            select_action(&[1.0, f64::NAN], &[0.0, 0.0], 1.0),
            Err(Error::NonFiniteObjective { index: 1, .. })
        ));
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(update_penalty(1.0, 0.5, 1).unwrap(), 1.5);
        assert_eq!(update_penalty(2.0, 0.0, 9).unwrap(), 3.0);
        assert_eq!(update_penalty(10.0, 0.0, 4).unwrap(), 10.0);
        assert_eq!(update_penalty(1.0, -0.1, 1), Err(Error::NegativeCost(-0.1)));
    }

    #[test]
    fn delayed_penalty_examples() {
        assert_eq!(
            update_penalty_delayed(3.0, &[], 4),
            update_penalty(3.0, 0.0, 4).unwrap()
        );
        assert_eq!(update_penalty_delayed(1.0, &[-1.0, 0.3, 0.2], 1), 1.5);
    }

    #[test]
    fn penalty_state_starts_at_one() {
        let mut p = PenaltyState::default();
        assert_eq!((p.q(), p.round()), (1.0, 1));
        p.advance(0.0).unwrap();
        p.advance(0.0).unwrap();
        assert_eq!(p.q(), 2f64.sqrt());
        assert_eq!(p.round(), 3);
    }

    #[test]
    fn doubling_penalty_switches_to_feasible_point() {
        let f = [3.0, 1.0];
        let g = [0.01, -0.5];
        let mut q = 1.0;
        let mut switched = false;
        while q <= 2f64.powi(40) {
            if select_action(&f, &g, q).unwrap() == 1 {
                switched = true;
                break;
            }
            q *= 2.0;
        }
        assert!(switched);
        assert!(q > 2.0 / 0.01 - 1.0);
    }

    fn brute_force(f: &[f64], g: &[f64], q: f64) -> usize {
        let mut best = 0;
        for i in 1..f.len() {
            let vi = f[i] - q * g[i].max(0.0);
            let vb = f[best] - q * g[best].max(0.0);
            if vi > vb {
                best = i;
            }
        }
        best
    }

    fn table() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            let v = prop_oneof![Just(0.0f64), Just(1.0), -3.0f64..3.0];
            (
                proptest::collection::vec(v.clone(), n),
                proptest::collection::vec(v, n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force((f, g) in table(), q in 1.0f64..20.0) {
            prop_assert_eq!(select_action(&f, &g, q).unwrap(), brute_force(&f, &g, q));
        }

        #[test]
        fn rectifier_is_idempotent((f, g) in table(), q in 1.0f64..20.0) {
            let g_plus: Vec<f64> = g.iter().map(|v| v.max(0.0)).collect();
            prop_assert_eq!(select_action(&f, &g, q).unwrap(), select_action(&f, &g_plus, q).unwrap());
        }

        #[test]
        fn penalty_is_monotone_and_floored(q in 1.0f64..100.0, c in 0.0f64..5.0, t in 1usize..10_000) {
            let next = update_penalty(q, c, t).unwrap();
            prop_assert!(next >= q && next >= (t as f64).sqrt());
        }
    }
}
