use alloc::vec::Vec;

/// Which observation channel a target vector or event field refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Reward,
    Cost,
}

/// One round's bandit feedback as produced by an environment.
///
/// The learner only ever sees `reward_obs` at round `issued_round +
/// reward_delay` and `cost_obs` at `issued_round + cost_delay`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEvent {
    pub issued_round: usize,
    pub point: Vec<f64>,
    pub reward_obs: f64,
    pub cost_obs: f64,
    pub reward_delay: u64,
    pub cost_delay: u64,
}

impl FeedbackEvent {
    pub fn value(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Reward => self.reward_obs,
            Channel::Cost => self.cost_obs,
        }
    }

    pub fn delay(&self, channel: Channel) -> u64 {
        match channel {
            Channel::Reward => self.reward_delay,
            Channel::Cost => self.cost_delay,
        }
    }

    /// Round at which the channel's observation becomes visible.
    pub fn reveal_round(&self, channel: Channel) -> usize {
        self.issued_round + self.delay(channel) as usize
    }
}

/// Observations that became visible to the learner during one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundFeedback {
    /// `(issued_round, value)` pairs for rewards revealed now.
    pub rewards: Vec<(usize, f64)>,
    /// `(issued_round, value)` pairs for costs revealed now.
    pub costs: Vec<(usize, f64)>,
}

impl RoundFeedback {
    pub fn immediate(round: usize, reward: f64, cost: f64) -> Self {
        Self {
            rewards: alloc::vec![(round, reward)],
            costs: alloc::vec![(round, cost)],
        }
    }
}
