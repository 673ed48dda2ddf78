//! Synthetic environments: scheduled reward/cost functions on a box, noisy
//! observations and random feedback delays.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::domain::{constrained_oracle, BoxDomain, GridSpec};
use crate::error::{Error, Result};
use crate::feedback::FeedbackEvent;

pub const BUILTIN: [&str; 3] = ["scbwc", "scbwc-delayed", "scbwc-nonstationary"];

/// Substream ids; each named channel draws from its own ChaCha stream.
pub const REWARD_NOISE_STREAM: u64 = 1;
pub const COST_NOISE_STREAM: u64 = 2;
pub const REWARD_DELAY_STREAM: u64 = 3;
pub const COST_DELAY_STREAM: u64 = 4;

/// Closed-form response surfaces used by the built-in environments.
#[derive(Clone)]
pub enum Response {
    /// `-sin(x1 + shift) - x2`
    SinShift {
        shift: f64,
    },
    /// `sin(x1 + a) sin(x2 + b) + offset`
    SinProduct {
        shift: [f64; 2],
        offset: f64,
    },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Response {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Response::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Response::SinShift { shift } => -libm::sin(x[0] + shift) - x[1],
            Response::SinProduct { shift, offset } => {
                libm::sin(x[0] + shift[0]) * libm::sin(x[1] + shift[1]) + offset
            }
            Response::Custom(f) => f(x),
        }
    }

    /// Input dimension the closed forms require, if any.
    fn required_dim(&self) -> Option<usize> {
        match self {
            Response::Custom(_) => None,
            _ => Some(2),
        }
    }
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::SinShift { shift } => write!(f, "SinShift({shift})"),
            Response::SinProduct { shift, offset } => {
                write!(f, "SinProduct({:?}, {offset})", shift)
            }
            Response::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Functions active from `start_round` on. `variation_*` is the RKHS norm of
/// the change entering this segment (zero for the first).
#[derive(Debug, Clone)]
pub struct Segment {
    pub start_round: usize,
    pub reward: Response,
    pub cost: Response,
    pub variation_f: f64,
    pub variation_g: f64,
}

#[derive(Debug, Clone)]
pub struct FunctionSchedule {
    segments: Vec<Segment>,
}

impl FunctionSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        match segments.first() {
            Some(s) if s.start_round == 1 => {}
            _ => {
                return Err(Error::invalid(
                    "schedule",
                    "first segment must start at round 1",
                ))
            }
        }
        for w in segments.windows(2) {
            if w[1].start_round <= w[0].start_round {
                return Err(Error::invalid(
                    "schedule",
                    "segment starts must be strictly increasing",
                ));
            }
        }
        for s in &segments {
            if !(s.variation_f >= 0.0 && s.variation_g >= 0.0) {
                return Err(Error::invalid(
                    "schedule",
                    "variation norms must be nonnegative",
                ));
            }
        }
        Ok(Self { segments })
    }

    pub fn stationary(reward: Response, cost: Response) -> Self {
        Self {
            segments: vec![Segment {
                start_round: 1,
                reward,
                cost,
                variation_f: 0.0,
                variation_g: 0.0,
            }],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_index(&self, t: usize) -> Result<usize> {
        if t == 0 {
            return Err(Error::RoundOutOfRange { round: t });
        }
        Ok(self.segments.partition_point(|s| s.start_round <= t) - 1)
    }

    pub fn segment_at(&self, t: usize) -> Result<&Segment> {
        Ok(&self.segments[self.segment_index(t)?])
    }

    /// `(||f_s - f_{s+1}||, ||g_s - g_{s+1}||)` for `s = 1..=horizon`, stored at
    /// index `s - 1`. Nonzero only on the round before a segment starts.
    pub fn drift_profile(&self, horizon: usize) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); horizon];
        for seg in &self.segments[1..] {
            let s = seg.start_round - 1;
            if s >= 1 && s <= horizon {
                out[s - 1] = (seg.variation_f, seg.variation_g);
            }
        }
        out
    }
}

/// Gaussian noise variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub reward_var: f64,
    pub cost_var: f64,
}

impl NoiseSpec {
    pub fn new(reward_var: f64, cost_var: f64) -> Result<Self> {
        if !(reward_var >= 0.0 && cost_var >= 0.0 && reward_var.is_finite() && cost_var.is_finite())
        {
            return Err(Error::invalid(
                "noise",
                "variances must be nonnegative and finite",
            ));
        }
        Ok(Self {
            reward_var,
            cost_var,
        })
    }

    pub fn none() -> Self {
        Self {
            reward_var: 0.0,
            cost_var: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelaySpec {
    None,
    Poisson { mean: f64 },
    Fixed(u64),
}

impl DelaySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DelaySpec::Poisson { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(Error::invalid("delay", "Poisson mean must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_delayed(&self) -> bool {
        !matches!(self, DelaySpec::None | DelaySpec::Fixed(0))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            DelaySpec::None => 0,
            DelaySpec::Fixed(d) => d,
            DelaySpec::Poisson { mean } => {
                let draw: f64 = Poisson::new(mean).expect("validated mean").sample(rng);
                draw as u64
            }
        }
    }
}

/// Independent random streams of one run.
#[derive(Debug, Clone)]
pub struct Substreams {
    reward_noise: ChaCha8Rng,
    cost_noise: ChaCha8Rng,
    reward_delay: ChaCha8Rng,
    cost_delay: ChaCha8Rng,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            reward_noise: stream(REWARD_NOISE_STREAM),
            cost_noise: stream(COST_NOISE_STREAM),
            reward_delay: stream(REWARD_DELAY_STREAM),
            cost_delay: stream(COST_DELAY_STREAM),
        }
    }

    /// Draws one `(reward_delay, cost_delay)` pair.
    pub fn delays(&mut self, spec: &DelaySpec) -> (u64, u64) {
        (
            spec.sample(&mut self.reward_delay),
            spec.sample(&mut self.cost_delay),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub schedule: FunctionSchedule,
    pub domain: BoxDomain,
    pub noise: NoiseSpec,
    pub delay: DelaySpec,
}

/// Default RKHS norms of the two schedule changes of the non-stationary
/// environment, `(f, g)` at rounds 101 and 301 (minimum-norm interpolants of
/// the difference functions on a 25 x 25 grid, unit lengthscale).
pub const NONSTATIONARY_VARIATION: [(f64, f64); 2] = [(4.31, 4.42), (7.09, 4.85)];

/// Noise variance of the built-in environments.
pub const BUILTIN_NOISE_VAR: f64 = 0.05;

/// Poisson mean of the delayed built-in environment.
pub const BUILTIN_DELAY_MEAN: f64 = 15.0;

fn first_segment() -> (Response, Response) {
    (
        Response::SinShift { shift: 0.0 },
        Response::SinProduct {
            shift: [0.0, 0.0],
            offset: 0.95,
        },
    )
}

impl Environment {
    pub fn new(
        name: impl Into<String>,
        schedule: FunctionSchedule,
        domain: BoxDomain,
        noise: NoiseSpec,
        delay: DelaySpec,
    ) -> Result<Self> {
        delay.validate()?;
        NoiseSpec::new(noise.reward_var, noise.cost_var)?;
        for seg in schedule.segments() {
            for r in [&seg.reward, &seg.cost] {
                if let Some(d) = r.required_dim() {
                    if d != domain.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: domain.dim(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            schedule,
            domain,
            noise,
            delay,
        })
    }

    /// One of [`BUILTIN`], with noise variance 0.05 on both channels.
    pub fn builtin(name: &str) -> Result<Self> {
        let domain = BoxDomain::cube(2, 0.0, 6.0)?;
        let noise = NoiseSpec::new(BUILTIN_NOISE_VAR, BUILTIN_NOISE_VAR)?;
        let (f1, g1) = first_segment();
        match name {
            "scbwc" => Self::new(
                name,
                FunctionSchedule::stationary(f1, g1),
                domain,
                noise,
                DelaySpec::None,
            ),
            "scbwc-delayed" => Self::new(
                name,
                FunctionSchedule::stationary(f1, g1),
                domain,
                noise,
                DelaySpec::Poisson {
                    mean: BUILTIN_DELAY_MEAN,
                },
            ),
            "scbwc-nonstationary" => {
                let [(vf2, vg2), (vf3, vg3)] = NONSTATIONARY_VARIATION;
                let schedule = FunctionSchedule::new(vec![
                    Segment {
                        start_round: 1,
                        reward: f1,
                        cost: g1,
                        variation_f: 0.0,
                        variation_g: 0.0,
                    },
                    Segment {
                        start_round: 101,
                        reward: Response::SinShift { shift: -5.0 },
                        cost: Response::SinProduct {
                            shift: [0.0, 5.0],
                            offset: 0.5,
                        },
                        variation_f: vf2,
                        variation_g: vg2,
                    },
                    Segment {
                        start_round: 301,
                        reward: Response::SinShift { shift: 4.0 },
                        cost: Response::SinProduct {
                            shift: [5.0, 0.0],
                            offset: 0.95,
                        },
                        variation_f: vf3,
                        variation_g: vg3,
                    },
                ])?;
                Self::new(name, schedule, domain, noise, DelaySpec::None)
            }
            _ => Err(Error::UnknownEnvironment {
                name: name.to_string(),
                known: BUILTIN.join(", "),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Noise-free `(f_t(x), g_t(x))`. Only metrics and the harness use this.
    pub fn true_values(&self, x: &[f64], t: usize) -> Result<(f64, f64)> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        let seg = self.schedule.segment_at(t)?;
        Ok((seg.reward.eval(x), seg.cost.eval(x)))
    }

    /// Plays `x` at round `t`.
    pub fn step(&self, x: &[f64], t: usize, streams: &mut Substreams) -> Result<FeedbackEvent> {
        let (f, g) = self.true_values(x, t)?;
        let zr: f64 = StandardNormal.sample(&mut streams.reward_noise);
        let zc: f64 = StandardNormal.sample(&mut streams.cost_noise);
        let (reward_delay, cost_delay) = streams.delays(&self.delay);
        Ok(FeedbackEvent {
            issued_round: t,
            point: x.to_vec(),
            reward_obs: f + libm::sqrt(self.noise.reward_var) * zr,
            cost_obs: g + libm::sqrt(self.noise.cost_var) * zc,
            reward_delay,
            cost_delay,
        })
    }

    /// Constrained optimum `(x*, f*)` of every segment.
    pub fn segment_optima(&self, grid: &GridSpec) -> Result<Vec<(Vec<f64>, f64)>> {
        self.schedule
            .segments()
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                constrained_oracle(
                    |x| seg.reward.eval(x),
                    |x| seg.cost.eval(x),
                    &self.domain,
                    grid,
                )
                .map_err(|e| match e {
                    Error::Infeasible => Error::invalid(
                        "schedule",
                        format!("segment {} has no feasible grid point", i + 1),
                    ),
                    e => e,
                })
            })
            .collect()
    }

    /// `f_t(x_t*)` for `t = 1..=horizon`, index `t - 1`.
    pub fn optimum_per_round(&self, horizon: usize, grid: &GridSpec) -> Result<Vec<f64>> {
        let optima = self.segment_optima(grid)?;
        (1..=horizon)
            .map(|t| Ok(optima[self.schedule.segment_index(t)?].1))
            .collect()
    }
}
