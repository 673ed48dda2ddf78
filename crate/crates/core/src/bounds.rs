//! Cumulative-deviation bounds replayed on realised traces.
//!
//! All bounds use the plug-in information gain of the realised design,
//! `1/2 ln det(I + K / lambda)`, so they can be checked from a trace and the
//! run's kernel and regulariser alone.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feedback::Channel;
use crate::gp::GpState;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Plug-in gain of all `points`.
pub fn design_gain(points: &[Vec<f64>], kernel: KernelSpec, lambda: f64) -> Result<f64> {
    let state = GpState::from_observations(
        kernel,
        lambda,
        Channel::Reward,
        points.iter().map(|p| (p.as_slice(), 0.0)),
    )?;
    Ok(state.info_gain())
}

/// Largest plug-in gain over runs of `window` consecutive points.
pub fn max_window_gain(
    points: &[Vec<f64>],
    kernel: KernelSpec,
    lambda: f64,
    window: usize,
) -> Result<f64> {
    if window == 0 {
        return Err(Error::invalid("W", "window must be at least 1"));
    }
    let mut state = GpState::new(kernel, lambda, Channel::Reward)?;
    let mut best: f64 = 0.0;
    for p in points {
        state.append(p, 0.0)?;
        if state.len() > window {
            state.drop_oldest();
        }
        best = best.max(state.info_gain());
    }
    Ok(best)
}

fn check_lengths(a: &[f64], b: &[f64], points: &[Vec<f64>]) -> Result<()> {
    for len in [b.len(), points.len()] {
        if len != a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: len,
            });
        }
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_t sigma_t(x_t) <= sqrt(4 T lambda gamma_T)`.
pub fn sigma_sum(
    sigmas: &[f64],
    points: &[Vec<f64>],
    kernel: KernelSpec,
    lambda: f64,
) -> Result<BoundCheck> {
    check_lengths(sigmas, sigmas, points)?;
    let gamma = design_gain(points, kernel, lambda)?;
    let t = sigmas.len() as f64;
    Ok(BoundCheck {
        name: "sum sigma",
        lhs: sigmas.iter().sum(),
        rhs: libm::sqrt(4.0 * t * lambda * gamma),
    })
}

/// Full-history widths: `sum_t beta_t sigma_t(x_t) <= beta_T sqrt(4 T lambda gamma_T)`,
/// with `beta_T` taken as the largest recorded width.
pub fn full_history_width_sum(
    betas: &[f64],
    sigmas: &[f64],
    points: &[Vec<f64>],
    kernel: KernelSpec,
    lambda: f64,
) -> Result<BoundCheck> {
    check_lengths(betas, sigmas, points)?;
    let gamma = design_gain(points, kernel, lambda)?;
    let t = betas.len() as f64;
    Ok(BoundCheck {
        name: "full-history width sum",
        lhs: dot(betas, sigmas),
        rhs: max_of(betas) * libm::sqrt(4.0 * t * lambda * gamma),
    })
}

/// Censored widths: `sum_t v_t sigma_t(x_t) <= beta_T sqrt(4 T lambda gamma_T)
/// + m B_r 4 lambda gamma_T`.
#[allow(clippy::too_many_arguments)]
pub fn censored_width_sum(
    widths: &[f64],
    betas: &[f64],
    sigmas: &[f64],
    points: &[Vec<f64>],
    kernel: KernelSpec,
    lambda: f64,
    cap: usize,
    obs_bound: f64,
) -> Result<BoundCheck> {
    check_lengths(widths, sigmas, points)?;
    check_lengths(betas, sigmas, points)?;
    let gamma = design_gain(points, kernel, lambda)?;
    let t = widths.len() as f64;
    Ok(BoundCheck {
        name: "censored width sum",
        lhs: dot(widths, sigmas),
        rhs: max_of(betas) * libm::sqrt(4.0 * t * lambda * gamma)
            + cap as f64 * obs_bound * 4.0 * lambda * gamma,
    })
}

/// Sliding-window widths: `sum_t beta_t sigma_t(x_t) <= beta_max T sqrt(4 lambda gamma_W / W)`
/// where `gamma_W` is the largest gain of `W` consecutive points. When `W`
/// does not divide `T` the last partial block is counted as a full one.
pub fn window_width_sum(
    betas: &[f64],
    sigmas: &[f64],
    points: &[Vec<f64>],
    kernel: KernelSpec,
    lambda: f64,
    window: usize,
) -> Result<BoundCheck> {
    check_lengths(betas, sigmas, points)?;
    let gamma = max_window_gain(points, kernel, lambda, window)?;
    let t = betas.len();
    let blocks = t.div_ceil(window) as f64;
    Ok(BoundCheck {
        name: "sliding-window width sum",
        lhs: dot(betas, sigmas),
        rhs: max_of(betas) * libm::sqrt(t as f64 * blocks * 4.0 * lambda * gamma),
    })
}
