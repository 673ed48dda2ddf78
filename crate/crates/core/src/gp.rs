//! Exact GP posterior with regulariser `lambda` (the `K + lambda I` form),
//! maintained through an incrementally extended lower Cholesky factor.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feedback::{Channel, FeedbackEvent};
use crate::kernel::KernelSpec;

const PIVOT_FLOOR: f64 = 1e-12;
const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorValue {
    pub mean: f64,
    pub std: f64,
}

/// Givens rotation `(c, s)` produced when the oldest observation is removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub c: f64,
    pub s: f64,
}

/// `lambda = 1 + 2 / T`.
pub fn default_lambda(horizon: usize) -> f64 {
    1.0 + 2.0 / horizon as f64
}

#[derive(Debug, Clone)]
pub struct GpState {
    kernel: KernelSpec,
    lambda: f64,
    target_kind: Channel,
    dim: Option<usize>,
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
    // Row i holds the first i + 1 entries of row i of L, L L^T = K + lambda I.
    chol: Vec<Vec<f64>>,
    // L^{-1} targets
    weights: Vec<f64>,
}

impl GpState {
    pub fn new(kernel: KernelSpec, lambda: f64, target_kind: Channel) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(
                "lambda",
                "regulariser must be positive and finite",
            ));
        }
        Ok(Self {
            kernel,
            lambda,
            target_kind,
            dim: None,
            points: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            weights: Vec::new(),
        })
    }

    /// Builds the state by appending observations in order.
    pub fn from_observations<'a, I>(
        kernel: KernelSpec,
        lambda: f64,
        target_kind: Channel,
        data: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut state = Self::new(kernel, lambda, target_kind)?;
        for (x, y) in data {
            state.append(x, y)?;
        }
        Ok(state)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn target_kind(&self) -> Channel {
        self.target_kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `L^{-1} y` for the current targets.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row `i` of the Cholesky factor, diagonal entry last.
    pub fn chol_row(&self, i: usize) -> &[f64] {
        &self.chol[i]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(d) = self.dim {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        Ok(())
    }

    /// In-place forward substitution with the leading `rhs.len()` rows of L.
    pub fn forward_solve(&self, rhs: &mut [f64]) {
        debug_assert!(rhs.len() <= self.chol.len());
        for i in 0..rhs.len() {
            let row = &self.chol[i];
            let mut s = rhs[i];
            for j in 0..i {
                s -= row[j] * rhs[j];
            }
            rhs[i] = s / row[i];
        }
    }

    fn refresh_weights(&mut self) {
        let mut w = self.targets.clone();
        self.forward_solve(&mut w);
        self.weights = w;
    }

    /// Adds one observation, extending the factor by a single row.
    pub fn append(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_point(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        let n = self.points.len();
        let mut row: Vec<f64> = self.points.iter().map(|p| self.kernel.eval(p, x)).collect();
        self.forward_solve(&mut row);
        let mut ss = 0.0;
        for v in &row {
            ss += v * v;
        }
        let base = self.kernel.prior_variance() + self.lambda;
        let mut pivot = base - ss;
        if !(pivot >= PIVOT_FLOOR) {
            pivot = base + JITTER - ss;
            if !(pivot >= PIVOT_FLOOR) {
                return Err(Error::CholeskyBreakdown { index: n + 1 });
            }
        }
        row.push(libm::sqrt(pivot));
        self.dim = Some(x.len());
        self.points.push(x.to_vec());
        self.targets.push(y);
        self.chol.push(row);
        self.refresh_weights();
        Ok(())
    }

    /// Replaces every target while keeping the design (and its factor).
    pub fn set_targets(&mut self, targets: &[f64]) -> Result<()> {
        if targets.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: targets.len(),
            });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        self.targets.clear();
        self.targets.extend_from_slice(targets);
        self.refresh_weights();
        Ok(())
    }

    /// Removes the oldest observation. The factor of the remaining design is
    /// obtained by a rank-one update; the rotations are returned so that
    /// tracked projections can follow.
    pub fn drop_oldest(&mut self) -> Option<Vec<Rotation>> {
        let n = self.points.len();
        if n == 0 {
            return None;
        }
        let m = n - 1;
        let mut x: Vec<f64> = self.chol[1..].iter().map(|r| r[0]).collect();
        let mut rows: Vec<Vec<f64>> = self.chol[1..].iter().map(|r| r[1..].to_vec()).collect();
        let mut rotations = Vec::with_capacity(m);
        for k in 0..m {
            let lkk = rows[k][k];
            let xk = x[k];
            let r = libm::hypot(lkk, xk);
            let c = lkk / r;
            let s = xk / r;
            rows[k][k] = r;
            for i in k + 1..m {
                let lik = rows[i][k];
                rows[i][k] = c * lik + s * x[i];
                x[i] = c * x[i] - s * lik;
            }
            rotations.push(Rotation { c, s });
        }
        self.chol = rows;
        self.points.remove(0);
        self.targets.remove(0);
        self.refresh_weights();
        Some(rotations)
    }

    pub fn posterior(&self, x: &[f64]) -> Result<PosteriorValue> {
        self.check_point(x)?;
        let mut v: Vec<f64> = self.points.iter().map(|p| self.kernel.eval(p, x)).collect();
        self.forward_solve(&mut v);
        let mut mean = 0.0;
        let mut ss = 0.0;
        for (vj, wj) in v.iter().zip(&self.weights) {
            mean += vj * wj;
        }
        for vj in &v {
            ss += vj * vj;
        }
        let var = (self.kernel.prior_variance() - ss).max(0.0);
        Ok(PosteriorValue {
            mean,
            std: libm::sqrt(var),
        })
    }

    /// `ln det(K + lambda I)`.
    pub fn log_det(&self) -> f64 {
        let mut acc = 0.0;
        for (i, row) in self.chol.iter().enumerate() {
            acc += libm::log(row[i]);
        }
        2.0 * acc
    }

    /// Plug-in information gain `1/2 ln det(I + K / lambda)` of the design.
    pub fn info_gain(&self) -> f64 {
        let n = self.points.len() as f64;
        (0.5 * self.log_det() - 0.5 * n * libm::log(self.lambda)).max(0.0)
    }
}

/// Returns `state` with `(x, y)` appended.
pub fn append_observation(mut state: GpState, x: &[f64], y: f64) -> Result<GpState> {
    state.append(x, y)?;
    Ok(state)
}

pub fn plugin_info_gain(state: &GpState) -> f64 {
    state.info_gain()
}

/// First round of the sliding window for round `t`: `max(1, t - W)`.
pub fn window_start(t: usize, window: usize) -> usize {
    t.saturating_sub(window).max(1)
}

/// GP over rounds `window_start(t, W) ..= t - 1` of a 1-indexed history
/// (`history[s - 1]` is round `s`).
pub fn windowed_state(
    history: &[(Vec<f64>, f64)],
    t: usize,
    window: usize,
    kernel: KernelSpec,
    lambda: f64,
    target_kind: Channel,
) -> Result<GpState> {
    if window == 0 {
        return Err(Error::invalid("W", "window must be at least 1"));
    }
    let t0 = window_start(t, window);
    let end = t.saturating_sub(1).min(history.len());
    let slice = if t0 <= end {
        &history[t0 - 1..end]
    } else {
        &history[..0]
    };
    GpState::from_observations(
        kernel,
        lambda,
        target_kind,
        slice.iter().map(|(x, y)| (x.as_slice(), *y)),
    )
}

/// Censored value of an observation issued at round `issued` with delay
/// `delay`, as seen at round `t` with cap `m`.
#[inline]
pub fn censor(value: f64, delay: u64, issued: usize, t: usize, cap: usize) -> f64 {
    let elapsed = t.saturating_sub(issued);
    if delay as usize <= cap.min(elapsed) {
        value
    } else {
        0.0
    }
}

/// Censored target vector for rounds `1 ..= t - 1`, one entry per event with
/// `issued_round < t`, in event order.
pub fn censored_targets(
    events: &[FeedbackEvent],
    t: usize,
    cap: usize,
    which: Channel,
) -> Vec<f64> {
    events
        .iter()
        .filter(|e| e.issued_round < t)
        .map(|e| censor(e.value(which), e.delay(which), e.issued_round, t, cap))
        .collect()
}

/// Posterior projections `L^{-1} k(x_q)` for a fixed set of query points,
/// kept in step with a [`GpState`] as it grows or drops observations. Means
/// and standard deviations on the whole set then cost one dot product per
/// query instead of a triangular solve.
#[derive(Debug, Clone)]
pub struct TrackedPosterior {
    dim: usize,
    queries: Vec<f64>,
    count: usize,
    stride: usize,
    len: usize,
    proj: Vec<f64>,
    sq_norm: Vec<f64>,
}

impl TrackedPosterior {
    /// `queries` is a flat row-major list of `dim`-dimensional points.
    pub fn new(queries: Vec<f64>, dim: usize, capacity: usize) -> Result<Self> {
        if dim == 0 || queries.len() % dim != 0 {
            return Err(Error::invalid(
                "queries",
                "length must be a multiple of the dimension",
            ));
        }
        let count = queries.len() / dim;
        let stride = capacity.max(1);
        Ok(Self {
            dim,
            queries,
            count,
            stride,
            len: 0,
            proj: vec![0.0; count * stride],
            sq_norm: vec![0.0; count],
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn query(&self, i: usize) -> &[f64] {
        &self.queries[i * self.dim..(i + 1) * self.dim]
    }

    fn grow(&mut self) {
        let new_stride = self.stride * 2;
        let mut proj = vec![0.0; self.count * new_stride];
        for q in 0..self.count {
            proj[q * new_stride..q * new_stride + self.len]
                .copy_from_slice(&self.proj[q * self.stride..q * self.stride + self.len]);
        }
        self.proj = proj;
        self.stride = new_stride;
    }

    /// Follows `state` after exactly one `append`.
    pub fn extend(&mut self, state: &GpState) -> Result<()> {
        if state.len() != self.len + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.len + 1,
                got: state.len(),
            });
        }
        let new_point = &state.points()[self.len];
        if new_point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: new_point.len(),
            });
        }
        if self.len == self.stride {
            self.grow();
        }
        let n = self.len;
        let row = state.chol_row(n);
        let (off, diag) = row.split_at(n);
        let diag = diag[0];
        let kernel = state.kernel();
        for q in 0..self.count {
            let x = &self.queries[q * self.dim..(q + 1) * self.dim];
            let v = &mut self.proj[q * self.stride..q * self.stride + n + 1];
            let mut s = kernel.eval(new_point, x);
            for j in 0..n {
                s -= off[j] * v[j];
            }
            let vn = s / diag;
            v[n] = vn;
            self.sq_norm[q] += vn * vn;
        }
        self.len += 1;
        Ok(())
    }

    /// Follows `state` after `drop_oldest`, given the rotations it returned.
    pub fn rotate_out(&mut self, rotations: &[Rotation]) {
        if self.len == 0 {
            return;
        }
        debug_assert_eq!(rotations.len() + 1, self.len);
        let m = self.len - 1;
        for q in 0..self.count {
            let v = &mut self.proj[q * self.stride..q * self.stride + self.len];
            let mut extra = v[0];
            for (k, rot) in rotations.iter().enumerate() {
                let z = v[k + 1];
                v[k] = rot.c * z + rot.s * extra;
                extra = rot.c * extra - rot.s * z;
            }
            let mut ss = 0.0;
            for vj in &v[..m] {
                ss += vj * vj;
            }
            self.sq_norm[q] = ss;
        }
        self.len = m;
    }

    pub fn mean(&self, q: usize, weights: &[f64]) -> f64 {
        let v = &self.proj[q * self.stride..q * self.stride + self.len];
        let mut acc = 0.0;
        for (vj, wj) in v.iter().zip(weights) {
            acc += vj * wj;
        }
        acc
    }

    pub fn std(&self, q: usize) -> f64 {
        libm::sqrt((1.0 - self.sq_norm[q]).max(0.0))
    }

    /// Means for two target vectors sharing this design, in one pass.
    pub fn means_into(&self, w_a: &[f64], w_b: &[f64], out_a: &mut [f64], out_b: &mut [f64]) {
        debug_assert!(w_a.len() >= self.len && w_b.len() >= self.len);
        for q in 0..self.count {
            let v = &self.proj[q * self.stride..q * self.stride + self.len];
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..self.len {
                a += v[j] * w_a[j];
                b += v[j] * w_b[j];
            }
            out_a[q] = a;
            out_b[q] = b;
        }
    }

    pub fn stds_into(&self, out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate().take(self.count) {
            *o = self.std(q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn se() -> KernelSpec {
        KernelSpec::square_exponential(1.0).unwrap()
    }

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
        fn point(&mut self) -> Vec<f64> {
            vec![6.0 * self.next(), 6.0 * self.next()]
        }
    }

    #[test]
    fn empty_state_is_prior() {
        let gp = GpState::new(se(), 1.004, Channel::Reward).unwrap();
        let p = gp.posterior(&[1.0, 2.0]).unwrap();
        assert_eq!(
            p,
            PosteriorValue {
                mean: 0.0,
                std: 1.0
            }
        );
        assert_eq!(gp.info_gain(), 0.0);
    }

    #[test]
    fn one_point_closed_form() {
        let lambda = 1.004;
        let gp = append_observation(
            GpState::new(se(), lambda, Channel::Reward).unwrap(),
            &[2.0, 3.0],
            1.0,
        )
        .unwrap();
        let p = gp.posterior(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(p.mean, 1.0 / (1.0 + lambda), epsilon = 1e-14);
        assert_relative_eq!(p.mean, 0.499002, epsilon = 1e-6);
        assert_relative_eq!(p.std, libm::sqrt(lambda / (1.0 + lambda)), epsilon = 1e-14);
        assert_relative_eq!(p.std, 0.707813, epsilon = 1e-6);
        assert_relative_eq!(
            gp.info_gain(),
            0.5 * libm::log(1.0 + 1.0 / lambda),
            epsilon = 1e-14
        );
        assert_relative_eq!(gp.info_gain(), 0.345577, epsilon = 1e-6);
    }

    #[test]
    fn duplicate_points_stay_finite() {
        let mut gp = GpState::new(se(), 1.004, Channel::Cost).unwrap();
        gp.append(&[1.0, 1.0], 0.3).unwrap();
        gp.append(&[1.0, 1.0], -0.7).unwrap();
        gp.append(&[1.0, 1.0], 5.0).unwrap();
        let p = gp.posterior(&[1.0, 1.0]).unwrap();
        assert!(p.mean.is_finite() && p.std.is_finite());
        assert!(p.std > 0.0 && p.std < 1.0);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_inputs() {
        let mut gp = GpState::new(se(), 1.0, Channel::Reward).unwrap();
        gp.append(&[0.0, 0.0], 1.0).unwrap();
        assert!(gp.posterior(&[f64::NAN, 0.0]).is_err());
        assert!(matches!(
            gp.posterior(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gp.append(&[0.0, 1.0], f64::INFINITY).is_err());
        assert!(GpState::new(se(), 0.0, Channel::Reward).is_err());
    }

    #[test]
    fn factor_reproduces_regularised_gram() {
        let mut rng = Lcg(3);
        let lambda = 1.01;
        let mut gp = GpState::new(se(), lambda, Channel::Reward).unwrap();
        for _ in 0..30 {
            gp.append(&rng.point(), rng.next()).unwrap();
        }
        let n = gp.len();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..=i {
                let mut llt = 0.0;
                for k in 0..=j {
                    llt += gp.chol_row(i)[k] * gp.chol_row(j)[k];
                }
                let mut kij = se().eval(&gp.points()[i], &gp.points()[j]);
                if i == j {
                    kij += lambda;
                }
                num += (llt - kij) * (llt - kij);
                den += kij * kij;
            }
        }
        assert!(libm::sqrt(num / den) < 1e-8);
    }

    #[test]
    fn drop_oldest_matches_rebuild() {
        let mut rng = Lcg(11);
        let data: Vec<(Vec<f64>, f64)> = (0..25).map(|_| (rng.point(), rng.next() - 0.5)).collect();
        let mut gp = GpState::from_observations(
            se(),
            1.004,
            Channel::Reward,
            data.iter().map(|(x, y)| (x.as_slice(), *y)),
        )
        .unwrap();
        for drop in 1..=10 {
            gp.drop_oldest().unwrap();
            let fresh = GpState::from_observations(
                se(),
                1.004,
                Channel::Reward,
                data[drop..].iter().map(|(x, y)| (x.as_slice(), *y)),
            )
            .unwrap();
            for _ in 0..20 {
                let q = rng.point();
                let a = gp.posterior(&q).unwrap();
                let b = fresh.posterior(&q).unwrap();
                assert!((a.mean - b.mean).abs() < 1e-10);
                assert!((a.std - b.std).abs() < 1e-10);
            }
            assert!((gp.info_gain() - fresh.info_gain()).abs() < 1e-10);
        }
    }

    #[test]
    fn tracked_posterior_matches_pointwise() {
        let mut rng = Lcg(5);
        let queries: Vec<Vec<f64>> = (0..40).map(|_| rng.point()).collect();
        let flat: Vec<f64> = queries.iter().flatten().copied().collect();
        let mut tracked = TrackedPosterior::new(flat, 2, 4).unwrap();
        let mut gp = GpState::new(se(), 1.004, Channel::Reward).unwrap();
        let mut mean = vec![0.0; 40];
        let mut other = vec![0.0; 40];
        for step in 0..30 {
            gp.append(&rng.point(), rng.next()).unwrap();
            tracked.extend(&gp).unwrap();
            if step % 3 == 2 {
                let rot = gp.drop_oldest().unwrap();
                tracked.rotate_out(&rot);
            }
            tracked.means_into(gp.weights(), gp.weights(), &mut mean, &mut other);
            for (q, x) in queries.iter().enumerate() {
                let p = gp.posterior(x).unwrap();
                assert!((p.mean - mean[q]).abs() < 1e-10);
                assert!((p.std - tracked.std(q)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tracked_without_drops_is_bit_identical() {
        let mut rng = Lcg(8);
        let queries: Vec<Vec<f64>> = (0..10).map(|_| rng.point()).collect();
        let flat: Vec<f64> = queries.iter().flatten().copied().collect();
        let mut tracked = TrackedPosterior::new(flat, 2, 2).unwrap();
        let mut gp = GpState::new(se(), 1.004, Channel::Reward).unwrap();
        for _ in 0..12 {
            gp.append(&rng.point(), rng.next()).unwrap();
            tracked.extend(&gp).unwrap();
        }
        for (q, x) in queries.iter().enumerate() {
            let p = gp.posterior(x).unwrap();
            assert_eq!(p.mean, tracked.mean(q, gp.weights()));
            assert_eq!(p.std, tracked.std(q));
        }
    }

    #[test]
    fn window_bounds() {
        assert_eq!(window_start(10, 4), 6);
        assert_eq!(window_start(3, 100), 1);
        let mut rng = Lcg(1);
        let history: Vec<(Vec<f64>, f64)> = (0..12).map(|_| (rng.point(), rng.next())).collect();
        let k = se();
        let w = windowed_state(&history, 10, 4, k, 1.0, Channel::Reward).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w.points()[0], history[5].0);
        assert_eq!(w.points()[3], history[8].0);
        let w = windowed_state(&history, 3, 100, k, 1.0, Channel::Reward).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.points()[0], history[0].0);
        let w = windowed_state(&history, 1, 5, k, 1.0, Channel::Reward).unwrap();
        assert!(w.is_empty());
        assert!(windowed_state(&history, 5, 0, k, 1.0, Channel::Reward).is_err());
    }

    #[test]
    fn wide_window_equals_full_history() {
        let mut rng = Lcg(2);
        let history: Vec<(Vec<f64>, f64)> = (0..9).map(|_| (rng.point(), rng.next())).collect();
        let k = se();
        let full = GpState::from_observations(
            k,
            1.02,
            Channel::Reward,
            history.iter().map(|(x, y)| (x.as_slice(), *y)),
        )
        .unwrap();
        let windowed = windowed_state(&history, 10, 50, k, 1.02, Channel::Reward).unwrap();
        for _ in 0..20 {
            let q = rng.point();
            assert_eq!(full.posterior(&q).unwrap(), windowed.posterior(&q).unwrap());
        }
    }

    fn event(issued: usize, r: f64, d: u64) -> FeedbackEvent {
        FeedbackEvent {
            issued_round: issued,
            point: vec![0.0],
            reward_obs: r,
            cost_obs: -r,
            reward_delay: d,
            cost_delay: 0,
        }
    }

    #[test]
    fn censoring_indicator() {
        let events = [event(1, 2.5, 3)];
        assert_eq!(censored_targets(&events, 3, 5, Channel::Reward), vec![0.0]);
        assert_eq!(censored_targets(&events, 5, 5, Channel::Reward), vec![2.5]);
        assert_eq!(censored_targets(&events, 5, 5, Channel::Cost), vec![-2.5]);
        let late = [event(1, 2.5, 7)];
        for t in 2..40 {
            assert_eq!(censored_targets(&late, t, 5, Channel::Reward), vec![0.0]);
        }
    }

    #[test]
    fn censored_targets_cover_only_past_rounds() {
        let events: Vec<FeedbackEvent> = (1..=6).map(|s| event(s, s as f64, 0)).collect();
        let t = censored_targets(&events, 4, 10, Channel::Reward);
        assert_eq!(t, vec![1.0, 2.0, 3.0]);
    }
}
