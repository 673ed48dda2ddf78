//! Square-exponential covariance.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SquareExponential,
}

/// Kernel family and lengthscale `u`. Every supported kernel has unit prior
/// variance, `k(x, x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    lengthscale: f64,
    neg_half_inv_u2: f64,
}

impl KernelSpec {
    pub fn square_exponential(lengthscale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::invalid(
                "u",
                "lengthscale must be a positive finite number",
            ));
        }
        Ok(Self {
            kind: KernelKind::SquareExponential,
            lengthscale,
            neg_half_inv_u2: -0.5 / (lengthscale * lengthscale),
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Covariance without dimension checks; callers guarantee equal lengths.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(y) {
            let d = a - b;
            d2 += d * d;
        }
        match self.kind {
            KernelKind::SquareExponential => libm::exp(d2 * self.neg_half_inv_u2),
        }
    }

    pub fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval(x, y))
    }

    #[inline]
    pub fn prior_variance(&self) -> f64 {
        1.0
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::square_exponential(1.0).expect("unit lengthscale is valid")
    }
}

/// `exp(-|x - y|^2 / (2 u^2))`.
pub fn se_kernel(x: &[f64], y: &[f64], u: f64) -> Result<f64> {
    KernelSpec::square_exponential(u)?.try_eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_inputs_give_one() {
        for u in [0.1, 1.0, 7.5] {
            assert_eq!(se_kernel(&[3.0, 3.0], &[3.0, 3.0], u).unwrap(), 1.0);
        }
    }

    #[test]
    fn closed_form_distances() {
        let u = 0.7;
        let r = u * libm::sqrt(2.0);
        let v = se_kernel(&[0.0, 0.0], &[r, 0.0], u).unwrap();
        assert_relative_eq!(v, libm::exp(-1.0), epsilon = 1e-14);
        assert_relative_eq!(v, 0.367879, epsilon = 1e-6);
        let v = se_kernel(&[1.0, 2.0], &[1.0, 2.0 + u], u).unwrap();
        assert_relative_eq!(v, 0.606531, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_and_bounded() {
        let k = KernelSpec::square_exponential(1.3).unwrap();
        let a = [0.2, 5.1, -1.0];
        let b = [4.0, 0.3, 2.2];
        let kab = k.eval(&a, &b);
        assert_eq!(kab, k.eval(&b, &a));
        assert!(kab > 0.0 && kab <= 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            se_kernel(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(se_kernel(&[0.0], &[0.0], 0.0).is_err());
        assert!(se_kernel(&[0.0], &[0.0], f64::NAN).is_err());
    }
}
