use serde::Serialize;

use super::special::t_two_sided_p;
use super::StatsError;
use crate::Scalar;

/// Centered sufficient statistics of a bivariate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuffStats<T> {
    pub n: usize,
    pub x_mean: T,
    pub y_mean: T,
    pub sxx: T,
    pub sxy: T,
    pub syy: T,
}

impl<T: Scalar> SuffStats<T> {
    pub fn from_samples(x: &[T], y: &[T]) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
        }
        if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        let n = x.len();
        if n == 0 {
            return Err(StatsError::TooFewPoints { n, min: 1 });
        }
        let nf = T::from_count(n);
        let x_mean = x.iter().fold(T::zero(), |s, &v| s + v) / nf;
        let y_mean = y.iter().fold(T::zero(), |s, &v| s + v) / nf;
        let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
        for (&xi, &yi) in x.iter().zip(y) {
            let dx = xi - x_mean;
            let dy = yi - y_mean;
            sxx = sxx + dx * dx;
            sxy = sxy + dx * dy;
            syy = syy + dy * dy;
        }
        Ok(SuffStats { n, x_mean, y_mean, sxx, sxy, syy })
    }

    /// Residual sum of squares of the least-squares line.
    pub fn ess(&self) -> T {
        if self.sxx <= T::zero() {
            return self.syy;
        }
        (self.syy - self.sxy * self.sxy / self.sxx).max(T::zero())
    }
}

/// Simple linear regression `y = beta0 + beta1·x + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionModel<T> {
    pub beta0: T,
    pub beta1: T,
    pub r_squared: T,
    /// residual sum of squares
    pub ess: T,
    /// two-sided t-test on beta1
    pub p_value: T,
    pub x_mean: T,
    pub n: usize,
    /// overall regression F = R²(n-2)/(1-R²)
    pub f_stat: T,
}

/// Closed-form least squares.
pub fn fit_ols<T: Scalar>(x: &[T], y: &[T]) -> Result<RegressionModel<T>, StatsError> {
    fit_sufficient(&SuffStats::from_samples(x, y)?)
}

pub fn fit_sufficient<T: Scalar>(s: &SuffStats<T>) -> Result<RegressionModel<T>, StatsError> {
    if s.n < 3 {
        return Err(StatsError::TooFewPoints { n: s.n, min: 3 });
    }
    if !(s.sxx > T::zero()) {
        return Err(StatsError::ZeroVariance);
    }
    let beta1 = s.sxy / s.sxx;
    let beta0 = s.y_mean - beta1 * s.x_mean;
    let ess = s.ess();
    let r_squared = if s.syy > T::zero() { (T::one() - ess / s.syy).max(T::zero()).min(T::one()) } else { T::zero() };
    let df = T::from_count(s.n - 2);
    let f_stat = r_squared * df / (T::one() - r_squared);
    let t = f_stat.sqrt();
    let p_value = t_two_sided_p(t, df);
    Ok(RegressionModel { beta0, beta1, r_squared, ess, p_value, x_mean: s.x_mean, n: s.n, f_stat })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = fit_ols(&x, &y).unwrap();
        assert!((m.beta0 - 1.0).abs() < 1e-12 && (m.beta1 - 2.0).abs() < 1e-12);
        assert_eq!(m.ess, 0.0);
        assert_eq!(m.r_squared, 1.0);
        assert_eq!(m.p_value, 0.0);
    }

    #[test]
    fn three_points_by_hand() {
        let m = fit_ols(&[1.0_f64, 2.0, 3.0], &[2.0, 3.0, 5.0]).unwrap();
        assert!((m.beta1 - 1.5).abs() < 1e-12);
        assert!((m.beta0 - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.ess - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn f_identity_recovers_sample_size() {
        // R² = 0.50007 and F = 17.915 invert to n close to 20
        let (r2, f) = (0.50007_f64, 17.915_f64);
        let n = 2.0 + f * (1.0 - r2) / r2;
        assert_eq!(n.round(), 20.0);
    }

    #[test]
    fn errors() {
        assert_eq!(fit_ols(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(), StatsError::ZeroVariance);
        assert!(matches!(fit_ols(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewPoints { .. })));
        assert!(matches!(fit_ols(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch { .. })));
    }

    #[test]
    fn f32_fit() {
        let m = fit_ols(&[1.0_f32, 2.0, 3.0], &[2.0, 3.0, 5.0]).unwrap();
        assert!((m.beta1 - 1.5).abs() < 1e-5);
    }
}
