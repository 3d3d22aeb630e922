use serde::Serialize;

use super::ols::SuffStats;
use super::special::{f_quantile_upper, f_sf};
use super::StatsError;
use crate::Scalar;

/// Parameters per regression (intercept and slope).
pub const K_PARAMS: usize = 2;

/// Restricted (pooled) versus unrestricted (separate) regression comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FTestResult<T> {
    /// ESS of the pooled fit
    pub ess_r: T,
    /// ESS of the exp fit plus ESS of the sim fit
    pub ess_ur: T,
    pub k: usize,
    pub n_sim: usize,
    pub n_exp: usize,
    pub f: T,
    pub df1: usize,
    pub df2: usize,
    pub p_value: T,
    pub critical_value: T,
    pub alpha: T,
    /// `f > critical_value`
    pub reject_null: bool,
}

/// Σ aᵢ²/bᵢ − (Σa)²/(Σb) for the two sample groups plus the between-means
/// term, in the pairwise form Σ_{i<j} (aᵢbⱼ − aⱼbᵢ)² / (bᵢ bⱼ Σb) which is a
/// sum of non-negative terms.
fn pooling_penalty<T: Scalar>(a: &SuffStats<T>, b: &SuffStats<T>) -> T {
    let n = T::from_count(a.n + b.n);
    let w = T::from_count(a.n) * T::from_count(b.n) / n;
    let dx = a.x_mean - b.x_mean;
    let dy = a.y_mean - b.y_mean;
    let pooled_sxx = a.sxx + b.sxx + w * dx * dx;
    let cross = a.sxy * b.sxx - b.sxy * a.sxx;
    let within = cross * cross / (a.sxx * b.sxx * pooled_sxx);
    let ea = a.sxy * dx - dy * a.sxx;
    let eb = b.sxy * dx - dy * b.sxx;
    let between = w * (ea * ea / a.sxx + eb * eb / b.sxx) / pooled_sxx;
    within + between
}

/// F = ((ESS_R − ESS_UR)/K) / (ESS_UR/(N_sim + N_exp − 2K)), with
/// `reject_null` when F exceeds the upper `alpha` quantile of F(K, df2).
pub fn chow_f_test<T: Scalar>(
    x_exp: &[T],
    y_exp: &[T],
    x_sim: &[T],
    y_sim: &[T],
    alpha: T,
) -> Result<FTestResult<T>, StatsError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(StatsError::BadAlpha(alpha.to_f64_lossy()));
    }
    let e = SuffStats::from_samples(x_exp, y_exp)?;
    let s = SuffStats::from_samples(x_sim, y_sim)?;
    for st in [&e, &s] {
        if st.n < 3 {
            return Err(StatsError::TooFewPoints { n: st.n, min: 3 });
        }
        if !(st.sxx > T::zero()) {
            return Err(StatsError::ZeroVariance);
        }
    }
    let ess_ur = e.ess() + s.ess();
    let delta = pooling_penalty(&e, &s);
    let ess_r = ess_ur + delta;
    let df1 = K_PARAMS;
    let df2 = e.n + s.n - 2 * K_PARAMS;
    let (d1, d2) = (T::from_count(df1), T::from_count(df2));
    let f = if delta == T::zero() {
        T::zero()
    } else if ess_ur == T::zero() {
        T::infinity()
    } else {
        (delta / d1) / (ess_ur / d2)
    };
    let critical_value = f_quantile_upper(alpha, d1, d2);
    Ok(FTestResult {
        ess_r,
        ess_ur,
        k: K_PARAMS,
        n_sim: s.n,
        n_exp: e.n,
        f,
        df1,
        df2,
        p_value: f_sf(f, d1, d2),
        critical_value,
        alpha,
        reject_null: f > critical_value,
    })
}
