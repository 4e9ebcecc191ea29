//! Plug-in asymptotic variance of the extremal QTE estimator and the
//! resulting confidence interval.
//!
//! The covariance estimate keeps only the six nonzero entries of the
//! simplified 4x4 matrix (cross-arm terms vanish), and the variance is the
//! quadratic form v' B Sigma B' v with B built from the Hill estimates and
//! v from the extrapolated quantile ratio kappa.

use crate::error::{Error, Result};
use crate::ipw_quantile::QuantileEstimate;
use crate::propensity::PropensityScore;
use crate::sample::{Arm, Sample};
use crate::stats::standard_normal_quantile;
use serde::Serialize;

/// The six nonzero entries of the estimated covariance matrix plus the
/// quantities needed to assemble the quadratic form. Kept verbatim in the
/// JSON output for auditability.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VarianceComponents {
    pub h1: f64,
    pub h0: f64,
    pub g1: f64,
    pub g0: f64,
    pub j1: f64,
    pub j0: f64,
    pub gamma1: f64,
    pub gamma0: f64,
    pub kappa: f64,
}

/// Exceedance sums with squared inverse propensity weights, each divided
/// by k: for the treated arm
///   H = (1/k) sum D_i / Pi(X_i)^2 * 1{Y_i > q}
///   G = (1/k) sum (log Y_i - log q)^2 D_i / Pi(X_i)^2 * 1{Y_i > q}
///   J = (1/k) sum (log Y_i - log q)   D_i / Pi(X_i)^2 * 1{Y_i > q}
/// and the control-arm analogues with (1-D_i)/(1-Pi(X_i))^2.
pub fn variance_components<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    q1: &QuantileEstimate,
    q0: &QuantileEstimate,
    gammas: (f64, f64),
    kappa: f64,
    k: f64,
) -> Result<VarianceComponents> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive and finite, got {k}")));
    }
    let (h1, g1, j1) = arm_sums(sample, scores, Arm::Treated, q1.value, k)?;
    let (h0, g0, j0) = arm_sums(sample, scores, Arm::Control, q0.value, k)?;
    Ok(VarianceComponents {
        h1,
        h0,
        g1,
        g0,
        j1,
        j0,
        gamma1: gammas.0,
        gamma0: gammas.1,
        kappa,
    })
}

fn arm_sums<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    arm: Arm,
    threshold: f64,
    k: f64,
) -> Result<(f64, f64, f64)> {
    if !(threshold > 0.0) {
        return Err(Error::NonPositiveThreshold(threshold));
    }
    let mut h = 0.0;
    let mut g = 0.0;
    let mut j = 0.0;
    let mut exceedances = 0usize;
    for i in 0..sample.n() {
        if !sample.in_arm(i, arm) || sample.y()[i] <= threshold {
            continue;
        }
        let pi = scores.propensity(sample.x_row(i))?;
        let base = match arm {
            Arm::Treated => pi,
            Arm::Control => 1.0 - pi,
        };
        let w2 = 1.0 / (base * base);
        let log_excess = (sample.y()[i] / threshold).ln();
        h += w2;
        g += w2 * log_excess * log_excess;
        j += w2 * log_excess;
        exceedances += 1;
    }
    if exceedances == 0 {
        return Err(Error::NoExceedances { arm });
    }
    Ok((h / k, g / k, j / k))
}

/// Variance of the normalized extremal QTE: v' B Sigma B' v, expanded
/// analytically. With the cross-arm entries of Sigma equal to zero the
/// form separates per arm:
///   sigma^2 = v1^2 (G1 - 2 g1 J1 + g1^2 H1) + v2^2 (G0 - 2 g0 J0 + g0^2 H0)
/// with v = (min(1, kappa), -min(1, 1/kappa)).
pub fn sigma2_hat(c: &VarianceComponents) -> Result<f64> {
    if !(c.kappa > 0.0 && c.kappa.is_finite()) {
        return Err(Error::NonPositiveKappa(c.kappa));
    }
    let m11 = c.g1 - 2.0 * c.gamma1 * c.j1 + c.gamma1 * c.gamma1 * c.h1;
    let m22 = c.g0 - 2.0 * c.gamma0 * c.j0 + c.gamma0 * c.gamma0 * c.h0;
    let v1 = 1f64.min(c.kappa);
    let v2 = 1f64.min(1.0 / c.kappa);
    let sigma2 = v1 * v1 * m11 + v2 * v2 * m22;
    if sigma2 < 0.0 {
        // The plug-in matrix need not be positive semi-definite in finite
        // samples; surfacing this beats silently reporting an invalid CI.
        return Err(Error::IndefiniteCovariance(sigma2));
    }
    Ok(sigma2)
}

/// Symmetric normal interval delta +/- z_(1-alpha/2) * sigma / beta_n.
pub fn confidence_interval(
    delta: f64,
    sigma2: f64,
    beta_n: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    if !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be finite, got {delta}")));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    if !(beta_n > 0.0 && beta_n.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta_n must be positive, got {beta_n}")));
    }
    crate::distributions::check_level(alpha)?;
    let z = standard_normal_quantile(1.0 - alpha / 2.0);
    let half_width = z * sigma2.sqrt() / beta_n;
    Ok((delta - half_width, delta + half_width))
}
