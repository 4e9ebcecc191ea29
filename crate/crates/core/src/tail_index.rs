//! Extreme value index estimation for potential outcomes: the causal Hill
//! estimator (inverse-propensity-weighted log exceedances) and the causal
//! Pickands estimator (ratios of weighted-quantile spacings).

use crate::error::{Error, Result};
use crate::ipw_quantile::QuantileEstimate;
use crate::propensity::PropensityScore;
use crate::sample::{Arm, Sample};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EviMethod {
    CausalHill,
    CausalPickands,
}

/// Estimated extreme value index of one arm.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailIndexEstimate {
    pub arm: Arm,
    pub method: EviMethod,
    pub gamma: f64,
    /// Exceedance budget k = n * tau_n; may be non-integer.
    pub k: f64,
    /// Intermediate quantile above which exceedances were taken.
    pub threshold: f64,
}

/// Causal Hill estimator: (1/k) * sum of w_i * log(Y_i / q_hat) over
/// strict exceedances Y_i > q_hat in the given arm, with inverse
/// propensity weights w_i. The divisor is exactly k, not the realized
/// exceedance count.
pub fn causal_hill<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    arm: Arm,
    q_hat: &QuantileEstimate,
    k: f64,
) -> Result<TailIndexEstimate> {
    if q_hat.arm != arm {
        return Err(Error::InvalidParameter(format!(
            "quantile estimate is for the {} arm, requested {}",
            q_hat.arm, arm
        )));
    }
    if !(q_hat.value > 0.0) {
        return Err(Error::NonPositiveThreshold(q_hat.value));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive and finite, got {k}")));
    }
    let threshold = q_hat.value;
    let mut sum = 0.0;
    let mut exceedances = 0usize;
    for i in 0..sample.n() {
        if !sample.in_arm(i, arm) || sample.y()[i] <= threshold {
            continue;
        }
        let pi = scores.propensity(sample.x_row(i))?;
        let w = match arm {
            Arm::Treated => 1.0 / pi,
            Arm::Control => 1.0 / (1.0 - pi),
        };
        sum += w * (sample.y()[i] / threshold).ln();
        exceedances += 1;
    }
    if exceedances == 0 {
        return Err(Error::NoExceedances { arm });
    }
    Ok(TailIndexEstimate { arm, method: EviMethod::CausalHill, gamma: sum / k, k, threshold })
}

/// Causal Pickands estimator from quantile estimates at the levels
/// 1-tau, 1-2tau and 1-4tau of one arm:
/// gamma = log(spacing ratio) / log 2.
pub fn causal_pickands(
    q_tau: &QuantileEstimate,
    q_2tau: &QuantileEstimate,
    q_4tau: &QuantileEstimate,
    k: f64,
) -> Result<TailIndexEstimate> {
    if q_tau.arm != q_2tau.arm || q_tau.arm != q_4tau.arm {
        return Err(Error::InvalidParameter("quantile estimates must share the arm".into()));
    }
    if !(q_tau.tau > q_2tau.tau && q_2tau.tau > q_4tau.tau) {
        return Err(Error::InvalidParameter(format!(
            "quantile levels must decrease: got {} , {} , {}",
            q_tau.tau, q_2tau.tau, q_4tau.tau
        )));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive and finite, got {k}")));
    }
    let upper = q_tau.value - q_2tau.value;
    let lower = q_2tau.value - q_4tau.value;
    if !(upper > 0.0 && lower > 0.0) {
        return Err(Error::DegenerateSpacings { upper, lower });
    }
    Ok(TailIndexEstimate {
        arm: q_tau.arm,
        method: EviMethod::CausalPickands,
        gamma: (upper / lower).ln() / std::f64::consts::LN_2,
        k,
        threshold: q_tau.value,
    })
}
