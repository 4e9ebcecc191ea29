//! Inverse-propensity-weighted quantile estimation for each potential
//! outcome arm. The weighted pinball-loss minimizer has a closed form: the
//! smallest observed value whose cumulative weight reaches tau of the total.

use crate::error::{Error, Result};
use crate::propensity::PropensityScore;
use crate::sample::{Arm, Sample};
use serde::Serialize;

/// An arm quantile estimate at level `tau` together with the total inverse
/// propensity weight that produced it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuantileEstimate {
    pub arm: Arm,
    pub tau: f64,
    pub value: f64,
    pub effective_weight_sum: f64,
}

impl QuantileEstimate {
    /// Tail mass above the quantile level, 1 - tau.
    pub fn tail_mass(&self) -> f64 {
        1.0 - self.tau
    }
}

/// Minimizer of the weighted quantile (pinball) loss over the observed
/// values: the smallest v with sum of weights of values <= v reaching
/// tau times the total weight. Tied values are merged before the scan.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "values ({}) and weights ({}) must be nonempty and of equal length",
            values.len(),
            weights.len()
        )));
    }
    crate::distributions::check_level(tau)?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("values must be finite".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let target = tau * total;
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        // Merge the weights of any run of tied values.
        while i < order.len() && values[order[i]] == v {
            cum += weights[order[i]];
            i += 1;
        }
        if cum >= target {
            return Ok(v);
        }
    }
    // Rounding in the cumulative sum can leave the last step marginally
    // short of tau * total; the maximum is the minimizer then.
    Ok(values[*order.last().expect("nonempty")])
}

/// Firpo's inverse-propensity-weighted arm quantile: weights D_i/Pi(X_i)
/// for the treated arm and (1-D_i)/(1-Pi(X_i)) for the control arm.
pub fn ipw_arm_quantile<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    arm: Arm,
    tau: f64,
) -> Result<QuantileEstimate> {
    crate::distributions::check_level(tau)?;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for i in 0..sample.n() {
        if !sample.in_arm(i, arm) {
            continue;
        }
        let pi = scores.propensity(sample.x_row(i))?;
        let w = match arm {
            Arm::Treated => 1.0 / pi,
            Arm::Control => 1.0 / (1.0 - pi),
        };
        values.push(sample.y()[i]);
        weights.push(w);
    }
    if values.is_empty() {
        return Err(Error::EmptyArm { arm });
    }
    let value = weighted_quantile(&values, &weights, tau)?;
    let effective_weight_sum = weights.iter().sum();
    Ok(QuantileEstimate { arm, tau, value, effective_weight_sum })
}
