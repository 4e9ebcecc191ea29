//! Quantile extrapolation beyond the sample range and the extremal QTE
//! pipeline: intermediate IPW quantiles, causal tail indices, extrapolated
//! quantiles, the normalizing factor beta_n, plug-in variance and CI.

use crate::error::{Error, Result};
use crate::inference::{confidence_interval, sigma2_hat, variance_components, VarianceComponents};
use crate::ipw_quantile::{ipw_arm_quantile, QuantileEstimate};
use crate::propensity::PropensityScore;
use crate::sample::{Arm, Sample};
use crate::tail_index::{causal_hill, causal_pickands, TailIndexEstimate};
use rayon::prelude::*;
use serde::Serialize;

/// Levels and nominal coverage for one extremal QTE estimation:
/// intermediate budget k (tau_n = k/n), extreme level p and CI level
/// 1 - alpha. Requires 0 < p < k/n < 1.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtrapolationConfig {
    pub n: usize,
    pub k: f64,
    pub p: f64,
    pub alpha: f64,
}

impl ExtrapolationConfig {
    pub fn new(n: usize, k: f64, p: f64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
        }
        let tau = k / n as f64;
        if tau >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "intermediate tail mass k/n = {tau} must be below 1"
            )));
        }
        if !(p > 0.0 && p < tau) {
            return Err(Error::LevelOrdering { p, tau });
        }
        crate::distributions::check_level(alpha)?;
        Ok(ExtrapolationConfig { n, k, p, alpha })
    }

    /// Default intermediate budget k = n^0.65.
    pub fn default_k(n: usize) -> f64 {
        (n as f64).powf(0.65)
    }

    /// Intermediate tail mass tau_n = k/n.
    pub fn tau(&self) -> f64 {
        self.k / self.n as f64
    }

    /// log(tau/p) / sqrt(k); above 1 the extrapolation outruns the
    /// nominal accuracy of the normal approximation and a warning is
    /// logged (this is a heuristic, not an error).
    pub fn extrapolation_strain(&self) -> f64 {
        (self.tau() / self.p).ln() / self.k.sqrt()
    }

    fn with_k(&self, k: f64) -> Result<Self> {
        ExtrapolationConfig::new(self.n, k, self.p, self.alpha)
    }
}

/// Full output of the extremal QTE pipeline. `delta = q1_extreme -
/// q0_extreme` exactly, and `ci` always contains `delta`.
#[derive(Clone, Debug, Serialize)]
pub struct ExtremalQteResult {
    pub q1_extreme: f64,
    pub q0_extreme: f64,
    pub delta: f64,
    pub gamma1: TailIndexEstimate,
    pub gamma0: TailIndexEstimate,
    pub q1_intermediate: QuantileEstimate,
    pub q0_intermediate: QuantileEstimate,
    pub beta_n: f64,
    pub kappa_hat: f64,
    pub sigma2_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub components: VarianceComponents,
    pub config: ExtrapolationConfig,
}

/// Extrapolates an intermediate quantile estimate to the extreme level p:
/// q_hat * (tau/p)^gamma, where tau is the tail mass of the estimate.
pub fn extrapolate_quantile(
    q_hat: &QuantileEstimate,
    gamma: &TailIndexEstimate,
    p: f64,
) -> Result<f64> {
    crate::distributions::check_level(p)?;
    let tau = q_hat.tail_mass();
    if p >= tau {
        return Err(Error::LevelOrdering { p, tau });
    }
    if !(q_hat.value > 0.0) {
        return Err(Error::NonPositiveThreshold(q_hat.value));
    }
    Ok(q_hat.value * (tau / p).powf(gamma.gamma))
}

/// Extremal QTE with causal Hill tail indices, plug-in variance and
/// confidence interval. All intermediate quantities are recorded in the
/// result.
pub fn extremal_qte<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    cfg: &ExtrapolationConfig,
) -> Result<ExtremalQteResult> {
    if sample.n() != cfg.n {
        return Err(Error::InvalidParameter(format!(
            "config n = {} does not match sample size {}",
            cfg.n,
            sample.n()
        )));
    }
    let strain = cfg.extrapolation_strain();
    if strain > 1.0 {
        log::warn!(
            "log(tau/p) = {:.2} exceeds sqrt(k) = {:.2}; extrapolation may be unstable",
            (cfg.tau() / cfg.p).ln(),
            cfg.k.sqrt()
        );
    }
    let tau = cfg.tau();
    let level = 1.0 - tau;
    let q1 = ipw_arm_quantile(sample, scores, Arm::Treated, level)?;
    let q0 = ipw_arm_quantile(sample, scores, Arm::Control, level)?;
    let gamma1 = causal_hill(sample, scores, Arm::Treated, &q1, cfg.k)?;
    let gamma0 = causal_hill(sample, scores, Arm::Control, &q0, cfg.k)?;
    let q1_extreme = extrapolate_quantile(&q1, &gamma1, cfg.p)?;
    let q0_extreme = extrapolate_quantile(&q0, &gamma0, cfg.p)?;
    let delta = q1_extreme - q0_extreme;

    let max_q = q1_extreme.max(q0_extreme);
    if max_q <= 0.0 {
        return Err(Error::Normalization { q1: q1_extreme, q0: q0_extreme });
    }
    let beta_n = cfg.k.sqrt() / ((tau / cfg.p).ln() * max_q);
    if q0_extreme <= 0.0 {
        return Err(Error::NonPositiveKappa(q0_extreme));
    }
    let kappa_hat = q1_extreme / q0_extreme;
    let components = variance_components(
        sample,
        scores,
        &q1,
        &q0,
        (gamma1.gamma, gamma0.gamma),
        kappa_hat,
        cfg.k,
    )?;
    let sigma2 = sigma2_hat(&components)?;
    let (ci_lo, ci_hi) = confidence_interval(delta, sigma2, beta_n, cfg.alpha)?;
    Ok(ExtremalQteResult {
        q1_extreme,
        q0_extreme,
        delta,
        gamma1,
        gamma0,
        q1_intermediate: q1,
        q0_intermediate: q0,
        beta_n,
        kappa_hat,
        sigma2_hat: sigma2,
        ci_lo,
        ci_hi,
        components,
        config: *cfg,
    })
}

/// Point-only extremal QTE using the causal Pickands tail index, the
/// comparator pipeline. No plug-in interval exists for this estimator;
/// interval construction for it goes through the bootstrap.
#[derive(Clone, Debug, Serialize)]
pub struct PickandsQte {
    pub q1_extreme: f64,
    pub q0_extreme: f64,
    pub delta: f64,
    pub gamma1: TailIndexEstimate,
    pub gamma0: TailIndexEstimate,
}

pub fn extremal_qte_pickands<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    cfg: &ExtrapolationConfig,
) -> Result<PickandsQte> {
    let tau = cfg.tau();
    if 4.0 * tau >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "Pickands needs 4k/n < 1, got 4 tau = {}",
            4.0 * tau
        )));
    }
    let mut arm_results = Vec::with_capacity(2);
    for arm in [Arm::Treated, Arm::Control] {
        let q_tau = ipw_arm_quantile(sample, scores, arm, 1.0 - tau)?;
        let q_2tau = ipw_arm_quantile(sample, scores, arm, 1.0 - 2.0 * tau)?;
        let q_4tau = ipw_arm_quantile(sample, scores, arm, 1.0 - 4.0 * tau)?;
        let gamma = causal_pickands(&q_tau, &q_2tau, &q_4tau, cfg.k)?;
        let extreme = extrapolate_quantile(&q_tau, &gamma, cfg.p)?;
        arm_results.push((extreme, gamma));
    }
    let (q1_extreme, gamma1) = arm_results[0];
    let (q0_extreme, gamma0) = arm_results[1];
    Ok(PickandsQte { q1_extreme, q0_extreme, delta: q1_extreme - q0_extreme, gamma1, gamma0 })
}

/// One row of the k-diagnostic sweep; failed rows carry the error text.
#[derive(Clone, Debug, Serialize)]
pub struct KSweepRow {
    pub k: f64,
    pub delta: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma0: Option<f64>,
    pub error: Option<String>,
}

impl KSweepRow {
    fn from_result(k: f64, res: Result<ExtremalQteResult>) -> Self {
        match res {
            Ok(r) => KSweepRow {
                k,
                delta: Some(r.delta),
                ci_lo: Some(r.ci_lo),
                ci_hi: Some(r.ci_hi),
                gamma1: Some(r.gamma1.gamma),
                gamma0: Some(r.gamma0.gamma),
                error: None,
            },
            Err(e) => KSweepRow {
                k,
                delta: None,
                ci_lo: None,
                ci_hi: None,
                gamma1: None,
                gamma0: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Runs the pipeline once per k in the grid; rows are independent (no
/// smoothing) and per-row failures do not stop the sweep.
pub fn k_sweep<P: PropensityScore + ?Sized>(
    sample: &Sample,
    scores: &P,
    template: &ExtrapolationConfig,
    k_grid: &[f64],
) -> Vec<KSweepRow> {
    k_grid
        .par_iter()
        .map(|&k| match template.with_k(k) {
            Ok(cfg) => KSweepRow::from_result(k, extremal_qte(sample, scores, &cfg)),
            Err(e) => KSweepRow::from_result(k, Err(e)),
        })
        .collect()
}

/// Writes the sweep table as CSV with columns
/// k, delta, ci_lo, ci_hi, gamma1, gamma0, error.
pub fn write_k_sweep_csv<W: std::io::Write>(rows: &[KSweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "delta", "ci_lo", "ci_hi", "gamma1", "gamma0", "error"])
        .map_err(csv_io)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        w.write_record([
            row.k.to_string(),
            fmt(row.delta),
            fmt(row.ci_lo),
            fmt(row.ci_hi),
            fmt(row.gamma1),
            fmt(row.gamma0),
            row.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()
}

pub(crate) fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}
