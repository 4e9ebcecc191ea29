//! Full-sample bootstrap confidence intervals around the extrapolation
//! estimators ("BS Hill" and "BS Pickands").
//!
//! Each replicate resamples rows with replacement and reruns the whole
//! pipeline, including the propensity refit on the same basis. Whether the
//! propensity should be refit per resample is an interpretation: refitting
//! propagates the estimation uncertainty of the propensity scores into the
//! interval, which is the conservative reading adopted here.

use crate::error::{Error, Result};
use crate::extrapolation::{extremal_qte, extremal_qte_pickands, ExtrapolationConfig};
use crate::propensity::{fit_sieve_logistic, FitOptions, SieveBasis};
use crate::rng::replication_rng;
use crate::sample::Sample;
use crate::stats::{sample_std, standard_normal_quantile};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BootstrapMethod {
    Hill,
    Pickands,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates B (at least 2).
    pub reps: usize,
    pub method: BootstrapMethod,
    pub base: ExtrapolationConfig,
    pub seed: u64,
    /// Replicates whose pipeline fails are dropped; beyond this fraction
    /// the interval is refused as unreliable.
    pub max_drop_fraction: f64,
}

impl BootstrapConfig {
    pub fn new(
        reps: usize,
        method: BootstrapMethod,
        base: ExtrapolationConfig,
        seed: u64,
    ) -> Result<Self> {
        if reps < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 replicates, got {reps}")));
        }
        Ok(BootstrapConfig { reps, method, base, seed, max_drop_fraction: 0.2 })
    }
}

/// Normal bootstrap interval around the full-sample point estimate.
#[derive(Clone, Debug, Serialize)]
pub struct BootstrapCi {
    pub method: BootstrapMethod,
    pub delta: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Standard deviation of the bootstrap point estimates.
    pub sigma_star: f64,
    pub effective_reps: usize,
    pub dropped: usize,
    pub alpha: f64,
}

/// Resample indices of replicate `replicate` under `seed`; shared by every
/// bootstrap method so that Hill and Pickands variants see identical
/// resamples on the same seed.
pub fn resample_indices(seed: u64, replicate: u64, n: usize) -> Vec<usize> {
    let mut rng = replication_rng(seed, replicate);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn point_estimate(
    sample: &Sample,
    basis: &SieveBasis,
    fit: &FitOptions,
    cfg: &ExtrapolationConfig,
    method: BootstrapMethod,
) -> Result<f64> {
    let model = fit_sieve_logistic(sample, basis, fit)?;
    match method {
        BootstrapMethod::Hill => Ok(extremal_qte(sample, &model, cfg)?.delta),
        BootstrapMethod::Pickands => Ok(extremal_qte_pickands(sample, &model, cfg)?.delta),
    }
}

/// Bootstrap CI with the default resampling scheme.
pub fn bootstrap_ci(
    sample: &Sample,
    basis: &SieveBasis,
    fit: &FitOptions,
    cfg: &BootstrapConfig,
) -> Result<BootstrapCi> {
    bootstrap_ci_with_indices(sample, basis, fit, cfg, |replicate| {
        resample_indices(cfg.seed, replicate as u64, sample.n())
    })
}

/// Bootstrap CI with an injected resampling scheme. Exposed so tests can
/// pin the resamples; use `bootstrap_ci` otherwise.
pub fn bootstrap_ci_with_indices<F>(
    sample: &Sample,
    basis: &SieveBasis,
    fit: &FitOptions,
    cfg: &BootstrapConfig,
    indices_for: F,
) -> Result<BootstrapCi>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    if cfg.reps < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates, got {}",
            cfg.reps
        )));
    }
    let delta = point_estimate(sample, basis, fit, &cfg.base, cfg.method)?;

    let replicate_deltas: Vec<Option<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|b| {
            let resampled = sample.resample(&indices_for(b)).ok()?;
            point_estimate(&resampled, basis, fit, &cfg.base, cfg.method).ok()
        })
        .collect();

    let mut deltas: Vec<f64> = replicate_deltas.into_iter().flatten().collect();
    let dropped = cfg.reps - deltas.len();
    if dropped as f64 > cfg.max_drop_fraction * cfg.reps as f64 {
        return Err(Error::BootstrapUnreliable { dropped, total: cfg.reps });
    }
    if deltas.len() < 2 {
        return Err(Error::BootstrapUnreliable { dropped, total: cfg.reps });
    }
    // Sorting first makes sigma_star independent of replicate order.
    deltas.sort_by(f64::total_cmp);
    let sigma_star = sample_std(&deltas);
    let z = standard_normal_quantile(1.0 - cfg.base.alpha / 2.0);
    Ok(BootstrapCi {
        method: cfg.method,
        delta,
        ci_lo: delta - z * sigma_star,
        ci_hi: delta + z * sigma_star,
        sigma_star,
        effective_reps: deltas.len(),
        dropped,
        alpha: cfg.base.alpha,
    })
}

/// The b-out-of-n subsampling bootstrap is a different procedure whose
/// tuning recipes (b, m, tau_n0) live outside this crate's scope; it is
/// deliberately not implemented.
pub fn zhang_b_out_of_n_ci(_sample: &Sample, _cfg: &BootstrapConfig) -> Result<BootstrapCi> {
    Err(Error::UnsupportedMethod(
        "b-out-of-n bootstrap is not implemented; use the Hill plug-in or full-sample bootstrap"
            .into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::TailLaw;
    use crate::rng::seeded;
    use rand::Rng;

    fn pareto_sample(n: usize, seed: u64, treated_share: f64) -> Sample {
        let mut rng = seeded(seed);
        let y = TailLaw::Pareto { shape: 2.0, scale: 1.0 }.sample(n, &mut rng).unwrap();
        let d: Vec<u8> =
            (0..n).map(|_| u8::from(rng.random::<f64>() < treated_share)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        Sample::new(y, d, x, 1).unwrap()
    }

    fn base_cfg(n: usize) -> ExtrapolationConfig {
        ExtrapolationConfig::new(n, ExtrapolationConfig::default_k(n), 1.0 / n as f64, 0.1)
            .unwrap()
    }

    #[test]
    fn identical_resamples_give_zero_width() {
        let n = 600;
        let sample = pareto_sample(n, 1, 0.5);
        let basis = SieveBasis::graded(1, 2).unwrap();
        let cfg =
            BootstrapConfig::new(2, BootstrapMethod::Hill, base_cfg(n), 123).unwrap();
        let pinned = resample_indices(9, 0, n);
        let ci = bootstrap_ci_with_indices(
            &sample,
            &basis,
            &FitOptions::default(),
            &cfg,
            |_| pinned.clone(),
        )
        .unwrap();
        assert_eq!(ci.sigma_star, 0.0);
        assert_eq!((ci.ci_lo, ci.ci_hi), (ci.delta, ci.delta));
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let n = 500;
        let sample = pareto_sample(n, 2, 0.5);
        let basis = SieveBasis::graded(1, 2).unwrap();
        let cfg = BootstrapConfig::new(40, BootstrapMethod::Hill, base_cfg(n), 77).unwrap();
        let a = bootstrap_ci(&sample, &basis, &FitOptions::default(), &cfg).unwrap();
        let b = bootstrap_ci(&sample, &basis, &FitOptions::default(), &cfg).unwrap();
        assert_eq!(a.delta.to_bits(), b.delta.to_bits());
        assert_eq!(a.sigma_star.to_bits(), b.sigma_star.to_bits());
        assert_eq!(a.effective_reps, b.effective_reps);
    }

    #[test]
    fn resampling_is_method_independent() {
        // Hill and Pickands variants must see the same resamples.
        assert_eq!(resample_indices(5, 3, 100), resample_indices(5, 3, 100));
        assert_ne!(resample_indices(5, 3, 100), resample_indices(5, 4, 100));
    }

    #[test]
    fn dropped_replicates_are_counted() {
        let n = 400;
        let sample = pareto_sample(n, 3, 0.5);
        let basis = SieveBasis::graded(1, 2).unwrap();
        let cfg = BootstrapConfig::new(10, BootstrapMethod::Hill, base_cfg(n), 5).unwrap();
        // Force failures in selected replicates by resampling control rows
        // only (the treated arm becomes empty there).
        let control_rows: Vec<usize> =
            (0..n).filter(|&i| sample.d()[i] == 0).collect();
        let ci = bootstrap_ci_with_indices(
            &sample,
            &basis,
            &FitOptions::default(),
            &cfg,
            |b| {
                if b < 2 {
                    control_rows.iter().cycle().take(n).copied().collect()
                } else {
                    resample_indices(5, b as u64, n)
                }
            },
        )
        .unwrap();
        assert_eq!(ci.dropped, 2);
        assert_eq!(ci.effective_reps, 8);
    }

    #[test]
    fn excessive_drops_are_rejected() {
        let n = 400;
        let sample = pareto_sample(n, 4, 0.5);
        let basis = SieveBasis::graded(1, 2).unwrap();
        let cfg = BootstrapConfig::new(10, BootstrapMethod::Hill, base_cfg(n), 6).unwrap();
        let control_rows: Vec<usize> =
            (0..n).filter(|&i| sample.d()[i] == 0).collect();
        let err = bootstrap_ci_with_indices(
            &sample,
            &basis,
            &FitOptions::default(),
            &cfg,
            |b| {
                if b < 5 {
                    control_rows.iter().cycle().take(n).copied().collect()
                } else {
                    resample_indices(6, b as u64, n)
                }
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::BootstrapUnreliable { dropped: 5, total: 10 }));
    }

    #[test]
    fn zhang_bootstrap_is_explicitly_unsupported() {
        let n = 100;
        let sample = pareto_sample(n, 7, 0.5);
        let cfg = BootstrapConfig::new(10, BootstrapMethod::Hill, base_cfg(n), 8).unwrap();
        assert!(matches!(
            zhang_b_out_of_n_ci(&sample, &cfg),
            Err(Error::UnsupportedMethod(_))
        ));
    }
}
