//! Monte Carlo study: data generation from three heavy-tailed
//! potential-outcome models with a known quadratic propensity, paired
//! evaluation of the competing estimators, and plot-ready report output.
//!
//! In model H1 both potential outcomes share the same Student-t draw, so
//! Y(1) = 5 Y(0) holds unit by unit. H2 and H3 draw the two arms
//! independently given X; only one arm is ever observed, so this choice
//! affects nothing estimable.

use crate::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapMethod};
use crate::distributions::{true_model_quantile, TailLaw};
use crate::error::{Error, Result};
use crate::extrapolation::{extremal_qte, extremal_qte_pickands, ExtrapolationConfig};
use crate::ipw_quantile::ipw_arm_quantile;
use crate::propensity::{default_basis_size, fit_sieve_logistic, FitOptions, SieveBasis};
use crate::rng::replication_rng;
use crate::sample::{Arm, Sample};
use crate::stats::standard_normal_quantile;
use rand::Rng;
use rand_distr::{Distribution, Frechet, Pareto, StudentT};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

/// Treatment probability used throughout the study.
pub fn true_propensity(x: f64) -> f64 {
    0.5 * x * x + 0.25
}

/// The three outcome models of the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimModel {
    /// Y(1) = 5 S (1+X), Y(0) = S (1+X), shared S ~ t_3.
    H1,
    /// Y(1) = C_2 exp(X), Y(0) = C_3 exp(X), independent Frechet draws.
    H2,
    /// Y(1) ~ Pareto(1.75 + X, 2), Y(0) ~ Pareto(1.75 + 5X, 1).
    H3,
}

impl SimModel {
    pub fn label(&self) -> &'static str {
        match self {
            SimModel::H1 => "h1",
            SimModel::H2 => "h2",
            SimModel::H3 => "h3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h1" => Ok(SimModel::H1),
            "h2" => Ok(SimModel::H2),
            "h3" => Ok(SimModel::H3),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }

    /// Known extreme value indices (gamma1, gamma0); H3 has no closed
    /// form, so its tests compare against the numerical mixture oracle.
    pub fn true_gammas(&self) -> Option<(f64, f64)> {
        match self {
            SimModel::H1 => Some((1.0 / 3.0, 1.0 / 3.0)),
            SimModel::H2 => Some((0.5, 1.0 / 3.0)),
            SimModel::H3 => None,
        }
    }

    /// Conditional outcome law given X = x, where it is a plain scaled or
    /// parameterized tail law.
    pub fn conditional_cdf(&self, arm: Arm, x: f64, y: f64) -> f64 {
        match self {
            SimModel::H1 => {
                let scale = if arm == Arm::Treated { 5.0 } else { 1.0 } * (1.0 + x);
                TailLaw::StudentT { df: 3.0 }.cdf(y / scale)
            }
            SimModel::H2 => {
                let shape = if arm == Arm::Treated { 2.0 } else { 3.0 };
                TailLaw::Frechet { shape, scale: 1.0 }.cdf(y / x.exp())
            }
            SimModel::H3 => self.h3_conditional_law(arm, x).cdf(y),
        }
    }

    pub fn conditional_quantile(&self, arm: Arm, x: f64, tau: f64) -> Result<f64> {
        match self {
            SimModel::H1 => {
                let scale = if arm == Arm::Treated { 5.0 } else { 1.0 } * (1.0 + x);
                Ok(scale * TailLaw::StudentT { df: 3.0 }.true_quantile(tau)?)
            }
            SimModel::H2 => {
                let shape = if arm == Arm::Treated { 2.0 } else { 3.0 };
                Ok(x.exp() * TailLaw::Frechet { shape, scale: 1.0 }.true_quantile(tau)?)
            }
            SimModel::H3 => self.h3_conditional_law(arm, x).true_quantile(tau),
        }
    }

    fn h3_conditional_law(&self, arm: Arm, x: f64) -> TailLaw {
        match arm {
            Arm::Treated => TailLaw::Pareto { shape: 1.75 + x, scale: 2.0 },
            Arm::Control => TailLaw::Pareto { shape: 1.75 + 5.0 * x, scale: 1.0 },
        }
    }
}

impl Serialize for SimModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// A generated data set with both potential outcomes retained.
#[derive(Clone, Debug)]
pub struct PotentialSample {
    pub x: Vec<f64>,
    pub d: Vec<u8>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl PotentialSample {
    /// Observed data: Y = D Y(1) + (1-D) Y(0), X as the single covariate.
    pub fn observed(&self) -> Sample {
        let y = self
            .d
            .iter()
            .zip(self.y1.iter().zip(&self.y0))
            .map(|(&d, (&y1, &y0))| if d == 1 { y1 } else { y0 })
            .collect();
        Sample::new(y, self.d.clone(), self.x.clone(), 1).expect("generated sample is valid")
    }
}

/// Draws X, U ~ Uniform[0,1], assigns D = 1{U <= 0.5 X^2 + 0.25} and both
/// potential outcomes. Per unit the draw order is fixed (X, U, outcome
/// noise), so output is reproducible for a given generator state.
pub fn generate_potential<R: Rng + ?Sized>(
    model: SimModel,
    n: usize,
    rng: &mut R,
) -> Result<PotentialSample> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut x = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let t3 = StudentT::new(3.0).expect("valid df");
    let frechet2 = Frechet::new(0.0, 1.0, 2.0).expect("valid shape");
    let frechet3 = Frechet::new(0.0, 1.0, 3.0).expect("valid shape");
    for _ in 0..n {
        let xi: f64 = rng.random();
        let u: f64 = rng.random();
        let di = u8::from(u <= true_propensity(xi));
        let (y1i, y0i) = match model {
            SimModel::H1 => {
                let s: f64 = t3.sample(rng);
                let base = s * (1.0 + xi);
                (5.0 * base, base)
            }
            SimModel::H2 => {
                let c2: f64 = frechet2.sample(rng);
                let c3: f64 = frechet3.sample(rng);
                (c2 * xi.exp(), c3 * xi.exp())
            }
            SimModel::H3 => {
                let p1 = Pareto::new(2.0, 1.75 + xi).expect("valid");
                let p0 = Pareto::new(1.0, 1.75 + 5.0 * xi).expect("valid");
                (p1.sample(rng), p0.sample(rng))
            }
        };
        x.push(xi);
        d.push(di);
        y1.push(y1i);
        y0.push(y0i);
    }
    Ok(PotentialSample { x, d, y1, y0 })
}

/// Observed-data version of `generate_potential`.
pub fn generate<R: Rng + ?Sized>(model: SimModel, n: usize, rng: &mut R) -> Result<Sample> {
    Ok(generate_potential(model, n, rng)?.observed())
}

/// Extreme-level rules of the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PRule {
    FiveOverN,
    OneOverN,
    FiveOverNLogN,
}

impl PRule {
    pub fn p(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            PRule::FiveOverN => 5.0 / nf,
            PRule::OneOverN => 1.0 / nf,
            PRule::FiveOverNLogN => 5.0 / (nf * nf.ln()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PRule::FiveOverN => "5_over_n",
            PRule::OneOverN => "1_over_n",
            PRule::FiveOverNLogN => "5_over_nlogn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "5_over_n" => Ok(PRule::FiveOverN),
            "1_over_n" => Ok(PRule::OneOverN),
            "5_over_nlogn" => Ok(PRule::FiveOverNLogN),
            other => Err(Error::InvalidParameter(format!("unknown p rule '{other}'"))),
        }
    }
}

impl Serialize for PRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// Estimators compared in the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Hill-based extrapolation with plug-in CI.
    Hill,
    /// Pickands-based extrapolation, point estimate only.
    Pickands,
    /// Non-extrapolated IPW quantile difference at the extreme level.
    FirpoZhang,
    /// Full-sample bootstrap around the Hill extrapolation.
    BsHill,
    /// Full-sample bootstrap around the Pickands extrapolation.
    BsPickands,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Hill => "hill",
            Method::Pickands => "pickands",
            Method::FirpoZhang => "firpo_zhang",
            Method::BsHill => "bs_hill",
            Method::BsPickands => "bs_pickands",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hill" => Ok(Method::Hill),
            "pickands" => Ok(Method::Pickands),
            "firpo_zhang" | "firpo-zhang" => Ok(Method::FirpoZhang),
            "bs_hill" | "bs-hill" => Ok(Method::BsHill),
            "bs_pickands" | "bs-pickands" => Ok(Method::BsPickands),
            other => Err(Error::UnsupportedMethod(other.into())),
        }
    }

    pub fn has_interval(&self) -> bool {
        matches!(self, Method::Hill | Method::BsHill | Method::BsPickands)
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// Intermediate-budget rule.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum KRule {
    /// k = n^exponent.
    Power(f64),
    Fixed(f64),
}

impl KRule {
    pub fn k(&self, n: usize) -> f64 {
        match *self {
            KRule::Power(e) => (n as f64).powf(e),
            KRule::Fixed(k) => k,
        }
    }
}

/// Full description of a Monte Carlo run.
#[derive(Clone, Debug, Serialize)]
pub struct StudyConfig {
    pub model: SimModel,
    pub n_list: Vec<usize>,
    pub p_rules: Vec<PRule>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub k_rule: KRule,
    pub bootstrap_reps: usize,
    /// Sieve basis size; `None` means floor(2 n^(1/11)).
    pub basis_size: Option<usize>,
    #[serde(skip)]
    pub fit: FitOptions,
}

impl StudyConfig {
    pub fn new(
        model: SimModel,
        n_list: Vec<usize>,
        p_rules: Vec<PRule>,
        methods: Vec<Method>,
        reps: usize,
        master_seed: u64,
    ) -> Self {
        StudyConfig {
            model,
            n_list,
            p_rules,
            methods,
            reps,
            master_seed,
            alpha: 0.1,
            k_rule: KRule::Power(0.65),
            bootstrap_reps: 500,
            basis_size: None,
            fit: FitOptions::default(),
        }
    }
}

/// One replication of one method.
#[derive(Clone, Debug, Serialize)]
pub struct RepRecord {
    pub replication: usize,
    pub delta_hat: Option<f64>,
    pub squared_error: Option<f64>,
    pub covered: Option<bool>,
    /// beta_n (delta_hat - delta_true) / sigma_hat; plug-in Hill only.
    pub standardized: Option<f64>,
    pub error: Option<String>,
}

/// Per-cell, per-method report with replication rows and aggregates.
#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub model: SimModel,
    pub n: usize,
    pub p_rule: PRule,
    pub p: f64,
    pub k: f64,
    pub alpha: f64,
    pub method: Method,
    pub delta_true: f64,
    pub reps: usize,
    pub completed: usize,
    pub failures: usize,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    /// sqrt(c (1-c) / completed), the Monte Carlo error of the coverage.
    pub coverage_mc_se: Option<f64>,
    /// True when p < 1/n: the non-extrapolated empirical estimator is
    /// saturated at the arm maximum in this regime.
    pub extreme_level_beyond_sample: bool,
    pub records: Vec<RepRecord>,
}

struct MethodOutcome {
    delta: Option<f64>,
    covered: Option<bool>,
    standardized: Option<f64>,
    error: Option<String>,
}

impl MethodOutcome {
    fn failed(e: impl ToString) -> Self {
        MethodOutcome { delta: None, covered: None, standardized: None, error: Some(e.to_string()) }
    }
}

fn run_method(
    method: Method,
    sample: &Sample,
    model_fit: &crate::propensity::PropensityModel,
    basis: &SieveBasis,
    fit: &FitOptions,
    cfg: &ExtrapolationConfig,
    delta_true: f64,
    bootstrap_reps: usize,
    bootstrap_seed: u64,
) -> MethodOutcome {
    match method {
        Method::Hill => match extremal_qte(sample, model_fit, cfg) {
            Ok(r) => {
                let covered = r.ci_lo <= delta_true && delta_true <= r.ci_hi;
                let sigma = r.sigma2_hat.sqrt();
                let standardized =
                    (sigma > 0.0).then(|| r.beta_n * (r.delta - delta_true) / sigma);
                MethodOutcome {
                    delta: Some(r.delta),
                    covered: Some(covered),
                    standardized,
                    error: None,
                }
            }
            Err(e) => MethodOutcome::failed(e),
        },
        Method::Pickands => match extremal_qte_pickands(sample, model_fit, cfg) {
            Ok(r) => MethodOutcome {
                delta: Some(r.delta),
                covered: None,
                standardized: None,
                error: None,
            },
            Err(e) => MethodOutcome::failed(e),
        },
        Method::FirpoZhang => {
            let level = 1.0 - cfg.p;
            let q1 = ipw_arm_quantile(sample, model_fit, Arm::Treated, level);
            let q0 = ipw_arm_quantile(sample, model_fit, Arm::Control, level);
            match (q1, q0) {
                (Ok(q1), Ok(q0)) => MethodOutcome {
                    delta: Some(q1.value - q0.value),
                    covered: None,
                    standardized: None,
                    error: None,
                },
                (Err(e), _) | (_, Err(e)) => MethodOutcome::failed(e),
            }
        }
        Method::BsHill | Method::BsPickands => {
            let bs_method = if method == Method::BsHill {
                BootstrapMethod::Hill
            } else {
                BootstrapMethod::Pickands
            };
            let bs_cfg = BootstrapConfig {
                reps: bootstrap_reps,
                method: bs_method,
                base: *cfg,
                seed: bootstrap_seed,
                max_drop_fraction: 0.2,
            };
            match bootstrap_ci(sample, basis, fit, &bs_cfg) {
                Ok(ci) => MethodOutcome {
                    delta: Some(ci.delta),
                    covered: Some(ci.ci_lo <= delta_true && delta_true <= ci.ci_hi),
                    standardized: None,
                    error: None,
                },
                Err(e) => MethodOutcome::failed(e),
            }
        }
    }
}

/// Runs the full grid (n_list x p_rules x methods). Every method inside a
/// cell sees identical data sets replication by replication, so method
/// comparisons are paired. Reports are deterministic in the configuration.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<McReport>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParameter("at least one method required".into()));
    }
    crate::distributions::check_level(cfg.alpha)?;
    let mut reports = Vec::new();
    for &n in &cfg.n_list {
        for &p_rule in &cfg.p_rules {
            reports.extend(run_cell(cfg, n, p_rule)?);
        }
    }
    Ok(reports)
}

fn run_cell(cfg: &StudyConfig, n: usize, p_rule: PRule) -> Result<Vec<McReport>> {
    let p = p_rule.p(n);
    let k = cfg.k_rule.k(n);
    let extrap = ExtrapolationConfig::new(n, k, p, cfg.alpha)?;
    let h = cfg.basis_size.unwrap_or_else(|| default_basis_size(n));
    let basis = SieveBasis::graded(1, h)?;
    let level = 1.0 - p;
    let delta_true = true_model_quantile(cfg.model, Arm::Treated, level)?
        - true_model_quantile(cfg.model, Arm::Control, level)?;

    let per_rep: Vec<Vec<MethodOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(cfg.master_seed, rep as u64);
            let sample = match generate(cfg.model, n, &mut rng) {
                Ok(s) => s,
                Err(e) => {
                    return cfg.methods.iter().map(|_| MethodOutcome::failed(&e)).collect()
                }
            };
            // Drawn unconditionally so records do not depend on which
            // methods are requested.
            let bootstrap_seed: u64 = rng.random();
            let model_fit = match fit_sieve_logistic(&sample, &basis, &cfg.fit) {
                Ok(m) => m,
                Err(e) => {
                    return cfg.methods.iter().map(|_| MethodOutcome::failed(&e)).collect()
                }
            };
            cfg.methods
                .iter()
                .map(|&m| {
                    run_method(
                        m,
                        &sample,
                        &model_fit,
                        &basis,
                        &cfg.fit,
                        &extrap,
                        delta_true,
                        cfg.bootstrap_reps,
                        bootstrap_seed,
                    )
                })
                .collect()
        })
        .collect();

    let mut reports = Vec::with_capacity(cfg.methods.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let mut records = Vec::with_capacity(cfg.reps);
        for (rep, outcomes) in per_rep.iter().enumerate() {
            let o = &outcomes[mi];
            records.push(RepRecord {
                replication: rep,
                delta_hat: o.delta,
                squared_error: o.delta.map(|d| (d - delta_true) * (d - delta_true)),
                covered: o.covered,
                standardized: o.standardized,
                error: o.error.clone(),
            });
        }
        let completed: Vec<&RepRecord> =
            records.iter().filter(|r| r.error.is_none()).collect();
        let failures = records.len() - completed.len();
        let mse = if completed.is_empty() {
            None
        } else {
            Some(
                completed.iter().filter_map(|r| r.squared_error).sum::<f64>()
                    / completed.len() as f64,
            )
        };
        let covered: Vec<bool> = completed.iter().filter_map(|r| r.covered).collect();
        let (coverage, coverage_mc_se) = if covered.is_empty() {
            (None, None)
        } else {
            let c = covered.iter().filter(|&&b| b).count() as f64 / covered.len() as f64;
            (Some(c), Some((c * (1.0 - c) / covered.len() as f64).sqrt()))
        };
        reports.push(McReport {
            model: cfg.model,
            n,
            p_rule,
            p,
            k,
            alpha: cfg.alpha,
            method,
            delta_true,
            reps: cfg.reps,
            completed: completed.len(),
            failures,
            mse,
            coverage,
            coverage_mc_se,
            extreme_level_beyond_sample: p * (n as f64) < 1.0,
            records,
        });
    }
    Ok(reports)
}

/// One CSV row per replication per method.
pub fn write_records_csv<W: std::io::Write>(reports: &[McReport], out: W) -> std::io::Result<()> {
    use crate::extrapolation::csv_io;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "n",
        "p_rule",
        "p",
        "k",
        "method",
        "replication",
        "delta_hat",
        "delta_true",
        "squared_error",
        "covered",
        "standardized",
        "error",
    ])
    .map_err(csv_io)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for report in reports {
        for r in &report.records {
            w.write_record([
                report.model.label().to_string(),
                report.n.to_string(),
                report.p_rule.label().to_string(),
                report.p.to_string(),
                report.k.to_string(),
                report.method.label().to_string(),
                r.replication.to_string(),
                fmt(r.delta_hat),
                report.delta_true.to_string(),
                fmt(r.squared_error),
                r.covered.map(|b| b.to_string()).unwrap_or_default(),
                fmt(r.standardized),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()
}

#[derive(Serialize)]
struct CellSummary<'a> {
    model: SimModel,
    n: usize,
    p_rule: PRule,
    p: f64,
    k: f64,
    alpha: f64,
    method: Method,
    delta_true: f64,
    reps: usize,
    completed: usize,
    failures: usize,
    mse: Option<f64>,
    coverage: Option<f64>,
    coverage_mc_se: Option<f64>,
    extreme_level_beyond_sample: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

/// JSON summary: one object per (cell, method), without replication rows.
pub fn write_summary_json<W: std::io::Write>(
    reports: &[McReport],
    mut out: W,
) -> std::io::Result<()> {
    let cells: Vec<CellSummary> = reports
        .iter()
        .map(|r| CellSummary {
            model: r.model,
            n: r.n,
            p_rule: r.p_rule,
            p: r.p,
            k: r.k,
            alpha: r.alpha,
            method: r.method,
            delta_true: r.delta_true,
            reps: r.reps,
            completed: r.completed,
            failures: r.failures,
            mse: r.mse,
            coverage: r.coverage,
            coverage_mc_se: r.coverage_mc_se,
            extreme_level_beyond_sample: r.extreme_level_beyond_sample,
            note: (r.method == Method::FirpoZhang && r.extreme_level_beyond_sample)
                .then_some("empirical quantile level beyond 1/n; estimator saturates at the arm maximum"),
        })
        .collect();
    let doc = serde_json::json!({
        "schema_version": "mc-summary/v1",
        "cells": cells,
    });
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")
}

/// Normal Q-Q plot data: theoretical N(0,1) quantiles against the sorted
/// point estimates of each method (one row per completed replication).
pub fn write_qq_csv<W: std::io::Write>(reports: &[McReport], out: W) -> std::io::Result<()> {
    use crate::extrapolation::csv_io;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "n", "p_rule", "method", "theoretical", "sample"])
        .map_err(csv_io)?;
    for report in reports {
        let mut deltas: Vec<f64> =
            report.records.iter().filter_map(|r| r.delta_hat).collect();
        deltas.sort_by(f64::total_cmp);
        let m = deltas.len();
        for (i, &s) in deltas.iter().enumerate() {
            let theo = standard_normal_quantile((i as f64 + 0.5) / m as f64);
            w.write_record([
                report.model.label().to_string(),
                report.n.to_string(),
                report.p_rule.label().to_string(),
                report.method.label().to_string(),
                theo.to_string(),
                s.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()
}
