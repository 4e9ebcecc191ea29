//! Propensity score estimation by logistic sieve regression on a graded
//! polynomial basis, with leave-one-out stepwise selection of higher-order
//! terms for observational data.

use crate::error::{Error, Result};
use crate::sample::Sample;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of sieve basis functions used by default: floor(2 n^(1/11)).
pub fn default_basis_size(n: usize) -> usize {
    (2.0 * (n as f64).powf(1.0 / 11.0)).floor() as usize
}

/// Polynomial sieve basis described by exponent multi-indices over the
/// covariates. The first term is always the constant function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveBasis {
    terms: Vec<Vec<u32>>,
    r: usize,
}

impl SieveBasis {
    pub fn new(terms: Vec<Vec<u32>>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("basis must contain at least one term".into()))?;
        if first.iter().any(|&e| e != 0) {
            return Err(Error::InvalidParameter("first basis term must be the constant".into()));
        }
        let r = first.len();
        if r == 0 {
            return Err(Error::InvalidParameter("multi-indices must cover at least one covariate".into()));
        }
        for t in &terms {
            if t.len() != r {
                return Err(Error::InvalidParameter("multi-indices must have equal length".into()));
            }
        }
        for (i, a) in terms.iter().enumerate() {
            if terms[i + 1..].contains(a) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate basis term {}",
                    term_label(a)
                )));
            }
        }
        Ok(SieveBasis { terms, r })
    }

    /// First `h` terms of the graded lexicographic sequence over `r`
    /// covariates: degree 0, then all of degree 1, degree 2, ... with
    /// ascending lexicographic order inside each degree.
    pub fn graded(r: usize, h: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidParameter("basis size must be at least 1".into()));
        }
        let mut terms = Vec::with_capacity(h);
        let mut degree = 0u32;
        while terms.len() < h {
            for t in multi_indices_of_degree(r, degree) {
                terms.push(t);
                if terms.len() == h {
                    break;
                }
            }
            degree += 1;
        }
        SieveBasis::new(terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.r
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| term_label(t)).collect()
    }

    fn with_term(&self, term: &[u32]) -> SieveBasis {
        let mut terms = self.terms.clone();
        terms.push(term.to_vec());
        SieveBasis { terms, r: self.r }
    }

    /// Evaluates every monomial at one (already standardized) row.
    fn expand_into(&self, u: &[f64], out: &mut [f64]) {
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            let mut v = 1.0;
            for (&e, &x) in term.iter().zip(u) {
                if e > 0 {
                    v *= x.powi(e as i32);
                }
            }
            *slot = v;
        }
    }
}

/// All multi-indices over `r` variables with total degree `d`, in
/// ascending lexicographic order.
fn multi_indices_of_degree(r: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            rec(prefix, remaining - e, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(r), d, r, &mut out);
    out
}

pub(crate) fn term_label(term: &[u32]) -> String {
    let parts: Vec<String> = term
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, e) })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

/// Per-column min-max map onto [0, 1], fitted on the estimation sample and
/// reapplied verbatim at prediction time. High-degree monomials stay tame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl Standardization {
    fn fit(sample: &Sample) -> Self {
        let r = sample.covariate_dim();
        let mut mins = vec![f64::INFINITY; r];
        let mut maxs = vec![f64::NEG_INFINITY; r];
        for i in 0..sample.n() {
            for (j, &v) in sample.x_row(i).iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        let ranges = mins
            .iter()
            .zip(&maxs)
            .map(|(&lo, &hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        Standardization { mins, ranges }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((slot, &v), (&min, &range)) in
            out.iter_mut().zip(x).zip(self.mins.iter().zip(&self.ranges))
        {
            *slot = (v - min) / range;
        }
    }
}

/// Options for the sieve logistic fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    /// Gradient-norm convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Probabilities are clipped into this interval at evaluation time.
    pub clip: (f64, f64),
    /// Coefficient norm (post-standardization) beyond which the likelihood
    /// is treated as unbounded and a separation error is raised.
    pub separation_norm: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 100, clip: (0.01, 0.99), separation_norm: 1e3 }
    }
}

/// Anything that maps a covariate row to a treatment probability. The
/// fitted sieve model implements this; tests and diagnostics may inject a
/// known propensity instead.
pub trait PropensityScore: Sync {
    fn propensity(&self, x: &[f64]) -> Result<f64>;
}

/// Fitted sieve logistic model: Pi(x) = sigmoid(H(x)' pi), clipped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropensityModel {
    basis: SieveBasis,
    coefficients: Vec<f64>,
    standardization: Standardization,
    clip: (f64, f64),
}

impl PropensityModel {
    pub fn basis(&self) -> &SieveBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn clip(&self) -> (f64, f64) {
        self.clip
    }

    /// Sigmoid of the basis expansion, clipped into `clip`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.basis.r {
            return Err(Error::ShapeMismatch { expected: self.basis.r, got: x.len() });
        }
        let mut u = vec![0.0; self.basis.r];
        self.standardization.apply_into(x, &mut u);
        let mut h = vec![0.0; self.basis.len()];
        self.basis.expand_into(&u, &mut h);
        let eta: f64 = h.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
        Ok(sigmoid(eta).clamp(self.clip.0, self.clip.1))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("model serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone())
            .map_err(|e| Error::InvalidParameter(format!("model deserialization: {e}")))
    }
}

impl PropensityScore for PropensityModel {
    fn propensity(&self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }
}

/// Constant propensity, mainly for randomized designs and tests.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPropensity(pub f64);

impl PropensityScore for ConstantPropensity {
    fn propensity(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Adapter turning a closure into a propensity score.
pub struct PropensityFn<F: Fn(&[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> PropensityScore for PropensityFn<F> {
    fn propensity(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^a), overflow-safe
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Maximizes the Bernoulli log-likelihood over the sieve coefficients by
/// damped Newton (IRLS with step halving).
pub fn fit_sieve_logistic(
    sample: &Sample,
    basis: &SieveBasis,
    opts: &FitOptions,
) -> Result<PropensityModel> {
    if basis.covariate_dim() != sample.covariate_dim() {
        return Err(Error::ShapeMismatch {
            expected: sample.covariate_dim(),
            got: basis.covariate_dim(),
        });
    }
    if sample.n() <= basis.len() {
        return Err(Error::InvalidParameter(format!(
            "need n > h, got n = {} with h = {}",
            sample.n(),
            basis.len()
        )));
    }
    if !(opts.clip.0 > 0.0 && opts.clip.0 < opts.clip.1 && opts.clip.1 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "clip bounds {:?} must satisfy 0 < lo < hi < 1",
            opts.clip
        )));
    }
    let standardization = Standardization::fit(sample);
    let design = build_design(sample, basis, &standardization);
    check_rank(&design)?;
    let weights = vec![1.0; sample.n()];
    let coefficients = irls(&design, sample.d(), &weights, basis, opts)?;
    Ok(PropensityModel {
        basis: basis.clone(),
        coefficients,
        standardization,
        clip: opts.clip,
    })
}

fn build_design(sample: &Sample, basis: &SieveBasis, std: &Standardization) -> DMatrix<f64> {
    let (n, h) = (sample.n(), basis.len());
    let mut design = DMatrix::zeros(n, h);
    let mut u = vec![0.0; sample.covariate_dim()];
    let mut row = vec![0.0; h];
    for i in 0..n {
        std.apply_into(sample.x_row(i), &mut u);
        basis.expand_into(&u, &mut row);
        for j in 0..h {
            design[(i, j)] = row[j];
        }
    }
    design
}

fn check_rank(design: &DMatrix<f64>) -> Result<()> {
    let h = design.ncols();
    let qr = design.clone().col_piv_qr();
    let diag = qr.r().map_diagonal(|v| v.abs());
    let scale = diag.max();
    let eps = scale * 1e-10 * design.nrows().max(h) as f64;
    let rank = diag.iter().filter(|&&v| v > eps).count();
    if rank < h {
        return Err(Error::RankDeficient { rank, cols: h });
    }
    Ok(())
}

/// Case-weighted IRLS. A zero case weight removes the observation, which
/// is how the leave-one-out loop avoids rebuilding the design matrix.
fn irls(
    design: &DMatrix<f64>,
    d: &[u8],
    case_weights: &[f64],
    basis: &SieveBasis,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    let (n, h) = (design.nrows(), design.ncols());
    let mut beta = DVector::zeros(h);
    let mut eta = DVector::zeros(n);
    let loglik = |eta: &DVector<f64>| -> f64 {
        let mut ll = 0.0;
        for i in 0..n {
            let e = eta[i];
            ll -= case_weights[i] * if d[i] == 1 { softplus(-e) } else { softplus(e) };
        }
        ll
    };
    let mut ll = loglik(&eta);
    for _ in 0..opts.max_iter {
        // Gradient X' W (d - mu) and Hessian X' W diag(mu(1-mu)) X.
        let mut grad = DVector::zeros(h);
        let mut hessian = DMatrix::zeros(h, h);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let resid = case_weights[i] * (d[i] as f64 - mu);
            let w = case_weights[i] * (mu * (1.0 - mu)).max(1e-12);
            for a in 0..h {
                let xa = design[(i, a)];
                grad[a] += xa * resid;
                for b in a..h {
                    hessian[(a, b)] += w * xa * design[(i, b)];
                }
            }
        }
        for a in 0..h {
            for b in 0..a {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }
        if grad.norm() <= opts.tol {
            return Ok(beta.iter().copied().collect());
        }
        let step = hessian
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .ok_or_else(|| separation_error(&beta, basis))?;
        // Step halving keeps the likelihood monotone.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + t * &step;
            let eta_cand = design * &candidate;
            let ll_cand = loglik(&eta_cand);
            if ll_cand >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                eta = eta_cand;
                ll = ll_cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { tol: opts.tol, max_iter: opts.max_iter });
        }
        if beta.norm() > opts.separation_norm {
            return Err(separation_error(&beta, basis));
        }
    }
    Err(Error::NonConvergence { tol: opts.tol, max_iter: opts.max_iter })
}

fn separation_error(beta: &DVector<f64>, basis: &SieveBasis) -> Error {
    let worst = beta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    Error::Separation { term: term_label(&basis.terms()[worst]) }
}

/// Options for the stepwise leave-one-out selection.
#[derive(Clone, Copy, Debug)]
pub struct LoocvOptions {
    /// Hard cap on n; leave-one-out refits n models per candidate.
    pub max_n: usize,
    pub fit: FitOptions,
}

impl Default for LoocvOptions {
    fn default() -> Self {
        LoocvOptions { max_n: 5000, fit: FitOptions::default() }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TermKind {
    Constant,
    Linear,
    Squared,
    Interaction,
}

fn classify(term: &[u32]) -> Result<TermKind> {
    let degree: u32 = term.iter().sum();
    let nonzero = term.iter().filter(|&&e| e > 0).count();
    match (degree, nonzero) {
        (0, _) => Ok(TermKind::Constant),
        (1, _) => Ok(TermKind::Linear),
        (2, 1) => Ok(TermKind::Squared),
        (2, 2) => Ok(TermKind::Interaction),
        _ => Err(Error::InvalidParameter(format!(
            "candidate term {} is neither linear, squared nor a pairwise interaction",
            term_label(term)
        ))),
    }
}

/// Greedy forward selection of polynomial terms by leave-one-out
/// cross-validated log-loss: starting from the linear model, squared terms
/// are screened first, then pairwise interactions, one term at a time. A
/// candidate is accepted only if it strictly lowers the LOO log-loss; ties
/// resolve to the lexicographically smallest multi-index.
pub fn stepwise_loocv_select(
    sample: &Sample,
    candidate_terms: &[Vec<u32>],
    opts: &LoocvOptions,
) -> Result<SieveBasis> {
    let n = sample.n();
    let r = sample.covariate_dim();
    if n > opts.max_n {
        return Err(Error::LoocvGuard(format!("n = {n} exceeds the cap {}", opts.max_n)));
    }
    if n < 2 * candidate_terms.len() {
        return Err(Error::LoocvGuard(format!(
            "n = {n} is below twice the candidate count {}",
            candidate_terms.len()
        )));
    }
    let mut linear = Vec::new();
    let mut squared = Vec::new();
    let mut interactions = Vec::new();
    for t in candidate_terms {
        if t.len() != r {
            return Err(Error::ShapeMismatch { expected: r, got: t.len() });
        }
        match classify(t)? {
            TermKind::Constant => {}
            TermKind::Linear => linear.push(t.clone()),
            TermKind::Squared => squared.push(t.clone()),
            TermKind::Interaction => interactions.push(t.clone()),
        }
    }
    for j in 0..r {
        let unit: Vec<u32> = (0..r).map(|i| u32::from(i == j)).collect();
        if !linear.contains(&unit) {
            return Err(Error::InvalidParameter(format!(
                "candidate pool must include every linear term; {} missing",
                term_label(&unit)
            )));
        }
    }
    squared.sort();
    interactions.sort();

    let mut terms = vec![vec![0u32; r]];
    terms.extend(linear.iter().cloned());
    terms.sort_by(|a, b| (a.iter().sum::<u32>(), a.clone()).cmp(&(b.iter().sum::<u32>(), b.clone())));
    terms.dedup();
    let mut basis = SieveBasis::new(terms)?;
    let mut best_loss = loo_logloss(sample, &basis, &opts.fit)?
        .ok_or_else(|| Error::Separation { term: "linear base model".into() })?;

    for pool in [&squared, &interactions] {
        let mut remaining: Vec<Vec<u32>> = pool.clone();
        loop {
            let scored: Vec<(usize, Option<f64>)> = remaining
                .iter()
                .enumerate()
                .map(|(idx, term)| {
                    let candidate = basis.with_term(term);
                    let loss = loo_logloss(sample, &candidate, &opts.fit).unwrap_or_else(|e| {
                        log::warn!("candidate {} failed: {e}", term_label(term));
                        None
                    });
                    (idx, loss)
                })
                .collect();
            // Lowest loss wins; remaining is lex-sorted so the first of a
            // tie is the lexicographically smallest term.
            let mut best: Option<(usize, f64)> = None;
            for (idx, loss) in scored {
                if let Some(l) = loss {
                    if best.map_or(true, |(_, b)| l < b) {
                        best = Some((idx, l));
                    }
                }
            }
            match best {
                Some((idx, loss)) if loss < best_loss => {
                    basis = basis.with_term(&remaining[idx]);
                    best_loss = loss;
                    remaining.remove(idx);
                    if remaining.is_empty() {
                        break;
                    }
                }
                _ => break,
            }
        }
    }
    Ok(basis)
}

/// Leave-one-out log-loss of a basis; `None` marks a basis whose fit
/// separated (the candidate is skipped, not fatal).
fn loo_logloss(sample: &Sample, basis: &SieveBasis, opts: &FitOptions) -> Result<Option<f64>> {
    if sample.n() <= basis.len() + 1 {
        return Err(Error::InvalidParameter(
            "not enough observations for leave-one-out fits".into(),
        ));
    }
    let standardization = Standardization::fit(sample);
    let design = build_design(sample, basis, &standardization);
    if check_rank(&design).is_err() {
        return Ok(None);
    }
    let d = sample.d();
    let n = sample.n();
    let losses: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|held_out| {
            let mut w = vec![1.0; n];
            w[held_out] = 0.0;
            match irls(&design, d, &w, basis, opts) {
                Ok(beta) => {
                    let eta: f64 =
                        (0..basis.len()).map(|j| design[(held_out, j)] * beta[j]).sum();
                    let p = sigmoid(eta).clamp(opts.clip.0, opts.clip.1);
                    let loss = if d[held_out] == 1 { -p.ln() } else { -(1.0 - p).ln() };
                    Some(loss)
                }
                Err(_) => None,
            }
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        match l {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total / n as f64))
}
