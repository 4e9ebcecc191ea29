//! Observed data: outcome, binary treatment and covariates.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Potential-outcome arm of a binary treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arm::Control => write!(f, "control"),
            Arm::Treated => write!(f, "treated"),
        }
    }
}

/// Observed triples (Y_i, D_i, X_i). Covariates are stored row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sample {
    y: Vec<f64>,
    d: Vec<u8>,
    x: Vec<f64>,
    n: usize,
    r: usize,
}

impl Sample {
    /// Builds a sample from outcome, treatment and a row-major covariate
    /// matrix with `r` columns. All entries must be finite and the
    /// treatment must be coded 0/1.
    pub fn new(y: Vec<f64>, d: Vec<u8>, x: Vec<f64>, r: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidParameter("sample must contain at least one row".into()));
        }
        if d.len() != n {
            return Err(Error::InvalidParameter(format!(
                "treatment length {} does not match outcome length {}",
                d.len(),
                n
            )));
        }
        if r == 0 {
            return Err(Error::InvalidParameter("at least one covariate column required".into()));
        }
        if x.len() != n * r {
            return Err(Error::InvalidParameter(format!(
                "covariate matrix has {} entries, expected {}x{}",
                x.len(),
                n,
                r
            )));
        }
        if let Some(v) = d.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParameter(format!("treatment must be 0 or 1, got {v}")));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("outcome and covariates must be finite".into()));
        }
        Ok(Sample { y, d, x, n, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn covariate_dim(&self) -> usize {
        self.r
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.r..(i + 1) * self.r]
    }

    pub fn in_arm(&self, i: usize, arm: Arm) -> bool {
        self.d[i] == arm.indicator()
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.d.iter().filter(|&&v| v == arm.indicator()).count()
    }

    /// Row resample (with repeats allowed), used by the bootstrap.
    pub fn resample(&self, indices: &[usize]) -> Result<Sample> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("resample index set is empty".into()));
        }
        let mut y = Vec::with_capacity(indices.len());
        let mut d = Vec::with_capacity(indices.len());
        let mut x = Vec::with_capacity(indices.len() * self.r);
        for &i in indices {
            if i >= self.n {
                return Err(Error::InvalidParameter(format!("resample index {i} out of range")));
            }
            y.push(self.y[i]);
            d.push(self.d[i]);
            x.extend_from_slice(self.x_row(i));
        }
        Ok(Sample { y, d, x, n: indices.len(), r: self.r })
    }

    /// Relabels the arms: D -> 1 - D. Outcomes and covariates are untouched.
    pub fn with_flipped_arms(&self) -> Sample {
        let d = self.d.iter().map(|&v| 1 - v).collect();
        Sample { y: self.y.clone(), d, x: self.x.clone(), n: self.n, r: self.r }
    }

    /// Adds a constant to every outcome. Tail estimation on the log scale
    /// needs positive outcomes; callers shift explicitly, never silently.
    pub fn with_shifted_outcomes(&self, shift: f64) -> Sample {
        let y = self.y.iter().map(|v| v + shift).collect();
        Sample { y, d: self.d.clone(), x: self.x.clone(), n: self.n, r: self.r }
    }
}
