//! Diagonal-plus-rank-one weight matrix `W = B + a aᵀ` and its O(p) quadratic forms.
//!
//! `W` is never materialized: `B = diag(β₁², …, β_p²)` and the rank-one part
//! are stored as two length-p vectors, so `xᵀWy` costs a single pass over the
//! data. Every trace functional and test statistic in this crate reduces to
//! these quadratic forms.
//!
//! The per-coordinate weight functions behind `W` enter only through their
//! means and variances; nothing here ever samples from them, so `(a, B)` is
//! the primitive.

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};

/// Weight parameters: means `a` and variances `beta_sq` of the per-coordinate
/// weight functions. `W = diag(beta_sq) + a aᵀ` is symmetric positive definite
/// whenever every `beta_sq[i] > 0`, which construction enforces.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    a: Array1<f64>,
    beta_sq: Array1<f64>,
}

impl WeightSpec {
    pub fn new(a: Array1<f64>, beta_sq: Array1<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != beta_sq.len() {
            return Err(Error::InvalidDimension(format!(
                "weight vectors must share a positive length, got a: {}, beta_sq: {}",
                a.len(),
                beta_sq.len()
            )));
        }
        if beta_sq.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidInput(
                "every beta_sq entry must be finite and strictly positive".into(),
            ));
        }
        if a.iter().any(|&v| !v.is_finite()) {
            return Err(Error::InvalidInput("weight means must be finite".into()));
        }
        Ok(Self { a, beta_sq })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }

    pub fn beta_sq(&self) -> ArrayView1<'_, f64> {
        self.beta_sq.view()
    }

    /// `xᵀWy` via the two-term decomposition: `Σ βᵢ² xᵢ yᵢ + (aᵀx)(aᵀy)`.
    pub fn quadratic(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        let p = self.dim();
        if x.len() != p || y.len() != p {
            return Err(Error::InvalidDimension(format!(
                "quadratic form needs length-{p} vectors, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        let mut diag = 0.0;
        let mut ax = 0.0;
        let mut ay = 0.0;
        Zip::from(&self.a)
            .and(&self.beta_sq)
            .and(x)
            .and(y)
            .for_each(|&ai, &bi, &xi, &yi| {
                // bi * (xi yi) keeps the term exactly symmetric in x and y
                diag += bi * (xi * yi);
                ax += ai * xi;
                ay += ai * yi;
            });
        Ok(diag + ax * ay)
    }

    /// `xᵀWx`; delegates to [`Self::quadratic`] so the two agree bit for bit.
    pub fn quadratic_self(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.quadratic(x, x)
    }
}

/// Standard tuning: `aᵢ = 2 p^{-3/8}` and `βᵢ² = 2((p+i)/p)²` for `i = 1..p`.
pub fn default_weights(p: usize) -> Result<WeightSpec> {
    if p == 0 {
        return Err(Error::InvalidDimension(
            "weight dimension must be at least 1".into(),
        ));
    }
    let pf = p as f64;
    let alpha = 2.0 * pf.powf(-0.375);
    let a = Array1::from_elem(p, alpha);
    let beta_sq = Array1::from_shape_fn(p, |i| {
        let ratio = (pf + (i + 1) as f64) / pf;
        2.0 * ratio * ratio
    });
    WeightSpec::new(a, beta_sq)
}
