//! Contrast construction for the general linear hypothesis.
//!
//! A user supplies a q×K coefficient matrix `G̃` with full row rank and the
//! per-group sample sizes. The transformed contrast is `G = (G̃ D G̃ᵀ)^e G̃`
//! with `D = diag(n/n₁, …, n/n_K)`, and the statistic only ever consumes the
//! K×K coefficient matrix `d = GᵀG`. The exponent `e` is selectable: `+1/2`
//! (the default) or `-1/2`, which makes the test exactly invariant under
//! left-multiplication of `G̃` by any nonsingular q×q matrix.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent applied to `G̃ D G̃ᵀ` in the contrast transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// Matrix square root, `e = +1/2`.
    #[default]
    PaperLiteral,
    /// Inverse matrix square root, `e = -1/2`.
    InverseRoot,
}

/// Symmetric matrix power exponents supported by [`sym_matrix_power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymPower {
    Half,
    NegHalf,
}

/// Raw contrast input: the coefficient matrix and the chosen exponent mode.
#[derive(Debug, Clone)]
pub struct ContrastInput {
    pub g_tilde: Array2<f64>,
    pub exponent_mode: ExponentMode,
}

impl ContrastInput {
    pub fn new(g_tilde: Array2<f64>, exponent_mode: ExponentMode) -> Self {
        Self {
            g_tilde,
            exponent_mode,
        }
    }
}

/// Transformed contrast: `g` (q×K), the coefficient matrix `d = gᵀg` (K×K,
/// explicitly symmetrized), the diagonal of `D`, and the sample sizes it was
/// built from.
#[derive(Debug, Clone)]
pub struct Contrast {
    g: Array2<f64>,
    d: Array2<f64>,
    scaling: Array1<f64>,
    n_sizes: Vec<usize>,
    n_total: usize,
    mode: ExponentMode,
}

impl Contrast {
    pub fn g(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn d(&self) -> &Array2<f64> {
        &self.d
    }

    /// Diagonal entries `n/n_α` of the scaling matrix `D`.
    pub fn scaling(&self) -> &Array1<f64> {
        &self.scaling
    }

    pub fn n_sizes(&self) -> &[usize] {
        &self.n_sizes
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn k(&self) -> usize {
        self.n_sizes.len()
    }

    pub fn mode(&self) -> ExponentMode {
        self.mode
    }
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal_frobenius(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[[i, j]] * m[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-14 ‖M‖_F`.
fn jacobi_eigh(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let norm = frobenius(m);
    if n <= 1 || norm == 0.0 {
        return (a.diag().to_owned(), v);
    }
    let tol = 1e-14 * norm;
    for _sweep in 0..100 {
        if off_diagonal_frobenius(&a) < tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e20 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v)
}

fn reconstruct(vals: &Array1<f64>, vecs: &Array2<f64>) -> Array2<f64> {
    let n = vals.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..n {
                s += vecs[[i, k]] * vals[k] * vecs[[j, k]];
            }
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}

fn check_symmetric(m: &Array2<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix power needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let norm = frobenius(m);
    let tol = 1e-10 * norm.max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::InvalidInput(
                    "matrix power needs a symmetric matrix".into(),
                ));
            }
        }
    }
    Ok(())
}

/// `m^{±1/2}` for a symmetric PSD matrix via eigendecomposition.
///
/// For `+1/2`, eigenvalues within `1e-12 λ_max` of zero are clamped to zero;
/// for `-1/2` they are a rank-deficiency error. Eigenvalues more negative than
/// `-1e-12 ‖m‖` violate the PSD contract and are rejected.
pub fn sym_matrix_power(m: &Array2<f64>, power: SymPower) -> Result<Array2<f64>> {
    check_symmetric(m)?;
    let sym = 0.5 * (m + &m.t());
    let (vals, vecs) = jacobi_eigh(&sym);
    let norm = frobenius(&sym);
    let lam_max = vals.iter().cloned().fold(0.0f64, f64::max);
    if vals.iter().any(|&l| l < -1e-12 * norm) {
        return Err(Error::InvalidInput(
            "matrix has a significantly negative eigenvalue; not positive semidefinite".into(),
        ));
    }
    let clamp = 1e-12 * lam_max;
    let powered = match power {
        SymPower::Half => vals.mapv(|l| if l <= clamp { 0.0 } else { l.sqrt() }),
        SymPower::NegHalf => {
            if vals.iter().any(|&l| l <= clamp) {
                return Err(Error::RankDeficient(
                    "inverse square root of a singular matrix".into(),
                ));
            }
            vals.mapv(|l| 1.0 / l.sqrt())
        }
    };
    Ok(reconstruct(&powered, &vecs))
}

/// Build the transformed contrast from `G̃` and the group sizes.
pub fn build_contrast(input: &ContrastInput, n_sizes: &[usize]) -> Result<Contrast> {
    let g_tilde = &input.g_tilde;
    let q = g_tilde.nrows();
    let k = g_tilde.ncols();
    if q == 0 || k < 2 || q >= k {
        return Err(Error::InvalidDimension(format!(
            "contrast must be q x K with 1 <= q < K, got {q} x {k}"
        )));
    }
    if n_sizes.len() != k {
        return Err(Error::InvalidDimension(format!(
            "contrast has {k} columns but {} group sizes were given",
            n_sizes.len()
        )));
    }
    for (alpha, &n) in n_sizes.iter().enumerate() {
        if n < 4 {
            return Err(Error::SampleTooSmall {
                group: alpha + 1,
                n,
                min: 4,
            });
        }
    }
    if g_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("contrast entries must be finite".into()));
    }

    let n_total: usize = n_sizes.iter().sum();
    let scaling = Array1::from_shape_fn(k, |alpha| n_total as f64 / n_sizes[alpha] as f64);

    // M = G̃ D G̃ᵀ, a q×q symmetric PSD matrix.
    let scaled = g_tilde * &scaling; // broadcasts over rows: column α times n/n_α
    let m = scaled.dot(&g_tilde.t());
    let m = 0.5 * (&m + &m.t());

    let (vals, vecs) = jacobi_eigh(&m);
    let lam_max = vals.iter().cloned().fold(0.0f64, f64::max);
    let lam_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if lam_max <= 0.0 || lam_min < 1e-10 * lam_max {
        return Err(Error::RankDeficient(
            "contrast matrix does not have full row rank".into(),
        ));
    }
    let powered = match input.exponent_mode {
        ExponentMode::PaperLiteral => vals.mapv(f64::sqrt),
        ExponentMode::InverseRoot => vals.mapv(|l| 1.0 / l.sqrt()),
    };
    let transform = reconstruct(&powered, &vecs);
    let g = transform.dot(g_tilde);
    let d = g.t().dot(&g);
    let d = 0.5 * (&d + &d.t());

    Ok(Contrast {
        g,
        d,
        scaling,
        n_sizes: n_sizes.to_vec(),
        n_total,
        mode: input.exponent_mode,
    })
}
