//! Synthetic grouped samples from the factor model `Y = Γ z + μ` with
//! standardized i.i.d. innovations.
//!
//! Covariances are represented by their factor, never as a dense p×p matrix:
//! a scaled identity applies `√c`, and a scaled AR(ρ) correlation uses the
//! closed-form bidiagonal Cholesky recurrence `w₁ = z₁`,
//! `wᵢ = ρ wᵢ₋₁ + √(1−ρ²) zᵢ`, so each row costs O(p).
//!
//! Replicate streams: every (seed, replicate, group) triple is mixed through
//! SplitMix64 into a ChaCha8 key, which makes replicates independent,
//! reorderable, and identical across platforms and thread schedules.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statistic::GroupedSample;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Innovation law for the factor components; each has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionModel {
    #[serde(alias = "model1")]
    StandardNormal,
    /// t₄ scaled by 1/√2.
    #[serde(alias = "model2")]
    StandardizedT4,
    /// (χ₁² − 1)/√2.
    #[serde(alias = "model3")]
    StandardizedChiSq1,
}

impl DistributionModel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "model1" | "standard_normal" => Ok(Self::StandardNormal),
            "model2" | "standardized_t4" => Ok(Self::StandardizedT4),
            "model3" | "standardized_chi_sq1" => Ok(Self::StandardizedChiSq1),
            other => Err(Error::Config(format!("unknown distribution model '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::StandardNormal => "standard_normal",
            Self::StandardizedT4 => "standardized_t4",
            Self::StandardizedChiSq1 => "standardized_chi_sq1",
        }
    }

    /// Excess kurtosis Δ = E z⁴ − 3 of the innovation law. Documentation
    /// only: the t₄ case is infinite and nothing at runtime consumes this.
    pub fn excess_kurtosis(&self) -> f64 {
        match self {
            Self::StandardNormal => 0.0,
            Self::StandardizedT4 => f64::INFINITY,
            Self::StandardizedChiSq1 => 12.0,
        }
    }
}

/// One standardized innovation.
pub fn draw_innovation<R: Rng + ?Sized>(model: DistributionModel, rng: &mut R) -> f64 {
    match model {
        DistributionModel::StandardNormal => rng.sample(StandardNormal),
        DistributionModel::StandardizedT4 => {
            let n: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(ChiSquared::new(4.0).expect("valid dof"));
            n / (v / 4.0).sqrt() / SQRT_2
        }
        DistributionModel::StandardizedChiSq1 => {
            let n: f64 = rng.sample(StandardNormal);
            (n * n - 1.0) / SQRT_2
        }
    }
}

/// Group covariance: `scale · I` or `scale · (ρ^{|i−j|})`, stored as the
/// parameters of its Cholesky factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    ScaledIdentity { scale: f64 },
    ScaledAr { rho: f64, scale: f64 },
}

impl CovarianceModel {
    pub fn validate(&self) -> Result<()> {
        let scale = match self {
            Self::ScaledIdentity { scale } => *scale,
            Self::ScaledAr { rho, scale } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "AR coefficient must satisfy |rho| < 1, got {rho}"
                    )));
                }
                *scale
            }
        };
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "covariance scale must be finite and nonnegative, got {scale}"
            )));
        }
        Ok(())
    }

    /// (ρ, scale) with ρ = 0 for the identity kind.
    pub fn rho_scale(&self) -> (f64, f64) {
        match self {
            Self::ScaledIdentity { scale } => (0.0, *scale),
            Self::ScaledAr { rho, scale } => (*rho, *scale),
        }
    }

    /// In-place `z ← Γ z` where `Γ Γᵀ` is this covariance.
    pub fn apply_factor(&self, z: &mut [f64]) {
        match self {
            Self::ScaledIdentity { scale } => {
                let s = scale.sqrt();
                for v in z.iter_mut() {
                    *v *= s;
                }
            }
            Self::ScaledAr { rho, scale } => {
                let t = (1.0 - rho * rho).sqrt();
                for i in 1..z.len() {
                    z[i] = rho * z[i - 1] + t * z[i];
                }
                let s = scale.sqrt();
                for v in z.iter_mut() {
                    *v *= s;
                }
            }
        }
    }

    /// Dense Σ for small-p diagnostics and tests.
    pub fn to_dense(&self, p: usize) -> Result<Array2<f64>> {
        self.validate()?;
        let (rho, scale) = self.rho_scale();
        Ok(Array2::from_shape_fn((p, p), |(i, j)| {
            let lag = i.abs_diff(j) as i32;
            scale * rho.powi(lag)
        }))
    }
}

/// Sparse mean shift: `floor(p^{1−t})` leading coordinates set to
/// `√(2r (Σ_α 1/n_α) log₁₀ p)`, the rest zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanAlternative {
    /// Signal strength, r ≥ 0.
    pub r: f64,
    /// Sparsity exponent in [0, 1]; larger is sparser.
    pub t: f64,
    /// 1-based index of the group receiving the shift.
    pub target_group: usize,
}

impl MeanAlternative {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidInput(format!(
                "signal strength r must be nonnegative, got {}",
                self.r
            )));
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::InvalidInput(format!(
                "sparsity exponent t must lie in [0, 1], got {}",
                self.t
            )));
        }
        if self.target_group == 0 || self.target_group > k {
            return Err(Error::InvalidInput(format!(
                "target_group must be a 1-based index into {k} groups, got {}",
                self.target_group
            )));
        }
        Ok(())
    }
}

/// Number of nonzero coordinates, `floor(p^{1−t})` with a tiny nudge so that
/// exactly-integer powers are not lost to roundoff.
pub fn alternative_support(p: usize, t: f64) -> usize {
    ((p as f64).powf(1.0 - t) + 1e-9).floor() as usize
}

/// The shifted-mean vector for the target group.
pub fn mean_alternative_vector(p: usize, alt: &MeanAlternative, n_sizes: &[usize]) -> Array1<f64> {
    let nonzero = alternative_support(p, alt.t).min(p).max(1);
    let inv_sum: f64 = n_sizes.iter().map(|&n| 1.0 / n as f64).sum();
    let value = (2.0 * alt.r * inv_sum * (p as f64).log10()).sqrt();
    let mut mu = Array1::zeros(p);
    for i in 0..nonzero {
        mu[i] = value;
    }
    mu
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream for one (seed, replicate, group) triple.
pub fn stream_rng(seed: u64, replicate: u64, group: u64) -> ChaCha8Rng {
    let mut s = seed;
    s = splitmix64(s ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    s = splitmix64(s ^ group.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Generate one replicate: group α holds n_α rows `Γ_α z + μ_α` with m = p
/// factor components drawn from `dist`. Deterministic in (seed, replicate_id).
pub fn gen_sample(
    p: usize,
    n_sizes: &[usize],
    cov_models: &[CovarianceModel],
    dist: DistributionModel,
    means: &[Array1<f64>],
    seed: u64,
    replicate_id: u64,
) -> Result<GroupedSample> {
    if p == 0 {
        return Err(Error::InvalidDimension("p must be at least 1".into()));
    }
    let k = n_sizes.len();
    if cov_models.len() != k || means.len() != k {
        return Err(Error::InvalidDimension(format!(
            "need {k} covariance models and means, got {} and {}",
            cov_models.len(),
            means.len()
        )));
    }
    for model in cov_models {
        model.validate()?;
    }
    for (alpha, mu) in means.iter().enumerate() {
        if mu.len() != p {
            return Err(Error::InvalidDimension(format!(
                "mean vector of group {} has length {}, expected {p}",
                alpha + 1,
                mu.len()
            )));
        }
    }
    let mut groups = Vec::with_capacity(k);
    for alpha in 0..k {
        let n = n_sizes[alpha];
        let mut rng = stream_rng(seed, replicate_id, alpha as u64);
        let mut data = vec![0.0f64; n * p];
        for row in data.chunks_exact_mut(p) {
            for v in row.iter_mut() {
                *v = draw_innovation(dist, &mut rng);
            }
            cov_models[alpha].apply_factor(row);
            for (v, m) in row.iter_mut().zip(means[alpha].iter()) {
                *v += m;
            }
        }
        let g = Array2::from_shape_vec((n, p), data)
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        groups.push(g);
    }
    GroupedSample::new(groups)
}

/// Named covariance presets for four-group experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovCase {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl CovCase {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "case1" => Ok(Self::Case1),
            "case2" => Ok(Self::Case2),
            "case3" => Ok(Self::Case3),
            "case4" => Ok(Self::Case4),
            other => Err(Error::Config(format!("unknown covariance case '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Case1 => "case1",
            Self::Case2 => "case2",
            Self::Case3 => "case3",
            Self::Case4 => "case4",
        }
    }

    /// Per-group covariance models. The homoscedastic identity cases extend
    /// to any K; the heteroscedastic AR cases fix K = 4 group scales.
    pub fn models(&self, k: usize) -> Result<Vec<CovarianceModel>> {
        let ar = |rho: f64, scales: [f64; 4]| -> Result<Vec<CovarianceModel>> {
            if k != 4 {
                return Err(Error::Config(format!(
                    "{} defines exactly 4 group covariances, configuration has K = {k}",
                    self.name()
                )));
            }
            Ok(scales
                .into_iter()
                .map(|scale| CovarianceModel::ScaledAr { rho, scale })
                .collect())
        };
        match self {
            Self::Case1 => Ok(vec![CovarianceModel::ScaledIdentity { scale: 3.0 }; k]),
            Self::Case2 => ar(0.4, [1.0, 2.0, 1.5, 4.0]),
            Self::Case3 => Ok(vec![CovarianceModel::ScaledIdentity { scale: 4.0 }; k]),
            Self::Case4 => ar(0.5, [1.0, 1.5, 2.5, 3.0]),
        }
    }
}
