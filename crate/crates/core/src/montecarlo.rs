//! Replicated experiments: empirical size/power estimation and calibration
//! diagnostics.
//!
//! Replicates run in parallel (bounded by an optional thread budget); each
//! replicate owns an independent RNG stream keyed by (seed, replicate id), and
//! results are aggregated in replicate-id order, so a report is a pure
//! function of (config, seed) regardless of scheduling.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{build_contrast, Contrast, ContrastInput, ExponentMode};
use crate::datagen::{
    gen_sample, mean_alternative_vector, stream_rng, CovCase, CovarianceModel, DistributionModel,
    MeanAlternative,
};
use crate::error::{Error, Result};
use crate::normal::{normal_cdf, normal_upper_quantile};
use crate::statistic::{
    null_variance_exact, power_prediction, run_test, signal_norm, Covariance,
};
use crate::weights::{default_weights, WeightSpec};

/// Contrast selection: the all-means-equal preset, one pair of groups, or an
/// explicit q×K coefficient matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ContrastSpecRepr", into = "ContrastSpecRepr")]
pub enum ContrastSpec {
    /// `(I_{K−1}, −1_{K−1})`: equality of all K means.
    #[default]
    Manova,
    /// `e_a − e_b` (1-based group indices).
    Pairwise(usize, usize),
    /// Explicit rows.
    Rows(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ContrastSpecRepr {
    Name(String),
    Rows(Vec<Vec<f64>>),
    Row(Vec<f64>),
}

impl TryFrom<ContrastSpecRepr> for ContrastSpec {
    type Error = String;

    fn try_from(repr: ContrastSpecRepr) -> std::result::Result<Self, String> {
        match repr {
            ContrastSpecRepr::Name(name) => {
                if name == "manova" {
                    return Ok(ContrastSpec::Manova);
                }
                if let Some(rest) = name.strip_prefix("pairwise:") {
                    let parts: Vec<_> = rest.split(',').collect();
                    if parts.len() == 2 {
                        let a = parts[0].trim().parse::<usize>().map_err(|e| e.to_string())?;
                        let b = parts[1].trim().parse::<usize>().map_err(|e| e.to_string())?;
                        return Ok(ContrastSpec::Pairwise(a, b));
                    }
                    return Err(format!("expected 'pairwise:<a>,<b>', got '{name}'"));
                }
                Err(format!(
                    "unknown contrast preset '{name}' (expected 'manova' or 'pairwise:<a>,<b>')"
                ))
            }
            ContrastSpecRepr::Rows(rows) => Ok(ContrastSpec::Rows(rows)),
            ContrastSpecRepr::Row(row) => Ok(ContrastSpec::Rows(vec![row])),
        }
    }
}

impl From<ContrastSpec> for ContrastSpecRepr {
    fn from(spec: ContrastSpec) -> Self {
        match spec {
            ContrastSpec::Manova => ContrastSpecRepr::Name("manova".into()),
            ContrastSpec::Pairwise(a, b) => ContrastSpecRepr::Name(format!("pairwise:{a},{b}")),
            ContrastSpec::Rows(rows) => ContrastSpecRepr::Rows(rows),
        }
    }
}

impl ContrastSpec {
    /// Materialize the coefficient matrix for K groups.
    pub fn g_tilde(&self, k: usize) -> Result<Array2<f64>> {
        match self {
            ContrastSpec::Manova => {
                if k < 2 {
                    return Err(Error::Config("MANOVA contrast needs K >= 2 groups".into()));
                }
                let mut g = Array2::zeros((k - 1, k));
                for i in 0..k - 1 {
                    g[[i, i]] = 1.0;
                    g[[i, k - 1]] = -1.0;
                }
                Ok(g)
            }
            ContrastSpec::Pairwise(a, b) => {
                if *a == 0 || *b == 0 || *a > k || *b > k || a == b {
                    return Err(Error::Config(format!(
                        "pairwise contrast needs two distinct 1-based group indices in 1..={k}, got {a},{b}"
                    )));
                }
                let mut g = Array2::zeros((1, k));
                g[[0, a - 1]] = 1.0;
                g[[0, b - 1]] = -1.0;
                Ok(g)
            }
            ContrastSpec::Rows(rows) => {
                let q = rows.len();
                if q == 0 {
                    return Err(Error::Config("contrast matrix has no rows".into()));
                }
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config(format!(
                        "every contrast row must have K = {k} entries"
                    )));
                }
                let mut g = Array2::zeros((q, k));
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        g[[i, j]] = v;
                    }
                }
                Ok(g)
            }
        }
    }
}

/// Weight selection: the standard tuning for the data dimension, or explicit
/// (a, beta_sq) arrays.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "WeightSourceRepr", into = "WeightSourceRepr")]
pub enum WeightSource {
    #[default]
    Default,
    Explicit { a: Vec<f64>, beta_sq: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightSourceRepr {
    Name(String),
    Explicit { a: Vec<f64>, beta_sq: Vec<f64> },
}

impl TryFrom<WeightSourceRepr> for WeightSource {
    type Error = String;

    fn try_from(repr: WeightSourceRepr) -> std::result::Result<Self, String> {
        match repr {
            WeightSourceRepr::Name(name) if name == "default" => Ok(WeightSource::Default),
            WeightSourceRepr::Name(name) => Err(format!(
                "unknown weight source '{name}' (expected 'default' or explicit arrays)"
            )),
            WeightSourceRepr::Explicit { a, beta_sq } => Ok(WeightSource::Explicit { a, beta_sq }),
        }
    }
}

impl From<WeightSource> for WeightSourceRepr {
    fn from(src: WeightSource) -> Self {
        match src {
            WeightSource::Default => WeightSourceRepr::Name("default".into()),
            WeightSource::Explicit { a, beta_sq } => WeightSourceRepr::Explicit { a, beta_sq },
        }
    }
}

impl WeightSource {
    pub fn build(&self, p: usize) -> Result<WeightSpec> {
        match self {
            WeightSource::Default => default_weights(p),
            WeightSource::Explicit { a, beta_sq } => {
                if a.len() != p || beta_sq.len() != p {
                    return Err(Error::Config(format!(
                        "explicit weights must have length p = {p}, got {} and {}",
                        a.len(),
                        beta_sq.len()
                    )));
                }
                WeightSpec::new(Array1::from(a.clone()), Array1::from(beta_sq.clone()))
            }
        }
    }
}

/// Covariance selection: a named preset or explicit per-group models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovSpecRepr", into = "CovSpecRepr")]
pub enum CovSpec {
    Preset(CovCase),
    Models(Vec<CovarianceModel>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CovSpecRepr {
    Name(String),
    Models(Vec<CovarianceModel>),
}

impl TryFrom<CovSpecRepr> for CovSpec {
    type Error = String;

    fn try_from(repr: CovSpecRepr) -> std::result::Result<Self, String> {
        match repr {
            CovSpecRepr::Name(name) => CovCase::from_name(&name)
                .map(CovSpec::Preset)
                .map_err(|e| e.to_string()),
            CovSpecRepr::Models(models) => Ok(CovSpec::Models(models)),
        }
    }
}

impl From<CovSpec> for CovSpecRepr {
    fn from(spec: CovSpec) -> Self {
        match spec {
            CovSpec::Preset(case) => CovSpecRepr::Name(case.name().into()),
            CovSpec::Models(models) => CovSpecRepr::Models(models),
        }
    }
}

impl CovSpec {
    pub fn models(&self, k: usize) -> Result<Vec<CovarianceModel>> {
        match self {
            CovSpec::Preset(case) => case.models(k),
            CovSpec::Models(models) => {
                if models.len() != k {
                    return Err(Error::Config(format!(
                        "need {k} covariance models, got {}",
                        models.len()
                    )));
                }
                for m in models {
                    m.validate()?;
                }
                Ok(models.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            CovSpec::Preset(case) => case.name().to_string(),
            CovSpec::Models(_) => "custom".to_string(),
        }
    }
}

fn default_level() -> f64 {
    0.05
}

/// Everything one replicated experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub p: usize,
    pub n_sizes: Vec<usize>,
    #[serde(default)]
    pub contrast: ContrastSpec,
    #[serde(default)]
    pub exponent_mode: ExponentMode,
    #[serde(default)]
    pub weights: WeightSource,
    pub cov: CovSpec,
    pub dist: DistributionModel,
    /// None runs under the null (all means zero).
    #[serde(default)]
    pub alternative: Option<MeanAlternative>,
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    /// Replicate-pool thread budget; None uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Resolved pieces of a configuration, built once before any replicate runs.
pub struct SimParts {
    pub contrast: Contrast,
    pub weights: WeightSpec,
    pub cov_models: Vec<CovarianceModel>,
    pub means: Vec<Array1<f64>>,
    pub threshold_z: f64,
}

impl SimulationConfig {
    pub fn k(&self) -> usize {
        self.n_sizes.len()
    }

    pub fn build_parts(&self) -> Result<SimParts> {
        let k = self.k();
        if k < 2 {
            return Err(Error::Config("need at least two groups".into()));
        }
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        let g_tilde = self.contrast.g_tilde(k)?;
        let contrast = build_contrast(
            &ContrastInput::new(g_tilde, self.exponent_mode),
            &self.n_sizes,
        )?;
        let weights = self.weights.build(self.p)?;
        let cov_models = self.cov.models(k)?;
        let mut means = vec![Array1::zeros(self.p); k];
        if let Some(alt) = &self.alternative {
            alt.validate(k)?;
            means[alt.target_group - 1] = mean_alternative_vector(self.p, alt, &self.n_sizes);
        }
        let threshold_z = normal_upper_quantile(self.level)?;
        Ok(SimParts {
            contrast,
            weights,
            cov_models,
            means,
            threshold_z,
        })
    }
}

/// One replicate's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub t_n: f64,
    pub sigma_hat_sq: f64,
    pub z: Option<f64>,
    pub reject: bool,
}

/// Aggregated Monte Carlo results plus calibration diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub replicates: usize,
    pub level: f64,
    pub threshold_z: f64,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate.
    pub rejection_se: f64,
    /// Replicates with a nonpositive variance estimate; excluded from the z
    /// aggregates below but counted in the rejection denominator.
    pub degenerate_count: usize,
    pub z_mean: Option<f64>,
    pub z_var: Option<f64>,
    /// Kolmogorov–Smirnov distance of the z sample from the standard normal.
    pub ks_distance: Option<f64>,
    pub t_mean: f64,
    pub t_var: Option<f64>,
    /// Mean of the per-replicate variance estimates.
    pub sigma_sq_mean: f64,
    /// Exact null variance from the configured covariance models.
    pub null_variance_exact: f64,
    /// Empirical Var(Tₙ) over the exact null variance.
    pub variance_ratio: Option<f64>,
    /// Asymptotic power approximation; present only under an alternative.
    pub predicted_power: Option<f64>,
    /// Group size fractions n_α/n (diagnostic).
    pub group_fractions: Vec<f64>,
    /// Per-replicate records, in replicate order. Not serialized.
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

fn mean_and_var(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var))
}

/// KS distance of a sample against the standard normal CDF.
pub fn ks_distance_standard_normal(zs: &[f64]) -> f64 {
    let mut sorted = zs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &z) in sorted.iter().enumerate() {
        let f = normal_cdf(z);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Run R replicates of (generate, test, record) and aggregate.
pub fn run_replicates(config: &SimulationConfig) -> Result<CalibrationReport> {
    let parts = config.build_parts().map_err(config_error)?;
    let run_one = |replicate: u64| -> Result<ReplicateRecord> {
        let sample = gen_sample(
            config.p,
            &config.n_sizes,
            &parts.cov_models,
            config.dist,
            &parts.means,
            config.seed,
            replicate,
        )?;
        let res = run_test(&sample, &parts.contrast, &parts.weights)?;
        Ok(ReplicateRecord {
            replicate,
            t_n: res.t_n,
            sigma_hat_sq: res.sigma_hat_sq,
            z: res.z,
            reject: res.z.map(|z| z >= parts.threshold_z).unwrap_or(false),
        })
    };

    let ids: Vec<u64> = (1..=config.replicates as u64).collect();
    let records: Vec<ReplicateRecord> = match config.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| ids.par_iter().map(|&r| run_one(r)).collect::<Result<Vec<_>>>())?
        }
        None => ids.par_iter().map(|&r| run_one(r)).collect::<Result<Vec<_>>>()?,
    };

    let r_total = records.len();
    let rejections = records.iter().filter(|rec| rec.reject).count();
    let rate = rejections as f64 / r_total as f64;
    let se = (rate * (1.0 - rate) / r_total as f64).sqrt();

    let zs: Vec<f64> = records.iter().filter_map(|rec| rec.z).collect();
    let degenerate_count = r_total - zs.len();
    let (z_mean, z_var) = mean_and_var(&zs);
    let ks = if zs.is_empty() {
        None
    } else {
        Some(ks_distance_standard_normal(&zs))
    };

    let ts: Vec<f64> = records.iter().map(|rec| rec.t_n).collect();
    let (t_mean, t_var) = mean_and_var(&ts);
    let t_mean = t_mean.expect("at least one replicate");
    let sigma_sq_mean =
        records.iter().map(|rec| rec.sigma_hat_sq).sum::<f64>() / r_total as f64;

    let sigmas: Vec<Covariance> = parts
        .cov_models
        .iter()
        .map(|m| Covariance::Model(*m))
        .collect();
    let exact = null_variance_exact(&sigmas, &parts.contrast, &parts.weights)?;
    let variance_ratio = match t_var {
        Some(v) if exact > 0.0 => Some(v / exact),
        _ => None,
    };
    let predicted_power = match &config.alternative {
        Some(_) if exact > 0.0 => {
            let signal = signal_norm(&parts.means, &parts.contrast, &parts.weights)?;
            Some(power_prediction(signal, exact.sqrt(), config.level)?)
        }
        _ => None,
    };
    let n_total: usize = config.n_sizes.iter().sum();
    let group_fractions = config
        .n_sizes
        .iter()
        .map(|&n| n as f64 / n_total as f64)
        .collect();

    Ok(CalibrationReport {
        replicates: r_total,
        level: config.level,
        threshold_z: parts.threshold_z,
        rejection_rate: rate,
        rejection_se: se,
        degenerate_count,
        z_mean,
        z_var,
        ks_distance: ks,
        t_mean,
        t_var,
        sigma_sq_mean,
        null_variance_exact: exact,
        variance_ratio,
        predicted_power,
        group_fractions,
        records,
    })
}

/// One row of an empirical-size table.
#[derive(Debug, Clone, Serialize)]
pub struct SizeRow {
    pub p: usize,
    pub dist: String,
    pub cov: String,
    pub n_sizes: Vec<usize>,
    pub replicates: usize,
    pub rejection_rate: f64,
    pub rejection_se: f64,
    pub degenerate_count: usize,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SizeTable {
    pub rows: Vec<SizeRow>,
}

impl SizeTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("p,dist,cov,n_sizes,replicates,rejection_rate,rejection_se,degenerate\n");
        for row in &self.rows {
            let sizes = row
                .n_sizes
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("/");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.p,
                row.dist,
                row.cov,
                sizes,
                row.replicates,
                row.rejection_rate,
                row.rejection_se,
                row.degenerate_count
            ));
        }
        out
    }
}

/// Run every configuration in the grid; an empty grid gives an empty table.
pub fn size_table(configs: &[SimulationConfig]) -> Result<SizeTable> {
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let report = run_replicates(config)?;
        rows.push(SizeRow {
            p: config.p,
            dist: config.dist.name().to_string(),
            cov: config.cov.label(),
            n_sizes: config.n_sizes.clone(),
            replicates: config.replicates,
            rejection_rate: report.rejection_rate,
            rejection_se: report.rejection_se,
            degenerate_count: report.degenerate_count,
        });
    }
    Ok(SizeTable { rows })
}

/// Cartesian grid expansion of a base configuration.
pub fn expand_grid(
    base: &SimulationConfig,
    ps: &[usize],
    dists: &[DistributionModel],
    covs: &[CovSpec],
) -> Vec<SimulationConfig> {
    let mut out = Vec::new();
    for &p in ps {
        for &dist in dists {
            for cov in covs {
                let mut config = base.clone();
                config.p = p;
                config.dist = dist;
                config.cov = cov.clone();
                out.push(config);
            }
        }
    }
    out
}

/// One row of a power table.
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub r: f64,
    pub t: f64,
    pub p: usize,
    pub empirical_power: f64,
    pub predicted_power: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,t,p,empirical_power,predicted_power\n");
        for row in &self.rows {
            let predicted = row
                .predicted_power
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.r, row.t, row.p, row.empirical_power, predicted
            ));
        }
        out
    }
}

/// Empirical power over an (r, t) grid, with the asymptotic prediction from
/// the true signal and exact null variance alongside.
pub fn power_curve(
    base: &SimulationConfig,
    r_values: &[f64],
    t_values: &[f64],
) -> Result<PowerTable> {
    let k = base.k();
    let target_group = base
        .alternative
        .as_ref()
        .map(|alt| alt.target_group)
        .unwrap_or(k);
    let mut rows = Vec::with_capacity(r_values.len() * t_values.len());
    for &r in r_values {
        for &t in t_values {
            let mut config = base.clone();
            config.alternative = Some(MeanAlternative {
                r,
                t,
                target_group,
            });
            let report = run_replicates(&config)?;
            rows.push(PowerRow {
                r,
                t,
                p: config.p,
                empirical_power: report.rejection_rate,
                predicted_power: report.predicted_power,
            });
        }
    }
    Ok(PowerTable { rows })
}

/// Outcome of the exact-variance check.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceDiagnostic {
    pub empirical_variance: Option<f64>,
    pub exact_variance: f64,
    pub ratio: Option<f64>,
    /// Both sides vanish (e.g. zero covariance); no ratio is formed.
    pub degenerate: bool,
}

/// Empirical Var(Tₙ) across null replicates divided by the exact null
/// variance of the configured covariance models.
pub fn variance_diagnostic(config: &SimulationConfig) -> Result<VarianceDiagnostic> {
    if config.alternative.is_some() {
        return Err(Error::Config(
            "variance diagnostic requires a null configuration".into(),
        ));
    }
    let report = run_replicates(config)?;
    let exact = report.null_variance_exact;
    let degenerate = exact == 0.0;
    let ratio = match report.t_var {
        Some(v) if !degenerate => Some(v / exact),
        _ => None,
    };
    Ok(VarianceDiagnostic {
        empirical_variance: report.t_var,
        exact_variance: exact,
        ratio,
        degenerate,
    })
}

/// Monte Carlo integration check of the closed-form signal norm.
#[derive(Debug, Clone, Serialize)]
pub struct RiIntegration {
    pub monte_carlo: f64,
    pub closed_form: f64,
    pub mc_standard_error: f64,
}

/// Estimate `∫ ‖(G ⊗ δᵀ) μ‖² ω(δ) dδ` by drawing δ from independent normals
/// with the weight means and variances, and compare with the closed form.
/// Intended for tiny p (the draw loop is O(draws · p · K)).
pub fn ri_integration_check(
    mus: &[Array1<f64>],
    contrast: &Contrast,
    w: &WeightSpec,
    draws: usize,
    seed: u64,
) -> Result<RiIntegration> {
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let closed_form = signal_norm(mus, contrast, w)?;
    let k = contrast.k();
    let g = contrast.g();
    let q = g.nrows();
    let p = w.dim();
    let beta: Vec<f64> = w.beta_sq().iter().map(|b| b.sqrt()).collect();
    let mut rng = stream_rng(seed, 0, 0);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut delta = vec![0.0f64; p];
    for i in 0..draws {
        for (j, d) in delta.iter_mut().enumerate() {
            let n: f64 = rng.sample(StandardNormal);
            *d = w.a()[j] + beta[j] * n;
        }
        // s_α = δᵀ μ_α, then ‖G s‖²
        let mut value = 0.0;
        let mut s = vec![0.0f64; k];
        for (alpha, mu) in mus.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..p {
                acc += delta[j] * mu[j];
            }
            s[alpha] = acc;
        }
        for row in 0..q {
            let mut acc = 0.0;
            for alpha in 0..k {
                acc += g[[row, alpha]] * s[alpha];
            }
            value += acc * acc;
        }
        // Welford
        let count = (i + 1) as f64;
        let d1 = value - mean;
        mean += d1 / count;
        m2 += d1 * (value - mean);
    }
    let variance = if draws > 1 {
        m2 / (draws as f64 - 1.0)
    } else {
        0.0
    };
    Ok(RiIntegration {
        monte_carlo: mean,
        closed_form,
        mc_standard_error: (variance / draws as f64).sqrt(),
    })
}
