//! Tests for general linear hypotheses on the mean vectors of K independent
//! samples when the dimension p can far exceed the total sample size, with
//! heteroscedastic groups.
//!
//! The statistic is an L²-norm-type quadratic form driven by a
//! diagonal-plus-rank-one weight matrix, computed without ever forming a p×p
//! object; its null variance has an unbiased estimator built from pairwise
//! weighted inner products. The crate also ships a factor-model data
//! generator and a parallel, fully reproducible Monte Carlo harness for
//! empirical size/power studies.
//!
//! Typical use:
//!
//! ```
//! use hdglht::{build_contrast, default_weights, run_test};
//! use hdglht::{ContrastInput, ExponentMode, GroupedSample};
//! use ndarray::Array2;
//!
//! let groups = vec![
//!     Array2::from_shape_fn((8, 32), |(i, j)| ((i * 31 + j * 17) % 13) as f64 / 13.0),
//!     Array2::from_shape_fn((9, 32), |(i, j)| ((i * 7 + j * 29) % 11) as f64 / 11.0),
//! ];
//! let sample = GroupedSample::new(groups).unwrap();
//! let g_tilde = Array2::from_shape_vec((1, 2), vec![1.0, -1.0]).unwrap();
//! let contrast = build_contrast(
//!     &ContrastInput::new(g_tilde, ExponentMode::PaperLiteral),
//!     &sample.n_sizes(),
//! )
//! .unwrap();
//! let weights = default_weights(sample.p()).unwrap();
//! let result = run_test(&sample, &contrast, &weights).unwrap();
//! assert!(result.p_value.is_some());
//! ```

pub mod contrast;
pub mod datagen;
pub mod error;
pub mod montecarlo;
pub mod normal;
pub mod statistic;
pub mod weights;

pub use contrast::{
    build_contrast, sym_matrix_power, Contrast, ContrastInput, ExponentMode, SymPower,
};
pub use datagen::{
    draw_innovation, gen_sample, mean_alternative_vector, stream_rng, CovCase, CovarianceModel,
    DistributionModel, MeanAlternative,
};
pub use error::{Error, Result};
pub use montecarlo::{
    expand_grid, power_curve, ri_integration_check, run_replicates, size_table,
    variance_diagnostic, CalibrationReport, ContrastSpec, CovSpec, PowerTable, ReplicateRecord,
    RiIntegration, SimulationConfig, SizeTable, VarianceDiagnostic, WeightSource,
};
pub use normal::{normal_cdf, normal_sf, normal_upper_quantile};
pub use statistic::{
    exact_trace_cross, null_variance_exact, power_prediction, run_test, signal_norm, summarize,
    t_statistic, t_statistic_oracle, trace_cross_hat, trace_w_sigma_sq_hat, variance_hat,
    Covariance, GroupSummary, GroupedSample, TestResult,
};
pub use weights::{default_weights, WeightSpec};
