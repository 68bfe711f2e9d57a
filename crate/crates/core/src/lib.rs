//! Variance changepoint detection with valid post-selection inference.
//!
//! The model is a univariate Gaussian series with known mean and piecewise
//! constant variance. Detection runs binary segmentation, wild binary
//! segmentation, or PELT over either a CUSUM statistic on centered squares or
//! a Gaussian likelihood-ratio statistic. For a detected changepoint, the
//! ratio of the left-window sum of squares to the whole-window sum of squares
//! is a Beta(h/2, h/2) variable under the no-change null, independent of the
//! remaining shape of the window. P-values that account for the detector
//! having picked the changepoint come from truncating that Beta law to the
//! selection set, computed exactly for CUSUM detectors or estimated by a
//! Monte Carlo surrogate for the rest.

pub mod beta;
pub mod detect;
mod error;
pub mod exact;
pub mod harness;
mod interval;
pub mod mc;
pub mod perturb;
pub mod phi;
pub mod power;
mod pvalue;
mod replay;
mod series;
pub mod stats;

pub use error::{Error, Result};
pub use interval::IntervalUnion;
pub use pvalue::{
    truncated_beta_tail_prob, two_sided_bounds, unconditional_two_sided_p, Conditioning, Method,
    PValueReport,
};
pub use detect::{
    binary_segmentation, cusum_stat, lr_stat, pelt, wild_binary_segmentation,
    wild_binary_segmentation_with_intervals, Algorithm, DetectionResult, SegmentStat, StatKind,
    StopRule,
};
pub use exact::{
    exact_p_value, selection_set, solve_interval, step_inequalities, PhiConstraint, SelectionSet,
};
pub use harness::{
    calibrate_lambda, generate, holm_bonferroni, run_detection_accuracy, run_qq, AccuracyReport,
    AccuracyRow, ChangepointPlan, InferenceEngine, QqReport, QqRow, Scenario, StopPlan,
};
pub use mc::{
    conditioned_density, gp_direct_p, gp_is_p, mc_p_value, naive_p_hat, ConditionedDensity,
    GpSurrogate, SamplerConfig,
};
pub use perturb::{
    cusum_phi_coeff, cusum_phi_coeffs, cusum_stat_phi, lr_phi_coeffs, lr_stat_phi, perturb_series,
    LrPhiCoeffs, PhiPath,
};
pub use phi::{decompose_w, phi_statistic, reconstruct_squares, PhiFrame};
pub use power::{power_p_value, PowerEngine};
pub use replay::PhiDetector;
pub use series::{TimeSeries, Window, WindowSpec};
