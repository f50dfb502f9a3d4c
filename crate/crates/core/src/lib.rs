//! Group performance audits of binary classifiers when group membership is
//! known only as a probability.
//!
//! The crate computes probability-weighted group metrics, the bias those
//! estimates carry when the probabilities are imperfect, sensitivity
//! intervals over assumed probability error, and an assumption-checked bound
//! on the bias. A simulation module reproduces the data-generating process
//! used to study these estimators and a utility module turns group error
//! rates into expected-utility comparisons.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod bias;
pub mod data;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod parallel;
pub mod sensitivity;
pub mod simulate;
pub mod stats;
pub mod utility;

pub use audit::{audit_dataset, audit_metric, AuditReport, MetricAudit, PopulationRates};
pub use bias::{
    assumption1_check, bias_bound, bias_estimate, deltas, empirical_bias, epsilon_bounds, epsilon_sample,
    same_sign_condition, BiasInputs, DeltaPair, EpsilonBounds, EpsilonPair, Interval,
};
pub use data::{ingest_csv, summarize, AuditDataset, AuditRecord, CsvSchema};
pub use error::{Error, Result};
pub use metrics::{
    marginal_metric, metric_spec, oracle_metric, weighted_metric, MetricEstimate, MetricKind, MetricSpec,
};
pub use sensitivity::{
    contour_grid, run_sensitivity, ErrorCorrelation, RangeSpec, SensitivityConfig, SensitivityResult, SignConvention,
};
pub use utility::{
    expected_utility, group_utility_report, select_threshold, GroupUtilityParams, UtilityInputs, UtilityReport,
    UtilityReportConfig,
};
