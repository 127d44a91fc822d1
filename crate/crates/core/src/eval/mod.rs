//! Boundary precision/recall and auxiliary image measures.

mod bpr;
mod curve;
mod measures;
mod report;

pub use bpr::{bpr, max_filter, Bpr, MatchResult};
pub use curve::{default_thresholds, pr_curve, PrAccumulator, PrCurve, PrPoint};
pub use measures::{error_vs_border_distance, laplacian_sharpness, mse_metric, ErrorProfile};
pub use report::{MetricRow, MetricTable};
