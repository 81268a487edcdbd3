//! Dependence between recovery speed and failure size.
//!
//! Recovery speed is the normalized rank of a failure's downtime within its
//! event (1 = fastest, 0 = slowest). Failure size is the number of affected
//! customers. For a rectangle of size bins `A` and speed bins `B` the
//! dependence metric is
//!
//! ```text
//! f(A, B) = P(X in A, Y in B) - P(X in A) * P(Y in B)
//! ```
//!
//! estimated from the empirical joint histogram. Positive regions that stand
//! above the cross-validated error become clusters.

mod categories;
mod clusters;
mod grid;
mod rank;

pub use categories::{
    assign_categories, label_for, label_samples, CategoryLabel, CategoryThresholds, LabeledSample,
};
pub use clusters::{cross_validated_errors, extract_average_clusters, extract_clusters, ClusterConfig, ClusterHint, ClusterRegion};
pub use grid::{
    average_dependence, dependence_region_metric, estimate_joint, rect_metric, BinSpec, CellRect, JointGrid,
};
pub use rank::{rank_recovery_speed, RankedSample};
