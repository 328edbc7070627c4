//! Isolation forest anomaly detection with a tunable aggregation family and
//! hypervolume-based leaf scoring.
//!
//! A detector is the combination of a randomly fitted forest
//! ([`forest`]), a per-tree scoring function ([`scoring`]) and an aggregation
//! of the per-tree scores into one number in `[0, 1]` ([`aggregation`]).
//! [`detector`] wires these together; [`experiments`] holds the synthetic
//! benchmarks and evaluation metrics, and [`io`] the CSV and model-file
//! formats.

pub mod aggregation;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod io;
pub mod rng;
pub mod scoring;

pub use aggregation::{aggregate_h, classify, power_mean_f, renyi_divergence, AggregateScore, Alpha};
pub use dataset::Dataset;
pub use detector::{Detector, DetectorConfig, ScorerChoice};
pub use error::{Error, Result};
pub use forest::{fit_forest, fit_tree, FitConfig, ForestModel, HyperRectangle, IsolationTree, Leaf, TreeNode};
pub use scoring::{c_factor, BoundingPolicy, ScoreVector, ScorerKind};
