//! Fit / score / predict pipeline.
//!
//! A detector is a fitted forest plus the choice of per-tree scorer, the
//! aggregation parameter `alpha` and an optional decision threshold. With the
//! depth scorer this is the `IF_alpha` family (`alpha = 0` being the classic
//! isolation forest); with the volume scorer it is `PAC_alpha`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_h, classify, AggregateScore, Alpha};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, FitConfig, ForestModel};
use crate::scoring::{BoundingPolicy, PreparedScorer, ScoreVector, ScorerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerChoice {
    #[default]
    Depth,
    Volume,
}

impl fmt::Display for ScorerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerChoice::Depth => "depth",
            ScorerChoice::Volume => "volume",
        })
    }
}

impl FromStr for ScorerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "depth" | "if" => Ok(ScorerChoice::Depth),
            "volume" | "pac" => Ok(ScorerChoice::Volume),
            other => Err(Error::Config(format!("unknown scorer {other:?} (expected depth or volume)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub n_estimators: usize,
    pub subsample_size: usize,
    pub scorer: ScorerChoice,
    pub alpha: Alpha,
    /// Fixed decision threshold on the aggregate score.
    pub tau: Option<f64>,
    /// Expected anomaly fraction; the threshold is then fitted as the
    /// `1 - contamination` quantile of the training scores.
    pub contamination: Option<f64>,
    pub seed: u64,
    /// Use `depth / c(psi)` without the correction for multi-point leaves.
    pub strict_paper_depth: bool,
    pub bounding_policy: BoundingPolicy,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            subsample_size: 256,
            scorer: ScorerChoice::Depth,
            alpha: Alpha::ZERO,
            tau: None,
            contamination: None,
            seed: 0,
            strict_paper_depth: false,
            bounding_policy: BoundingPolicy::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Config("n_estimators must be at least 1".into()));
        }
        if self.subsample_size == 0 {
            return Err(Error::Config("subsample_size must be at least 1".into()));
        }
        if self.tau.is_some() && self.contamination.is_some() {
            return Err(Error::Config("set at most one of tau and contamination".into()));
        }
        if let Some(tau) = self.tau {
            if !tau.is_finite() {
                return Err(Error::Config(format!("tau must be finite, got {tau}")));
            }
        }
        if let Some(c) = self.contamination {
            if !(c > 0.0 && c <= 0.5) {
                return Err(Error::Config(format!("contamination must lie in (0, 0.5], got {c}")));
            }
        }
        match &self.bounding_policy {
            BoundingPolicy::PerTree { margin } | BoundingPolicy::Global { margin } => {
                if !(margin.is_finite() && *margin >= 0.0) {
                    return Err(Error::Config(format!("bounding margin must be >= 0, got {margin}")));
                }
            }
            BoundingPolicy::Fixed(rect) => {
                if rect.extents().any(|e| !e.is_finite()) {
                    return Err(Error::Config("fixed bounding box must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn scorer_kind(&self) -> ScorerKind {
        match self.scorer {
            ScorerChoice::Depth => ScorerKind::Depth { strict: self.strict_paper_depth },
            ScorerChoice::Volume => ScorerKind::Volume { bounding: self.bounding_policy.clone() },
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { n_estimators: self.n_estimators, subsample_size: self.subsample_size, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    model: ForestModel,
    config: DetectorConfig,
    fitted_tau: Option<f64>,
}

impl Detector {
    pub fn fit(data: &Dataset, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let model = fit_forest(data, &config.fit_config())?;
        let mut det = Self { model, config, fitted_tau: None };
        if let Some(c) = det.config.contamination {
            let scores: Vec<f64> = det.score_samples(data)?.into_iter().map(AggregateScore::value).collect();
            det.fitted_tau = Some(upper_quantile(scores, 1.0 - c));
        }
        Ok(det)
    }

    /// Reassembles a detector, e.g. after loading it from disk.
    pub fn from_parts(model: ForestModel, config: DetectorConfig, fitted_tau: Option<f64>) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        if model.trees().len() != config.n_estimators {
            return Err(Error::CorruptFile(format!(
                "config expects {} trees, model has {}",
                config.n_estimators,
                model.trees().len()
            )));
        }
        if let BoundingPolicy::Fixed(rect) = &config.bounding_policy {
            if rect.dim() != model.dim() {
                return Err(Error::DimensionMismatch { expected: model.dim(), found: rect.dim() });
            }
        }
        Ok(Self { model, config, fitted_tau })
    }

    pub fn model(&self) -> &ForestModel {
        &self.model
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn fitted_tau(&self) -> Option<f64> {
        self.fitted_tau
    }

    /// The threshold used by [`Detector::predict`].
    pub fn threshold(&self) -> Option<f64> {
        self.config.tau.or(self.fitted_tau)
    }

    fn check_dim(&self, data: &Dataset) -> Result<()> {
        if data.n_cols() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), found: data.n_cols() });
        }
        Ok(())
    }

    /// Per-tree scores of every row.
    pub fn score_vectors(&self, data: &Dataset) -> Result<Vec<ScoreVector>> {
        self.check_dim(data)?;
        let scorer = PreparedScorer::new(&self.model, &self.config.scorer_kind())?;
        data.rows().collect::<Vec<_>>().par_iter().map(|x| scorer.score_vector(x)).collect()
    }

    pub fn score_samples(&self, data: &Dataset) -> Result<Vec<AggregateScore>> {
        self.score_samples_with_alpha(data, self.config.alpha)
    }

    /// Scores with a different aggregation parameter on the same forest.
    pub fn score_samples_with_alpha(&self, data: &Dataset, alpha: Alpha) -> Result<Vec<AggregateScore>> {
        self.check_dim(data)?;
        let scorer = PreparedScorer::new(&self.model, &self.config.scorer_kind())?;
        data.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|x| aggregate_h(scorer.score_vector(x)?.values(), alpha))
            .collect()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<bool>> {
        let tau = self.threshold().ok_or(Error::NoThreshold)?;
        Ok(self.score_samples(data)?.into_iter().map(|s| classify(s, tau)).collect())
    }
}

/// Order statistic at position `ceil(q (N - 1))` of the sorted scores, i.e.
/// the quantile with "higher" interpolation.
fn upper_quantile(mut scores: Vec<f64>, q: f64) -> f64 {
    scores.sort_by(f64::total_cmp);
    let pos = q * (scores.len() - 1) as f64;
    // guard against 0.9 * 10 = 9.000000000000002 style rounding
    let idx = ((pos - 1e-9).ceil().max(0.0) as usize).min(scores.len() - 1);
    scores[idx]
}
