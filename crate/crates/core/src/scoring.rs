//! Per-tree anomaly scores.
//!
//! Both scorers follow the same direction: a smaller per-tree score means a
//! more anomalous point. The depth scorer is the classic normalised path
//! length; the volume scorer compares the fraction of the subsample that
//! fell into a leaf with the fraction of the bounding volume the leaf
//! occupies.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestModel, HyperRectangle, IsolationTree};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Harmonic numbers are summed exactly up to this index and approximated by
/// `ln k + gamma` above it.
pub const EXACT_HARMONIC_LIMIT: usize = 1_000_000;

/// Relative floor applied to rectangle extents before taking logarithms.
pub const VOLUME_EPSILON: f64 = 1e-12;

/// Default total growth of the per-tree bounding box, as a fraction of its
/// extent in each dimension.
pub const DEFAULT_BOUNDING_MARGIN: f64 = 0.005;

pub fn harmonic(k: usize) -> f64 {
    if k <= EXACT_HARMONIC_LIMIT {
        // smallest terms first
        (1..=k).rev().map(|i| 1.0 / i as f64).sum()
    } else {
        (k as f64).ln() + EULER_GAMMA
    }
}

/// Average path length of an unsuccessful search in a binary search tree of
/// `m` keys: `c(1) = 0`, `c(2) = 1`, `c(m) = 2 H(m-1) - 2 (m-1) / m`.
pub fn c_factor(m: usize) -> Result<f64> {
    match m {
        0 => Err(Error::Domain("c(m) needs m >= 1".into())),
        1 => Ok(0.0),
        2 => Ok(1.0),
        m => Ok(2.0 * harmonic(m - 1) - 2.0 * (m - 1) as f64 / m as f64),
    }
}

/// Reference volume used by the volume scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundingPolicy {
    /// Each tree's own subsample bounding box, grown by `margin`.
    PerTree { margin: f64 },
    /// The bounding box of the whole training set, grown by `margin`.
    Global { margin: f64 },
    /// A caller-supplied box.
    Fixed(HyperRectangle),
}

impl Default for BoundingPolicy {
    fn default() -> Self {
        BoundingPolicy::PerTree { margin: DEFAULT_BOUNDING_MARGIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Normalised leaf depth. `strict` drops the `c(count)` correction for
    /// leaves that still hold several points.
    Depth { strict: bool },
    /// Leaf frequency over relative leaf volume.
    Volume { bounding: BoundingPolicy },
}

impl Default for ScorerKind {
    fn default() -> Self {
        ScorerKind::Depth { strict: false }
    }
}

/// One score per estimator for a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ScoreVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `(depth + c(count)) / c(psi)` for the leaf containing `x`, or
/// `depth / c(psi)` when `strict`. Trees fitted on a single point score 0.
pub fn depth_score(tree: &IsolationTree, x: &[f64], strict: bool) -> Result<f64> {
    let leaf = tree.locate_leaf(x)?;
    let norm = c_factor(tree.subsample_size())?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    let adjust = if strict { 0.0 } else { c_factor(leaf.count)? };
    Ok((leaf.depth as f64 + adjust) / norm)
}

/// Extent floor for a bounding box: `VOLUME_EPSILON` times its largest
/// extent, or `VOLUME_EPSILON` itself when the box is a single point.
fn extent_floor(bounding: &HyperRectangle) -> f64 {
    let widest = bounding.extents().fold(0.0, f64::max);
    if widest > 0.0 {
        VOLUME_EPSILON * widest
    } else {
        VOLUME_EPSILON
    }
}

fn log_volume(extents: impl Iterator<Item = f64>, floor: f64) -> f64 {
    extents.map(|e| e.max(floor).ln()).sum()
}

/// A bounding box with its floor and log-volume precomputed.
#[derive(Debug, Clone)]
struct Reference<'a> {
    rect: Cow<'a, HyperRectangle>,
    floor: f64,
    log_volume: f64,
}

impl<'a> Reference<'a> {
    fn new(rect: Cow<'a, HyperRectangle>) -> Result<Self> {
        if rect.extents().any(|e| !e.is_finite()) {
            return Err(Error::Domain("bounding box must be finite".into()));
        }
        let floor = extent_floor(&rect);
        let log_volume = log_volume(rect.extents(), floor);
        Ok(Self { rect, floor, log_volume })
    }

    fn score(&self, tree: &IsolationTree, x: &[f64]) -> Result<f64> {
        if self.rect.dim() != tree.dim() {
            return Err(Error::DimensionMismatch { expected: tree.dim(), found: self.rect.dim() });
        }
        let leaf = tree.locate_leaf(x)?;
        let log_clipped = log_volume(leaf.rect.clipped_extents(&self.rect), self.floor);
        let frequency = leaf.count as f64 / tree.subsample_size() as f64;
        Ok((frequency * (self.log_volume - log_clipped).exp()).min(f64::MAX))
    }
}

/// `(count / psi) * V(bounding) / V(leaf ∩ bounding)` for the leaf
/// containing `x`, with volumes taken in log space. Extents are floored at
/// [`VOLUME_EPSILON`] times the widest bounding extent, so leaves that miss
/// the box get a tiny volume and a very large (but finite) score.
pub fn volume_score(tree: &IsolationTree, x: &[f64], bounding: &HyperRectangle) -> Result<f64> {
    Reference::new(Cow::Borrowed(bounding))?.score(tree, x)
}

/// A scorer bound to one model, with per-tree reference boxes prepared once.
#[derive(Debug, Clone)]
pub struct PreparedScorer<'a> {
    model: &'a ForestModel,
    kind: Prepared<'a>,
}

#[derive(Debug, Clone)]
enum Prepared<'a> {
    Depth { strict: bool },
    Volume(Vec<Reference<'a>>),
}

impl<'a> PreparedScorer<'a> {
    pub fn new(model: &'a ForestModel, kind: &ScorerKind) -> Result<Self> {
        let kind = match kind {
            ScorerKind::Depth { strict } => Prepared::Depth { strict: *strict },
            ScorerKind::Volume { bounding } => {
                let refs = match bounding {
                    BoundingPolicy::PerTree { margin } => model
                        .trees()
                        .iter()
                        .map(|t| Reference::new(Cow::Owned(t.bounding_box().expanded(*margin))))
                        .collect::<Result<Vec<_>>>()?,
                    BoundingPolicy::Global { margin } => {
                        let shared = Reference::new(Cow::Owned(model.training_box().expanded(*margin)))?;
                        vec![shared; model.n_estimators()]
                    }
                    BoundingPolicy::Fixed(rect) => {
                        if rect.dim() != model.dim() {
                            return Err(Error::DimensionMismatch { expected: model.dim(), found: rect.dim() });
                        }
                        vec![Reference::new(Cow::Owned(rect.clone()))?; model.n_estimators()]
                    }
                };
                Prepared::Volume(refs)
            }
        };
        Ok(Self { model, kind })
    }

    pub fn score_vector(&self, x: &[f64]) -> Result<ScoreVector> {
        if x.len() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), found: x.len() });
        }
        let trees = self.model.trees();
        let values = match &self.kind {
            Prepared::Depth { strict } => {
                trees.iter().map(|t| depth_score(t, x, *strict)).collect::<Result<Vec<_>>>()?
            }
            Prepared::Volume(refs) => {
                trees.iter().zip(refs).map(|(t, r)| r.score(t, x)).collect::<Result<Vec<_>>>()?
            }
        };
        Ok(ScoreVector(values))
    }
}

/// Per-estimator scores of `x` under every tree of `model`.
pub fn score_vector(model: &ForestModel, x: &[f64], kind: &ScorerKind) -> Result<ScoreVector> {
    PreparedScorer::new(model, kind)?.score_vector(x)
}
