//! Random isolation trees and the forest that holds them.
//!
//! Splits follow a half-open convention: a point goes left when
//! `x[feature] < threshold` and right otherwise, so the leaf rectangles of a
//! tree tile `R^d` exactly.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Axis-aligned box `[lower, upper)` whose bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRectangle {
    #[serde(with = "extended_floats")]
    lower: Vec<f64>,
    #[serde(with = "extended_floats")]
    upper: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch { left: lower.len(), right: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::Domain("rectangle needs at least one dimension".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            // NaN fails this comparison too
            if !(lo <= hi) {
                return Err(Error::Domain(format!("dimension {j}: lower {lo} exceeds upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole of `R^d`.
    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    /// Tight axis-aligned bounding box of a non-empty row-major point set.
    pub fn bounding(points: &[f64], dim: usize) -> Self {
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for row in points.chunks_exact(dim) {
            for (j, &v) in row.iter().enumerate() {
                lower[j] = lower[j].min(v);
                upper[j] = upper[j].max(v);
            }
        }
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Half-open containment: `lower[j] <= x[j] < upper[j]` for every `j`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v < hi)
    }

    pub fn extents(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo)
    }

    /// Per-dimension extent of `self ∩ other`; zero or negative where the
    /// intersection is empty.
    pub fn clipped_extents<'a>(&'a self, other: &'a HyperRectangle) -> impl Iterator<Item = f64> + 'a {
        (0..self.dim()).map(move |j| {
            let lo = self.lower[j].max(other.lower[j]);
            let hi = self.upper[j].min(other.upper[j]);
            hi - lo
        })
    }

    /// Grows every dimension symmetrically by `fraction` of its extent in
    /// total (half on each side).
    pub fn expanded(&self, fraction: f64) -> Self {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for j in 0..self.dim() {
            let pad = 0.5 * fraction * (upper[j] - lower[j]);
            if pad.is_finite() {
                lower[j] -= pad;
                upper[j] += pad;
            }
        }
        Self { lower, upper }
    }

    fn with_upper(&self, feature: usize, value: f64) -> Self {
        let mut r = self.clone();
        r.upper[feature] = value;
        r
    }

    fn with_lower(&self, feature: usize, value: f64) -> Self {
        let mut r = self.clone();
        r.lower[feature] = value;
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Number of split nodes on the root-to-leaf path.
    pub depth: usize,
    /// Subsample points that landed in this leaf.
    pub count: usize,
    pub rect: HyperRectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    root: TreeNode,
    subsample_size: usize,
    bounding_box: HyperRectangle,
}

impl IsolationTree {
    /// Assembles a tree from already-built parts, checking the structural
    /// invariants (leaf counts sum to the subsample size, feature indices and
    /// rectangle dimensions agree with the bounding box).
    pub fn from_parts(root: TreeNode, subsample_size: usize, bounding_box: HyperRectangle) -> Result<Self> {
        let tree = Self { root, subsample_size, bounding_box };
        tree.validate()?;
        Ok(tree)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let mut total = 0usize;
        let mut stack = vec![(&self.root, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            match node {
                TreeNode::Split { feature, threshold, left, right } => {
                    if *feature >= dim || !threshold.is_finite() {
                        return Err(Error::CorruptFile(format!("bad split on feature {feature}")));
                    }
                    stack.push((left, depth + 1));
                    stack.push((right, depth + 1));
                }
                TreeNode::Leaf(leaf) => {
                    if leaf.count == 0 || leaf.depth != depth || leaf.rect.dim() != dim {
                        return Err(Error::CorruptFile("inconsistent leaf".into()));
                    }
                    total += leaf.count;
                }
            }
        }
        if total != self.subsample_size {
            return Err(Error::CorruptFile(format!(
                "leaf counts sum to {total}, subsample size is {}",
                self.subsample_size
            )));
        }
        Ok(())
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn bounding_box(&self) -> &HyperRectangle {
        &self.bounding_box
    }

    pub fn dim(&self) -> usize {
        self.bounding_box.dim()
    }

    /// The unique leaf whose rectangle contains `x`.
    pub fn locate_leaf(&self, x: &[f64]) -> Result<&Leaf> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
                TreeNode::Leaf(leaf) => return Ok(leaf),
            }
        }
    }

    /// All leaves, left to right.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                TreeNode::Leaf(leaf) => out.push(leaf),
            }
        }
        out
    }
}

/// `ceil(log2(psi))`, and 0 for `psi <= 1`.
pub fn max_depth(psi: usize) -> usize {
    if psi <= 1 {
        0
    } else {
        psi.next_power_of_two().trailing_zeros() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_estimators: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { n_estimators: 100, subsample_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<IsolationTree>,
    config: FitConfig,
    /// Bounding box of the full training set.
    training_box: HyperRectangle,
}

impl ForestModel {
    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn training_box(&self) -> &HyperRectangle {
        &self.training_box
    }

    pub fn dim(&self) -> usize {
        self.training_box.dim()
    }

    pub fn n_estimators(&self) -> usize {
        self.trees.len()
    }

    /// True when every tree was fitted on a single point, which makes the
    /// depth normalisation undefined.
    pub fn is_degenerate(&self) -> bool {
        self.trees.iter().all(|t| t.subsample_size() == 1)
    }

    /// Returns a model with the trees in a different order.
    pub fn with_tree_order(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.trees.len()];
        if order.len() != self.trees.len() || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Domain("tree order must be a permutation".into()));
        }
        Ok(Self {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            config: self.config,
            training_box: self.training_box.clone(),
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::CorruptFile("model has no trees".into()));
        }
        let dim = self.dim();
        for tree in &self.trees {
            if tree.dim() != dim {
                return Err(Error::CorruptFile("trees disagree on dimensionality".into()));
            }
            tree.validate()?;
        }
        Ok(())
    }
}

/// Draws `min(psi, N)` distinct row indices uniformly without replacement.
pub fn subsample<R: Rng + ?Sized>(data: &Dataset, psi: usize, rng: &mut R) -> Vec<usize> {
    let n = data.n_rows();
    index::sample(rng, n, psi.min(n)).into_vec()
}

/// Grows one random isolation tree on a row-major `psi x dim` subsample.
pub fn fit_tree<R: Rng + ?Sized>(points: &[f64], dim: usize, rng: &mut R) -> Result<IsolationTree> {
    if dim == 0 {
        return Err(Error::Domain("points need at least one feature".into()));
    }
    if points.len() % dim != 0 {
        return Err(Error::Domain("point buffer is not a whole number of rows".into()));
    }
    let psi = points.len() / dim;
    if psi == 0 {
        return Err(Error::EmptySubsample);
    }
    let mut builder = TreeBuilder { points, dim, max_depth: max_depth(psi), rng };
    let mut indices: Vec<usize> = (0..psi).collect();
    let root = builder.grow(&mut indices, 0, HyperRectangle::unbounded(dim));
    Ok(IsolationTree { root, subsample_size: psi, bounding_box: HyperRectangle::bounding(points, dim) })
}

struct TreeBuilder<'a, R: ?Sized> {
    points: &'a [f64],
    dim: usize,
    max_depth: usize,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> TreeBuilder<'_, R> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.points[row * self.dim + feature]
    }

    fn grow(&mut self, indices: &mut [usize], depth: usize, rect: HyperRectangle) -> TreeNode {
        let leaf = |rect| TreeNode::Leaf(Leaf { depth, count: indices.len(), rect });
        if indices.len() == 1 || depth >= self.max_depth {
            return leaf(rect);
        }

        let splittable: Vec<(usize, f64, f64)> = (0..self.dim)
            .filter_map(|f| {
                let (lo, hi) = indices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.value(i, f);
                    (lo.min(v), hi.max(v))
                });
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if splittable.is_empty() {
            return leaf(rect);
        }

        let (feature, lo, hi) = splittable[self.rng.gen_range(0..splittable.len())];
        let threshold = self.draw_threshold(lo, hi);

        let mut mid = 0;
        for j in 0..indices.len() {
            if self.value(indices[j], feature) < threshold {
                indices.swap(mid, j);
                mid += 1;
            }
        }
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        let left = self.grow(left_idx, depth + 1, rect.with_upper(feature, threshold));
        let right = self.grow(right_idx, depth + 1, rect.with_lower(feature, threshold));
        TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
    }

    /// Uniform draw from the open interval `(lo, hi)`.
    fn draw_threshold(&mut self, lo: f64, hi: f64) -> f64 {
        for _ in 0..16 {
            let u: f64 = self.rng.gen();
            // convex combination never overflows, unlike lo + u * (hi - lo)
            let t = lo * (1.0 - u) + hi * u;
            if lo < t && t < hi {
                return t;
            }
        }
        // lo and hi are adjacent floats; `hi` still separates them under the
        // strict-less rule.
        hi
    }
}

/// Fits `config.n_estimators` trees on independent subsamples. Tree `i` uses
/// the random stream `(config.seed, i)`, so the result does not depend on
/// how the work is scheduled.
pub fn fit_forest(data: &Dataset, config: &FitConfig) -> Result<ForestModel> {
    if config.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be at least 1".into()));
    }
    if config.subsample_size == 0 {
        return Err(Error::EmptySubsample);
    }
    let dim = data.n_cols();
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(config.seed, i as u64);
            let rows = subsample(data, config.subsample_size, &mut rng);
            fit_tree(&data.gather_rows(&rows), dim, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, config: *config, training_box: HyperRectangle::bounding(data.values(), dim) })
}

/// Serde helper for float vectors that may hold `±inf`; JSON has no literal
/// for those, so they are written as the strings `"inf"` / `"-inf"`.
mod extended_floats {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Bound {
        Finite(f64),
        Symbol(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bounds: Vec<Bound> = values
            .iter()
            .map(|&v| match v {
                f64::INFINITY => Bound::Symbol("inf".into()),
                f64::NEG_INFINITY => Bound::Symbol("-inf".into()),
                v => Bound::Finite(v),
            })
            .collect();
        bounds.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Bound>::deserialize(d)?
            .into_iter()
            .map(|b| match b {
                Bound::Finite(v) => Ok(v),
                Bound::Symbol(s) if s == "inf" => Ok(f64::INFINITY),
                Bound::Symbol(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
                Bound::Symbol(s) => Err(D::Error::custom(format!("invalid bound {s:?}"))),
            })
            .collect()
    }
}
