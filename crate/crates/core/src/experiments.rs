//! Synthetic benchmarks, AUCROC and rank tables.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::Alpha;
use crate::dataset::Dataset;
use crate::detector::{Detector, DetectorConfig, ScorerChoice};
use crate::error::{Error, Result};
use crate::rng;

/// Separates detector seeds from dataset seeds within one trial.
const DETECTOR_STREAM: u64 = 0xD3E7_EC70_5EED_0001;

pub const DEFAULT_SPHERE_NOISE: f64 = 0.05;

/// Uniform inliers in `[0, 1]^d` plus one point `(offset, 0.5, ..., 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeOutlierSpec {
    pub d: usize,
    pub n_inliers: usize,
    pub outlier_offset: f64,
    pub seed: u64,
}

impl CubeOutlierSpec {
    pub fn new(d: usize, seed: u64) -> Self {
        Self { d, n_inliers: 127, outlier_offset: 1.05, seed }
    }
}

/// Noisy inliers on the unit sphere in `R^d` plus one point at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereOriginSpec {
    pub d: usize,
    pub n_inliers: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SphereOriginSpec {
    pub fn new(d: usize, seed: u64) -> Self {
        Self { d, n_inliers: 127, noise_sigma: DEFAULT_SPHERE_NOISE, seed }
    }
}

/// Inliers come first; the single anomaly (label 1) is the last row.
pub fn gen_cube_outlier(spec: &CubeOutlierSpec) -> Result<Dataset> {
    if spec.d == 0 || spec.n_inliers == 0 {
        return Err(Error::Config("cube experiment needs d >= 1 and at least one inlier".into()));
    }
    if !(spec.outlier_offset > 1.0) || !spec.outlier_offset.is_finite() {
        return Err(Error::Config(format!("outlier offset must exceed 1, got {}", spec.outlier_offset)));
    }
    let mut rng = rng::stream(spec.seed, 0);
    let d = spec.d;
    let mut values: Vec<f64> = (0..spec.n_inliers * d).map(|_| rng.gen::<f64>()).collect();
    values.push(spec.outlier_offset);
    values.extend(std::iter::repeat(0.5).take(d - 1));
    let mut labels = vec![0u8; spec.n_inliers];
    labels.push(1);
    Dataset::new(values, d)?.with_labels(labels)
}

/// Inliers are normalised standard Gaussian vectors plus isotropic Gaussian
/// noise of scale `noise_sigma`; the anomaly (last row) is the origin.
pub fn gen_sphere_origin(spec: &SphereOriginSpec) -> Result<Dataset> {
    if spec.d < 2 || spec.n_inliers == 0 {
        return Err(Error::Config("sphere experiment needs d >= 2 and at least one inlier".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    let mut rng = rng::stream(spec.seed, 0);
    let d = spec.d;
    let mut values = Vec::with_capacity((spec.n_inliers + 1) * d);
    let mut direction = vec![0.0; d];
    for _ in 0..spec.n_inliers {
        let norm = loop {
            for v in direction.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        for v in &direction {
            let noise: f64 = rng.sample(StandardNormal);
            values.push(v / norm + spec.noise_sigma * noise);
        }
    }
    values.extend(std::iter::repeat(0.0).take(d));
    let mut labels = vec![0u8; spec.n_inliers];
    labels.push(1);
    Dataset::new(values, d)?.with_labels(labels)
}

/// Area under the ROC curve via the Mann-Whitney statistic, with average
/// ranks for tied scores. Higher scores are taken to indicate label 1.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if let Some(row) = labels.iter().position(|&l| l > 1) {
        return Err(Error::LabelNotBinary { row, value: f64::from(labels[row]) });
    }
    if let Some(col) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFiniteValue { row: col, col: 0 });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share their average, 1-based
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        positive_rank_sum += avg_rank * positives as f64;
        start = end;
    }
    let u = positive_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyExperiment {
    Cube(CubeOutlierSpec),
    Sphere(SphereOriginSpec),
}

impl ToyExperiment {
    pub fn name(&self) -> &'static str {
        match self {
            ToyExperiment::Cube(_) => "cube",
            ToyExperiment::Sphere(_) => "sphere",
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ToyExperiment::Cube(s) => s.d,
            ToyExperiment::Sphere(s) => s.d,
        }
    }

    fn seed(&self) -> u64 {
        match self {
            ToyExperiment::Cube(s) => s.seed,
            ToyExperiment::Sphere(s) => s.seed,
        }
    }

    /// The dataset of trial `trial`.
    pub fn generate(&self, trial: u64) -> Result<Dataset> {
        let seed = rng::derive_seed(self.seed(), trial);
        match self {
            ToyExperiment::Cube(s) => gen_cube_outlier(&CubeOutlierSpec { seed, ..s.clone() }),
            ToyExperiment::Sphere(s) => gen_sphere_origin(&SphereOriginSpec { seed, ..s.clone() }),
        }
    }

    /// Forest seed used in trial `trial`; shared by every config of the
    /// trial so that configs differing only in `alpha` score the same forest.
    pub fn detector_seed(&self, trial: u64) -> u64 {
        rng::derive_seed(self.seed() ^ DETECTOR_STREAM, trial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub alpha: Alpha,
    pub scorer: ScorerChoice,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub per_trial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub experiment: String,
    pub d: usize,
    pub trials: usize,
    pub configs: Vec<ConfigReport>,
}

impl TrialReport {
    pub fn mean_auc(&self, scorer: ScorerChoice, alpha: Alpha) -> Option<f64> {
        self.configs.iter().find(|c| c.scorer == scorer && c.alpha == alpha).map(|c| c.mean_auc)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// AUCROC of every config on one freshly generated dataset.
fn run_trial(experiment: &ToyExperiment, configs: &[DetectorConfig], trial: u64) -> Result<Vec<f64>> {
    let data = experiment.generate(trial)?;
    let labels = data.labels().expect("generators label their rows");
    let seed = experiment.detector_seed(trial);

    // configs that differ only in alpha share one fitted forest
    let mut fitted: Vec<Detector> = Vec::new();
    configs
        .iter()
        .map(|cfg| {
            let fit_cfg = DetectorConfig { seed, alpha: Alpha::ZERO, tau: None, contamination: None, ..cfg.clone() };
            let det = match fitted.iter().position(|d| d.config() == &fit_cfg) {
                Some(i) => &fitted[i],
                None => {
                    fitted.push(Detector::fit(&data, fit_cfg)?);
                    fitted.last().expect("just pushed")
                }
            };
            let scores: Vec<f64> = det.score_samples_with_alpha(&data, cfg.alpha)?.into_iter().map(|s| s.value()).collect();
            auc_roc(&scores, labels)
        })
        .collect()
}

/// Repeats `experiment` for `n_trials` independent datasets and reports the
/// AUCROC of each detector config. The `seed`, `tau` and `contamination`
/// fields of the configs are ignored.
pub fn run_trials(experiment: &ToyExperiment, configs: &[DetectorConfig], n_trials: usize) -> Result<TrialReport> {
    if n_trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if configs.is_empty() {
        return Err(Error::Config("need at least one detector config".into()));
    }
    let per_trial: Vec<Vec<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| run_trial(experiment, configs, t))
        .collect::<Result<_>>()?;

    let reports = configs
        .iter()
        .enumerate()
        .map(|(k, cfg)| {
            let aucs: Vec<f64> = per_trial.iter().map(|row| row[k]).collect();
            let (mean_auc, std_auc) = mean_std(&aucs);
            ConfigReport { alpha: cfg.alpha, scorer: cfg.scorer, mean_auc, std_auc, per_trial: aucs }
        })
        .collect();
    Ok(TrialReport { experiment: experiment.name().into(), d: experiment.d(), trials: n_trials, configs: reports })
}

/// Per-point per-tree scores sorted ascending, i.e. the most anomalous
/// votes first.
pub fn sorted_profiles(det: &Detector, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    Ok(det
        .score_vectors(data)?
        .into_iter()
        .map(|v| {
            let mut v = v.into_inner();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect())
}

/// Fractional ranks of `values`, largest first; ties share their average
/// rank.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[a][k]`: rank of algorithm `a` on dataset `k` (1 = best).
    pub ranks: Vec<Vec<Option<f64>>>,
    pub average_rank: Vec<Option<f64>>,
    pub mean_auc: Vec<Option<f64>>,
    /// True when an algorithm is missing a result on some dataset and its
    /// averages cover fewer datasets.
    pub incomplete: Vec<bool>,
}

/// Ranks algorithms per dataset by AUCROC (1 = best, ties averaged) and
/// averages the ranks over datasets. `auc[a][k]` is the result of algorithm
/// `a` on dataset `k`; missing entries are skipped and flagged.
pub fn rank_table(algorithms: &[String], datasets: &[String], auc: &[Vec<Option<f64>>]) -> Result<RankTable> {
    if algorithms.is_empty() || datasets.is_empty() || auc.iter().flatten().all(Option::is_none) {
        return Err(Error::EmptyResults);
    }
    if auc.len() != algorithms.len() {
        return Err(Error::LengthMismatch { left: algorithms.len(), right: auc.len() });
    }
    if let Some(row) = auc.iter().find(|r| r.len() != datasets.len()) {
        return Err(Error::LengthMismatch { left: datasets.len(), right: row.len() });
    }

    let mut ranks = vec![vec![None; datasets.len()]; algorithms.len()];
    for k in 0..datasets.len() {
        let present: Vec<(usize, f64)> = auc.iter().enumerate().filter_map(|(a, row)| row[k].map(|v| (a, v))).collect();
        let values: Vec<f64> = present.iter().map(|&(_, v)| v).collect();
        for (&(a, _), r) in present.iter().zip(descending_ranks(&values)) {
            ranks[a][k] = Some(r);
        }
    }

    let mean_of = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let average_rank = ranks.iter().map(|row| mean_of(row.iter().flatten().copied().collect())).collect();
    let mean_auc = auc.iter().map(|row| mean_of(row.iter().flatten().copied().collect())).collect();
    let incomplete = auc.iter().map(|row| row.iter().any(Option::is_none)).collect();
    Ok(RankTable {
        algorithms: algorithms.to_vec(),
        datasets: datasets.to_vec(),
        ranks,
        average_rank,
        mean_auc,
        incomplete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) pair counting.
    fn auc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn cube_generator() {
        let ds = gen_cube_outlier(&CubeOutlierSpec::new(1, 3)).unwrap();
        let above: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.row(i)[0] > 1.0).collect();
        assert_eq!(above, vec![ds.n_rows() - 1]);

        let ds = gen_cube_outlier(&CubeOutlierSpec::new(10, 3)).unwrap();
        assert_eq!(ds.n_rows(), 128);
        assert_eq!(ds.labels().unwrap().iter().filter(|&&l| l == 1).count(), 1);
        for i in 0..127 {
            assert!(ds.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let outlier = ds.row(127);
        let violations = outlier.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        assert_eq!(violations, 1);
        assert_eq!(ds, gen_cube_outlier(&CubeOutlierSpec::new(10, 3)).unwrap());
        assert_ne!(ds, gen_cube_outlier(&CubeOutlierSpec::new(10, 4)).unwrap());
        assert!(gen_cube_outlier(&CubeOutlierSpec { outlier_offset: 0.9, ..CubeOutlierSpec::new(2, 0) }).is_err());
    }

    #[test]
    fn sphere_generator() {
        let ds = gen_sphere_origin(&SphereOriginSpec { noise_sigma: 0.0, ..SphereOriginSpec::new(5, 1) }).unwrap();
        for i in 0..127 {
            let norm = ds.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let ds = gen_sphere_origin(&SphereOriginSpec::new(3, 1)).unwrap();
        assert_eq!(ds.n_rows(), 128);
        assert_eq!(ds.row(127), &[0.0, 0.0, 0.0]);
        assert_eq!(ds.labels().unwrap()[127], 1);
        assert!(gen_sphere_origin(&SphereOriginSpec::new(1, 1)).is_err());
    }

    #[test]
    fn sphere_outlier_is_screened_in_projections() {
        // in every 1-D projection the origin sits inside the inlier range
        let ds = gen_sphere_origin(&SphereOriginSpec::new(3, 9)).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..127).map(|i| ds.row(i)[j]).collect();
            let below = col.iter().filter(|&&v| v < 0.0).count();
            assert!(below > 20 && below < 107, "axis {j}: {below} inliers below 0");
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc_roc(&[0.3; 5], &[1, 0, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[1, 1]), Err(Error::DegenerateLabels)));
        assert!(matches!(auc_roc(&[0.1], &[1, 0]), Err(Error::LengthMismatch { .. })));
        assert!(auc_roc(&[0.1, 0.2], &[1, 2]).is_err());
    }

    #[test]
    fn rank_table_examples() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let t = rank_table(&names(&["a", "b", "c"]), &names(&["x"]), &[vec![Some(0.9)], vec![Some(0.8)], vec![Some(0.7)]])
            .unwrap();
        assert_eq!(t.average_rank, vec![Some(1.0), Some(2.0), Some(3.0)]);

        let t = rank_table(&names(&["a", "b"]), &names(&["x", "y"]), &[vec![Some(0.9), Some(0.6)], vec![Some(0.7), Some(0.8)]])
            .unwrap();
        assert_eq!(t.average_rank, vec![Some(1.5), Some(1.5)]);
        assert_eq!(t.mean_auc[0], Some(0.75));

        let t = rank_table(&names(&["a", "b", "c"]), &names(&["x"]), &[vec![Some(0.8)], vec![Some(0.8)], vec![Some(0.5)]])
            .unwrap();
        assert_eq!(t.ranks[0][0], Some(1.5));
        assert_eq!(t.ranks[1][0], Some(1.5));
        assert_eq!(t.ranks[2][0], Some(3.0));

        let t = rank_table(&names(&["a", "b"]), &names(&["x", "y"]), &[vec![Some(0.9), None], vec![Some(0.7), Some(0.8)]])
            .unwrap();
        assert_eq!(t.incomplete, vec![true, false]);
        assert_eq!(t.average_rank, vec![Some(1.0), Some(1.5)]);

        assert!(matches!(rank_table(&[], &names(&["x"]), &[]), Err(Error::EmptyResults)));
        assert!(matches!(rank_table(&names(&["a"]), &names(&["x"]), &[vec![None]]), Err(Error::EmptyResults)));
    }

    #[test]
    fn trials_are_reproducible() {
        let exp = ToyExperiment::Cube(CubeOutlierSpec::new(3, 5));
        let cfgs = [
            DetectorConfig { n_estimators: 20, ..Default::default() },
            DetectorConfig { n_estimators: 20, alpha: Alpha::Infinity, ..Default::default() },
        ];
        let a = run_trials(&exp, &cfgs, 1).unwrap();
        let b = run_trials(&exp, &cfgs, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.configs.len(), 2);
        assert_eq!(a.configs[0].std_auc, 0.0);
        let r = run_trials(&exp, &cfgs, 4).unwrap();
        for c in &r.configs {
            assert!((0.0..=1.0).contains(&c.mean_auc));
            assert!(c.std_auc >= 0.0);
            assert_eq!(c.per_trial.len(), 4);
        }
        assert!(run_trials(&exp, &cfgs, 0).is_err());
    }

    #[test]
    fn trial_report_json_shape() {
        let exp = ToyExperiment::Sphere(SphereOriginSpec::new(2, 1));
        let cfgs = [DetectorConfig { n_estimators: 5, alpha: Alpha::Infinity, scorer: ScorerChoice::Volume, ..Default::default() }];
        let r = run_trials(&exp, &cfgs, 2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["experiment"], "sphere");
        assert_eq!(v["d"], 2);
        assert_eq!(v["trials"], 2);
        assert_eq!(v["configs"][0]["alpha"], "inf");
        assert_eq!(v["configs"][0]["scorer"], "volume");
        assert_eq!(v["configs"][0]["per_trial"].as_array().unwrap().len(), 2);
        let back: TrialReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn outlier_profile_has_low_tail() {
        let data = gen_cube_outlier(&CubeOutlierSpec::new(10, 21)).unwrap();
        let det = Detector::fit(&data, DetectorConfig { seed: 2, ..Default::default() }).unwrap();
        let profiles = sorted_profiles(&det, &data).unwrap();
        // share of trees scoring the point below the inliers' typical low end
        let tail = |p: &Vec<f64>| p.iter().take_while(|&&v| v < 0.5).count();
        let outlier_tail = tail(&profiles[127]);
        let mut inlier_tails: Vec<usize> = profiles[..127].iter().map(tail).collect();
        inlier_tails.sort_unstable();
        assert!(outlier_tail > inlier_tails[inlier_tails.len() / 2], "{outlier_tail} vs {inlier_tails:?}");
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(
            raw in proptest::collection::vec((0u8..6, any::<bool>()), 2..40),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let fast = auc_roc(&scores, &labels).unwrap();
            prop_assert!((fast - auc_pairwise(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let a = auc_roc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert!((a - auc_roc(&transformed, &labels).unwrap()).abs() < 1e-12);
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            let mut distinct = scores.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() == scores.len() {
                prop_assert!((a + auc_roc(&negated, &labels).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
