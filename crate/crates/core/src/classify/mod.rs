//! Nearest-neighbour and median-template classification with a stratified,
//! replicated experiment harness.

mod metrics;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{
    confusion, confusion_with_classes, mean_confusion, metrics, write_confusion_csv, ConfusionMatrix, Metrics,
    MetricsReport,
};

use crate::distance::{prepared_distance, PreparedSeries, WarpConfig};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::series::{FieldSample, Series};
use crate::window::{crop_series_to_window, median_profile};

/// Above this many test x train pairs the harness stops caching distances.
const MAX_CACHED_PAIRS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    #[default]
    NearestNeighbor,
    MedianTemplate,
}

impl std::str::FromStr for ClassifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nearest_neighbor" | "nn" => Ok(Self::NearestNeighbor),
            "median_template" | "template" => Ok(Self::MedianTemplate),
            _ => Err(Error::Parameter(format!(
                "unknown classifier '{s}' (nearest_neighbor|median_template)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub warp: WarpConfig,
    pub train_year: i32,
    pub test_year: i32,
    pub samples_per_class: usize,
    pub replications: usize,
    pub seed: u64,
    pub mode: ClassifierMode,
    /// Restrict every series to `[o1, o2]` before classification.
    pub window: Option<(i32, i32)>,
}

impl ExperimentConfig {
    pub fn new(warp: WarpConfig, train_year: i32, test_year: i32) -> Self {
        Self {
            warp,
            train_year,
            test_year,
            samples_per_class: 5,
            replications: 100,
            seed: 0,
            mode: ClassifierMode::NearestNeighbor,
            window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.warp.validate()?;
        if self.samples_per_class == 0 || self.replications == 0 {
            return Err(Error::Parameter("samples per class and replications must be >= 1".into()));
        }
        if let Some((o1, o2)) = self.window {
            if o1 > o2 {
                return Err(Error::Parameter(format!("window [{o1}, {o2}] is reversed")));
            }
        }
        Ok(())
    }

    pub fn same_year(&self) -> bool {
        self.train_year == self.test_year
    }
}

/// Indices into the sampled dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    /// Labeled samples not drawn for training.
    pub test: Vec<usize>,
    /// Classes whose every sample went to training, leaving none to test.
    pub exhausted: Vec<String>,
}

fn class_members(dataset: &[FieldSample]) -> BTreeMap<&str, Vec<usize>> {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        if let Some(label) = &s.label {
            classes.entry(label).or_default().push(i);
        }
    }
    classes
}

/// Draws `k` training samples per class without replacement; unlabeled samples are ignored.
pub fn stratified_sample_with(dataset: &[FieldSample], k: usize, rng: &mut impl Rng) -> Result<Split> {
    let classes = class_members(dataset);
    if classes.is_empty() {
        return Err(Error::Empty("no labeled samples".into()));
    }
    let mut in_train = vec![false; dataset.len()];
    let mut exhausted = Vec::new();
    for (class, members) in &classes {
        if members.len() < k {
            return Err(Error::InsufficientSamples {
                class: class.to_string(),
                have: members.len(),
                need: k,
            });
        }
        for pick in index::sample(rng, members.len(), k) {
            in_train[members[pick]] = true;
        }
        if members.len() == k {
            exhausted.push(class.to_string());
        }
    }
    let labeled = |i: &usize| dataset[*i].label.is_some();
    let train = (0..dataset.len()).filter(|&i| in_train[i]).collect();
    let test = (0..dataset.len()).filter(|&i| !in_train[i]).filter(labeled).collect();
    Ok(Split { train, test, exhausted })
}

pub fn stratified_sample(dataset: &[FieldSample], k: usize, seed: u64) -> Result<Split> {
    stratified_sample_with(dataset, k, &mut rng_for(seed, 0))
}

/// Total order on candidates: distance, then label, then candidate id.
fn better(a: (f64, &str, usize), b: (f64, &str, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (a.1, a.2) < (b.1, b.2),
    }
}

/// Label of the finite-distance candidate that wins under [`better`].
fn pick<'a>(candidates: impl Iterator<Item = (f64, &'a str, usize)>) -> Result<&'a str> {
    let mut best: Option<(f64, &str, usize)> = None;
    for c in candidates.filter(|c| c.0.is_finite()) {
        if best.is_none_or(|b| better(c, b)) {
            best = Some(c);
        }
    }
    best.map(|b| b.1).ok_or(Error::Unclassifiable)
}

/// Distance with a blocked warping corridor read as `+inf`.
fn dist_or_inf(a: &PreparedSeries, b: &PreparedSeries, cfg: &WarpConfig) -> Result<f64> {
    match prepared_distance(a, b, cfg) {
        Err(Error::NoPath) => Ok(f64::INFINITY),
        other => other,
    }
}

fn label_of(sample: &FieldSample) -> Result<&str> {
    sample
        .label
        .as_deref()
        .ok_or_else(|| Error::Parameter(format!("training sample {} has no label", sample.field_id)))
}

/// 1-NN label. Ties go to the lexicographically smaller label, then the earlier sample.
pub fn nn_classify(test: &Series, train: &[FieldSample], cfg: &WarpConfig) -> Result<String> {
    if train.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    let t = PreparedSeries::new(test, cfg)?;
    let scored = train
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((dist_or_inf(&t, &PreparedSeries::new(&s.series, cfg)?, cfg)?, label_of(s)?, i)))
        .collect::<Result<Vec<_>>>()?;
    pick(scored.into_iter()).map(str::to_string)
}

/// Label of the nearest class template.
pub fn template_classify(test: &Series, templates: &BTreeMap<String, Series>, cfg: &WarpConfig) -> Result<String> {
    if templates.is_empty() {
        return Err(Error::Empty("no templates".into()));
    }
    let t = PreparedSeries::new(test, cfg)?;
    let scored = templates
        .iter()
        .enumerate()
        .map(|(i, (label, s))| Ok((dist_or_inf(&t, &PreparedSeries::new(s, cfg)?, cfg)?, label.as_str(), i)))
        .collect::<Result<Vec<_>>>()?;
    pick(scored.into_iter()).map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub distance: f64,
}

/// 1-NN over many test series, evaluated in parallel.
pub fn classify_batch(test: &[Series], train: &[FieldSample], cfg: &WarpConfig) -> Result<Vec<Prediction>> {
    if train.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    let prepared = train
        .iter()
        .map(|s| Ok((PreparedSeries::new(&s.series, cfg)?, label_of(s)?)))
        .collect::<Result<Vec<_>>>()?;
    test.par_iter()
        .map(|t| {
            let t = PreparedSeries::new(t, cfg)?;
            let scored = prepared
                .iter()
                .enumerate()
                .map(|(i, (p, label))| Ok((dist_or_inf(&t, p, cfg)?, *label, i)))
                .collect::<Result<Vec<_>>>()?;
            let label = pick(scored.iter().copied())?;
            let distance = scored
                .iter()
                .filter(|c| c.1 == label)
                .map(|c| c.0)
                .fold(f64::INFINITY, f64::min);
            Ok(Prediction {
                label: label.to_string(),
                distance,
            })
        })
        .collect()
}

/// Per-class median of the given samples.
pub fn class_templates(samples: &[&FieldSample]) -> Result<BTreeMap<String, Series>> {
    let mut groups: BTreeMap<String, Vec<&Series>> = BTreeMap::new();
    for s in samples {
        groups.entry(label_of(s)?.to_string()).or_default().push(&s.series);
    }
    groups
        .into_iter()
        .map(|(label, members)| Ok((label, median_profile(&members)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub classes: Vec<String>,
    pub metrics: MetricsReport,
    /// Element-wise mean of the per-replication confusion matrices.
    pub mean_confusion: Vec<Vec<f64>>,
    /// Number of test samples in each replication.
    pub test_sizes: Vec<usize>,
    pub series_length: usize,
    pub warnings: Vec<String>,
}

struct Pool {
    samples: Vec<FieldSample>,
    prepared: Vec<PreparedSeries>,
}

impl Pool {
    fn new(dataset: &[FieldSample], year: i32, cfg: &ExperimentConfig) -> Result<Self> {
        let samples = dataset
            .iter()
            .filter(|s| s.year == year && s.label.is_some())
            .map(|s| {
                let series = match cfg.window {
                    Some(w) => crop_series_to_window(&s.series, w)?,
                    None => s.series.clone(),
                };
                Ok(FieldSample { series, ..s.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::Empty(format!("no labeled samples for year {year}")));
        }
        let prepared = samples
            .par_iter()
            .map(|s| PreparedSeries::new(&s.series, &cfg.warp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples, prepared })
    }

    fn label(&self, i: usize) -> &str {
        self.samples[i].label.as_deref().expect("pool holds labeled samples")
    }
}

/// Row-major `test x train` distances.
struct DistanceCache {
    cols: usize,
    data: Vec<f64>,
}

fn cache_distances(test: &Pool, train: &Pool, cfg: &WarpConfig) -> Result<DistanceCache> {
    let cols = train.prepared.len();
    let rows = test
        .prepared
        .par_iter()
        .map(|t| train.prepared.iter().map(|c| dist_or_inf(t, c, cfg)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceCache {
        cols,
        data: rows.concat(),
    })
}

/// Runs `cfg.replications` stratified train/test draws and averages their metrics.
///
/// Same-year runs (train year == test year) test on the samples not drawn for training;
/// cross-year runs test on every labeled sample of the test year. Results do not depend
/// on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &[FieldSample]) -> Result<ExperimentReport> {
    cfg.validate()?;
    let train = Pool::new(dataset, cfg.train_year, cfg)?;
    let other;
    let test = if cfg.same_year() {
        &train
    } else {
        other = Pool::new(dataset, cfg.test_year, cfg)?;
        &other
    };
    let series_length = train.samples[0].series.len();
    let classes: Vec<String> = {
        let mut c: Vec<String> = train
            .samples
            .iter()
            .chain(&test.samples)
            .filter_map(|s| s.label.clone())
            .collect();
        c.sort();
        c.dedup();
        c
    };
    let cache = match cfg.mode {
        ClassifierMode::NearestNeighbor if test.samples.len().saturating_mul(train.samples.len()) <= MAX_CACHED_PAIRS => {
            Some(cache_distances(test, &train, &cfg.warp)?)
        }
        _ => None,
    };

    let outcomes = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| replicate(cfg, rep, &train, test, cache.as_ref(), &classes))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings: Vec<String> = outcomes.iter().flat_map(|o| o.exhausted.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();
    let warnings = warnings
        .into_iter()
        .map(|c| format!("class '{c}' has no same-year test samples left after training draw"))
        .collect();
    let test_sizes = outcomes.iter().map(|o| o.confusion.total() as usize).collect();
    let matrices: Vec<ConfusionMatrix> = outcomes.iter().map(|o| o.confusion.clone()).collect();
    let per_replication = matrices.iter().map(metrics).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        classes,
        metrics: MetricsReport::from_replications(per_replication)?,
        mean_confusion: mean_confusion(&matrices)?,
        test_sizes,
        series_length,
        warnings,
    })
}

struct Outcome {
    confusion: ConfusionMatrix,
    exhausted: Vec<String>,
}

fn replicate(
    cfg: &ExperimentConfig,
    rep: usize,
    train: &Pool,
    test: &Pool,
    cache: Option<&DistanceCache>,
    classes: &[String],
) -> Result<Outcome> {
    let mut rng = rng_for(cfg.seed, rep as u64);
    let split = stratified_sample_with(&train.samples, cfg.samples_per_class, &mut rng)?;
    let test_idx: Vec<usize> = if cfg.same_year() {
        split.test.clone()
    } else {
        (0..test.samples.len()).collect()
    };
    if test_idx.is_empty() {
        return Err(Error::Empty(format!("replication {rep} has no test samples")));
    }

    let predictions = match cfg.mode {
        ClassifierMode::NearestNeighbor => test_idx
            .iter()
            .map(|&t| {
                let candidates = split.train.iter().map(|&c| {
                    let d = match cache {
                        Some(m) => Ok(m.data[t * m.cols + c]),
                        None => dist_or_inf(&test.prepared[t], &train.prepared[c], &cfg.warp),
                    };
                    d.map(|d| (d, train.label(c), c))
                });
                pick(candidates.collect::<Result<Vec<_>>>()?.into_iter()).map(str::to_string)
            })
            .collect::<Result<Vec<_>>>()?,
        ClassifierMode::MedianTemplate => {
            let members: Vec<&FieldSample> = split.train.iter().map(|&i| &train.samples[i]).collect();
            let templates = class_templates(&members)?
                .into_iter()
                .map(|(label, s)| Ok((label, PreparedSeries::new(&s, &cfg.warp)?)))
                .collect::<Result<Vec<_>>>()?;
            test_idx
                .iter()
                .map(|&t| {
                    let scored = templates
                        .iter()
                        .enumerate()
                        .map(|(i, (label, p))| Ok((dist_or_inf(&test.prepared[t], p, &cfg.warp)?, label.as_str(), i)))
                        .collect::<Result<Vec<_>>>()?;
                    pick(scored.into_iter()).map(str::to_string)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let observed: Vec<&str> = test_idx.iter().map(|&t| test.label(t)).collect();
    Ok(Outcome {
        confusion: confusion_with_classes(classes.to_vec(), &predictions, &observed)?,
        exhausted: split.exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::Measure;

    fn constant(id: &str, label: &str, year: i32, v: f64) -> FieldSample {
        FieldSample::new(id, year, Some(label.into()), Series::from_values(0, vec![v, v + 0.01, v, v + 0.02]))
    }

    fn dataset(per_class: usize, year: i32) -> Vec<FieldSample> {
        (0..per_class)
            .flat_map(|i| {
                let eps = i as f64 * 1e-3;
                [
                    constant(&format!("a{i}"), "a", year, 0.2 + eps),
                    constant(&format!("b{i}"), "b", year, 0.8 + eps),
                ]
            })
            .collect()
    }

    #[test]
    fn stratified_examples() {
        let mut data = dataset(100, 1);
        data.extend((100..200).map(|i| constant(&format!("b{i}"), "b", 1, 0.8)));
        let split = stratified_sample(&data, 5, 42).unwrap();
        let count = |idx: &[usize], label: &str| idx.iter().filter(|&&i| data[i].label.as_deref() == Some(label)).count();
        assert_eq!((count(&split.train, "a"), count(&split.train, "b")), (5, 5));
        assert!(split.train.iter().all(|i| !split.test.contains(i)));
        assert_eq!(split.train.len() + split.test.len(), data.len());
        assert_eq!(split, stratified_sample(&data, 5, 42).unwrap());

        let small = dataset(3, 1);
        let split = stratified_sample(&small, 3, 1).unwrap();
        assert!(split.test.is_empty());
        assert_eq!(split.exhausted, vec!["a", "b"]);
        assert!(matches!(
            stratified_sample(&small, 4, 1),
            Err(Error::InsufficientSamples { need: 4, .. })
        ));
    }

    #[test]
    fn nn_examples() {
        let cfg = WarpConfig::with_measure(Measure::Dtw);
        let train = dataset(3, 1);
        assert_eq!(nn_classify(&train[4].series, &train, &cfg).unwrap(), "a");
        assert_eq!(nn_classify(&train[1].series, &train[..2], &cfg).unwrap(), "b");
        let lone = vec![constant("x", "z", 1, 0.9)];
        assert_eq!(nn_classify(&train[0].series, &lone, &cfg).unwrap(), "z");

        let flat = |id: &str, label: &str, v: f64| FieldSample::new(id, 1, Some(label.into()), Series::from_values(0, vec![v; 4]));
        let tie = vec![flat("1", "b", 0.75), flat("2", "a", 0.25)];
        let mid = Series::from_values(0, vec![0.5; 4]);
        assert_eq!(nn_classify(&mid, &tie, &cfg).unwrap(), "a");
        assert!(nn_classify(&mid, &[], &cfg).is_err());
    }

    #[test]
    fn blocked_band_is_unclassifiable() {
        let cfg = WarpConfig {
            band_days: 2.0,
            ..WarpConfig::with_measure(Measure::Dtw)
        };
        let train = vec![FieldSample::new("f", 1, Some("a".into()), Series::from_values(100, vec![0.1; 4]))];
        let test = Series::from_values(0, vec![0.1; 4]);
        assert!(matches!(nn_classify(&test, &train, &cfg), Err(Error::Unclassifiable)));
    }

    #[test]
    fn template_examples() {
        let cfg = WarpConfig::default();
        let mut templates = BTreeMap::new();
        templates.insert("b".to_string(), Series::from_values(0, vec![0.1, 0.5, 0.9, 0.4]));
        templates.insert("a".to_string(), Series::from_values(0, vec![0.9, 0.2, 0.3, 0.8]));
        for (label, s) in &templates {
            assert_eq!(&template_classify(s, &templates, &cfg).unwrap(), label);
        }
        let dtw = WarpConfig::with_measure(Measure::Dtw);
        let mut flat = BTreeMap::new();
        flat.insert("y".to_string(), Series::from_values(0, vec![0.75; 3]));
        flat.insert("x".to_string(), Series::from_values(0, vec![0.25; 3]));
        let mid = Series::from_values(0, vec![0.5; 3]);
        assert_eq!(template_classify(&mid, &flat, &dtw).unwrap(), "x");
    }

    #[test]
    fn separated_constants_are_perfect() {
        let data = dataset(10, 1);
        let mut cfg = ExperimentConfig::new(WarpConfig::with_measure(Measure::Dtw), 1, 1);
        cfg.samples_per_class = 9;
        cfg.replications = 1;
        let report = run_experiment(&cfg, &data).unwrap();
        assert_eq!(report.metrics.overall_accuracy, 1.0);
        assert_eq!(report.test_sizes, vec![2]);
    }

    #[test]
    fn experiment_is_deterministic_and_sized() {
        let mut data = dataset(12, 1);
        data.extend(dataset(12, 2));
        for mode in [ClassifierMode::NearestNeighbor, ClassifierMode::MedianTemplate] {
            let mut cfg = ExperimentConfig::new(WarpConfig::default(), 1, 2);
            cfg.replications = 7;
            cfg.samples_per_class = 3;
            cfg.seed = 99;
            cfg.mode = mode;
            let a = run_experiment(&cfg, &data).unwrap();
            assert_eq!(a, run_experiment(&cfg, &data).unwrap());
            assert!(a.test_sizes.iter().all(|&n| n == 24));
            cfg.test_year = 1;
            let same = run_experiment(&cfg, &data).unwrap();
            assert!(same.test_sizes.iter().all(|&n| n == 18));
        }
    }

    #[test]
    fn uncached_path_agrees_with_cache() {
        let mut data = dataset(6, 1);
        data.extend(dataset(6, 2));
        let mut cfg = ExperimentConfig::new(WarpConfig::default(), 1, 2);
        cfg.replications = 4;
        cfg.samples_per_class = 2;
        let train = Pool::new(&data, 1, &cfg).unwrap();
        let test = Pool::new(&data, 2, &cfg).unwrap();
        let cache = cache_distances(&test, &train, &cfg.warp).unwrap();
        let classes = vec!["a".to_string(), "b".to_string()];
        for rep in 0..cfg.replications {
            let with = replicate(&cfg, rep, &train, &test, Some(&cache), &classes).unwrap();
            let without = replicate(&cfg, rep, &train, &test, None, &classes).unwrap();
            assert_eq!(with.confusion, without.confusion);
        }
    }

    #[test]
    fn batch_matches_single() {
        let train = dataset(4, 1);
        let tests: Vec<Series> = dataset(3, 2).into_iter().map(|s| s.series).collect();
        let cfg = WarpConfig::default();
        let batch = classify_batch(&tests, &train, &cfg).unwrap();
        for (t, p) in tests.iter().zip(&batch) {
            assert_eq!(p.label, nn_classify(t, &train, &cfg).unwrap());
            assert!(p.distance.is_finite());
        }
    }

    #[test]
    fn classifier_mode_parsing() {
        assert_eq!("nearest-neighbor".parse::<ClassifierMode>().unwrap(), ClassifierMode::NearestNeighbor);
        assert_eq!("median_template".parse::<ClassifierMode>().unwrap(), ClassifierMode::MedianTemplate);
        assert!("forest".parse::<ClassifierMode>().is_err());
    }
}
