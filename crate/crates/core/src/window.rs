//! Discriminative time-window selection between crop classes.
//!
//! For a pair of class median profiles the pivot day is where their values differ most.
//! DTW scores of the two profiles restricted to `[pivot, J]` (or `[J, pivot]`) are then
//! computed for every day `J` on each side. Each boundary of the window is the first day,
//! scanning outward, after which the smoothed score curve stops changing: its forward
//! first and second differences stay within tolerance for a few consecutive samples.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distance::{dtw, Measure, WarpConfig};
use crate::error::{Error, Result};
use crate::ingest::median_in_place;
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiClassPolicy {
    /// Shortest pairwise window.
    #[default]
    MinLength,
    /// Smallest interval containing every pairwise window.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub multiclass: MultiClassPolicy,
    /// First-difference tolerance, as a fraction of the score range.
    pub eps1: f64,
    /// Second-difference tolerance, as a fraction of the score range.
    pub eps2: f64,
    /// Centered moving-average width applied to each score curve (1 disables smoothing).
    pub smoothing_width: usize,
    /// Number of consecutive samples that must satisfy both tolerances.
    pub stability_run: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            multiclass: MultiClassPolicy::MinLength,
            eps1: 1e-3,
            eps2: 1e-3,
            smoothing_width: 3,
            stability_run: 3,
        }
    }
}

impl WindowPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::Parameter("window epsilons must be > 0".into()));
        }
        if self.smoothing_width == 0 || self.stability_run == 0 {
            return Err(Error::Parameter("smoothing width and stability run must be >= 1".into()));
        }
        Ok(())
    }
}

fn same_grid(a: &Series, b: &Series) -> Result<()> {
    if a.days() != b.days() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Pointwise median of series sharing one day grid.
pub fn median_profile(samples: &[&Series]) -> Result<Series> {
    let first = samples.first().ok_or_else(|| Error::Empty("class has no samples".into()))?;
    for s in samples {
        same_grid(first, s)?;
    }
    let mut column = Vec::with_capacity(samples.len());
    let values = (0..first.len())
        .map(|k| {
            column.clear();
            column.extend(samples.iter().map(|s| s.values()[k]));
            median_in_place(&mut column)
        })
        .collect();
    Series::clear(first.days().to_vec(), values)
}

/// Grid day of maximum absolute difference; the earliest wins ties.
pub fn pivot_day(a: &Series, b: &Series) -> Result<i32> {
    same_grid(a, b)?;
    let mut best: Option<(usize, f64)> = None;
    for (k, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        let gap = (x - y).abs();
        if best.is_none_or(|(_, g)| gap > g) {
            best = Some((k, gap));
        }
    }
    let (k, _) = best.ok_or_else(|| Error::Empty("profiles".into()))?;
    Ok(a.days()[k])
}

/// Score curves on both sides of the pivot. Index 0 of each side is the pivot itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionScores {
    pub pivot: i32,
    /// `(day, score)` moving toward earlier days.
    pub left: Vec<(i32, f64)>,
    /// `(day, score)` moving toward later days.
    pub right: Vec<(i32, f64)>,
}

fn slice(s: &Series, lo: usize, hi: usize) -> Series {
    Series::new(
        s.days()[lo..=hi].to_vec(),
        s.values()[lo..=hi].to_vec(),
        s.flags()[lo..=hi].to_vec(),
    )
    .expect("a slice of a valid series is valid")
}

pub fn expansion_scores(a: &Series, b: &Series, pivot: i32, cfg: &WarpConfig) -> Result<ExpansionScores> {
    same_grid(a, b)?;
    let p = a
        .days()
        .iter()
        .position(|&d| d == pivot)
        .ok_or_else(|| Error::Parameter(format!("pivot {pivot} is not a grid day")))?;
    let cfg = WarpConfig {
        measure: Measure::Dtw,
        ..*cfg
    };
    let score = |lo: usize, hi: usize| dtw(&slice(a, lo, hi), &slice(b, lo, hi), &cfg);
    let left = (0..=p)
        .rev()
        .map(|lo| Ok((a.days()[lo], score(lo, p)?)))
        .collect::<Result<Vec<_>>>()?;
    let right = (p..a.len())
        .map(|hi| Ok((a.days()[hi], score(p, hi)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpansionScores { pivot, left, right })
}

fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Index of the first stable sample on one side, or `None` when the curve never settles.
fn plateau_start(curve: &[f64], eps1: f64, eps2: f64, run: usize) -> Option<usize> {
    let n = curve.len();
    let stable = |k: usize| {
        let d1 = curve[k + 1] - curve[k];
        let d2 = curve[k + 2] - 2.0 * curve[k + 1] + curve[k];
        d1.abs() < eps1 && d2.abs() < eps2
    };
    (0..n.saturating_sub(2)).find(|&k| (k..k + run).take_while(|&j| j + 2 < n).all(stable))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    pub o1: i32,
    pub o2: i32,
    /// A side whose score curve never settled; that boundary fell back to the grid edge.
    pub no_plateau: bool,
}

impl WindowSelection {
    pub fn len_days(&self) -> i32 {
        self.o2 - self.o1
    }
}

pub fn optimal_window(scores: &ExpansionScores, policy: &WindowPolicy) -> Result<WindowSelection> {
    policy.validate()?;
    if scores.left.is_empty() || scores.right.is_empty() {
        return Err(Error::Empty("score curve".into()));
    }
    let smooth = |side: &[(i32, f64)]| {
        let v: Vec<f64> = side.iter().map(|&(_, s)| s).collect();
        moving_average(&v, policy.smoothing_width)
    };
    let left = smooth(&scores.left);
    let right = smooth(&scores.right);
    let (lo, hi) = left
        .iter()
        .chain(&right)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range == 0.0 {
        return Ok(WindowSelection {
            o1: scores.pivot,
            o2: scores.pivot,
            no_plateau: false,
        });
    }
    let (eps1, eps2) = (policy.eps1 * range, policy.eps2 * range);
    let mut no_plateau = false;
    let mut boundary = |curve: &[f64], side: &[(i32, f64)]| {
        match plateau_start(curve, eps1, eps2, policy.stability_run) {
            Some(k) => side[k].0,
            None => {
                no_plateau |= curve.len() >= 3;
                side[side.len() - 1].0
            }
        }
    };
    let o1 = boundary(&left, &scores.left);
    let o2 = boundary(&right, &scores.right);
    Ok(WindowSelection { o1, o2, no_plateau })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWindow {
    pub classes: (String, String),
    pub pivot: i32,
    pub selection: WindowSelection,
    pub scores: ExpansionScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    /// Pivot of the shortest pairwise window.
    pub pivot: i32,
    pub window: (i32, i32),
    pub policy: MultiClassPolicy,
    pub per_pair: Vec<PairWindow>,
}

/// Windows for every class pair (in label order) combined under the policy.
pub fn multiclass_window(
    profiles: &BTreeMap<String, Series>,
    cfg: &WarpConfig,
    policy: &WindowPolicy,
) -> Result<WindowResult> {
    if profiles.len() < 2 {
        return Err(Error::Empty(format!(
            "window selection needs at least 2 classes, got {}",
            profiles.len()
        )));
    }
    let names: Vec<&String> = profiles.keys().collect();
    let mut per_pair = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (pa, pb) = (&profiles[*a], &profiles[*b]);
            let pivot = pivot_day(pa, pb)?;
            let scores = expansion_scores(pa, pb, pivot, cfg)?;
            let selection = optimal_window(&scores, policy)?;
            per_pair.push(PairWindow {
                classes: ((*a).clone(), (*b).clone()),
                pivot,
                selection,
                scores,
            });
        }
    }
    Ok(combine(per_pair, policy.multiclass))
}

fn combine(per_pair: Vec<PairWindow>, policy: MultiClassPolicy) -> WindowResult {
    let shortest = per_pair
        .iter()
        .enumerate()
        .min_by_key(|(k, p)| (p.selection.len_days(), *k))
        .map(|(_, p)| p)
        .expect("at least one pair");
    let window = match policy {
        MultiClassPolicy::MinLength => (shortest.selection.o1, shortest.selection.o2),
        MultiClassPolicy::Union => per_pair.iter().fold((i32::MAX, i32::MIN), |(lo, hi), p| {
            (lo.min(p.selection.o1), hi.max(p.selection.o2))
        }),
    };
    WindowResult {
        pivot: shortest.pivot,
        window,
        policy,
        per_pair,
    }
}

/// Samples whose day lies in `[o1, o2]`.
pub fn crop_series_to_window(series: &Series, window: (i32, i32)) -> Result<Series> {
    let (o1, o2) = window;
    let lo = series.days().partition_point(|&d| d < o1);
    let hi = series.days().partition_point(|&d| d <= o2);
    if o1 > o2 || lo >= hi {
        return Err(Error::Empty(format!("window [{o1}, {o2}] selects no samples")));
    }
    Ok(slice(series, lo, hi - 1))
}

/// Writes `day,score_left,score_right`; cells off a side are empty.
pub fn write_score_curve<W: Write>(writer: W, scores: &ExpansionScores) -> Result<()> {
    let mut rows: BTreeMap<i32, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for &(d, s) in &scores.left {
        rows.entry(d).or_default().0 = Some(s);
    }
    for &(d, s) in &scores.right {
        rows.entry(d).or_default().1 = Some(s);
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "score_left", "score_right"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (d, (l, r)) in rows {
        w.write_record([d.to_string(), cell(l), cell(r)])?;
    }
    w.flush()?;
    Ok(())
}
