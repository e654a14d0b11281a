//! Gap filling, smoothing and resampling onto a common multi-year grid.
//!
//! The dataset pipeline runs fill, then smooth, then resample for every field.

mod savgol;
mod sigmoid;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use savgol::savitzky_golay;
pub use sigmoid::{eval_double_sigmoid, fit_double_sigmoid, SigmoidFit, SigmoidParams};

use crate::error::{Error, Result};
use crate::series::{FieldSample, QualityFlag, Series, TimeGrid};

/// Replaces every non-clear value by inverse-day-distance weighting of the nearest clear
/// sample on each side. With a clear neighbour on one side only, that value is copied.
pub fn fill_cloud_gaps_idw(series: &Series) -> Result<Series> {
    let days = series.days();
    let values = series.values();
    let clear: Vec<usize> = (0..series.len()).filter(|&i| series.flags()[i].is_clear()).collect();
    if clear.is_empty() {
        return Err(Error::Unfillable);
    }
    let mut out = values.to_vec();
    for i in 0..series.len() {
        if series.flags()[i].is_clear() {
            continue;
        }
        // First clear index after i.
        let k = clear.partition_point(|&c| c < i);
        let left = k.checked_sub(1).map(|k| clear[k]);
        let right = clear.get(k).copied();
        out[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let wl = 1.0 / (days[i] - days[l]) as f64;
                let wr = 1.0 / (days[r] - days[i]) as f64;
                (values[l] * wl + values[r] * wr) / (wl + wr)
            }
            (Some(l), None) => values[l],
            (None, Some(r)) => values[r],
            (None, None) => unreachable!("at least one clear sample exists"),
        };
    }
    Series::new(days.to_vec(), out, vec![QualityFlag::Clear; series.len()])
}

/// Intersection of per-year acquisition spans: `t_l` is the latest first day, `t_u` the
/// earliest last day.
pub fn common_grid(calendars: &[Vec<i32>], step: i32) -> Result<TimeGrid> {
    if calendars.is_empty() {
        return Err(Error::Empty("no calendars".into()));
    }
    let mut t_l = i32::MIN;
    let mut t_u = i32::MAX;
    for cal in calendars {
        if cal.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: cal.len(),
            });
        }
        t_l = t_l.max(*cal.iter().min().unwrap());
        t_u = t_u.min(*cal.iter().max().unwrap());
    }
    if t_l >= t_u {
        return Err(Error::EmptyIntersection { t_l, t_u });
    }
    TimeGrid::new(t_l, t_u, step)
}

/// Linear interpolation at day `t` (which must lie within the series span).
pub(crate) fn interpolate_at(days: &[i32], values: &[f64], t: f64) -> Option<f64> {
    let first = *days.first()? as f64;
    let last = *days.last()? as f64;
    if t < first || t > last {
        return None;
    }
    let k = days.partition_point(|&d| (d as f64) < t);
    if days[k] as f64 == t {
        return Some(values[k]);
    }
    let (d0, d1) = (days[k - 1] as f64, days[k] as f64);
    let w = (t - d0) / (d1 - d0);
    Some((1.0 - w) * values[k - 1] + w * values[k])
}

pub fn resample_linear(series: &Series, grid: &TimeGrid) -> Result<Series> {
    let (first, last) = match (series.first_day(), series.last_day()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Coverage("empty series".into())),
    };
    if first > grid.t_l || last < grid.t_u {
        return Err(Error::Coverage(format!(
            "series spans [{first}, {last}] but the grid needs [{}, {}]",
            grid.t_l, grid.t_u
        )));
    }
    let days = series.days();
    let flags = series.flags();
    let grid_days = grid.days();
    let mut values = Vec::with_capacity(grid_days.len());
    let mut out_flags = Vec::with_capacity(grid_days.len());
    for &t in &grid_days {
        let k = days.partition_point(|&d| d < t);
        let flag = if days[k] == t {
            flags[k]
        } else if !flags[k - 1].is_clear() {
            flags[k - 1]
        } else {
            flags[k]
        };
        values.push(interpolate_at(days, series.values(), t as f64).expect("coverage checked"));
        out_flags.push(flag);
    }
    Series::new(grid_days, values, out_flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Smoothing {
    SavitzkyGolay { window: usize, order: usize },
    DoubleSigmoid,
    None,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::SavitzkyGolay { window: 5, order: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub smoothing: Smoothing,
    pub step: i32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            smoothing: Smoothing::default(),
            step: 1,
        }
    }
}

pub fn smooth(series: &Series, smoothing: Smoothing) -> Result<(Series, bool)> {
    match smoothing {
        Smoothing::SavitzkyGolay { window, order } => Ok((savitzky_golay(series, window, order)?, false)),
        Smoothing::DoubleSigmoid => {
            let fit = fit_double_sigmoid(series)?;
            let values = series.days().iter().map(|&d| fit.params.value_at(d as f64)).collect();
            Ok((series.with_values(values)?, fit.degraded))
        }
        Smoothing::None => Ok((series.clone(), false)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedField {
    pub field_id: String,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub grid: TimeGrid,
    pub fields_in: usize,
    pub fields_out: usize,
    pub filled_gaps: usize,
    pub degraded_fits: usize,
    pub dropped: Vec<DroppedField>,
}

/// Runs fill, smooth and resample for a whole dataset (possibly several years).
///
/// Fields that cannot be filled or smoothed are dropped and listed in the report;
/// an empty calendar intersection is a hard error.
pub fn preprocess_dataset(samples: &[FieldSample], cfg: &PipelineConfig) -> Result<(Vec<FieldSample>, PreprocessReport)> {
    let staged: Vec<Result<(FieldSample, usize, bool)>> = samples
        .par_iter()
        .map(|s| {
            let gaps = s.series.count_non_clear();
            let filled = fill_cloud_gaps_idw(&s.series)?;
            let (smoothed, degraded) = smooth(&filled, cfg.smoothing)?;
            Ok((FieldSample { series: smoothed, ..s.clone() }, gaps, degraded))
        })
        .collect();

    let mut kept = Vec::with_capacity(samples.len());
    let mut dropped = Vec::new();
    let mut filled_gaps = 0;
    let mut degraded_fits = 0;
    for (s, r) in samples.iter().zip(staged) {
        match r {
            Ok((sample, gaps, degraded)) => {
                filled_gaps += gaps;
                degraded_fits += degraded as usize;
                kept.push(sample);
            }
            Err(e) => dropped.push(DroppedField {
                field_id: s.field_id.clone(),
                year: s.year,
                reason: e.to_string(),
            }),
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no field survived gap filling and smoothing".into()));
    }

    // Per-year span every field covers, then the intersection across years.
    let mut spans: BTreeMap<i32, (i32, i32)> = BTreeMap::new();
    for s in &kept {
        let (f, l) = (s.series.first_day().unwrap(), s.series.last_day().unwrap());
        let e = spans.entry(s.year).or_insert((f, l));
        e.0 = e.0.max(f);
        e.1 = e.1.min(l);
    }
    let calendars: Vec<Vec<i32>> = spans.values().map(|&(f, l)| vec![f, l]).collect();
    let grid = common_grid(&calendars, cfg.step)?;

    let out: Vec<FieldSample> = kept
        .par_iter()
        .map(|s| {
            Ok(FieldSample {
                series: resample_linear(&s.series, &grid)?,
                ..s.clone()
            })
        })
        .collect::<Result<_>>()?;
    let report = PreprocessReport {
        grid,
        fields_in: samples.len(),
        fields_out: out.len(),
        filled_gaps,
        degraded_fits,
        dropped,
    };
    Ok((out, report))
}
