//! Elastic and angular distances between vegetation-index series.
//!
//! * [`sam`]: spectral angle between the full value vectors.
//! * [`dtw`]: dynamic time warping over absolute value differences.
//! * [`twdtw`]: DTW plus a logistic penalty on the day difference of each matched pair.
//! * [`vdtw`]: DTW whose local cost is the angle between unit vectors built from
//!   consecutive value pairs. Because every vector is normalized, multiplying a series by
//!   a positive gain leaves every local cost, and therefore the distance, unchanged.
//!
//! All warping measures share the same symmetric step pattern and a day band: cells whose
//! acquisition days differ by more than `band_days` are excluded.

mod dp;
mod vector;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dp::{accumulate, Matrix};
pub use vector::{angle_between, pair_vectors, PairVector, VectorMode};

use crate::error::{Error, Result};
use crate::series::Series;
use dp::{accumulated_matrix, band_ranges, warp_banded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Sam,
    Dtw,
    Twdtw,
    Vdtw,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Sam, Measure::Dtw, Measure::Twdtw, Measure::Vdtw];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Sam => "sam",
            Measure::Dtw => "dtw",
            Measure::Twdtw => "twdtw",
            Measure::Vdtw => "vdtw",
        }
    }

    /// Minimum series length the measure accepts.
    pub fn min_len(self) -> usize {
        match self {
            Measure::Vdtw => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| format!("unknown measure `{s}` (expected sam, dtw, twdtw or vdtw)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub measure: Measure,
    /// Half-width of the warping band in days. `f64::INFINITY` disables the band.
    pub band_days: f64,
    /// TWDTW logistic steepness, per day.
    pub twdtw_alpha: f64,
    /// TWDTW logistic midpoint, in days.
    pub twdtw_beta: f64,
    pub zero_vector_eps: f64,
    pub vector_mode: VectorMode,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            measure: Measure::Vdtw,
            band_days: 15.0,
            twdtw_alpha: 0.1,
            twdtw_beta: 50.0,
            zero_vector_eps: 1e-12,
            vector_mode: VectorMode::Pair,
        }
    }
}

impl WarpConfig {
    pub fn with_measure(measure: Measure) -> Self {
        Self {
            measure,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_days.is_nan() || self.band_days < 0.0 {
            return Err(Error::Parameter(format!("band_days must be >= 0, got {}", self.band_days)));
        }
        if self.twdtw_alpha.is_nan() || self.twdtw_alpha <= 0.0 || !self.twdtw_beta.is_finite() {
            return Err(Error::Parameter("twdtw_alpha must be > 0 and twdtw_beta finite".into()));
        }
        if self.zero_vector_eps.is_nan() || self.zero_vector_eps <= 0.0 {
            return Err(Error::Parameter("zero_vector_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Logistic time-difference weight `1 / (1 + exp(-alpha (|dt| - beta)))`.
pub fn twdtw_weight(dt: f64, alpha: f64, beta: f64) -> f64 {
    1.0 / (1.0 + (-alpha * (dt.abs() - beta)).exp())
}

fn unit(values: &[f64]) -> Result<Vec<f64>> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

/// Angle between unit vectors via `2 atan2(|a - b|, |a + b|)`, exact at zero and symmetric.
fn unit_angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Spectral angle between the value vectors of two equal-length series, in radians.
pub fn sam(x: &Series, y: &Series) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(unit_angle(&unit(x.values())?, &unit(y.values())?))
}

fn check_len(s: &Series, needed: usize) -> Result<()> {
    if s.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: s.len(),
        });
    }
    Ok(())
}

/// Local angular cost matrix, shape `(n-1) x (m-1)`; entry `(i, j)` compares the vectors
/// ending at elements `i+1` and `j+1`. Cells outside the band are `+inf`.
pub fn angular_cost_matrix(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<Matrix> {
    check_len(x, 2)?;
    check_len(y, 2)?;
    let u = pair_vectors(x, cfg.zero_vector_eps, cfg.vector_mode)?;
    let v = pair_vectors(y, cfg.zero_vector_eps, cfg.vector_mode)?;
    Ok(banded_matrix(&x.days()[1..], &y.days()[1..], cfg.band_days, |i, j| {
        angle_between(&u[i], &v[j])
    }))
}

fn banded_matrix(row_days: &[i32], col_days: &[i32], band: f64, cost: impl Fn(usize, usize) -> f64) -> Matrix {
    let mut psi = Matrix::filled(row_days.len(), col_days.len(), f64::INFINITY);
    for (i, &(lo, hi)) in band_ranges(row_days, col_days, band).iter().enumerate() {
        for j in lo..hi {
            psi.set(i, j, cost(i, j));
        }
    }
    psi
}

/// Local cost matrix for the configured measure (`n x m` for DTW/TWDTW).
pub fn local_cost_matrix(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<Matrix> {
    let (xv, yv) = (x.values(), y.values());
    let (xd, yd) = (x.days(), y.days());
    match cfg.measure {
        Measure::Vdtw => angular_cost_matrix(x, y, cfg),
        Measure::Dtw => {
            check_len(x, 1)?;
            check_len(y, 1)?;
            Ok(banded_matrix(xd, yd, cfg.band_days, |i, j| (xv[i] - yv[j]).abs()))
        }
        Measure::Twdtw => {
            check_len(x, 1)?;
            check_len(y, 1)?;
            Ok(banded_matrix(xd, yd, cfg.band_days, |i, j| {
                (xv[i] - yv[j]).abs() + twdtw_weight((xd[i] - yd[j]) as f64, cfg.twdtw_alpha, cfg.twdtw_beta)
            }))
        }
        Measure::Sam => Err(Error::Parameter("SAM is not a warping measure and has no cost matrix".into())),
    }
}

/// Local and accumulated matrices for debugging. `distance` is `None` when the band
/// blocks every path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrices {
    pub psi: Matrix,
    pub acc: Matrix,
    pub n: usize,
    pub m: usize,
    pub distance: Option<f64>,
}

pub fn cost_matrices(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<CostMatrices> {
    let psi = local_cost_matrix(x, y, cfg)?;
    if psi.rows() == 0 || psi.cols() == 0 {
        return Err(Error::Empty("cost matrix".into()));
    }
    let acc = accumulated_matrix(&psi);
    let last = acc.get(psi.rows() - 1, psi.cols() - 1);
    let distance = last.is_finite().then_some(last);
    Ok(CostMatrices {
        psi,
        acc,
        n: x.len(),
        m: y.len(),
        distance,
    })
}

/// VDTW distance: accumulated angular cost along the optimal warping path.
pub fn vdtw(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<f64> {
    let cfg = WarpConfig {
        measure: Measure::Vdtw,
        ..*cfg
    };
    prepared_distance(&PreparedSeries::new(x, &cfg)?, &PreparedSeries::new(y, &cfg)?, &cfg)
}

pub fn dtw(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<f64> {
    let cfg = WarpConfig {
        measure: Measure::Dtw,
        ..*cfg
    };
    prepared_distance(&PreparedSeries::new(x, &cfg)?, &PreparedSeries::new(y, &cfg)?, &cfg)
}

pub fn twdtw(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<f64> {
    let cfg = WarpConfig {
        measure: Measure::Twdtw,
        ..*cfg
    };
    prepared_distance(&PreparedSeries::new(x, &cfg)?, &PreparedSeries::new(y, &cfg)?, &cfg)
}

/// Distance under `cfg.measure`.
pub fn distance(x: &Series, y: &Series, cfg: &WarpConfig) -> Result<f64> {
    prepared_distance(&PreparedSeries::new(x, cfg)?, &PreparedSeries::new(y, cfg)?, cfg)
}

/// A series with the per-series work (unit vectors, normalization) done once, for
/// evaluating many pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    days: Vec<i32>,
    values: Vec<f64>,
    vectors: Vec<PairVector>,
    unit: Vec<f64>,
}

impl PreparedSeries {
    pub fn new(series: &Series, cfg: &WarpConfig) -> Result<Self> {
        check_len(series, cfg.measure.min_len())?;
        let vectors = if cfg.measure == Measure::Vdtw {
            pair_vectors(series, cfg.zero_vector_eps, cfg.vector_mode)?
        } else {
            Vec::new()
        };
        let unit = if cfg.measure == Measure::Sam {
            unit(series.values())?
        } else {
            Vec::new()
        };
        Ok(Self {
            days: series.days().to_vec(),
            values: series.values().to_vec(),
            vectors,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

pub fn prepared_distance(a: &PreparedSeries, b: &PreparedSeries, cfg: &WarpConfig) -> Result<f64> {
    match cfg.measure {
        Measure::Sam => {
            if a.len() != b.len() {
                return Err(Error::LengthMismatch {
                    left: a.len(),
                    right: b.len(),
                });
            }
            Ok(unit_angle(&a.unit, &b.unit))
        }
        Measure::Dtw => {
            let ranges = band_ranges(&a.days, &b.days, cfg.band_days);
            warp_banded(&ranges, b.len(), |i, j| (a.values[i] - b.values[j]).abs())
        }
        Measure::Twdtw => {
            let ranges = band_ranges(&a.days, &b.days, cfg.band_days);
            warp_banded(&ranges, b.len(), |i, j| {
                (a.values[i] - b.values[j]).abs()
                    + twdtw_weight((a.days[i] - b.days[j]) as f64, cfg.twdtw_alpha, cfg.twdtw_beta)
            })
        }
        Measure::Vdtw => {
            let ranges = band_ranges(&a.days[1..], &b.days[1..], cfg.band_days);
            warp_banded(&ranges, b.vectors.len(), |i, j| angle_between(&a.vectors[i], &b.vectors[j]))
        }
    }
}
