//! Core time-series types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-observation quality flag, as produced by an upstream cloud mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityFlag {
    Clear,
    Cloud,
    Shadow,
}

impl QualityFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityFlag::Clear => "clear",
            QualityFlag::Cloud => "cloud",
            QualityFlag::Shadow => "shadow",
        }
    }

    pub fn is_clear(self) -> bool {
        self == QualityFlag::Clear
    }
}

impl fmt::Display for QualityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "clear" => Ok(QualityFlag::Clear),
            "cloud" => Ok(QualityFlag::Cloud),
            "shadow" => Ok(QualityFlag::Shadow),
            other => Err(format!("unknown quality flag `{other}`")),
        }
    }
}

/// A vegetation-index trajectory sampled on strictly increasing days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    days: Vec<i32>,
    values: Vec<f64>,
    flags: Vec<QualityFlag>,
}

impl Series {
    pub fn new(days: Vec<i32>, values: Vec<f64>, flags: Vec<QualityFlag>) -> Result<Self> {
        if days.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: days.len(),
                right: values.len(),
            });
        }
        if days.len() != flags.len() {
            return Err(Error::LengthMismatch {
                left: days.len(),
                right: flags.len(),
            });
        }
        if let Some(w) = days.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!(
                "days must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            days,
            values,
            flags,
        })
    }

    /// Builds a series with every sample flagged clear.
    pub fn clear(days: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        let flags = vec![QualityFlag::Clear; days.len()];
        Self::new(days, values, flags)
    }

    /// Consecutive days starting at `start`, all clear. Handy for tests and synthetic data.
    pub fn from_values(start: i32, values: Vec<f64>) -> Self {
        let days = (0..values.len() as i32).map(|k| start + k).collect();
        let flags = vec![QualityFlag::Clear; values.len()];
        Self {
            days,
            values,
            flags,
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[i32] {
        &self.days
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flags(&self) -> &[QualityFlag] {
        &self.flags
    }

    pub fn first_day(&self) -> Option<i32> {
        self.days.first().copied()
    }

    pub fn last_day(&self) -> Option<i32> {
        self.days.last().copied()
    }

    /// Same days and flags, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.days.clone(), values, self.flags.clone())
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            days: self.days.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            flags: self.flags.clone(),
        }
    }

    pub fn count_non_clear(&self) -> usize {
        self.flags.iter().filter(|f| !f.is_clear()).count()
    }

    pub fn into_parts(self) -> (Vec<i32>, Vec<f64>, Vec<QualityFlag>) {
        (self.days, self.values, self.flags)
    }
}

/// A regular day grid `t_l, t_l + step, ...` not exceeding `t_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_l: i32,
    pub t_u: i32,
    pub step: i32,
}

impl TimeGrid {
    pub fn new(t_l: i32, t_u: i32, step: i32) -> Result<Self> {
        if t_l >= t_u {
            return Err(Error::EmptyIntersection { t_l, t_u });
        }
        if step < 1 {
            return Err(Error::Parameter(format!("grid step must be >= 1, got {step}")));
        }
        Ok(Self { t_l, t_u, step })
    }

    pub fn days(&self) -> Vec<i32> {
        (self.t_l..=self.t_u).step_by(self.step as usize).collect()
    }

    pub fn len(&self) -> usize {
        ((self.t_u - self.t_l) / self.step) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// A grid widened by `margin` days on both sides, keeping the step.
    pub fn widened(&self, margin: i32) -> Self {
        Self {
            t_l: self.t_l - margin,
            t_u: self.t_u + margin,
            step: self.step,
        }
    }
}

/// One labeled field observed in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub field_id: String,
    pub year: i32,
    pub label: Option<String>,
    pub series: Series,
}

impl FieldSample {
    pub fn new(field_id: impl Into<String>, year: i32, label: Option<String>, series: Series) -> Self {
        Self {
            field_id: field_id.into(),
            year,
            label,
            series,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_days() {
        assert!(Series::clear(vec![1, 1], vec![0.0, 0.0]).is_err());
        assert!(Series::clear(vec![2, 1], vec![0.0, 0.0]).is_err());
        assert!(Series::clear(vec![1, 2], vec![0.0]).is_err());
    }

    #[test]
    fn grid_days_respect_upper_bound() {
        let g = TimeGrid::new(160, 295, 8).unwrap();
        let days = g.days();
        assert_eq!(days.first(), Some(&160));
        assert!(*days.last().unwrap() <= 295);
        assert_eq!(days.len(), g.len());
        assert!(TimeGrid::new(10, 10, 1).is_err());
        assert!(TimeGrid::new(10, 20, 0).is_err());
    }

    #[test]
    fn flag_parsing_is_closed() {
        assert_eq!("shadow".parse::<QualityFlag>(), Ok(QualityFlag::Shadow));
        assert!("fog".parse::<QualityFlag>().is_err());
    }
}
