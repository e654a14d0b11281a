use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

/// How the 2-D vector at each element is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorMode {
    /// `(value[i-1], value[i])`. Angles are invariant to multiplicative gain.
    #[default]
    Pair,
    /// `(day[i] - day[i-1], value[i] - value[i-1])`, the segment slope. Not gain invariant.
    Segment,
}

/// Unit vector for element `i >= 1` of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairVector {
    pub x: f64,
    pub y: f64,
    /// Polar angle of the raw vector, in `(-pi, pi]`.
    pub heading: f64,
    /// Raw norm fell below the zero-vector threshold; `x`, `y` and `heading` are zero.
    pub degenerate: bool,
}

impl PairVector {
    fn from_raw(a: f64, b: f64, eps: f64) -> Self {
        let norm = a.hypot(b);
        if norm < eps {
            return Self {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
                degenerate: true,
            };
        }
        Self {
            x: a / norm,
            y: b / norm,
            heading: b.atan2(a),
            degenerate: false,
        }
    }
}

pub fn pair_vectors(series: &Series, eps: f64, mode: VectorMode) -> Result<Vec<PairVector>> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let v = series.values();
    let d = series.days();
    Ok((1..series.len())
        .map(|i| match mode {
            VectorMode::Pair => PairVector::from_raw(v[i - 1], v[i], eps),
            VectorMode::Segment => PairVector::from_raw((d[i] - d[i - 1]) as f64, v[i] - v[i - 1], eps),
        })
        .collect())
}

/// Angle between two element vectors, in `[0, pi]`.
///
/// Equal to `acos(u . v)` for unit vectors but computed as the wrapped difference of polar
/// angles, which stays accurate for nearly parallel vectors and is exactly symmetric.
/// Two degenerate vectors are at angle 0, one degenerate vector against a regular one at
/// `pi / 2`.
#[inline]
pub fn angle_between(u: &PairVector, v: &PairVector) -> f64 {
    match (u.degenerate, v.degenerate) {
        (true, true) => 0.0,
        (true, false) | (false, true) => FRAC_PI_2,
        (false, false) => {
            let d = (u.heading - v.heading).abs();
            if d > PI {
                2.0 * PI - d
            } else {
                d
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(values: &[f64]) -> Vec<PairVector> {
        pair_vectors(&Series::from_values(0, values.to_vec()), 1e-12, VectorMode::Pair).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let v = vecs(&[1.0, 2.0, 4.0]);
        let s = 5f64.sqrt();
        for p in &v {
            assert!((p.x - 1.0 / s).abs() < 1e-15 && (p.y - 2.0 / s).abs() < 1e-15);
            assert!((p.x - 0.4472).abs() < 1e-4 && (p.y - 0.8944).abs() < 1e-4);
        }
        let v = vecs(&[0.0, 0.0]);
        assert_eq!(v.len(), 1);
        assert!(v[0].degenerate);
        let v = vecs(&[3.0, 3.0]);
        assert!((v[0].x - 0.5f64.sqrt()).abs() < 1e-15 && (v[0].y - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(pair_vectors(&Series::from_values(0, vec![1.0]), 1e-12, VectorMode::Pair).is_err());
    }

    #[test]
    fn angle_agrees_with_arccos() {
        let vals = [-0.3, 0.0, 0.2, 0.9, 0.5, -1.0, 0.7];
        let v = vecs(&vals);
        for a in &v {
            for b in &v {
                if a.degenerate || b.degenerate {
                    continue;
                }
                let acos = (a.x * b.x + a.y * b.y).clamp(-1.0, 1.0).acos();
                let ours = angle_between(a, b);
                assert!((acos - ours).abs() < 1e-7, "{acos} vs {ours}");
                assert_eq!(ours, angle_between(b, a));
                assert!((0.0..=PI).contains(&ours));
            }
        }
    }

    #[test]
    fn degenerate_policy() {
        let z = vecs(&[0.0, 0.0])[0];
        let r = vecs(&[1.0, 0.5])[0];
        assert_eq!(angle_between(&z, &z), 0.0);
        assert_eq!(angle_between(&z, &r), FRAC_PI_2);
        assert_eq!(angle_between(&r, &z), FRAC_PI_2);
    }

    #[test]
    fn segment_mode_uses_day_steps() {
        let s = Series::clear(vec![0, 10], vec![0.0, 10.0]).unwrap();
        let v = pair_vectors(&s, 1e-12, VectorMode::Segment).unwrap();
        assert!((v[0].heading - PI / 4.0).abs() < 1e-15);
    }
}
