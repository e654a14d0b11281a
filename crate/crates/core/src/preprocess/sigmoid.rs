//! Double-logistic phenology curve and a derivative-free least-squares fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Series, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub v_min: f64,
    pub v_max: f64,
    /// Green-up inflection day.
    pub s1: f64,
    /// Senescence inflection day.
    pub s2: f64,
    pub m1: f64,
    pub m2: f64,
}

impl SigmoidParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_min, self.v_max, self.s1, self.s2, self.m1, self.m2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.s1 >= self.s2 || self.m1 <= 0.0 || self.m2 <= 0.0 || self.v_max < self.v_min {
            return Err(Error::Parameter(format!("invalid double-sigmoid parameters {self:?}")));
        }
        Ok(())
    }

    /// Curve value at day `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.v_min + (self.v_max - self.v_min) * shape(t, self.s1, self.s2, self.m1, self.m2)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Rise minus fall, floored at zero so the curve never dips below `v_min` when the
/// senescence slope is gentler than the green-up slope.
fn shape(t: f64, s1: f64, s2: f64, m1: f64, m2: f64) -> f64 {
    (logistic(m1 * (t - s1)) - logistic(m2 * (t - s2))).max(0.0)
}

pub fn eval_double_sigmoid(params: &SigmoidParams, grid: &TimeGrid) -> Series {
    let days = grid.days();
    let values = days.iter().map(|&d| params.value_at(d as f64)).collect();
    Series::clear(days, values).expect("grid days are strictly increasing")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub params: SigmoidParams,
    pub rmse: f64,
    pub initial_rmse: f64,
    /// Set when the local refinement could not improve on the grid-search start.
    pub degraded: bool,
}

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-8;

struct Problem<'a> {
    t: Vec<f64>,
    v: &'a [f64],
}

impl Problem<'_> {
    /// Closed-form `(v_min, v_max)` for a fixed shape, and the resulting RMSE.
    fn levels(&self, s1: f64, s2: f64, m1: f64, m2: f64) -> (f64, f64, f64) {
        let n = self.t.len() as f64;
        let g: Vec<f64> = self.t.iter().map(|&t| shape(t, s1, s2, m1, m2)).collect();
        let gm = g.iter().sum::<f64>() / n;
        let vm = self.v.iter().sum::<f64>() / n;
        let mut sgg = 0.0;
        let mut sgv = 0.0;
        for (gi, vi) in g.iter().zip(self.v) {
            sgg += (gi - gm) * (gi - gm);
            sgv += (gi - gm) * (vi - vm);
        }
        let (a, b) = if sgg > 1e-15 && sgv > 0.0 {
            let b = sgv / sgg;
            (vm - b * gm, b)
        } else {
            (vm, 0.0)
        };
        let sse: f64 = g.iter().zip(self.v).map(|(gi, vi)| (a + b * gi - vi).powi(2)).sum();
        (a, a + b, (sse / n).sqrt())
    }

    /// Objective over `(s1, s2, ln m1, ln m2)`.
    fn objective(&self, x: &[f64; 4]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) || x[0] >= x[1] || x[2].abs() > 12.0 || x[3].abs() > 12.0 {
            return 1e10;
        }
        self.levels(x[0], x[1], x[2].exp(), x[3].exp()).2
    }

    fn params(&self, x: &[f64; 4]) -> SigmoidParams {
        let (m1, m2) = (x[2].exp(), x[3].exp());
        let (v_min, v_max, _) = self.levels(x[0], x[1], m1, m2);
        SigmoidParams {
            v_min,
            v_max,
            s1: x[0],
            s2: x[1],
            m1,
            m2,
        }
    }
}

fn nelder_mead(f: impl Fn(&[f64; 4]) -> f64, start: [f64; 4], steps: [f64; 4], budget: usize) -> ([f64; 4], f64, usize) {
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    simplex.push((start, f(&start)));
    for k in 0..4 {
        let mut p = start;
        p[k] += steps[k];
        simplex.push((p, f(&p)));
    }
    let mut iterations = 0;
    while iterations < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[4].1 - simplex[0].1 < TOLERANCE {
            break;
        }
        iterations += 1;
        let mut centroid = [0.0; 4];
        for (p, _) in &simplex[..4] {
            for k in 0..4 {
                centroid[k] += p[k] / 4.0;
            }
        }
        let along = |coef: f64| {
            let mut p = [0.0; 4];
            for k in 0..4 {
                p[k] = centroid[k] + coef * (simplex[4].0[k] - centroid[k]);
            }
            p
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            simplex[4] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[4].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < simplex[4].1.min(fr) {
                simplex[4] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    for (v, b) in entry.0.iter_mut().zip(best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, iterations)
}

/// Grid search over the inflection days and slopes (levels in closed form), then
/// Nelder-Mead refinement with one restart.
pub fn fit_double_sigmoid(series: &Series) -> Result<SigmoidFit> {
    if series.len() < 7 {
        return Err(Error::TooShort {
            needed: 7,
            got: series.len(),
        });
    }
    let problem = Problem {
        t: series.days().iter().map(|&d| d as f64).collect(),
        v: series.values(),
    };
    let first = problem.t[0];
    let last = *problem.t.last().unwrap();
    let span = last - first;

    const NODES: usize = 24;
    const LN_SLOPES: [f64; 4] = [-3.9, -3.0, -2.3, -1.6]; // ~0.02, 0.05, 0.1, 0.2 per day
    let mut best = ([first, last, LN_SLOPES[2], LN_SLOPES[2]], f64::INFINITY);
    for i in 0..NODES {
        let s1 = first + span * i as f64 / NODES as f64;
        for j in (i + 1)..=NODES {
            let s2 = first + span * j as f64 / NODES as f64;
            for &l1 in &LN_SLOPES {
                for &l2 in &LN_SLOPES {
                    let x = [s1, s2, l1, l2];
                    let r = problem.objective(&x);
                    if r < best.1 {
                        best = (x, r);
                    }
                }
            }
        }
    }
    let (start, initial_rmse) = best;
    let objective = |x: &[f64; 4]| problem.objective(x);
    let node = span / NODES as f64;
    let steps = [node, node, 0.3, 0.3];
    let (mut x, mut rmse, used) = nelder_mead(objective, start, steps, MAX_ITERATIONS);
    if used < MAX_ITERATIONS {
        let (x2, r2, _) = nelder_mead(objective, x, steps, MAX_ITERATIONS - used);
        if r2 < rmse {
            x = x2;
            rmse = r2;
        }
    }
    let improved = rmse < initial_rmse;
    let (x, rmse) = if improved || rmse == initial_rmse { (x, rmse) } else { (start, initial_rmse) };
    Ok(SigmoidFit {
        params: problem.params(&x),
        rmse,
        initial_rmse,
        degraded: !improved && initial_rmse > TOLERANCE,
    })
}
