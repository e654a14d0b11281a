//! Accumulated-cost recursion shared by DTW, TWDTW and VDTW.
//!
//! `d[i][j] = c[i][j] + min(d[i-1][j-1], d[i-1][j], d[i][j-1])`, with the first row and
//! column as running sums. Cells outside the band carry `+inf` and are never selected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                left: cols,
                right: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

#[inline]
fn step(cost: f64, i: usize, j: usize, prev: &[f64], cur: &[f64]) -> f64 {
    match (i, j) {
        (0, 0) => cost,
        (0, _) => cost + cur[j - 1],
        (_, 0) => cost + prev[0],
        _ => cost + prev[j - 1].min(prev[j]).min(cur[j - 1]),
    }
}

/// Accumulated matrix; unreachable cells stay `+inf`.
pub(crate) fn accumulated_matrix(psi: &Matrix) -> Matrix {
    let (n, m) = (psi.rows(), psi.cols());
    let mut acc = Matrix::filled(n, m, f64::INFINITY);
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            cur[j] = step(psi.get(i, j), i, j, &prev, &cur);
        }
        acc.data[i * m..(i + 1) * m].copy_from_slice(&cur);
        std::mem::swap(&mut prev, &mut cur);
    }
    acc
}

/// Full accumulated matrix and the final cell. Errors when the last cell is unreachable.
pub fn accumulate(psi: &Matrix) -> Result<(Matrix, f64)> {
    let (n, m) = (psi.rows(), psi.cols());
    if n == 0 || m == 0 {
        return Err(Error::Empty("cost matrix".into()));
    }
    let acc = accumulated_matrix(psi);
    let last = acc.get(n - 1, m - 1);
    if !last.is_finite() {
        return Err(Error::NoPath);
    }
    Ok((acc, last))
}

/// For each row day, the half-open column range whose days lie within `band` of it.
pub(crate) fn band_ranges(row_days: &[i32], col_days: &[i32], band: f64) -> Vec<(usize, usize)> {
    row_days
        .iter()
        .map(|&d| {
            let d = d as f64;
            let lo = col_days.partition_point(|&c| (c as f64) < d - band);
            let hi = col_days.partition_point(|&c| (c as f64) <= d + band);
            (lo, hi.max(lo))
        })
        .collect()
}

/// Two-row evaluation of the recursion restricted to `ranges`. Produces bit-identical
/// results to [`accumulate`] on the equivalent banded matrix.
pub(crate) fn warp_banded(ranges: &[(usize, usize)], m: usize, cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let n = ranges.len();
    if n == 0 || m == 0 {
        return Err(Error::Empty("series".into()));
    }
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    let mut stale = (0, 0);
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        cur[stale.0..stale.1].fill(f64::INFINITY);
        for j in lo..hi {
            cur[j] = step(cost(i, j), i, j, &prev, &cur);
        }
        std::mem::swap(&mut prev, &mut cur);
        // `cur` now holds row i-1 (or nothing yet).
        stale = if i == 0 { (0, 0) } else { ranges[i - 1] };
    }
    let last = prev[m - 1];
    if !last.is_finite() {
        return Err(Error::NoPath);
    }
    Ok(last)
}
