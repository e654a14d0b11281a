use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::Series;

/// Weights `w` such that `sum(w[k] * v[lo + k])` is the value at `center` of the
/// least-squares polynomial of degree `order` through samples `lo..=hi`.
fn weights(lo: usize, hi: usize, center: usize, order: usize) -> Vec<f64> {
    let size = hi - lo + 1;
    let cols = order + 1;
    let a = DMatrix::from_fn(size, cols, |r, c| {
        let x = (lo + r) as f64 - center as f64;
        x.powi(c as i32)
    });
    let ata = a.transpose() * &a;
    // Row 0 of (A^T A)^-1 A^T is A (A^T A)^-1 e0, transposed.
    let mut e0 = DVector::zeros(cols);
    e0[0] = 1.0;
    let z = ata
        .cholesky()
        .expect("normal matrix of a Vandermonde design with distinct nodes is positive definite")
        .solve(&e0);
    (a * z).iter().copied().collect()
}

/// Savitzky-Golay smoothing by sample index. Near the edges the polynomial is fit on the
/// truncated window, so every point uses its own centered-as-possible fit.
pub fn savitzky_golay(series: &Series, window: usize, order: usize) -> Result<Series> {
    if window.is_multiple_of(2) {
        return Err(Error::Parameter(format!("window must be odd, got {window}")));
    }
    if order >= window {
        return Err(Error::Parameter(format!("order {order} must be below window {window}")));
    }
    let n = series.len();
    if window > n {
        return Err(Error::Parameter(format!("window {window} exceeds series length {n}")));
    }
    let half = window / 2;
    let values = series.values();
    let mut out = Vec::with_capacity(n);
    let mut interior: Option<Vec<f64>> = None;
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let w = if lo + half == i && i + half == hi {
            interior.get_or_insert_with(|| weights(lo, hi, i, order).to_vec()).clone()
        } else {
            weights(lo, hi, i, order.min(hi - lo))
        };
        out.push(w.iter().zip(&values[lo..=hi]).map(|(w, v)| w * v).sum());
    }
    series.with_values(out)
}
