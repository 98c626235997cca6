use nalgebra::DMatrix;

use crate::error::{shape_err, Error, Result};
use crate::matrix::Matrix;
use crate::num::Scalar;

/// Fitted principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaState<S> {
    pub mean: Vec<S>,
    /// `out_dim × d`, one orthonormal component per row.
    pub components: Matrix<S>,
    /// Variance captured by each component (population normalisation), non-increasing.
    pub explained: Vec<S>,
    /// Variance of the directions that were not kept.
    pub discarded: Vec<S>,
}

pub(crate) fn fit<S: Scalar>(points: &Matrix<S>, out_dim: usize) -> Result<PcaState<S>> {
    let (n, d) = (points.rows(), points.cols());
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if out_dim == 0 || out_dim > n.min(d) {
        return Err(Error::InvalidConfig(format!(
            "PCA output dimension {out_dim} must lie in 1..={}",
            n.min(d)
        )));
    }
    if !points.is_finite() {
        return Err(Error::Diverged("non-finite points".into()));
    }
    let mean = points.column_means();
    let centred = DMatrix::from_fn(n, d, |i, j| (points.get(i, j) - mean[j]).as_f64());
    let svd = centred.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let var = |i: usize| S::of(svd.singular_values[i].powi(2) / n as f64);
    let mut comps = Vec::with_capacity(out_dim * d);
    for &r in &order[..out_dim] {
        let row: Vec<f64> = (0..d).map(|j| vt[(r, j)]).collect();
        // Deterministic sign: the largest-magnitude loading is positive.
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        comps.extend(row.iter().map(|&v| S::of(v * sign)));
    }
    Ok(PcaState {
        mean,
        components: Matrix::from_vec(out_dim, d, comps)?,
        explained: order[..out_dim].iter().map(|&i| var(i)).collect(),
        discarded: order[out_dim..].iter().map(|&i| var(i)).collect(),
    })
}

pub(crate) fn transform<S: Scalar>(st: &PcaState<S>, points: &Matrix<S>) -> Result<Matrix<S>> {
    let d = st.mean.len();
    if points.cols() != d {
        return Err(shape_err(d, points.cols()));
    }
    let k = st.components.rows();
    let mut out = Matrix::zeros(points.rows(), k);
    for (i, row) in points.iter_rows().enumerate() {
        for c in 0..k {
            let v = row
                .iter()
                .zip(&st.mean)
                .zip(st.components.row(c))
                .fold(S::zero(), |acc, ((&x, &m), &w)| acc + (x - m) * w);
            out.set(i, c, v);
        }
    }
    Ok(out)
}

pub(crate) fn inverse<S: Scalar>(st: &PcaState<S>, y: &Matrix<S>) -> Result<Matrix<S>> {
    let k = st.components.rows();
    if y.cols() != k {
        return Err(shape_err(k, y.cols()));
    }
    let d = st.mean.len();
    let mut out = Matrix::zeros(y.rows(), d);
    for (i, row) in y.iter_rows().enumerate() {
        let dst = out.row_mut(i);
        dst.copy_from_slice(&st.mean);
        for (c, &v) in row.iter().enumerate() {
            for (o, &w) in dst.iter_mut().zip(st.components.row(c)) {
                *o += v * w;
            }
        }
    }
    Ok(out)
}
