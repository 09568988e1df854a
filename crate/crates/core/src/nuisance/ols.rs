//! Least squares with deterministic removal of collinear columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{IdidError, Result};

const RANK_TOL: f64 = 1e-10;

/// Indices of a maximal set of linearly independent columns, scanning left
/// to right so that later duplicates are the ones dropped.
pub fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = col;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn > RANK_TOL * norm {
            basis.push(r / rn);
            keep.push(j);
        }
    }
    keep
}

/// Select rows and columns of a design matrix.
pub fn submatrix(x: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], cols[j])])
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    /// One coefficient per design column; dropped columns hold 0.
    pub coef: Vec<f64>,
    pub dropped: Vec<usize>,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coef);
        (x * b).iter().copied().collect()
    }
}

/// Ordinary least squares of `y[rows]` on `x[rows, ·]`.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> Result<LinearFit> {
    if rows.is_empty() {
        return Err(IdidError::DegenerateFit(
            "linear fit on an empty sample".into(),
        ));
    }
    let all: Vec<usize> = (0..x.ncols()).collect();
    let xs = submatrix(x, rows, &all);
    let keep = independent_columns(&xs);
    let dropped: Vec<usize> = all.iter().copied().filter(|j| !keep.contains(j)).collect();
    if !dropped.is_empty() {
        log::warn!("dropping collinear design columns {dropped:?}");
    }
    let mut coef = vec![0.0; x.ncols()];
    if !keep.is_empty() {
        let xk = submatrix(&xs, &(0..rows.len()).collect::<Vec<_>>(), &keep);
        let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
        let qr = xk.qr();
        let qty = qr.q().transpose() * ys;
        let b = qr
            .r()
            .solve_upper_triangular(&qty)
            .ok_or_else(|| IdidError::DegenerateFit("singular least-squares system".into()))?;
        for (k, &j) in keep.iter().enumerate() {
            coef[j] = b[k];
        }
    }
    Ok(LinearFit { coef, dropped })
}
