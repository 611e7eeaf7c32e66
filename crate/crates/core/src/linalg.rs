//! Small dense helpers shared by the mixing, algorithm and theory modules.

use nalgebra::{DMatrix, DVector};

/// An `n x p` block whose row `i` belongs to agent `i`.
pub type IterateBlock = DMatrix<f64>;

/// Row average of a block, as a column vector of length `p`.
pub fn row_mean(x: &IterateBlock) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Column sums `1ᵀx`, as a vector of length `p`.
pub fn column_sums(x: &IterateBlock) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum()))
}

/// `(I - 11ᵀ/n) x`: the deviation of each row from the row average.
pub fn consensus_violation(x: &IterateBlock) -> IterateBlock {
    let mean = row_mean(x);
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= mean[j];
        }
    }
    out
}

/// Consensus seminorm `‖(I - 11ᵀ/n) x‖_F`.
pub fn consensus_norm(x: &IterateBlock) -> f64 {
    consensus_violation(x).norm()
}

/// Block whose every row equals `v`.
pub fn consensual(n: usize, v: &DVector<f64>) -> IterateBlock {
    DMatrix::from_fn(n, v.len(), |_, j| v[j])
}

/// `(1/n) 11ᵀ`.
pub fn averaging_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
