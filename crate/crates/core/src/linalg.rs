//! Dense least-squares helpers shared by the polynomial and surrogate fits.

use nalgebra::{DMatrix, DVector};

/// Relative threshold on the diagonal of R (after column equilibration)
/// below which the design is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RankDeficient {
    pub column: usize,
}

/// Solution of `min ||A x - b||` together with `(A^T A)^{-1}`.
pub(crate) struct LeastSquares {
    pub solution: DVector<f64>,
    pub gram_inverse: DMatrix<f64>,
}

/// Householder QR least squares with column equilibration. `A` must have at
/// least as many rows as columns.
pub(crate) fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LeastSquares, RankDeficient> {
    let (m, n) = a.shape();
    debug_assert!(m >= n && b.len() == m);

    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }

    let qr = scaled.qr();
    let r = qr.r();
    let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(column) = (0..n).find(|&i| r[(i, i)].abs() <= RANK_TOL * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(RankDeficient { column });
    }

    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, n).into_owned();
    let mut solution = r.solve_upper_triangular(&rhs).ok_or(RankDeficient { column: n - 1 })?;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or(RankDeficient { column: n - 1 })?;
    let mut gram_inverse = &r_inv * r_inv.transpose();

    for j in 0..n {
        solution[j] /= scales[j];
        for i in 0..n {
            gram_inverse[(i, j)] /= scales[i] * scales[j];
        }
    }
    Ok(LeastSquares { solution, gram_inverse })
}
