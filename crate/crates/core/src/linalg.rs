//! Dense LU factorization with partial pivoting.

use alloc::vec::Vec;

use crate::math::abs;
use crate::{Error, Result};

/// Solves `A x = b` for a dense row-major `n × n` matrix.
///
/// The returned solution is residual-checked: `max |A x − b|` must stay below
/// `residual_tol`, otherwise [`Error::Singular`] is reported.
pub fn solve(matrix: &[f64], rhs: &[f64], residual_tol: f64) -> Result<Vec<f64>> {
    let n = rhs.len();
    if matrix.len() != n * n {
        return Err(Error::Dimension {
            what: "linear system matrix",
            expected: n * n,
            found: matrix.len(),
        });
    }
    let mut lu = matrix.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| abs(lu[i * n + col]).total_cmp(&abs(lu[j * n + col])))
            .unwrap_or(col);
        let pivot = lu[pivot_row * n + col];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::Singular {
                residual: f64::INFINITY,
            });
        }
        if pivot_row != col {
            for k in 0..n {
                lu.swap(col * n + k, pivot_row * n + k);
            }
            perm.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = lu[row * n + col] / pivot;
            lu[row * n + col] = factor;
            if factor != 0.0 {
                for k in col + 1..n {
                    lu[row * n + k] -= factor * lu[col * n + k];
                }
            }
        }
    }

    // Forward substitution on the permuted right-hand side, then back substitution.
    let mut x: Vec<f64> = perm.iter().map(|&p| rhs[p]).collect();
    for row in 0..n {
        let mut acc = x[row];
        for k in 0..row {
            acc -= lu[row * n + k] * x[k];
        }
        x[row] = acc;
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc -= lu[row * n + k] * x[k];
        }
        x[row] = acc / lu[row * n + row];
    }

    let residual = (0..n)
        .map(|i| {
            let ax: f64 = (0..n).map(|k| matrix[i * n + k] * x[k]).sum();
            abs(ax - rhs[i])
        })
        .fold(0.0, f64::max);
    if !(residual < residual_tol) {
        return Err(Error::Singular { residual });
    }
    Ok(x)
}
