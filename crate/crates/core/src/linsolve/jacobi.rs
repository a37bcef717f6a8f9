//! Cyclic Jacobi eigensolver for dense symmetric matrices. The correlation
//! matrices it targets are a few hundred rows at most, where Jacobi is
//! simple, accurate and deterministic.

use super::LinSolveError;
use faer::Mat;

/// Eigendecomposition of a symmetric matrix: eigenvalues in descending
/// order with the matching orthonormal eigenvectors as columns.
pub fn sym_eig(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), LinSolveError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig needs a square matrix");
    let mut max_abs = 0.0f64;
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            max_abs = max_abs.max(a[(i, j)].abs());
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_abs > 0.0 && max_asym > 1e-12 * max_abs {
        return Err(LinSolveError::Asymmetric { max_asym });
    }

    let mut b = a.clone();
    let mut v = Mat::<f64>::identity(n, n);
    let stop = 1e-15 * max_abs.max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(b[(p, q)].abs());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b[(p, q)];
                if apq.abs() <= stop * 1e-2 {
                    continue;
                }
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let bkp = b[(k, p)];
                    let bkq = b[(k, q)];
                    b[(k, p)] = c * bkp - s * bkq;
                    b[(k, q)] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let bpk = b[(p, k)];
                    let bqk = b[(q, k)];
                    b[(p, k)] = c * bpk - s * bqk;
                    b[(q, k)] = s * bpk + c * bqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[(j, j)].total_cmp(&b[(i, i)]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| b[(i, i)]).collect();
    let mut vectors = Mat::<f64>::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    Ok((eigenvalues, vectors))
}

/// Matrix 2-norm of a symmetric positive semidefinite matrix (its largest
/// eigenvalue).
pub fn operator_2norm(a: &Mat<f64>) -> f64 {
    let (eigenvalues, _) = sym_eig(a).expect("operator_2norm needs a symmetric matrix");
    eigenvalues.first().copied().unwrap_or(0.0).max(0.0)
}
