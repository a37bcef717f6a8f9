//! Direct linear algebra: sparse LU with factor-once/solve-many reuse (the
//! shared-coefficient-matrix workhorse of the ensemble schemes), a dense LU
//! for the reduced systems, and a cyclic Jacobi eigensolver for the POD
//! correlation matrix.
//!
//! Everything here runs sequentially and is bit-deterministic; the sparse
//! backend is pinned to sequential mode.

mod jacobi;

pub use jacobi::{operator_2norm, sym_eig};

use crate::fem::SparseOperator;
use faer::prelude::Reborrow;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

/// Residual contract for every solve: ||Ax - b|| <= SOLVER_TOL (||A|| ||x|| + ||b||).
pub const SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("singular matrix (offending row {pivot})")]
    SingularMatrix { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (max |A - A^T| = {max_asym:e})")]
    Asymmetric { max_asym: f64 },
}

/// Counts factorizations and triangular solves. Threaded explicitly through
/// the steppers so per-step costs can be asserted from the timing report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveLedger {
    pub factorizations: u64,
    pub solves: u64,
}

impl SolveLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn absorb(&mut self, other: SolveLedger) {
        self.factorizations += other.factorizations;
        self.solves += other.solves;
    }
}

/// Cached symbolic analysis, reusable across factorizations with an
/// identical sparsity pattern (the time steppers hit the same pattern on
/// every step). The stored pattern is compared on reuse.
#[derive(Default)]
pub struct SymbolicCache {
    inner: Option<(faer::sparse::linalg::solvers::SymbolicLu<usize>, Vec<usize>, usize)>,
}

impl SymbolicCache {
    pub fn new() -> Self {
        Self::default()
    }
}

enum FactKind {
    Sparse(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Dense(faer::linalg::solvers::PartialPivLu<f64>),
}

enum HeldMatrix {
    Sparse(SparseOperator),
    Dense(faer::Mat<f64>),
}

impl HeldMatrix {
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            HeldMatrix::Sparse(a) => a.matvec(x),
            HeldMatrix::Dense(a) => {
                let n = a.nrows();
                let mut y = vec![0.0; n];
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..a.ncols() {
                        acc += a[(i, j)] * x[j];
                    }
                    y[i] = acc;
                }
                y
            }
        }
    }

}

/// A factorized square system. Solves perform one step of iterative
/// refinement, which keeps the residual near machine precision and in
/// particular well inside [`SOLVER_TOL`].
pub struct Factorization {
    n: usize,
    kind: FactKind,
    matrix: HeldMatrix,
    inf_norm: f64,
}

fn to_faer(matrix: &SparseOperator) -> Result<SparseColMat<usize, f64>, LinSolveError> {
    let triplets: Vec<Triplet<usize, usize, f64>> = matrix
        .iter()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    SparseColMat::try_new_from_triplets(matrix.nrows(), matrix.ncols(), &triplets)
        .map_err(|_| LinSolveError::SingularMatrix { pivot: 0 })
}

/// Sparse LU with partial pivoting and fill-reducing column ordering.
pub fn factorize(
    matrix: &SparseOperator,
    ledger: &mut SolveLedger,
) -> Result<Factorization, LinSolveError> {
    factorize_cached(matrix, &mut SymbolicCache::new(), ledger)
}

/// As [`factorize`], reusing a cached symbolic analysis when the sparsity
/// pattern matches.
pub fn factorize_cached(
    matrix: &SparseOperator,
    cache: &mut SymbolicCache,
    ledger: &mut SolveLedger,
) -> Result<Factorization, LinSolveError> {
    assert_eq!(matrix.nrows(), matrix.ncols(), "factorize needs a square matrix");
    faer::set_global_parallelism(faer::Par::Seq);
    let a = to_faer(matrix)?;

    let pattern_cols: Vec<usize> = a.col_ptr().to_vec();
    let reuse = match &cache.inner {
        Some((_, cols, n)) => *n == matrix.nrows() && *cols == pattern_cols,
        None => false,
    };
    if !reuse {
        let symbolic = faer::sparse::linalg::solvers::SymbolicLu::try_new(a.symbolic())
            .map_err(|_| LinSolveError::SingularMatrix { pivot: 0 })?;
        cache.inner = Some((symbolic, pattern_cols, matrix.nrows()));
    }
    let symbolic = cache.inner.as_ref().unwrap().0.clone();
    let lu = faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(symbolic, a.rb())
        .map_err(|_| LinSolveError::SingularMatrix { pivot: 0 })?;
    ledger.factorizations += 1;

    let fact = Factorization {
        n: matrix.nrows(),
        kind: FactKind::Sparse(lu),
        inf_norm: matrix.inf_norm(),
        matrix: HeldMatrix::Sparse(matrix.clone()),
    };
    fact.check_nonsingular()?;
    Ok(fact)
}

/// Dense LU with partial pivoting for the reduced (R x R) systems.
pub fn factorize_dense(
    matrix: &faer::Mat<f64>,
    ledger: &mut SolveLedger,
) -> Result<Factorization, LinSolveError> {
    assert_eq!(matrix.nrows(), matrix.ncols());
    faer::set_global_parallelism(faer::Par::Seq);
    let lu = matrix.partial_piv_lu();
    ledger.factorizations += 1;
    let fact = Factorization {
        n: matrix.nrows(),
        kind: FactKind::Dense(lu),
        matrix: HeldMatrix::Dense(matrix.clone()),
        inf_norm: (0..matrix.nrows())
            .map(|i| (0..matrix.ncols()).map(|j| matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max),
    };
    fact.check_nonsingular()?;
    Ok(fact)
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        use faer::prelude::*;
        let rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = match &self.kind {
            FactKind::Sparse(lu) => lu.solve(&rhs),
            FactKind::Dense(lu) => lu.solve(&rhs),
        };
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Factor-time singularity probe: a singular numeric factorization
    /// produces non-finite triangular solves.
    fn check_nonsingular(&self) -> Result<(), LinSolveError> {
        let ones = vec![1.0; self.n];
        let b = self.matrix.matvec(&ones);
        let x = self.raw_solve(&b);
        if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
            return Err(LinSolveError::SingularMatrix { pivot });
        }
        // numerically singular systems survive the finiteness check but fail
        // the (loose) probe residual
        let scale = self.inf_norm * norm2(&x) + norm2(&b);
        let r = self.residual_norm(&x, &b);
        if scale > 0.0 && r > 1e-6 * scale {
            let pivot = x
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(LinSolveError::SingularMatrix { pivot });
        }
        Ok(())
    }

    /// Solves A x = b with one round of iterative refinement.
    pub fn solve(&self, b: &[f64], ledger: &mut SolveLedger) -> Result<Vec<f64>, LinSolveError> {
        if b.len() != self.n {
            return Err(LinSolveError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x = self.raw_solve(b);
        let ax = self.matrix.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.raw_solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        ledger.solves += 1;
        debug_assert!(
            self.residual_norm(&x, b) <= SOLVER_TOL * (self.inf_norm * norm2(&x) + norm2(b)),
            "solver residual contract violated"
        );
        Ok(x)
    }

    /// Solves one factorization against a block of right-hand sides. Each
    /// column is solved independently; the output order matches the input.
    pub fn solve_many(
        &self,
        rhs: &[Vec<f64>],
        ledger: &mut SolveLedger,
    ) -> Result<Vec<Vec<f64>>, LinSolveError> {
        rhs.iter().map(|b| self.solve(b, ledger)).collect()
    }

    /// ||A x - b||_2
    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        norm2(
            &ax.iter()
                .zip(b)
                .map(|(ai, bi)| ai - bi)
                .collect::<Vec<f64>>(),
        )
    }

    pub fn matrix_inf_norm(&self) -> f64 {
        self.inf_norm
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entry-wise mean of equal-length vectors, with each entry's addends summed
/// in ascending value order: the result is bit-identical under any
/// permutation of the inputs.
pub fn permutation_invariant_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let j = rows.len();
    assert!(j > 0);
    let n = rows[0].len();
    let inv = 1.0 / j as f64;
    let mut vals = vec![0.0; j];
    let mut mean = vec![0.0; n];
    for i in 0..n {
        for (k, row) in rows.iter().enumerate() {
            vals[k] = row[i];
        }
        vals.sort_by(f64::total_cmp);
        mean[i] = vals.iter().sum::<f64>() * inv;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CooMatrix;
    use rand::prelude::*;

    fn csr_from(entries: &[(usize, usize, f64)], n: usize) -> SparseOperator {
        let mut coo = CooMatrix::new(n, n);
        for &(r, c, v) in entries {
            coo.push(r, c, v);
        }
        coo.to_csr()
    }

    #[test]
    fn identity_solves_to_rhs() {
        let a = csr_from(&[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)], 3);
        let mut ledger = SolveLedger::new();
        let f = factorize(&a, &mut ledger).unwrap();
        let x = f.solve(&[1.0, -2.0, 3.0], &mut ledger).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        assert_eq!(ledger.factorizations, 1);
        assert_eq!(ledger.solves, 1);
    }

    #[test]
    fn singular_matrix_detected() {
        let a = csr_from(&[(0, 0, 0.0), (0, 1, 0.0), (1, 1, 1.0)], 2);
        let mut ledger = SolveLedger::new();
        match factorize(&a, &mut ledger) {
            Err(LinSolveError::SingularMatrix { .. }) => {}
            other => panic!("expected SingularMatrix, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn random_spd_residual() {
        let n = 50;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        // SPD via A = L L^T + n I with random L
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = rng.gen::<f64>() - 0.5;
            }
        }
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += dense[i][k] * dense[j][k];
                }
                if i == j {
                    v += n as f64;
                }
                entries.push((i, j, v));
            }
        }
        let a = csr_from(&entries, n);
        let mut ledger = SolveLedger::new();
        let f = factorize(&a, &mut ledger).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x = f.solve(&b, &mut ledger).unwrap();
        let rel = f.residual_norm(&x, &b) / norm2(&b);
        assert!(rel <= 1e-10, "relative residual {rel:e}");
    }

    #[test]
    fn solve_many_is_deterministic_and_batch_independent() {
        let a = csr_from(&[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)], 2);
        let mut ledger = SolveLedger::new();
        let f = factorize(&a, &mut ledger).unwrap();
        let b1 = vec![1.0, 2.0];
        let b2 = vec![-3.0, 0.5];
        let batch = f.solve_many(&[b1.clone(), b2.clone()], &mut ledger).unwrap();
        let x1 = f.solve(&b1, &mut ledger).unwrap();
        let x2 = f.solve(&b2, &mut ledger).unwrap();
        for (a, b) in batch[0].iter().zip(&x1) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in batch[1].iter().zip(&x2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // identical rhs -> identical solutions
        let twice = f.solve_many(&[b1.clone(), b1.clone()], &mut ledger).unwrap();
        assert_eq!(twice[0], twice[1]);
        assert_eq!(ledger.solves, 2 + 2 + 2);
    }

    #[test]
    fn factorize_once_equals_factorize_per_solve() {
        let a = csr_from(&[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 3.0)], 2);
        let mut ledger = SolveLedger::new();
        let f1 = factorize(&a, &mut ledger).unwrap();
        let b = vec![1.0, -1.0];
        let x_once = f1.solve(&b, &mut ledger).unwrap();
        let f2 = factorize(&a, &mut ledger).unwrap();
        let x_again = f2.solve(&b, &mut ledger).unwrap();
        for (u, v) in x_once.iter().zip(&x_again) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let a = csr_from(&[(0, 0, 1.0), (1, 1, 1.0)], 2);
        let mut ledger = SolveLedger::new();
        let f = factorize(&a, &mut ledger).unwrap();
        assert!(matches!(
            f.solve(&[1.0], &mut ledger),
            Err(LinSolveError::DimensionMismatch { .. })
        ));
    }
}
