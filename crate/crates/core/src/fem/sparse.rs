//! Compressed sparse row storage for the assembled finite element operators.

use std::fmt;

/// Triplet accumulator used during assembly. Duplicate entries are summed
/// when the matrix is compressed; the summation order is the push order,
/// which keeps results bit-reproducible.
#[derive(Clone)]
pub struct CooMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooMatrix {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        CooMatrix {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_csr(&self) -> SparseOperator {
        SparseOperator::from_coo(self)
    }
}

/// Sparse matrix in CSR form. Column indices are sorted within each row and
/// duplicates have been merged.
#[derive(Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl fmt::Debug for SparseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseOperator({}x{}, nnz={})",
            self.nrows,
            self.ncols,
            self.nnz()
        )
    }
}

impl SparseOperator {
    pub fn from_coo(coo: &CooMatrix) -> Self {
        let mut order: Vec<usize> = (0..coo.entries.len()).collect();
        // Stable sort: duplicates stay in push order so their sum is
        // evaluated deterministically.
        order.sort_by_key(|&k| {
            let (r, c, _) = coo.entries[k];
            (r, c)
        });

        let mut row_ptr = vec![0usize; coo.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = coo.entries[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..coo.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            nrows: coo.nrows,
            ncols: coo.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// max_{ij} |A_ij - A_ji|
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut worst = 0.0f64;
        for (r, c, v) in self.iter() {
            worst = worst.max((v - self.get(c, r)).abs());
        }
        worst
    }

    /// Whether two operators share an identical sparsity pattern.
    pub fn same_pattern(&self, other: &SparseOperator) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// Linear combination sum_k coeff_k * op_k. All operands must share one
    /// sparsity pattern (the assembly routines guarantee this for operators
    /// built over the same space).
    pub fn linear_combination(terms: &[(f64, &SparseOperator)]) -> SparseOperator {
        assert!(!terms.is_empty());
        let first = terms[0].1;
        for &(_, op) in &terms[1..] {
            assert!(first.same_pattern(op), "pattern mismatch in linear_combination");
        }
        let mut out = first.clone();
        for v in out.values.iter_mut() {
            *v = 0.0;
        }
        for &(coeff, op) in terms {
            for (dst, src) in out.values.iter_mut().zip(&op.values) {
                *dst += coeff * src;
            }
        }
        out
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// Column-major triplets (used to hand the matrix to the factorization
    /// backend).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.iter().collect()
    }
}
