//! POD basis construction from trajectory snapshots via the correlation
//! matrix eigenproblem, and the reduced operators of the Galerkin system:
//! the POD stiffness S_R, the convection tensor, and the reduced forces.
//!
//! Modes are L2-orthonormal, discretely divergence-free (they inherit it
//! from the snapshots) and zero on the boundary. The Parseval identities
//! tying projection errors to eigenvalue tails are exposed for use as
//! correctness oracles.

use crate::fem::assembly::{assemble_convection_scalar, assemble_load};
use crate::fem::{ForceField, SparseOperator, TaylorHoodSpace};
use crate::fom::SnapshotSet;
use crate::linsolve::{operator_2norm, sym_eig};
use faer::Mat;
use std::sync::Arc;
use thiserror::Error;

/// Relative eigenvalue threshold below which the snapshot set is treated as
/// numerically rank deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PodError {
    #[error("requested {requested} modes but the snapshot set has numerical rank {effective_rank}")]
    RankDeficient {
        requested: usize,
        effective_rank: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// R mass-orthonormal velocity modes plus the full eigenvalue list of the
/// correlation matrix (kept for the decay diagnostics).
#[derive(Clone)]
pub struct PodBasis {
    pub r: usize,
    /// modes[i] is the coefficient vector of phi_{i+1}
    pub modes: Vec<Vec<f64>>,
    /// all eigenvalues of the correlation matrix, descending, tiny negatives
    /// clamped to zero
    pub eigenvalues: Vec<f64>,
    pub space: Arc<TaylorHoodSpace>,
    pub mass: Arc<SparseOperator>,
}

impl PodBasis {
    pub fn n_vel(&self) -> usize {
        self.mass.nrows()
    }

    /// Reconstructs the full-order field Phi a.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        assert_eq!(coords.len(), self.r);
        let mut out = vec![0.0; self.n_vel()];
        for (a, mode) in coords.iter().zip(&self.modes) {
            for (o, m) in out.iter_mut().zip(mode) {
                *o += a * m;
            }
        }
        out
    }
}

/// Correlation matrix C = A^T M A of the snapshot columns.
pub fn correlation_matrix(snapshots: &SnapshotSet, mass: &SparseOperator) -> Mat<f64> {
    let d = snapshots.n_columns();
    let mut m_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for col in &snapshots.columns {
        m_cols.push(mass.matvec(col));
    }
    let mut c = Mat::<f64>::zeros(d, d);
    for i in 0..d {
        for k in 0..=i {
            let v = crate::linsolve::dot(&snapshots.columns[i], &m_cols[k]);
            c[(i, k)] = v;
            c[(k, i)] = v;
        }
    }
    c
}

/// Numerical rank of the correlation spectrum.
fn effective_rank(eigenvalues: &[f64]) -> usize {
    let lambda1 = eigenvalues.first().copied().unwrap_or(0.0);
    if lambda1 <= 0.0 {
        return 0;
    }
    eigenvalues
        .iter()
        .take_while(|&&l| l > RANK_TOL * lambda1)
        .count()
}

/// Builds the POD basis phi_i = A a_i / sqrt(lambda_i) for the R leading
/// eigenpairs, re-orthonormalized in the mass inner product and sign-fixed
/// so the largest-magnitude coefficient of each mode is positive.
pub fn compute_pod_basis(
    snapshots: &SnapshotSet,
    mass: &Arc<SparseOperator>,
    space: &Arc<TaylorHoodSpace>,
    r: usize,
) -> Result<PodBasis, PodError> {
    let d = snapshots.n_columns();
    if d == 0 {
        return Err(PodError::Config("empty snapshot set".into()));
    }
    let c = correlation_matrix(snapshots, mass);
    let (mut eigenvalues, vectors) = sym_eig(&c).expect("correlation matrix is symmetric");
    // C is positive semidefinite; sub-roundoff negatives are clamped
    let lambda1 = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    for l in eigenvalues.iter_mut() {
        if *l < RANK_TOL * lambda1 {
            *l = l.max(0.0);
        }
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    let rank = effective_rank(&eigenvalues);
    if r > rank {
        return Err(PodError::RankDeficient {
            requested: r,
            effective_rank: rank,
        });
    }

    let n_vel = snapshots.n_vel;
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(r);
    for i in 0..r {
        let scale = 1.0 / eigenvalues[i].sqrt();
        let mut phi = vec![0.0; n_vel];
        for (k, col) in snapshots.columns.iter().enumerate() {
            let w = vectors[(k, i)] * scale;
            for (p, v) in phi.iter_mut().zip(col) {
                *p += w * v;
            }
        }
        modes.push(phi);
    }

    // two rounds of modified Gram-Schmidt in the M inner product repair the
    // floating-point drift of the lambda^(-1/2) scaling for tail modes
    for _ in 0..2 {
        for i in 0..r {
            for k in 0..i {
                let mk = mass.matvec(&modes[k]);
                let proj = crate::linsolve::dot(&modes[i], &mk);
                let (head, tail) = modes.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[k]) {
                    *x -= proj * y;
                }
            }
            let norm = mass.bilinear(&modes[i], &modes[i]).sqrt();
            for x in modes[i].iter_mut() {
                *x /= norm;
            }
        }
    }

    // deterministic sign: largest-magnitude coefficient positive
    for phi in modes.iter_mut() {
        let mut best = 0usize;
        for (k, v) in phi.iter().enumerate() {
            if v.abs() > phi[best].abs() {
                best = k;
            }
        }
        if phi[best] < 0.0 {
            for v in phi.iter_mut() {
                *v = -*v;
            }
        }
    }

    Ok(PodBasis {
        r,
        modes,
        eigenvalues,
        space: Arc::clone(space),
        mass: Arc::clone(mass),
    })
}

/// L2 projection coordinates Phi^T M u.
pub fn project_l2(basis: &PodBasis, u: &[f64]) -> Vec<f64> {
    let mu = basis.mass.matvec(u);
    basis
        .modes
        .iter()
        .map(|phi| crate::linsolve::dot(phi, &mu))
        .collect()
}

/// Reduced force representation: static loads are projected once.
#[derive(Clone, Debug)]
pub enum ReducedForce {
    Static(Vec<f64>),
    Dynamic(ForceField),
}

/// The reduced Galerkin operators: POD stiffness S_R and its 2-norm, the
/// convection tensor T[k][i][j] = b*(phi_k, phi_j, phi_i), and the reduced
/// forces per realization.
pub struct ReducedOperators {
    pub r: usize,
    pub s_r: Mat<f64>,
    pub s_norm: f64,
    /// tensor[k] is the R x R slice for advecting mode phi_k
    pub tensor: Vec<Mat<f64>>,
    pub forces: Vec<ReducedForce>,
    pub basis: Arc<PodBasis>,
}

impl ReducedOperators {
    /// Reduced force vector (f^j(., t), phi_i).
    pub fn force_at(&self, j: usize, t: f64) -> Vec<f64> {
        match &self.forces[j] {
            ReducedForce::Static(v) => v.clone(),
            ReducedForce::Dynamic(f) => reduce_force(&self.basis, f, t),
        }
    }

    /// B_R(g)[i][l] = sum_k g_k T[k][i][l]: the reduced convection matrix for
    /// an advecting field with coordinates g.
    pub fn convection_matrix(&self, g: &[f64]) -> Mat<f64> {
        let r = self.r;
        let mut out = Mat::<f64>::zeros(r, r);
        for (k, slice) in self.tensor.iter().enumerate() {
            let gk = g[k];
            for i in 0..r {
                for l in 0..r {
                    out[(i, l)] += gk * slice[(i, l)];
                }
            }
        }
        out
    }

    /// ||grad v||^2 = g^T S_R g for v in the POD space.
    pub fn grad_norm_sq(&self, g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.r {
            let mut row = 0.0;
            for j in 0..self.r {
                row += self.s_r[(i, j)] * g[j];
            }
            acc += g[i] * row;
        }
        acc
    }
}

pub fn reduce_force(basis: &PodBasis, force: &ForceField, t: f64) -> Vec<f64> {
    let load = assemble_load(&basis.space, force, t);
    basis
        .modes
        .iter()
        .map(|phi| crate::linsolve::dot(phi, &load))
        .collect()
}

/// Assembles S_R, the convection tensor and the reduced forces by
/// quadrature (each tensor slice comes from the assembled skew form of the
/// advecting mode, so slice skew-symmetry is inherited exactly).
pub fn build_reduced_operators(basis: &Arc<PodBasis>, forces: &[ForceField]) -> ReducedOperators {
    let space = &basis.space;
    let r = basis.r;
    let stiffness = crate::fem::assembly::assemble_stiffness(space);
    let mut s_r = Mat::<f64>::zeros(r, r);
    for i in 0..r {
        let a_phi = stiffness.matvec(&basis.modes[i]);
        for j in 0..=i {
            let v = crate::linsolve::dot(&basis.modes[j], &a_phi);
            s_r[(i, j)] = v;
            s_r[(j, i)] = v;
        }
    }
    let s_norm = operator_2norm(&symmetrize(&s_r));

    let nn = space.n_nodes();
    let mut tensor = Vec::with_capacity(r);
    for k in 0..r {
        let n_k = assemble_convection_scalar(space, &basis.modes[k]);
        let mut slice = Mat::<f64>::zeros(r, r);
        // apply the scalar skew block to both components of phi_j, then dot
        // with phi_i; T[k][i][j] = b*(phi_k, phi_j, phi_i)
        for j in 0..r {
            let phi_j = &basis.modes[j];
            let mut n_phi = vec![0.0; 2 * nn];
            let nx = n_k.matvec(&phi_j[0..nn]);
            let ny = n_k.matvec(&phi_j[nn..2 * nn]);
            n_phi[0..nn].copy_from_slice(&nx);
            n_phi[nn..2 * nn].copy_from_slice(&ny);
            for i in 0..r {
                slice[(i, j)] = crate::linsolve::dot(&basis.modes[i], &n_phi);
            }
        }
        tensor.push(slice);
    }

    let reduced_forces = forces
        .iter()
        .map(|f| {
            if f.time_dependent() {
                ReducedForce::Dynamic(f.clone())
            } else {
                ReducedForce::Static(reduce_force(basis, f, 0.0))
            }
        })
        .collect();

    ReducedOperators {
        r,
        s_r,
        s_norm,
        tensor,
        forces: reduced_forces,
        basis: Arc::clone(basis),
    }
}

fn symmetrize(a: &Mat<f64>) -> Mat<f64> {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Both sides of the snapshot projection-error identities:
/// sum over snapshots of ||u - P_R u||^2 against the L2 eigenvalue tail,
/// and the H1-seminorm analogue against sum_{i>R} lambda_i ||grad phi_i||^2.
/// The returned scales are the R = 0 totals of each identity (total
/// snapshot energy), the natural normalization for comparing the sides.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionIdentity {
    pub lhs_l2: f64,
    pub rhs_l2: f64,
    pub lhs_h1: f64,
    pub rhs_h1: f64,
    pub scale_l2: f64,
    pub scale_h1: f64,
}

pub fn projection_error_identity(
    snapshots: &SnapshotSet,
    basis: &PodBasis,
) -> ProjectionIdentity {
    let space = &basis.space;
    let mass = &basis.mass;
    let stiffness = crate::fem::assembly::assemble_stiffness(space);
    let r = basis.r;

    // left sides: residuals of the actual basis projection
    let mut lhs_l2 = 0.0;
    let mut lhs_h1 = 0.0;
    for col in &snapshots.columns {
        let coords = project_l2(basis, col);
        let recon = basis.reconstruct(&coords);
        let residual: Vec<f64> = col.iter().zip(&recon).map(|(a, b)| a - b).collect();
        lhs_l2 += mass.bilinear(&residual, &residual);
        lhs_h1 += stiffness.bilinear(&residual, &residual);
    }

    // right sides: eigenvalue tails. The H1 tail sums a_i^T G a_i with
    // G = A^T (stiffness) A, which equals lambda_i ||grad phi_i||^2 without
    // dividing by small eigenvalues.
    let c = correlation_matrix(snapshots, mass);
    let (eigenvalues, vectors) = sym_eig(&c).expect("correlation matrix is symmetric");
    let d = snapshots.n_columns();
    let g_cols: Vec<Vec<f64>> = snapshots
        .columns
        .iter()
        .map(|col| stiffness.matvec(col))
        .collect();
    let mut gram_h1 = Mat::<f64>::zeros(d, d);
    for i in 0..d {
        for k in 0..=i {
            let v = crate::linsolve::dot(&snapshots.columns[i], &g_cols[k]);
            gram_h1[(i, k)] = v;
            gram_h1[(k, i)] = v;
        }
    }
    let quad = |m: &Mat<f64>, col: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += m[(i, j)] * vectors[(j, col)];
            }
            acc += vectors[(i, col)] * row;
        }
        acc
    };
    let mut rhs_l2 = 0.0;
    let mut rhs_h1 = 0.0;
    let mut scale_h1 = 0.0;
    for i in 0..d {
        let h1_i = quad(&gram_h1, i);
        scale_h1 += h1_i;
        if i >= r {
            rhs_l2 += eigenvalues[i];
            rhs_h1 += h1_i;
        }
    }
    let scale_l2: f64 = eigenvalues.iter().sum();

    ProjectionIdentity {
        lhs_l2,
        rhs_l2,
        lhs_h1,
        rhs_h1,
        scale_l2,
        scale_h1,
    }
}

/// POD basis file: `podbasis <K> <R>`, a line with d, one line with all d
/// eigenvalues, then R mode lines of K coefficients.
pub fn save_basis(basis: &PodBasis) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "podbasis {} {}", basis.n_vel(), basis.r).unwrap();
    writeln!(out, "{}", basis.eigenvalues.len()).unwrap();
    let mut first = true;
    for l in &basis.eigenvalues {
        if !first {
            out.push(' ');
        }
        write!(out, "{l:.16e}").unwrap();
        first = false;
    }
    out.push('\n');
    for mode in &basis.modes {
        let mut first = true;
        for v in mode {
            if !first {
                out.push(' ');
            }
            write!(out, "{v:.16e}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn load_basis(
    text: &str,
    mass: &Arc<SparseOperator>,
    space: &Arc<TaylorHoodSpace>,
) -> Result<PodBasis, PodError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(PodError::Parse {
        line: 1,
        msg: "empty basis file".into(),
    })?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 3 || f[0] != "podbasis" {
        return Err(PodError::Parse {
            line: 1,
            msg: "expected `podbasis <K> <R>`".into(),
        });
    }
    let parse_usize = |s: &str, line: usize| -> Result<usize, PodError> {
        s.parse().map_err(|_| PodError::Parse {
            line: line + 1,
            msg: format!("bad integer `{s}`"),
        })
    };
    let n_vel = parse_usize(f[1], 0)?;
    let r = parse_usize(f[2], 0)?;
    if n_vel != mass.nrows() {
        return Err(PodError::Config(format!(
            "basis has {n_vel} velocity dofs but the space has {}",
            mass.nrows()
        )));
    }
    let (no_d, d_line) = lines.next().ok_or(PodError::Parse {
        line: 2,
        msg: "missing eigenvalue count".into(),
    })?;
    let d = parse_usize(d_line.trim(), no_d)?;
    let (no_e, eig_line) = lines.next().ok_or(PodError::Parse {
        line: 3,
        msg: "missing eigenvalue list".into(),
    })?;
    let eigenvalues: Result<Vec<f64>, PodError> = eig_line
        .split_whitespace()
        .map(|s| {
            s.parse().map_err(|_| PodError::Parse {
                line: no_e + 1,
                msg: format!("bad eigenvalue `{s}`"),
            })
        })
        .collect();
    let eigenvalues = eigenvalues?;
    if eigenvalues.len() != d {
        return Err(PodError::Parse {
            line: no_e + 1,
            msg: format!("{} eigenvalues listed, header says {d}", eigenvalues.len()),
        });
    }
    let mut modes = Vec::with_capacity(r);
    for _ in 0..r {
        let (no, line) = lines.next().ok_or(PodError::Parse {
            line: 4,
            msg: "missing mode line".into(),
        })?;
        let mode: Result<Vec<f64>, PodError> = line
            .split_whitespace()
            .map(|s| {
                s.parse().map_err(|_| PodError::Parse {
                    line: no + 1,
                    msg: format!("bad coefficient `{s}`"),
                })
            })
            .collect();
        let mode = mode?;
        if mode.len() != n_vel {
            return Err(PodError::Parse {
                line: no + 1,
                msg: format!("mode has {} coefficients, expected {n_vel}", mode.len()),
            });
        }
        modes.push(mode);
    }
    Ok(PodBasis {
        r,
        modes,
        eigenvalues,
        space: Arc::clone(space),
        mass: Arc::clone(mass),
    })
}
