//! Assembly of the discrete operators: L2 mass, vector Laplacian,
//! divergence, the explicitly skew-symmetric convection form
//! b*(w, u, v) = 1/2 (w . grad u, v) - 1/2 (w . grad v, u),
//! load vectors, and the symmetric elimination of Dirichlet constraints.
//!
//! All element integrals use the degree-5 rule, which integrates every term
//! exactly on straight triangles.

use super::quadrature::{degree5, TriQuadrature};
use super::shape::{p1_values, p2_ref_grads, p2_values, N_P2};
use super::sparse::{CooMatrix, SparseOperator};
use super::{FieldFunction, FieldKind, ForceField, TaylorHoodSpace};

/// Per-element affine geometry: physical shape values/gradients at the
/// quadrature points.
pub(crate) struct ElementData {
    pub nodes: [usize; 6],
    pub verts: [usize; 3],
    pub det: f64,
    /// values[q][a]
    pub values: Vec<[f64; N_P2]>,
    /// grads[q][a] = physical gradient of shape a at point q
    pub grads: Vec<[[f64; 2]; N_P2]>,
    /// p1[q][i]
    pub p1: Vec<[f64; 3]>,
    /// physical coordinates of the quadrature points
    pub coords: Vec<[f64; 2]>,
}

pub(crate) fn element_data(space: &TaylorHoodSpace, e: usize, rule: &TriQuadrature) -> ElementData {
    let mesh = space.mesh();
    let tri = mesh.triangles()[e];
    let p0 = mesh.vertex(tri[0]);
    let p1v = mesh.vertex(tri[1]);
    let p2v = mesh.vertex(tri[2]);
    let j11 = p1v.x - p0.x;
    let j12 = p2v.x - p0.x;
    let j21 = p1v.y - p0.y;
    let j22 = p2v.y - p0.y;
    let det = j11 * j22 - j12 * j21;
    debug_assert!(det > 0.0);

    let nq = rule.points.len();
    let mut values = Vec::with_capacity(nq);
    let mut grads = Vec::with_capacity(nq);
    let mut p1vals = Vec::with_capacity(nq);
    let mut coords = Vec::with_capacity(nq);
    for l in &rule.points {
        values.push(p2_values(*l));
        let gref = p2_ref_grads(*l);
        let mut g = [[0.0; 2]; N_P2];
        for a in 0..N_P2 {
            let [gx, gy] = gref[a];
            g[a][0] = (j22 * gx - j21 * gy) / det;
            g[a][1] = (-j12 * gx + j11 * gy) / det;
        }
        grads.push(g);
        p1vals.push(p1_values(*l));
        coords.push([
            p0.x + j11 * l[1] + j12 * l[2],
            p0.y + j21 * l[1] + j22 * l[2],
        ]);
    }
    ElementData {
        nodes: space.element_p2(e),
        verts: tri,
        det,
        values,
        grads,
        p1: p1vals,
        coords,
    }
}

/// Scalar-component L2 mass matrix over the P2 nodes.
pub fn assemble_mass_scalar(space: &TaylorHoodSpace) -> SparseOperator {
    let rule = degree5();
    let n = space.n_nodes();
    let mut coo = CooMatrix::with_capacity(n, n, 36 * space.mesh().n_triangles());
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        let mut local = [[0.0; N_P2]; N_P2];
        for (q, w) in rule.weights.iter().enumerate() {
            let v = &ed.values[q];
            let scale = w * ed.det;
            for a in 0..N_P2 {
                for b in 0..N_P2 {
                    // group the symmetric product so the matrix is
                    // bitwise symmetric
                    local[a][b] += scale * (v[a] * v[b]);
                }
            }
        }
        for a in 0..N_P2 {
            for b in 0..N_P2 {
                coo.push(ed.nodes[a], ed.nodes[b], local[a][b]);
            }
        }
    }
    coo.to_csr()
}

/// Scalar-component stiffness (grad, grad) matrix over the P2 nodes.
pub fn assemble_stiffness_scalar(space: &TaylorHoodSpace) -> SparseOperator {
    let rule = degree5();
    let n = space.n_nodes();
    let mut coo = CooMatrix::with_capacity(n, n, 36 * space.mesh().n_triangles());
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        let mut local = [[0.0; N_P2]; N_P2];
        for (q, w) in rule.weights.iter().enumerate() {
            let g = &ed.grads[q];
            let scale = w * ed.det;
            for a in 0..N_P2 {
                for b in 0..N_P2 {
                    local[a][b] += scale * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        for a in 0..N_P2 {
            for b in 0..N_P2 {
                coo.push(ed.nodes[a], ed.nodes[b], local[a][b]);
            }
        }
    }
    coo.to_csr()
}

/// Expands a scalar P2 operator to the two-component velocity space
/// (block-diagonal).
pub fn expand_vector(scalar: &SparseOperator) -> SparseOperator {
    let n = scalar.nrows();
    let mut coo = CooMatrix::with_capacity(2 * n, 2 * n, 2 * scalar.nnz());
    for (r, c, v) in scalar.iter() {
        coo.push(r, c, v);
    }
    for (r, c, v) in scalar.iter() {
        coo.push(r + n, c + n, v);
    }
    coo.to_csr()
}

/// Vector L2 mass matrix (the discrete (u, v) form).
pub fn assemble_mass(space: &TaylorHoodSpace) -> SparseOperator {
    expand_vector(&assemble_mass_scalar(space))
}

/// Vector Laplacian (the discrete (grad u, grad v) form), unscaled by
/// viscosity and without boundary constraints.
pub fn assemble_stiffness(space: &TaylorHoodSpace) -> SparseOperator {
    expand_vector(&assemble_stiffness_scalar(space))
}

/// Scalar block of the skew-symmetric convection operator for the advecting
/// velocity field `w`. Entry (a, b) is b*(w, psi_b e_c, psi_a e_c), the same
/// for both components. Assembled as 1/2 (A1 - A1^T) so the skew symmetry is
/// exact in floating point.
pub fn assemble_convection_scalar(space: &TaylorHoodSpace, w: &[f64]) -> SparseOperator {
    assert_eq!(w.len(), space.n_vel());
    let rule = degree5();
    let n = space.n_nodes();
    let nn = space.n_nodes();
    let mut coo = CooMatrix::with_capacity(n, n, 36 * space.mesh().n_triangles());
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        let mut local = [[0.0; N_P2]; N_P2];
        for (q, wq) in rule.weights.iter().enumerate() {
            let v = &ed.values[q];
            let g = &ed.grads[q];
            let mut wx = 0.0;
            let mut wy = 0.0;
            for a in 0..N_P2 {
                wx += w[ed.nodes[a]] * v[a];
                wy += w[ed.nodes[a] + nn] * v[a];
            }
            let scale = wq * ed.det;
            // A1[a][b] = int (w . grad psi_b) psi_a
            for a in 0..N_P2 {
                for b in 0..N_P2 {
                    local[a][b] += scale * (wx * g[b][0] + wy * g[b][1]) * v[a];
                }
            }
        }
        for a in 0..N_P2 {
            for b in 0..N_P2 {
                let v = local[a][b];
                coo.push(ed.nodes[a], ed.nodes[b], 0.5 * v);
                coo.push(ed.nodes[b], ed.nodes[a], -0.5 * v);
            }
        }
    }
    coo.to_csr()
}

/// Skew-symmetric convection operator N(w) on the velocity space:
/// N(w)[i, j] = b*(w, phi_j, phi_i).
pub fn assemble_convection(space: &TaylorHoodSpace, w: &FieldFunction) -> SparseOperator {
    assert_eq!(w.kind, FieldKind::Velocity);
    expand_vector(&assemble_convection_scalar(space, &w.coeffs))
}

/// Divergence operator B (n_pr x n_vel): B[p, i] = (div phi_i, chi_p).
pub fn assemble_divergence(space: &TaylorHoodSpace) -> SparseOperator {
    let rule = degree5();
    let nn = space.n_nodes();
    let mut coo = CooMatrix::with_capacity(
        space.n_pr(),
        space.n_vel(),
        36 * space.mesh().n_triangles(),
    );
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        let mut local = [[[0.0; 2]; N_P2]; 3];
        for (q, wq) in rule.weights.iter().enumerate() {
            let g = &ed.grads[q];
            let chi = &ed.p1[q];
            let scale = wq * ed.det;
            for p in 0..3 {
                for b in 0..N_P2 {
                    local[p][b][0] += scale * g[b][0] * chi[p];
                    local[p][b][1] += scale * g[b][1] * chi[p];
                }
            }
        }
        for p in 0..3 {
            for b in 0..N_P2 {
                coo.push(ed.verts[p], ed.nodes[b], local[p][b][0]);
                coo.push(ed.verts[p], ed.nodes[b] + nn, local[p][b][1]);
            }
        }
    }
    coo.to_csr()
}

/// Load vector (f(., t), phi_i) over the velocity space.
pub fn assemble_load(space: &TaylorHoodSpace, force: &ForceField, t: f64) -> Vec<f64> {
    let rule = degree5();
    let nn = space.n_nodes();
    let mut out = vec![0.0; space.n_vel()];
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, wq) in rule.weights.iter().enumerate() {
            let [x, y] = ed.coords[q];
            let f = force.eval(x, y, t);
            let scale = wq * ed.det;
            let v = &ed.values[q];
            for a in 0..N_P2 {
                out[ed.nodes[a]] += scale * f[0] * v[a];
                out[ed.nodes[a] + nn] += scale * f[1] * v[a];
            }
        }
    }
    out
}

/// Vector of pressure test-function integrals (chi_p, 1), used as the
/// zero-mean Lagrange multiplier row.
pub fn pressure_integral_vector(space: &TaylorHoodSpace) -> Vec<f64> {
    let rule = degree5();
    let mut out = vec![0.0; space.n_pr()];
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, wq) in rule.weights.iter().enumerate() {
            let chi = &ed.p1[q];
            let scale = wq * ed.det;
            for p in 0..3 {
                out[ed.verts[p]] += scale * chi[p];
            }
        }
    }
    out
}

/// P1 pressure mass matrix (used by the inf-sup diagnostics).
pub fn assemble_pressure_mass(space: &TaylorHoodSpace) -> SparseOperator {
    let rule = degree5();
    let n = space.n_pr();
    let mut coo = CooMatrix::with_capacity(n, n, 9 * space.mesh().n_triangles());
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        let mut local = [[0.0; 3]; 3];
        for (q, wq) in rule.weights.iter().enumerate() {
            let chi = &ed.p1[q];
            let scale = wq * ed.det;
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += scale * (chi[a] * chi[b]);
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                coo.push(ed.verts[a], ed.verts[b], local[a][b]);
            }
        }
    }
    coo.to_csr()
}

/// Assembles the saddle-point system
///
/// ```text
/// [ K   -B^T  0 ] [u]   [f]
/// [ B    0    c ] [p] = [0]
/// [ 0   c^T   0 ] [g]   [0]
/// ```
///
/// where the scalar multiplier g enforces the zero-mean pressure gauge.
pub fn build_saddle(
    k: &SparseOperator,
    b: &SparseOperator,
    c: &[f64],
) -> SparseOperator {
    let n_vel = k.nrows();
    let n_pr = b.nrows();
    assert_eq!(b.ncols(), n_vel);
    assert_eq!(c.len(), n_pr);
    let n = n_vel + n_pr + 1;
    let mut coo = CooMatrix::with_capacity(n, n, k.nnz() + 2 * b.nnz() + 2 * n_pr);
    for (r, col, v) in k.iter() {
        coo.push(r, col, v);
    }
    for (p, i, v) in b.iter() {
        coo.push(n_vel + p, i, v);
        coo.push(i, n_vel + p, -v);
    }
    for (p, &v) in c.iter().enumerate() {
        coo.push(n_vel + p, n_vel + n_pr, v);
        coo.push(n_vel + n_pr, n_vel + p, v);
    }
    coo.to_csr()
}

/// Matrix half of the symmetric Dirichlet elimination: constrained rows and
/// columns are dropped and their diagonal entries become one.
pub fn constrain_matrix(matrix: &SparseOperator, constrained: &[usize]) -> SparseOperator {
    assert_eq!(matrix.nrows(), matrix.ncols());
    let mut mask = vec![false; matrix.nrows()];
    for &d in constrained {
        mask[d] = true;
    }
    let mut coo = CooMatrix::with_capacity(matrix.nrows(), matrix.ncols(), matrix.nnz());
    for (r, c, v) in matrix.iter() {
        if !mask[r] && !mask[c] {
            coo.push(r, c, v);
        }
    }
    for &d in constrained {
        coo.push(d, d, 1.0);
    }
    coo.to_csr()
}

/// Symmetric elimination of homogeneous Dirichlet constraints: constrained
/// rows and columns are dropped, the diagonal entry becomes one and the
/// right-hand side entry zero.
pub fn apply_dirichlet(
    matrix: &SparseOperator,
    rhs: &mut [f64],
    constrained: &[usize],
) -> SparseOperator {
    assert_eq!(rhs.len(), matrix.nrows());
    for &d in constrained {
        rhs[d] = 0.0;
    }
    constrain_matrix(matrix, constrained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_offset_annulus, Mesh, Point2};

    fn unit_right_triangle_space() -> TaylorHoodSpace {
        let mesh = Mesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
            vec![],
        )
        .unwrap();
        TaylorHoodSpace::new(mesh)
    }

    fn annulus_space(h: f64) -> TaylorHoodSpace {
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), h).unwrap();
        TaylorHoodSpace::new(mesh)
    }

    #[test]
    fn mass_sum_is_area_on_unit_triangle() {
        let space = unit_right_triangle_space();
        let m = assemble_mass_scalar(&space);
        let sum: f64 = m.iter().map(|(_, _, v)| v).sum();
        assert!((sum - 0.5).abs() < 1e-14, "sum {sum}");
    }

    #[test]
    fn mass_is_spd() {
        use rand::prelude::*;
        let space = annulus_space(0.3);
        let m = assemble_mass(&space);
        assert_eq!(m.max_asymmetry(), 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v: Vec<f64> = (0..m.nrows()).map(|_| rng.gen::<f64>() - 0.5).collect();
            assert!(m.bilinear(&v, &v) > 0.0);
        }
    }

    #[test]
    fn annulus_mass_total_matches_circle_area() {
        // the boundary polygons need ~256 segments before the geometric
        // error drops under 1e-3
        let space = annulus_space(0.024);
        let m = assemble_mass_scalar(&space);
        let sum: f64 = m.iter().map(|(_, _, v)| v).sum();
        let exact = std::f64::consts::PI * (1.0 - 0.01);
        assert!(
            (sum - exact).abs() < 1e-3,
            "polygonal area {sum} vs {exact}"
        );
    }

    #[test]
    fn stiffness_kills_constants_and_is_symmetric() {
        let space = annulus_space(0.25);
        let a = assemble_stiffness(&space);
        assert_eq!(a.max_asymmetry(), 0.0);
        let c = space.interpolate_velocity(|_, _| [2.5, -1.25]);
        let ac = a.matvec(&c);
        let worst = ac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12 * a.max_abs(), "A c = {worst:e}");
    }

    #[test]
    fn stiffness_energy_of_linear_field() {
        let space = annulus_space(0.25);
        let a = assemble_stiffness(&space);
        let u = space.interpolate_velocity(|x, y| [x, y]);
        // int |grad u|^2 = 2 |Omega|, with |Omega| the polygonal area
        let area: f64 = (0..space.mesh().n_triangles())
            .map(|t| space.mesh().triangle_area(t))
            .sum();
        let energy = a.bilinear(&u, &u);
        assert!(
            (energy - 2.0 * area).abs() < 1e-10,
            "energy {energy} vs {}",
            2.0 * area
        );
    }

    #[test]
    fn divergence_of_rigid_rotation_vanishes() {
        let space = annulus_space(0.25);
        let b = assemble_divergence(&space);
        assert_eq!(b.nrows(), space.n_pr());
        assert_eq!(b.ncols(), space.n_vel());
        let u = space.interpolate_velocity(|x, y| [y, -x]);
        let bu = b.matvec(&u);
        let worst = bu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-13, "B u = {worst:e}");
        let zero = space.zero_velocity();
        assert!(b.matvec(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_theorem_against_boundary_quadrature() {
        let space = annulus_space(0.25);
        let b = assemble_divergence(&space);
        let u = space.interpolate_velocity(|x, _| [x, 0.0]);
        let bu = b.matvec(&u);
        let total: f64 = bu.iter().sum();
        // boundary integral of u . n over the tagged polygon; u = (x, 0) is
        // linear, so the trapezoid rule per straight edge is exact
        let mesh = space.mesh();
        let mut boundary_flux = 0.0;
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            for k in 0..3 {
                let a = tri[k];
                let c = tri[(k + 1) % 3];
                // only topological boundary edges contribute; interior edges
                // appear twice with opposite normals
                let pa = mesh.vertex(a);
                let pc = mesh.vertex(c);
                // outward normal of a CCW triangle edge points right of a->c
                let nx = pc.y - pa.y;
                let ny = -(pc.x - pa.x);
                let mid_u = 0.5 * (pa.x + pc.x);
                boundary_flux += mid_u * nx + 0.0 * ny;
            }
        }
        assert!(
            (total - boundary_flux).abs() < 1e-12,
            "sum(Bu) {total} vs flux {boundary_flux}"
        );
    }

    #[test]
    fn convection_skew_symmetry_is_exact() {
        use rand::prelude::*;
        let space = annulus_space(0.3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w: Vec<f64> = (0..space.n_vel()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let n = assemble_convection(&space, &FieldFunction::velocity(w));
        // N + N^T must vanish exactly
        for (r, c, v) in n.iter() {
            assert_eq!(v + n.get(c, r), 0.0);
        }
        for _ in 0..20 {
            let v: Vec<f64> = (0..space.n_vel()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let energy = n.bilinear(&v, &v);
            assert!(energy.abs() <= 1e-12 * n.max_abs().max(1.0));
        }
        let zero_w = space.zero_velocity();
        let n0 = assemble_convection(&space, &FieldFunction::velocity(zero_w));
        assert_eq!(n0.max_abs(), 0.0);
    }

    #[test]
    fn load_of_constant_force_is_mass_times_constant() {
        let space = annulus_space(0.3);
        let load = assemble_load(&space, &ForceField::Constant(1.5, -2.0), 0.0);
        let m = assemble_mass(&space);
        let c = space.interpolate_velocity(|_, _| [1.5, -2.0]);
        let mc = m.matvec(&c);
        for (a, b) in load.iter().zip(&mc) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
        let zero = assemble_load(&space, &ForceField::Zero, 0.0);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_elimination_properties() {
        let space = annulus_space(0.3);
        let a = assemble_stiffness(&space);
        let mut rhs = vec![1.0; space.n_vel()];
        let ac = apply_dirichlet(&a, &mut rhs, space.constrained_dofs());
        assert_eq!(ac.max_asymmetry(), 0.0);
        for &d in space.constrained_dofs() {
            assert_eq!(rhs[d], 0.0);
            let (cols, vals) = ac.row(d);
            assert_eq!(cols, &[d]);
            assert_eq!(vals, &[1.0]);
        }
        // constraining everything yields the identity
        let all: Vec<usize> = (0..space.n_vel()).collect();
        let mut rhs2 = vec![3.0; space.n_vel()];
        let id = apply_dirichlet(&a, &mut rhs2, &all);
        assert_eq!(id.nnz(), space.n_vel());
        assert!(rhs2.iter().all(|&v| v == 0.0));
    }
}
