//! Taylor-Hood (P2-P1) function spaces over a triangulation, field and
//! forcing descriptors, and the operator assembly routines.
//!
//! Velocity degrees of freedom are laid out component-blocked: dof
//! `c * n_nodes + node` holds component `c` of the P2 node `node`, where
//! nodes `0..V` are the mesh vertices and `V..V+E` the edge midpoints.

pub mod assembly;
pub mod oracle;
pub mod quadrature;
pub mod shape;
pub mod sparse;

pub use assembly::{
    apply_dirichlet, assemble_convection, assemble_divergence, assemble_load, assemble_mass,
    assemble_stiffness, build_saddle,
};
pub use sparse::{CooMatrix, SparseOperator};

use crate::mesh::{boundary_dofs, Mesh, Point2};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// Coefficient vector over the velocity or pressure unknowns of a space.
#[derive(Clone, Debug)]
pub struct FieldFunction {
    pub kind: FieldKind,
    pub coeffs: Vec<f64>,
}

impl FieldFunction {
    pub fn velocity(coeffs: Vec<f64>) -> Self {
        FieldFunction {
            kind: FieldKind::Velocity,
            coeffs,
        }
    }

    pub fn pressure(coeffs: Vec<f64>) -> Self {
        FieldFunction {
            kind: FieldKind::Pressure,
            coeffs,
        }
    }
}

/// Analytic body forces. `Rotational` is the counterclockwise driving force
/// of the offset-cylinder experiment,
/// f(x, y) = (-4y(1 - x^2 - y^2), 4x(1 - x^2 - y^2)).
#[derive(Clone)]
pub enum ForceField {
    Zero,
    Constant(f64, f64),
    Rotational,
    Custom(Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>),
}

impl std::fmt::Debug for ForceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForceField::Zero => write!(f, "Zero"),
            ForceField::Constant(a, b) => write!(f, "Constant({a}, {b})"),
            ForceField::Rotational => write!(f, "Rotational"),
            ForceField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ForceField {
    #[inline]
    pub fn eval(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self {
            ForceField::Zero => [0.0, 0.0],
            ForceField::Constant(fx, fy) => [*fx, *fy],
            ForceField::Rotational => {
                let s = 1.0 - x * x - y * y;
                [-4.0 * y * s, 4.0 * x * s]
            }
            ForceField::Custom(f) => f(x, y, t),
        }
    }

    /// Conservative: custom closures are treated as time dependent.
    pub fn time_dependent(&self) -> bool {
        matches!(self, ForceField::Custom(_))
    }
}

/// P2 velocity / P1 pressure space over a mesh, with the Dirichlet
/// (no-slip) constraint set taken from the tagged boundary.
#[derive(Debug)]
pub struct TaylorHoodSpace {
    mesh: Mesh,
    n_nodes: usize,
    n_vel: usize,
    n_pr: usize,
    elem_p2: Vec<[usize; 6]>,
    constrained: Vec<usize>,
    is_constrained: Vec<bool>,
}

impl TaylorHoodSpace {
    pub fn new(mesh: Mesh) -> Self {
        let nv = mesh.n_vertices();
        let n_nodes = nv + mesh.n_edges();
        let n_vel = 2 * n_nodes;
        let elem_p2 = mesh
            .triangles()
            .iter()
            .map(|&[a, b, c]| {
                [
                    a,
                    b,
                    c,
                    nv + mesh.edge_id(a, b).unwrap(),
                    nv + mesh.edge_id(b, c).unwrap(),
                    nv + mesh.edge_id(c, a).unwrap(),
                ]
            })
            .collect();
        let bnodes = boundary_dofs(&mesh);
        let mut constrained: Vec<usize> = Vec::with_capacity(2 * bnodes.len());
        for &n in &bnodes {
            constrained.push(n);
        }
        for &n in &bnodes {
            constrained.push(n + n_nodes);
        }
        constrained.sort_unstable();
        let mut is_constrained = vec![false; n_vel];
        for &d in &constrained {
            is_constrained[d] = true;
        }
        TaylorHoodSpace {
            n_pr: nv,
            mesh,
            n_nodes,
            n_vel,
            elem_p2,
            constrained,
            is_constrained,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn n_pr(&self) -> usize {
        self.n_pr
    }

    pub fn element_p2(&self, e: usize) -> [usize; 6] {
        self.elem_p2[e]
    }

    /// Sorted velocity dof ids pinned by the no-slip boundary condition.
    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.is_constrained[dof]
    }

    pub fn velocity_dof(&self, node: usize, comp: usize) -> usize {
        comp * self.n_nodes + node
    }

    pub fn node_position(&self, node: usize) -> Point2 {
        let nv = self.mesh.n_vertices();
        if node < nv {
            self.mesh.vertex(node)
        } else {
            self.mesh.edge_midpoint(node - nv)
        }
    }

    pub fn zero_velocity(&self) -> Vec<f64> {
        vec![0.0; self.n_vel]
    }

    /// Interpolates an analytic velocity field at the P2 nodes.
    pub fn interpolate_velocity(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vel];
        for node in 0..self.n_nodes {
            let p = self.node_position(node);
            let v = f(p.x, p.y);
            out[node] = v[0];
            out[node + self.n_nodes] = v[1];
        }
        out
    }

    /// Interpolates an analytic scalar field at the P1 (vertex) nodes.
    pub fn interpolate_pressure(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.n_pr)
            .map(|v| {
                let p = self.mesh.vertex(v);
                f(p.x, p.y)
            })
            .collect()
    }

    pub fn zero_constrained(&self, velocity: &mut [f64]) {
        for &d in &self.constrained {
            velocity[d] = 0.0;
        }
    }
}
