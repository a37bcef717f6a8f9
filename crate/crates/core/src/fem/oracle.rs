//! Direct-quadrature evaluation of the weak forms, independent of the
//! assembled operator path. These integrators evaluate fields pointwise
//! from their coefficients with a collapsed 6x6 Gauss rule (exact to total
//! degree 9) and exist to serve as oracles in the test suites.

use super::assembly::element_data;
use super::quadrature::collapsed_gauss;
use super::shape::N_P2;
use super::{ForceField, TaylorHoodSpace};

fn oracle_rule() -> super::quadrature::TriQuadrature {
    collapsed_gauss(6)
}

struct FieldAt {
    value: [f64; 2],
    grad: [[f64; 2]; 2],
}

fn eval_field(
    space: &TaylorHoodSpace,
    ed: &super::assembly::ElementData,
    q: usize,
    coeffs: &[f64],
) -> FieldAt {
    let nn = space.n_nodes();
    let mut value = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for a in 0..N_P2 {
        let node = ed.nodes[a];
        let v = ed.values[q][a];
        let g = ed.grads[q][a];
        for c in 0..2 {
            let coeff = coeffs[node + c * nn];
            value[c] += coeff * v;
            grad[c][0] += coeff * g[0];
            grad[c][1] += coeff * g[1];
        }
    }
    FieldAt { value, grad }
}

/// int_Omega u . v
pub fn l2_inner(space: &TaylorHoodSpace, u: &[f64], v: &[f64]) -> f64 {
    let rule = oracle_rule();
    let mut acc = 0.0;
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, w) in rule.weights.iter().enumerate() {
            let fu = eval_field(space, &ed, q, u);
            let fv = eval_field(space, &ed, q, v);
            acc += w * ed.det * (fu.value[0] * fv.value[0] + fu.value[1] * fv.value[1]);
        }
    }
    acc
}

/// int_Omega grad u : grad v
pub fn h1_inner(space: &TaylorHoodSpace, u: &[f64], v: &[f64]) -> f64 {
    let rule = oracle_rule();
    let mut acc = 0.0;
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, w) in rule.weights.iter().enumerate() {
            let fu = eval_field(space, &ed, q, u);
            let fv = eval_field(space, &ed, q, v);
            let mut s = 0.0;
            for c in 0..2 {
                s += fu.grad[c][0] * fv.grad[c][0] + fu.grad[c][1] * fv.grad[c][1];
            }
            acc += w * ed.det * s;
        }
    }
    acc
}

pub fn h1_seminorm_sq(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    h1_inner(space, u, u)
}

pub fn l2_norm_sq(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    l2_inner(space, u, u)
}

/// b*(w, u, v) = 1/2 (w . grad u, v) - 1/2 (w . grad v, u)
pub fn trilinear_bstar(space: &TaylorHoodSpace, w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let rule = oracle_rule();
    let mut acc = 0.0;
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, wq) in rule.weights.iter().enumerate() {
            let fw = eval_field(space, &ed, q, w);
            let fu = eval_field(space, &ed, q, u);
            let fv = eval_field(space, &ed, q, v);
            let mut conv_uv = 0.0;
            let mut conv_vu = 0.0;
            for c in 0..2 {
                conv_uv +=
                    (fw.value[0] * fu.grad[c][0] + fw.value[1] * fu.grad[c][1]) * fv.value[c];
                conv_vu +=
                    (fw.value[0] * fv.grad[c][0] + fw.value[1] * fv.grad[c][1]) * fu.value[c];
            }
            acc += wq * ed.det * 0.5 * (conv_uv - conv_vu);
        }
    }
    acc
}

/// (f(., t), v)
pub fn force_inner(space: &TaylorHoodSpace, force: &ForceField, t: f64, v: &[f64]) -> f64 {
    let rule = oracle_rule();
    let mut acc = 0.0;
    for e in 0..space.mesh().n_triangles() {
        let ed = element_data(space, e, &rule);
        for (q, w) in rule.weights.iter().enumerate() {
            let [x, y] = ed.coords[q];
            let f = force.eval(x, y, t);
            let fv = eval_field(space, &ed, q, v);
            acc += w * ed.det * (f[0] * fv.value[0] + f[1] * fv.value[1]);
        }
    }
    acc
}
