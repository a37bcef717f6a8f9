//! P2 (quadratic) and P1 (linear) Lagrange shape functions on the reference
//! triangle, in barycentric coordinates (l0, l1, l2) with l0 = 1 - xi - eta.
//!
//! Local P2 node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2), (2,0).

pub const N_P2: usize = 6;
pub const N_P1: usize = 3;

/// Local edge -> vertex pairs, matching the midpoint node order.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

pub fn p2_values(l: [f64; 3]) -> [f64; N_P2] {
    let [l0, l1, l2] = l;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Gradients w.r.t. the reference coordinates (xi, eta).
pub fn p2_ref_grads(l: [f64; 3]) -> [[f64; 2]; N_P2] {
    let [l0, l1, l2] = l;
    // dl0 = (-1,-1), dl1 = (1,0), dl2 = (0,1)
    [
        [-(4.0 * l0 - 1.0), -(4.0 * l0 - 1.0)],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ]
}

pub fn p1_values(l: [f64; 3]) -> [f64; N_P1] {
    [l[0], l[1], l[2]]
}
