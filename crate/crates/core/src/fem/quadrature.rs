//! Quadrature rules on the reference triangle.
//!
//! The assembly rule is the 7-point degree-5 rule: every bilinear and
//! trilinear integrand appearing in the schemes (P2 x P2 products, gradients,
//! and the convection term, which peaks at polynomial degree 5) is integrated
//! exactly on straight elements.

/// Quadrature rule in barycentric coordinates. Weights sum to 1/2, the area
/// of the reference triangle.
#[derive(Clone, Debug)]
pub struct TriQuadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// 7-point rule, exact for total degree <= 5.
pub fn degree5() -> TriQuadrature {
    let s15 = 15.0_f64.sqrt();
    let a = (6.0 - s15) / 21.0;
    let b = (9.0 + 2.0 * s15) / 21.0;
    let c = (6.0 + s15) / 21.0;
    let d = (9.0 - 2.0 * s15) / 21.0;
    let wa = (155.0 - s15) / 2400.0;
    let wc = (155.0 + s15) / 2400.0;
    let third = 1.0 / 3.0;
    TriQuadrature {
        points: vec![
            [third, third, third],
            [b, a, a],
            [a, b, a],
            [a, a, b],
            [d, c, c],
            [c, d, c],
            [c, c, d],
        ],
        weights: vec![9.0 / 80.0, wa, wa, wa, wc, wc, wc],
    }
}

/// High-order product rule built by collapsing an n x n Gauss-Legendre grid
/// onto the triangle (Duffy transform). With n = 6 it integrates total
/// degree <= 9 exactly; it serves as the independent oracle rule in tests.
pub fn collapsed_gauss(n: usize) -> TriQuadrature {
    let (x, w) = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            // map unit square (u, v) -> (xi, eta) = (u, v(1-u)); Jacobian 1-u
            let u = x[i];
            let v = x[j];
            let xi = u;
            let eta = v * (1.0 - u);
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    TriQuadrature { points, weights }
}

/// Gauss-Legendre nodes/weights on [0, 1].
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // initial guess on [-1, 1]
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        nodes[k] = 0.5 * (1.0 - t); // reverse so nodes ascend on [0,1]
        weights[k] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Legendre polynomial P_n and derivative at t.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}
