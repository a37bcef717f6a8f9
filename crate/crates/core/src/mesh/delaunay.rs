//! Offset-annulus mesh generation: Bowyer-Watson incremental Delaunay over
//! boundary rings plus a hexagonal interior lattice, followed by boundary
//! edge recovery and hole carving.

use super::{signed_area, BoundaryTag, Mesh, MeshError, Point2};
use std::collections::HashSet;

/// Triangulates the domain {x^2 + y^2 <= r1^2} minus the disk of radius
/// `r2` around `center`. Boundary vertices discretize both circles with
/// spacing <= `h_target`; ring sizes are rounded up to powers of two so
/// halving `h_target` doubles the per-circle vertex count.
pub fn generate_offset_annulus(
    r1: f64,
    r2: f64,
    center: Point2,
    h_target: f64,
) -> Result<Mesh, MeshError> {
    if !(r1 > 0.0) || !(r2 > 0.0) {
        return Err(MeshError::InvalidGeometry(
            "radii must be positive".to_string(),
        ));
    }
    if r2 >= r1 {
        return Err(MeshError::InvalidGeometry(format!(
            "inner radius {r2} must be smaller than outer radius {r1}"
        )));
    }
    if !(h_target > 0.0) {
        return Err(MeshError::InvalidGeometry(
            "h_target must be positive".to_string(),
        ));
    }
    let offset = center.norm();
    if offset + r2 >= r1 {
        return Err(MeshError::InvalidGeometry(format!(
            "inner circle (|c| + r2 = {}) is not strictly inside the outer circle (r1 = {r1})",
            offset + r2
        )));
    }

    let tol = 1e-10 * r1;
    let n_outer = ring_count(r1, h_target);
    let n_inner = ring_count(r2, h_target);

    let mut points: Vec<Point2> = Vec::new();
    ring_points(&mut points, Point2::new(0.0, 0.0), r1, n_outer, tol, 1);
    ring_points(&mut points, center, r2, n_inner, tol, 2);
    let inner_start = n_outer;
    let lattice_start = n_outer + n_inner;

    // hexagonal interior lattice, kept clear of both circles
    let sx = 0.9 * h_target.min(std::f64::consts::PI * r1 / 2.0);
    let sy = sx * 3.0_f64.sqrt() / 2.0;
    let margin = 0.55 * sx;
    let jmax = (r1 / sy).floor() as i64 + 1;
    for j in -jmax..=jmax {
        let y = j as f64 * sy;
        let shift = if j.rem_euclid(2) == 1 { 0.5 * sx } else { 0.0 };
        let imax = (r1 / sx).floor() as i64 + 1;
        for i in -imax..=imax {
            let x = i as f64 * sx + shift;
            let p = Point2::new(x, y);
            if p.norm() <= r1 - margin && p.dist(&center) >= r2 + margin {
                points.push(p);
            }
        }
    }

    let mut triangles = triangulate(&points)?;

    // both rings must appear edge-by-edge in the triangulation
    for k in 0..n_outer {
        recover_edge(&points, &mut triangles, k, (k + 1) % n_outer)?;
    }
    for k in 0..n_inner {
        recover_edge(
            &points,
            &mut triangles,
            inner_start + k,
            inner_start + (k + 1) % n_inner,
        )?;
    }

    // carve the hole
    triangles.retain(|&[a, b, c]| {
        let cx = (points[a].x + points[b].x + points[c].x) / 3.0;
        let cy = (points[a].y + points[b].y + points[c].y) / 3.0;
        Point2::new(cx, cy).dist(&center) >= r2
    });

    // tag boundary edges by ring membership
    let mut boundary = Vec::new();
    {
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut count: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for t in &triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                if count[&key] == 1 && seen.insert(key) {
                    let tag = if key.0 < n_outer && key.1 < n_outer {
                        BoundaryTag::Outer
                    } else if key.0 >= inner_start
                        && key.0 < lattice_start
                        && key.1 >= inner_start
                        && key.1 < lattice_start
                    {
                        BoundaryTag::Inner
                    } else {
                        return Err(MeshError::Invariant(format!(
                            "untaggable boundary edge ({}, {})",
                            key.0, key.1
                        )));
                    };
                    boundary.push(([key.0, key.1], tag));
                }
            }
        }
        boundary.sort_by_key(|&([a, b], _)| (a, b));
    }

    Mesh::new(points, triangles, boundary)
}

/// Power of two >= circumference / h, floored at 4.
fn ring_count(r: f64, h: f64) -> usize {
    let x = 2.0 * std::f64::consts::PI * r / h;
    let mut n = 4usize;
    while (n as f64) < x {
        n *= 2;
    }
    n
}

/// Ring vertices with a deterministic sub-tolerance radial wobble that
/// breaks the exact cocircularity of the ring (the incircle predicate is
/// otherwise sign-noise for four points on one circle).
fn ring_points(out: &mut Vec<Point2>, center: Point2, r: f64, n: usize, tol: f64, salt: u64) {
    for k in 0..n {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
        let mut h = (k as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(salt);
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51afd7ed558ccd);
        h ^= h >> 33;
        let wobble = 0.25 * tol * (((h % 1024) as f64) / 1024.0 - 0.5) * 2.0;
        let rr = r + wobble;
        out.push(Point2::new(
            center.x + rr * theta.cos(),
            center.y + rr * theta.sin(),
        ));
    }
}

fn circumcircle_contains(points: &[Point2], [a, b, c]: [usize; 3], p: &Point2) -> bool {
    let pa = points[a];
    let pb = points[b];
    let pc = points[c];
    let ax = pa.x - p.x;
    let ay = pa.y - p.y;
    let bx = pb.x - p.x;
    let by = pb.y - p.y;
    let cx = pc.x - p.x;
    let cy = pc.y - p.y;
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    // triangle is CCW: positive determinant means strictly inside
    det > 0.0
}

/// Incremental Bowyer-Watson. Points are inserted in slice order; the three
/// super-triangle vertices sit past the real indices and are stripped at the
/// end.
fn triangulate(points: &[Point2]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = points.len();
    if n < 3 {
        return Err(MeshError::InvalidGeometry(
            "need at least 3 points".to_string(),
        ));
    }
    let extent = points
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let big = 64.0 * extent;
    let mut all: Vec<Point2> = points.to_vec();
    all.push(Point2::new(0.0, 3.0 * big));
    all.push(Point2::new(-3.0 * big, -2.0 * big));
    all.push(Point2::new(3.0 * big, -2.0 * big));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let mut bad: Vec<usize> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();

    for p in 0..n {
        bad.clear();
        for (ti, t) in tris.iter().enumerate() {
            if circumcircle_contains(&all, *t, &all[p]) {
                bad.push(ti);
            }
        }
        if bad.is_empty() {
            return Err(MeshError::Invariant(format!(
                "point {p} not inside any circumcircle (degenerate input)"
            )));
        }
        edges.clear();
        for &ti in &bad {
            let t = tris[ti];
            edges.push((t[0], t[1]));
            edges.push((t[1], t[2]));
            edges.push((t[2], t[0]));
        }
        let edge_set: HashSet<(usize, usize)> = edges.iter().copied().collect();
        let cavity: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(a, b)| !edge_set.contains(&(*b, *a)))
            .copied()
            .collect();
        for &ti in bad.iter().rev() {
            tris.swap_remove(ti);
        }
        for (a, b) in cavity {
            tris.push([a, b, p]);
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    Ok(tris)
}

fn edge_present(tris: &[[usize; 3]], a: usize, b: usize) -> bool {
    tris.iter().any(|t| {
        (0..3).any(|k| {
            let u = t[k];
            let v = t[(k + 1) % 3];
            (u == a && v == b) || (u == b && v == a)
        })
    })
}

fn segments_properly_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let orient = |a: Point2, b: Point2, c: Point2| (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let d1 = orient(p1, p2, q1);
    let d2 = orient(p1, p2, q2);
    let d3 = orient(q1, q2, p1);
    let d4 = orient(q1, q2, p2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Flip-based recovery of a constraint edge (a, b). In practice the rings
/// are already Delaunay edges and this is a no-op guard.
fn recover_edge(
    points: &[Point2],
    tris: &mut Vec<[usize; 3]>,
    a: usize,
    b: usize,
) -> Result<(), MeshError> {
    let mut guard = 0usize;
    while !edge_present(tris, a, b) {
        guard += 1;
        if guard > 4 * tris.len() + 16 {
            return Err(MeshError::Invariant(format!(
                "failed to recover boundary edge ({a}, {b})"
            )));
        }
        let mut flipped = false;
        'outer: for i in 0..tris.len() {
            let t1 = tris[i];
            for k in 0..3 {
                let u = t1[k];
                let v = t1[(k + 1) % 3];
                if u == a || u == b || v == a || v == b {
                    continue;
                }
                if !segments_properly_cross(points[a], points[b], points[u], points[v]) {
                    continue;
                }
                // locate the mate sharing directed edge (v, u)
                let mate = tris.iter().position(|t2| {
                    (0..3).any(|m| t2[m] == v && t2[(m + 1) % 3] == u)
                });
                let Some(j) = mate else { continue };
                let c = t1[(k + 2) % 3];
                let t2 = tris[j];
                let m = (0..3).find(|&m| t2[m] == v && t2[(m + 1) % 3] == u).unwrap();
                let d = t2[(m + 2) % 3];
                // flip diagonal (u,v) -> (c,d) when the quad is convex
                let na = [u, d, c];
                let nb = [v, c, d];
                if signed_area(points, na) > 0.0 && signed_area(points, nb) > 0.0 {
                    tris[i] = na;
                    tris[j] = nb;
                    flipped = true;
                    break 'outer;
                }
            }
        }
        if !flipped {
            return Err(MeshError::Invariant(format!(
                "no flippable edge while recovering ({a}, {b})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_count_powers_of_two() {
        assert_eq!(ring_count(1.0, 0.1), 64);
        assert_eq!(ring_count(1.0, 0.05), 128);
        assert_eq!(ring_count(0.1, 0.1), 8);
        assert_eq!(ring_count(0.1, 0.05), 16);
    }

    #[test]
    fn triangulate_square_lattice() {
        let mut pts = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                // slight shear avoids cocircular quads of a perfect grid
                pts.push(Point2::new(i as f64 + 0.05 * j as f64, j as f64));
            }
        }
        let tris = triangulate(&pts).unwrap();
        // convex point set: E = 3V - 3 - hull, F = 2V - 2 - hull
        assert_eq!(tris.len(), 2 * 16 - 2 - 12);
        for t in &tris {
            assert!(signed_area(&pts, *t) > 0.0);
        }
    }

    #[test]
    fn desk_mesh_shape() {
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), 0.1).unwrap();
        assert_eq!(
            mesh.n_vertices() as i64 + mesh.n_triangles() as i64,
            mesh.n_edges() as i64
        );
        assert!(mesh.max_diameter() <= 0.2 + 1e-12);
        // every boundary cycle is closed
        let boundary = mesh.topological_boundary();
        assert_eq!(boundary.len(), mesh.boundary_edges().len());
    }
}
