//! Triangulations of the offset-annulus domain: a disk of radius `r1`
//! centered at the origin with a smaller disk of radius `r2` removed around
//! an interior point. Both circle boundaries carry no-slip tags.

mod delaunay;
mod io;

pub use delaunay::generate_offset_annulus;
pub use io::load_mesh;

use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Outer,
    Inner,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Outer => "outer",
            BoundaryTag::Inner => "inner",
        }
    }
}

/// Circle data of the annulus; the outer circle is centered at the origin.
#[derive(Clone, Copy, Debug)]
pub struct AnnulusGeometry {
    pub r1: f64,
    pub r2: f64,
    pub center: Point2,
}

impl AnnulusGeometry {
    /// Boundary-circle membership tolerance.
    pub fn geom_tol(&self) -> f64 {
        1e-10 * self.r1
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
}

/// Conforming triangulation with boundary tags and an edge/midpoint table
/// (the midpoints carry the quadratic velocity nodes).
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    /// Unique undirected edges as [lo, hi], ordered lexicographically.
    edges: Vec<[usize; 2]>,
    edge_ids: HashMap<(usize, usize), usize>,
}

impl Mesh {
    /// Builds the edge table and checks structural invariants (positive
    /// areas, interior edges shared by exactly two triangles, tagged edges
    /// on the topological boundary).
    pub fn new(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    ) -> Result<Mesh, MeshError> {
        let nv = vertices.len();
        for (k, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::Invariant(format!(
                        "triangle {k} references vertex {v} out of range"
                    )));
                }
            }
            let area = signed_area(&vertices, *t);
            if area <= 0.0 {
                return Err(MeshError::Invariant(format!(
                    "triangle {k} has non-positive signed area {area}"
                )));
            }
        }

        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_use: Vec<usize> = Vec::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        for t in &triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                match edge_ids.get(&key) {
                    Some(&id) => edge_use[id] += 1,
                    None => {
                        edge_ids.insert(key, edges.len());
                        edges.push([key.0, key.1]);
                        edge_use.push(1);
                    }
                }
            }
        }
        // deterministic edge numbering independent of triangle order
        let mut perm: Vec<usize> = (0..edges.len()).collect();
        perm.sort_by_key(|&e| edges[e]);
        let mut renum = vec![0usize; edges.len()];
        for (new_id, &old_id) in perm.iter().enumerate() {
            renum[old_id] = new_id;
        }
        let edges_sorted: Vec<[usize; 2]> = perm.iter().map(|&e| edges[e]).collect();
        let use_sorted: Vec<usize> = perm.iter().map(|&e| edge_use[e]).collect();
        for v in edge_ids.values_mut() {
            *v = renum[*v];
        }

        for (k, &count) in use_sorted.iter().enumerate() {
            if count > 2 {
                return Err(MeshError::Invariant(format!(
                    "edge {:?} shared by {count} triangles",
                    edges_sorted[k]
                )));
            }
        }
        for &([a, b], _) in &boundary_edges {
            let key = (a.min(b), a.max(b));
            match edge_ids.get(&key) {
                Some(&id) if use_sorted[id] == 1 => {}
                Some(_) => {
                    return Err(MeshError::Invariant(format!(
                        "tagged edge ({a},{b}) is interior"
                    )))
                }
                None => {
                    return Err(MeshError::Invariant(format!(
                        "tagged edge ({a},{b}) not in triangulation"
                    )))
                }
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            edges: edges_sorted,
            edge_ids,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn boundary_edges(&self) -> &[([usize; 2], BoundaryTag)] {
        &self.boundary_edges
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point2 {
        let [a, b] = self.edges[edge];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * signed_area(&self.vertices, self.triangles[t])
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        pa.dist(&pb).max(pb.dist(&pc)).max(pc.dist(&pa))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.triangle_diameter(t))
            .fold(0.0, f64::max)
    }

    /// Topological boundary edges (shared by exactly one triangle),
    /// independent of tags.
    pub fn topological_boundary(&self) -> Vec<[usize; 2]> {
        let mut count = vec![0usize; self.edges.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let id = self.edge_id(t[k], t[(k + 1) % 3]).unwrap();
                count[id] += 1;
            }
        }
        self.edges
            .iter()
            .zip(&count)
            .filter(|(_, &c)| c == 1)
            .map(|(&e, _)| e)
            .collect()
    }

    /// Full invariant check. With the annulus geometry supplied, also checks
    /// the Euler formula for a one-hole domain, that every topological
    /// boundary edge is tagged, and that tagged vertices lie on their circle
    /// within `geom_tol`.
    pub fn validate(&self, geometry: Option<&AnnulusGeometry>) -> Result<(), MeshError> {
        // positive areas and edge-use counts were established in `new`;
        // re-check areas in case the vertex data was mutated through a clone
        for (k, &t) in self.triangles.iter().enumerate() {
            if signed_area(&self.vertices, t) <= 0.0 {
                return Err(MeshError::Invariant(format!(
                    "triangle {k} has non-positive area"
                )));
            }
        }
        let boundary = self.topological_boundary();
        if let Some(geom) = geometry {
            let tol = geom.geom_tol();
            if self.n_vertices() + self.n_triangles() != self.n_edges() {
                return Err(MeshError::Invariant(format!(
                    "Euler formula V - E + F = {} (expected 0 for one hole)",
                    self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64
                )));
            }
            if boundary.len() != self.boundary_edges.len() {
                return Err(MeshError::Invariant(format!(
                    "{} topological boundary edges but {} tagged",
                    boundary.len(),
                    self.boundary_edges.len()
                )));
            }
            for &([a, b], tag) in &self.boundary_edges {
                for &v in &[a, b] {
                    let p = self.vertices[v];
                    let dist = match tag {
                        BoundaryTag::Outer => (p.norm() - geom.r1).abs(),
                        BoundaryTag::Inner => (p.dist(&geom.center) - geom.r2).abs(),
                    };
                    if dist > tol {
                        return Err(MeshError::Invariant(format!(
                            "boundary vertex {v} is {dist:.3e} from the {} circle",
                            tag.as_str()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self) -> String {
        io::save_mesh(self)
    }
}

/// P2 node identifiers on the tagged boundary: vertex ids in `0..V`,
/// midpoint ids as `V + edge_id`.
pub fn boundary_dofs(mesh: &Mesh) -> BTreeSet<usize> {
    let nv = mesh.n_vertices();
    let mut set = BTreeSet::new();
    for &([a, b], _) in mesh.boundary_edges() {
        set.insert(a);
        set.insert(b);
        set.insert(nv + mesh.edge_id(a, b).expect("tagged edge in table"));
    }
    set
}

pub(crate) fn signed_area(vertices: &[Point2], [a, b, c]: [usize; 3]) -> f64 {
    let pa = vertices[a];
    let pb = vertices[b];
    let pc = vertices[c];
    (pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_triangle() -> Mesh {
        Mesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn boundary_dofs_empty_without_tags() {
        let mesh = single_triangle();
        assert!(boundary_dofs(&mesh).is_empty());
    }

    #[test]
    fn boundary_dofs_one_tagged_edge() {
        let mesh = Mesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
            vec![([0, 1], BoundaryTag::Outer)],
        )
        .unwrap();
        let dofs = boundary_dofs(&mesh);
        // two endpoints plus one midpoint
        assert_eq!(dofs.len(), 3);
        assert!(dofs.contains(&0) && dofs.contains(&1));
        let mid = 3 + mesh.edge_id(0, 1).unwrap();
        assert!(dofs.contains(&mid));
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let err = Mesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![[0, 2, 1]],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn generated_annulus_validates() {
        let geom = AnnulusGeometry {
            r1: 1.0,
            r2: 0.1,
            center: Point2::new(0.5, 0.0),
        };
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), 0.2).unwrap();
        mesh.validate(Some(&geom)).unwrap();
        let tol = geom.geom_tol();
        for v in mesh.vertices() {
            assert!(v.x * v.x + v.y * v.y <= 1.0 + tol);
            assert!((v.x - 0.5).powi(2) + v.y * v.y >= 0.01 - tol);
        }
        // both circles present
        let n_outer = mesh
            .boundary_edges()
            .iter()
            .filter(|(_, t)| *t == BoundaryTag::Outer)
            .count();
        let n_inner = mesh
            .boundary_edges()
            .iter()
            .filter(|(_, t)| *t == BoundaryTag::Inner)
            .count();
        assert!(n_outer >= 8 && n_inner >= 4);
        assert!(mesh.max_diameter() <= 2.0 * 0.2 + 1e-12);
    }

    #[test]
    fn concentric_thin_annulus_euler() {
        let geom = AnnulusGeometry {
            r1: 1.0,
            r2: 0.9,
            center: Point2::new(0.0, 0.0),
        };
        let mesh = generate_offset_annulus(1.0, 0.9, Point2::new(0.0, 0.0), 0.2).unwrap();
        mesh.validate(Some(&geom)).unwrap();
        let euler = mesh.n_vertices() as i64 - mesh.n_edges() as i64 + mesh.n_triangles() as i64;
        assert_eq!(euler, 0);
    }

    #[test]
    fn crossing_circles_rejected() {
        let err = generate_offset_annulus(1.0, 0.5, Point2::new(0.8, 0.0), 0.1);
        assert!(matches!(err, Err(MeshError::InvalidGeometry(_))));
    }

    #[test]
    fn refinement_doubles_boundary_counts() {
        let count = |mesh: &Mesh, tag: BoundaryTag| {
            let mut verts = BTreeSet::new();
            for &([a, b], t) in mesh.boundary_edges() {
                if t == tag {
                    verts.insert(a);
                    verts.insert(b);
                }
            }
            verts.len()
        };
        let mut prev: Option<(usize, usize)> = None;
        for h in [0.2, 0.1, 0.05] {
            let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), h).unwrap();
            let outer = count(&mesh, BoundaryTag::Outer);
            let inner = count(&mesh, BoundaryTag::Inner);
            if let Some((po, pi)) = prev {
                assert!(outer >= 2 * po, "outer {outer} vs {po}");
                assert!(inner >= 2 * pi, "inner {inner} vs {pi}");
            }
            prev = Some((outer, inner));
        }
    }

    #[test]
    fn boundary_dof_count_on_annulus() {
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), 0.15).unwrap();
        let n_bedges = mesh.boundary_edges().len();
        // closed cycles: #vertices = #edges, plus one midpoint per edge
        assert_eq!(boundary_dofs(&mesh).len(), 2 * n_bedges);
    }
}
