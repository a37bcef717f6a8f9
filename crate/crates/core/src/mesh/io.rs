//! Plain-text mesh file format.
//!
//! ```text
//! mesh2d <n_vertices> <n_triangles> <n_boundary_edges>
//! v <x> <y>
//! t <i0> <i1> <i2>
//! b <i0> <i1> <outer|inner>
//! ```
//!
//! Coordinates are written with 17 significant digits, which round-trips
//! f64 exactly.

use super::{BoundaryTag, Mesh, MeshError, Point2};
use std::fmt::Write as _;

pub fn save_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "mesh2d {} {} {}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary_edges().len()
    )
    .unwrap();
    for v in mesh.vertices() {
        writeln!(out, "v {:.16e} {:.16e}", v.x, v.y).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(out, "t {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for ([a, b], tag) in mesh.boundary_edges() {
        writeln!(out, "b {} {} {}", a, b, tag.as_str()).unwrap();
    }
    out
}

pub fn load_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text.lines().enumerate();

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| MeshError::Parse {
            line: 1,
            msg: "empty file".to_string(),
        })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "mesh2d" {
        return Err(MeshError::Parse {
            line: line_no + 1,
            msg: "expected header `mesh2d <nv> <nt> <nb>`".to_string(),
        });
    }
    let parse_count = |s: &str, what: &str| -> Result<usize, MeshError> {
        s.parse().map_err(|_| MeshError::Parse {
            line: line_no + 1,
            msg: format!("bad {what} count `{s}`"),
        })
    };
    let nv = parse_count(fields[1], "vertex")?;
    let nt = parse_count(fields[2], "triangle")?;
    let nb = parse_count(fields[3], "boundary edge")?;

    let mut vertices = Vec::with_capacity(nv);
    let mut triangles = Vec::with_capacity(nt);
    let mut boundary = Vec::with_capacity(nb);

    for _ in 0..nv {
        let (no, line) = next_line(&mut lines, nv + nt + nb)?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 || f[0] != "v" {
            return Err(MeshError::Parse {
                line: no + 1,
                msg: "expected `v <x> <y>`".to_string(),
            });
        }
        let x = parse_f64(f[1], no)?;
        let y = parse_f64(f[2], no)?;
        vertices.push(Point2::new(x, y));
    }
    for _ in 0..nt {
        let (no, line) = next_line(&mut lines, nv + nt + nb)?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "t" {
            return Err(MeshError::Parse {
                line: no + 1,
                msg: "expected `t <i0> <i1> <i2>`".to_string(),
            });
        }
        let tri = [
            parse_idx(f[1], no, nv)?,
            parse_idx(f[2], no, nv)?,
            parse_idx(f[3], no, nv)?,
        ];
        if super::signed_area(&vertices, tri) <= 0.0 {
            return Err(MeshError::Parse {
                line: no + 1,
                msg: "triangle is not counterclockwise".to_string(),
            });
        }
        triangles.push(tri);
    }
    for _ in 0..nb {
        let (no, line) = next_line(&mut lines, nv + nt + nb)?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "b" {
            return Err(MeshError::Parse {
                line: no + 1,
                msg: "expected `b <i0> <i1> <tag>`".to_string(),
            });
        }
        let tag = match f[3] {
            "outer" => BoundaryTag::Outer,
            "inner" => BoundaryTag::Inner,
            other => {
                return Err(MeshError::Parse {
                    line: no + 1,
                    msg: format!("unknown boundary tag `{other}`"),
                })
            }
        };
        boundary.push(([parse_idx(f[1], no, nv)?, parse_idx(f[2], no, nv)?], tag));
    }
    if lines.next().is_some() {
        return Err(MeshError::Parse {
            line: nv + nt + nb + 2,
            msg: "trailing content after declared counts".to_string(),
        });
    }
    Mesh::new(vertices, triangles, boundary)
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    expected_total: usize,
) -> Result<(usize, &'a str), MeshError> {
    lines.next().ok_or(MeshError::Parse {
        line: expected_total + 2,
        msg: "unexpected end of file (inconsistent counts)".to_string(),
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64, MeshError> {
    s.parse().map_err(|_| MeshError::Parse {
        line: line + 1,
        msg: format!("bad coordinate `{s}`"),
    })
}

fn parse_idx(s: &str, line: usize, nv: usize) -> Result<usize, MeshError> {
    let v: usize = s.parse().map_err(|_| MeshError::Parse {
        line: line + 1,
        msg: format!("bad index `{s}`"),
    })?;
    if v >= nv {
        return Err(MeshError::Parse {
            line: line + 1,
            msg: format!("index {v} out of range ({nv} vertices)"),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_offset_annulus;

    #[test]
    fn single_triangle_file() {
        let text = "mesh2d 3 1 0\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n";
        let mesh = load_mesh(text).unwrap();
        assert_eq!(mesh.n_vertices(), 3);
        assert_eq!(mesh.n_triangles(), 1);
    }

    #[test]
    fn clockwise_triangle_is_parse_error() {
        let text = "mesh2d 3 1 0\nv 0 0\nv 1 0\nv 0 1\nt 0 2 1\n";
        match load_mesh(text) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_counts_reported() {
        let text = "mesh2d 4 1 0\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n";
        assert!(matches!(load_mesh(text), Err(MeshError::Parse { .. })));
    }

    #[test]
    fn round_trip_is_identical() {
        let mesh = generate_offset_annulus(1.0, 0.1, Point2::new(0.5, 0.0), 0.2).unwrap();
        let text = save_mesh(&mesh);
        let again = load_mesh(&text).unwrap();
        assert_eq!(mesh.n_vertices(), again.n_vertices());
        for (a, b) in mesh.vertices().iter().zip(again.vertices()) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(mesh.triangles(), again.triangles());
        assert_eq!(mesh.boundary_edges(), again.boundary_edges());
        // and the re-serialization is byte-identical
        assert_eq!(text, save_mesh(&again));
    }
}
