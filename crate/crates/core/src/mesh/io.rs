//! Plain-text triangle mesh format.
//!
//! ```text
//! # comment lines start with '#'
//! <vertex count>
//! x y z            (one line per vertex)
//! <triangle count>
//! i j k [D|N|R]    (zero-based indices, optional region label)
//! ```
//!
//! Triangles without a label are Dirichlet.

use std::io::{BufRead, Write};

use super::{Point, Region, TriangleSurfaceMesh};
use crate::error::{BemError, Result};

pub fn write_ascii<W: Write>(mesh: &TriangleSurfaceMesh, mut out: W) -> Result<()> {
    writeln!(out, "{}", mesh.vertex_count())?;
    for v in mesh.vertices() {
        // `{:?}` prints the shortest representation that round-trips.
        writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    writeln!(out, "{}", mesh.triangle_count())?;
    for (tri, region) in mesh.triangles().iter().zip(mesh.regions()) {
        writeln!(out, "{} {} {} {}", tri[0], tri[1], tri[2], region.code())?;
    }
    Ok(())
}

/// Reads a mesh; with `validate` the surface must be closed and consistently oriented.
pub fn read_ascii<R: BufRead>(input: R, validate: bool) -> Result<TriangleSurfaceMesh> {
    let mut lines = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((i + 1, trimmed.to_string()));
    }
    let mut cursor = lines.into_iter();
    let mut next = |what: &str| {
        cursor.next().ok_or_else(|| BemError::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    };

    let (line, text) = next("vertex count")?;
    let nv = parse_count(line, &text)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, text) = next("vertex")?;
        let coords: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| BemError::Parse {
                line,
                message: e.to_string(),
            })?;
        if coords.len() != 3 {
            return Err(BemError::Parse {
                line,
                message: format!("expected 3 coordinates, found {}", coords.len()),
            });
        }
        vertices.push(Point::new(coords[0], coords[1], coords[2]));
    }

    let (line, text) = next("triangle count")?;
    let nt = parse_count(line, &text)?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, text) = next("triangle")?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(BemError::Parse {
                line,
                message: format!(
                    "expected 3 indices and an optional label, found {} fields",
                    fields.len()
                ),
            });
        }
        let mut tri = [0usize; 3];
        for (slot, field) in tri.iter_mut().zip(&fields[..3]) {
            *slot = field
                .parse()
                .map_err(|e: std::num::ParseIntError| BemError::Parse {
                    line,
                    message: e.to_string(),
                })?;
        }
        let region = match fields.get(3) {
            Some(label) => label
                .parse::<Region>()
                .map_err(|message| BemError::Parse { line, message })?,
            None => Region::Dirichlet,
        };
        triangles.push(tri);
        regions.push(region);
    }
    if let Ok((line, _)) = next("") {
        return Err(BemError::Parse {
            line,
            message: "trailing content after the triangle list".into(),
        });
    }

    let mesh = if validate {
        TriangleSurfaceMesh::new(vertices, triangles)?
    } else {
        TriangleSurfaceMesh::new_unchecked(vertices, triangles)?
    };
    mesh.with_regions(regions)
}

fn parse_count(line: usize, text: &str) -> Result<usize> {
    text.parse().map_err(|_| BemError::Parse {
        line,
        message: format!("expected a count, found `{text}`"),
    })
}
