//! Plain-text mesh format.
//!
//! ```text
//! V T B
//! x y          (V lines)
//! i j k        (T lines, counter-clockwise)
//! i j tag      (B lines, tag 0 = insulated, m >= 1 = electrode m)
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use super::{BoundaryEdge, EdgeTag, Mesh};
use crate::error::{Error, Result};

impl Mesh {
    /// Serializes the mesh; coordinates use the shortest round-trip decimal.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * (self.n_vertices() + self.n_triangles()));
        let _ = writeln!(
            s,
            "{} {} {}",
            self.n_vertices(),
            self.n_triangles(),
            self.boundary.len()
        );
        for p in &self.vertices {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary {
            let tag = match e.tag {
                EdgeTag::Insulated => 0,
                EdgeTag::Electrode(m) => m + 1,
            };
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], tag);
        }
        s
    }

    /// Parses and validates a mesh. The electrode count is the largest tag.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty mesh file".into(),
        })?;
        let [nv, nt, nb] = fields::<usize, 3>(line, header)?;

        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unexpected end of file while reading {what}"),
            })
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = next("vertices")?;
            vertices.push(fields::<f64, 2>(line, l)?);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, l) = next("triangles")?;
            triangles.push(fields::<usize, 3>(line, l)?);
        }
        let mut boundary = Vec::with_capacity(nb);
        let mut n_electrodes = 0;
        for _ in 0..nb {
            let (line, l) = next("boundary edges")?;
            let [i, j, tag] = fields::<usize, 3>(line, l)?;
            let tag = match tag {
                0 => EdgeTag::Insulated,
                m => {
                    n_electrodes = n_electrodes.max(m);
                    EdgeTag::Electrode(m - 1)
                }
            };
            boundary.push(BoundaryEdge { vertices: [i, j], tag });
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                message: "trailing content after the declared counts".into(),
            });
        }
        Mesh::from_parts(vertices, triangles, boundary, n_electrodes)
    }
}

fn fields<T: FromStr, const N: usize>(line: usize, text: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::Parse {
            line,
            message: format!("expected {N} fields, found {}", parts.len()),
        });
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse {p:?}"),
        })?);
    }
    Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
}
