//! Plain-text mesh files:
//!
//! ```text
//! VERTICES n
//! x y
//! TRIANGLES m
//! v0 v1 v2 refEdgeLocalIndex
//! BOUNDARY k
//! va vb marker
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "VERTICES {}", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(out, "{:?} {:?}", p[0], p[1])?;
    }
    writeln!(out, "TRIANGLES {}", mesh.num_triangles())?;
    for t in mesh.triangles() {
        // the refinement edge is always stored opposite local vertex 0
        writeln!(out, "{} {} {} 0", t[0], t[1], t[2])?;
    }
    let boundary = mesh.boundary_segments();
    writeln!(out, "BOUNDARY {}", boundary.len())?;
    for (a, b, m) in boundary {
        writeln!(out, "{a} {b} {m}")?;
    }
    Ok(())
}

pub fn read_mesh<R: BufRead>(input: R, path: &Path) -> Result<Mesh> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(s))) => Ok((n, s)),
            Some((_, Err(e))) => Err(Error::Io(e)),
            None => Err(err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    fn header(line: &(usize, String), key: &str, path: &Path) -> Result<usize> {
        let mut it = line.1.split_whitespace();
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: line.0,
            msg: format!("expected '{key} <count>'"),
        };
        if it.next() != Some(key) {
            return Err(bad());
        }
        it.next().and_then(|c| c.parse().ok()).ok_or_else(bad)
    }
    fn fields<T: std::str::FromStr>(line: &(usize, String), n: usize, path: &Path) -> Result<Vec<T>> {
        let vals: Vec<T> = line
            .1
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line.0,
                msg: "malformed number".into(),
            })?;
        if vals.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line.0,
                msg: format!("expected {n} fields, found {}", vals.len()),
            });
        }
        Ok(vals)
    }

    let nv = header(&next("VERTICES")?, "VERTICES", path)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let v: Vec<f64> = fields(&next("vertex")?, 2, path)?;
        vertices.push([v[0], v[1]]);
    }
    let nt = header(&next("TRIANGLES")?, "TRIANGLES", path)?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let line = next("triangle")?;
        let t: Vec<usize> = fields(&line, 4, path)?;
        let r = t[3];
        if r > 2 {
            return Err(err(line.0, format!("refinement edge index {r} not in 0..=2")));
        }
        triangles.push([t[r], t[(r + 1) % 3], t[(r + 2) % 3]]);
    }
    let nb = header(&next("BOUNDARY")?, "BOUNDARY", path)?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let b: Vec<usize> = fields(&next("boundary segment")?, 3, path)?;
        boundary.push((b[0], b[1], b[2] as u32));
    }
    Mesh::new(vertices, triangles, &boundary)
}

impl Mesh {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_mesh(self, f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        read_mesh(f, path)
    }
}
