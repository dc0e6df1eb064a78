//! Conforming triangle meshes with newest-vertex bisection.
//!
//! Triangles are stored counter-clockwise with the refinement edge opposite
//! local vertex 0 (the "newest" vertex). Local edge `k` of a triangle is the
//! edge opposite local vertex `k`. Edges are globally oriented from the lower
//! to the higher vertex index.

mod domain;
mod io;
mod refine;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use domain::Domain;
pub use io::{read_mesh, write_mesh};
pub use refine::RefinementTrace;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Marker value for edges on the outer boundary; holes use `1..=beta`.
pub const OUTER_MARKER: u32 = 0;

const NO_TRIANGLE: usize = usize::MAX;

/// Content hash identifying a mesh.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Checksum([u8; 32]);

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Checksum({self})")
    }
}

/// One bisection step in a mesh's history: maps each triangle of the child
/// mesh to the triangle of the parent mesh it was cut from.
#[derive(Debug, Clone)]
struct LineageStep {
    parent: Checksum,
    child: Checksum,
    parent_of: Arc<[u32]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[usize; 2]>,
    edge_marker: Vec<Option<u32>>,
    generation: usize,
    checksum: Checksum,
    lineage: Vec<LineageStep>,
}

/// A closed loop of boundary edges.
#[derive(Debug, Clone)]
pub struct BoundaryComponent {
    pub edges: Vec<usize>,
    pub is_outer: bool,
}

impl Mesh {
    /// Builds a mesh from raw parts. `triangles` must be counter-clockwise
    /// with the refinement edge opposite local vertex 0. `boundary` lists
    /// every boundary edge once as `(a, b, marker)`.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: &[(usize, usize, u32)],
    ) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(&vertices, tri);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::new();
        let mut edge_tris: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([NO_TRIANGLE, NO_TRIANGLE]);
                    edges.len() - 1
                });
                let slot = &mut edge_tris[e];
                if slot[0] == NO_TRIANGLE {
                    slot[0] = t;
                } else if slot[1] == NO_TRIANGLE {
                    slot[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) is shared by more than two triangles",
                        key.0, key.1
                    )));
                }
                te[k] = e;
            }
            tri_edges.push(te);
        }

        let mut edge_marker = vec![None; edges.len()];
        for &(a, b, marker) in boundary {
            let key = (a.min(b), a.max(b));
            let Some(&e) = lookup.get(&key) else {
                return Err(Error::InvalidMesh(format!("boundary segment ({a}, {b}) is not a mesh edge")));
            };
            if edge_tris[e][1] != NO_TRIANGLE {
                return Err(Error::InvalidMesh(format!("boundary segment ({a}, {b}) is an interior edge")));
            }
            edge_marker[e] = Some(marker);
        }
        for (e, tris) in edge_tris.iter().enumerate() {
            if tris[1] == NO_TRIANGLE && edge_marker[e].is_none() {
                let [a, b] = edges[e];
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) has one neighbor but is not a boundary segment (hanging vertex?)"
                )));
            }
        }

        let checksum = compute_checksum(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            edges,
            tri_edges,
            edge_tris,
            edge_marker,
            generation: 0,
            checksum,
            lineage: Vec::new(),
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge indices of a triangle; entry `k` is opposite local vertex `k`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// The one or two triangles adjacent to an edge.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        let [a, b] = self.edge_tris[e];
        (a, (b != NO_TRIANGLE).then_some(b))
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1] == NO_TRIANGLE
    }

    pub fn boundary_marker(&self, e: usize) -> Option<u32> {
        self.edge_marker[e]
    }

    /// Boundary segments as `(lo, hi, marker)`.
    pub fn boundary_segments(&self) -> Vec<(usize, usize, u32)> {
        self.edge_marker
            .iter()
            .enumerate()
            .filter_map(|(e, m)| m.map(|m| (self.edges[e][0], self.edges[e][1], m)))
            .collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn checksum(&self) -> Checksum {
        self.checksum
    }

    /// Sign of edge `e` relative to the counter-clockwise boundary of `t`.
    pub fn edge_sign(&self, t: usize, local: usize) -> f64 {
        let tri = self.triangles[t];
        let (a, b) = (tri[(local + 1) % 3], tri[(local + 2) % 3]);
        if a < b {
            1.0
        } else {
            -1.0
        }
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    /// Local mesh size `h_T = |T|^(1/2)`.
    pub fn mesh_size(&self, t: usize) -> f64 {
        self.area(t).sqrt()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].map(|v| self.vertices[v]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Smallest interior angle (radians) over all triangles.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| triangle_min_angle(self.triangles[t].map(|v| self.vertices[v])))
            .fold(f64::INFINITY, f64::min)
    }

    /// Triangles sharing an edge with `t`.
    pub fn neighbors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.tri_edges[t].into_iter().filter_map(move |e| {
            let [a, b] = self.edge_tris[e];
            let other = if a == t { b } else { a };
            (other != NO_TRIANGLE).then_some(other)
        })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Number of connected components of the triangle adjacency graph.
    pub fn connected_components(&self) -> usize {
        let n = self.num_triangles();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(t) = stack.pop() {
                for s in self.neighbors(t) {
                    if !seen[s] {
                        seen[s] = true;
                        stack.push(s);
                    }
                }
            }
        }
        count
    }

    /// First Betti number (number of holes) of a connected planar mesh.
    pub fn betti_number(&self) -> Result<usize> {
        let components = self.connected_components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        let beta = 1 - self.euler_characteristic();
        usize::try_from(beta).map_err(|_| Error::InvalidMesh(format!("negative first Betti number {beta}")))
    }

    /// Closed loops of boundary edges. The outer loop is the one through the
    /// lexicographically smallest boundary vertex; holes follow ordered by
    /// their own smallest vertex.
    pub fn boundary_components(&self) -> Vec<BoundaryComponent> {
        let nv = self.num_vertices();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let boundary: Vec<usize> = (0..self.num_edges()).filter(|&e| self.is_boundary_edge(e)).collect();
        for &e in &boundary {
            let [a, b] = self.edges[e];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut index: HashMap<usize, usize> = HashMap::new();
        for &e in &boundary {
            let root = find(&mut parent, self.edges[e][0]);
            let g = *index.entry(root).or_insert_with(|| {
                groups.push((root, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(e);
        }
        let lowest = |edges: &[usize]| -> Point {
            edges
                .iter()
                .flat_map(|&e| self.edges[e])
                .map(|v| self.vertices[v])
                .fold([f64::INFINITY, f64::INFINITY], |m, p| {
                    if (p[0], p[1]) < (m[0], m[1]) {
                        p
                    } else {
                        m
                    }
                })
        };
        let mut keyed: Vec<(Point, Vec<usize>)> = groups.into_iter().map(|(_, e)| (lowest(&e), e)).collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        keyed
            .into_iter()
            .enumerate()
            .map(|(i, (_, edges))| BoundaryComponent { edges, is_outer: i == 0 })
            .collect()
    }

    /// Maps every triangle of `self` to the triangle of `ancestor` that
    /// contains it.
    pub fn ancestor_map(&self, ancestor: &Mesh) -> Result<Vec<usize>> {
        let mut map: Vec<usize> = (0..self.num_triangles()).collect();
        let mut current = self.checksum;
        let mut steps = self.lineage.iter().rev();
        while current != ancestor.checksum {
            let step = steps.find(|s| s.child == current).ok_or(Error::NotADescendant)?;
            for m in map.iter_mut() {
                *m = step.parent_of[*m] as usize;
            }
            current = step.parent;
        }
        Ok(map)
    }

    /// Whether `self` is `other` or was produced from it by bisection.
    pub fn descends_from(&self, other: &Mesh) -> bool {
        self.checksum == other.checksum || self.lineage.iter().any(|s| s.parent == other.checksum)
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }
}

pub(crate) fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|v| vertices[v]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn triangle_min_angle(p: [Point; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let o = p[k];
            let u = [p[(k + 1) % 3][0] - o[0], p[(k + 1) % 3][1] - o[1]];
            let v = [p[(k + 2) % 3][0] - o[0], p[(k + 2) % 3][1] - o[1]];
            let cross = u[0] * v[1] - u[1] * v[0];
            let dot = u[0] * v[0] + u[1] * v[1];
            cross.abs().atan2(dot)
        })
        .fold(f64::INFINITY, f64::min)
}

fn compute_checksum(vertices: &[Point], triangles: &[[usize; 3]]) -> Checksum {
    let mut h = Sha256::new();
    h.update((vertices.len() as u64).to_le_bytes());
    for p in vertices {
        h.update(p[0].to_le_bytes());
        h.update(p[1].to_le_bytes());
    }
    h.update((triangles.len() as u64).to_le_bytes());
    for t in triangles {
        for &v in t {
            h.update((v as u64).to_le_bytes());
        }
    }
    Checksum(h.finalize().into())
}
