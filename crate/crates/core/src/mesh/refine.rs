//! Newest-vertex bisection with conforming closure.
//!
//! Refinement works on a set of marked edges of the old mesh. Closure makes
//! the set admissible: any triangle with a marked edge must also have its
//! refinement edge marked. Each triangle is then split into two, three or
//! four children by bisecting the refinement edge first and the remaining
//! marked edges in the children.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{compute_checksum, LineageStep, Mesh, Point};

/// Bookkeeping for one call to [`Mesh::bisect`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementTrace {
    /// Triangles requested for refinement.
    pub marked: BTreeSet<usize>,
    /// Every old triangle that was bisected, closure included.
    pub refined: BTreeSet<usize>,
    /// Old triangle index to the new triangle indices it was split into.
    pub child_map: BTreeMap<usize, Vec<usize>>,
    /// Total number of single bisections performed.
    pub bisections: usize,
}

impl Mesh {
    /// Refines every marked triangle at least once and closes the result.
    pub fn bisect(&self, marked: &BTreeSet<usize>) -> (Mesh, RefinementTrace) {
        let mut edge_marked = vec![false; self.num_edges()];
        for &t in marked {
            assert!(t < self.num_triangles(), "marked triangle {t} out of range");
            edge_marked[self.tri_edges[t][0]] = true;
        }
        self.refine_marked_edges(edge_marked, marked.clone())
    }

    /// Splits every triangle into four by marking all edges; each triangle is
    /// bisected twice, so diameters halve.
    pub fn uniform_refine(&self, rounds: usize) -> Mesh {
        let mut mesh = self.clone();
        for _ in 0..rounds {
            let all: BTreeSet<usize> = (0..mesh.num_triangles()).collect();
            mesh = mesh.refine_marked_edges(vec![true; mesh.num_edges()], all).0;
        }
        mesh
    }

    fn close(&self, edge_marked: &mut [bool]) {
        let mut stack: Vec<usize> = (0..self.num_edges()).filter(|&e| edge_marked[e]).collect();
        while let Some(e) = stack.pop() {
            for t in self.edge_tris[e] {
                if t == super::NO_TRIANGLE {
                    continue;
                }
                let r = self.tri_edges[t][0];
                if !edge_marked[r] {
                    edge_marked[r] = true;
                    stack.push(r);
                }
            }
        }
    }

    fn refine_marked_edges(&self, mut edge_marked: Vec<bool>, marked: BTreeSet<usize>) -> (Mesh, RefinementTrace) {
        self.close(&mut edge_marked);

        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; self.num_edges()];
        for (e, &m) in edge_marked.iter().enumerate() {
            if m {
                let [a, b] = self.edges[e].map(|v| self.vertices[v]);
                midpoint[e] = vertices.len();
                vertices.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
            }
        }

        let mut triangles = Vec::with_capacity(self.num_triangles() * 2);
        let mut parent_of: Vec<u32> = Vec::with_capacity(self.num_triangles() * 2);
        let mut trace = RefinementTrace {
            marked,
            ..Default::default()
        };
        for (t, tri) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.tri_edges[t];
            let first = triangles.len();
            if !edge_marked[e0] {
                triangles.push(*tri);
            } else {
                let [v0, v1, v2] = *tri;
                let m = midpoint[e0];
                // child (m, v0, v1) has refinement edge v0-v1 (old edge e2),
                // child (m, v2, v0) has refinement edge v2-v0 (old edge e1)
                for (child, e) in [([m, v0, v1], e2), ([m, v2, v0], e1)] {
                    if edge_marked[e] {
                        let [p, a, b] = child;
                        let q = midpoint[e];
                        triangles.push([q, p, a]);
                        triangles.push([q, b, p]);
                    } else {
                        triangles.push(child);
                    }
                }
                trace.refined.insert(t);
                trace.child_map.insert(t, (first..triangles.len()).collect());
            }
            parent_of.extend(std::iter::repeat_n(t as u32, triangles.len() - first));
        }
        trace.bisections = triangles.len() - self.num_triangles();

        let mut boundary = Vec::new();
        for (e, marker) in self.edge_marker.iter().enumerate() {
            if let Some(marker) = *marker {
                let [a, b] = self.edges[e];
                if edge_marked[e] {
                    boundary.push((a, midpoint[e], marker));
                    boundary.push((midpoint[e], b, marker));
                } else {
                    boundary.push((a, b, marker));
                }
            }
        }

        if trace.bisections == 0 {
            return (self.clone(), trace);
        }

        let mut child = Mesh::new(vertices, triangles, &boundary).expect("bisection preserves conformity");
        child.generation = self.generation + 1;
        let mut lineage = self.lineage.clone();
        lineage.push(LineageStep {
            parent: self.checksum,
            child: child.checksum,
            parent_of: Arc::from(parent_of),
        });
        child.lineage = lineage;
        debug_assert_eq!(child.checksum, compute_checksum(&child.vertices, &child.triangles));
        (child, trace)
    }

    /// Triangles whose closure touches `p` (within `tol`).
    pub fn triangles_near(&self, p: Point, tol: f64) -> BTreeSet<usize> {
        (0..self.num_triangles())
            .filter(|&t| {
                let l = self.barycentric(t, p);
                l.iter().all(|&x| x >= -tol)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    fn annulus() -> Mesh {
        Domain::SquareAnnulus.build().unwrap()
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = annulus();
        let (fine, trace) = m.bisect(&BTreeSet::new());
        assert_eq!(fine.checksum(), m.checksum());
        assert!(trace.refined.is_empty());
        assert_eq!(trace.bisections, 0);
    }

    #[test]
    fn marking_everything_at_least_doubles() {
        let m = annulus();
        let all: BTreeSet<usize> = (0..m.num_triangles()).collect();
        let (fine, trace) = m.bisect(&all);
        assert!(fine.num_triangles() >= 2 * m.num_triangles());
        assert_eq!(trace.refined.len(), m.num_triangles());
        assert_eq!(fine.num_triangles() - m.num_triangles(), trace.bisections);
    }

    #[test]
    fn single_interior_mark_triggers_closure() {
        let m = annulus();
        // an interior triangle whose refinement edge is not shared by a
        // compatible partner needs its neighbor refined as well
        let interior = (0..m.num_triangles())
            .find(|&t| (0..3).all(|k| !m.is_boundary_edge(m.triangle_edges(t)[k])))
            .unwrap();
        let (fine, trace) = m.bisect(&BTreeSet::from([interior]));
        assert!(trace.marked.is_subset(&trace.refined));
        assert!(trace.refined.len() >= 2);
        assert_eq!(fine.num_triangles() - m.num_triangles(), trace.bisections);
        assert_eq!(fine.betti_number().unwrap(), 1);
    }

    #[test]
    fn uniform_refine_quadruples() {
        let m = annulus();
        assert_eq!(m.uniform_refine(0).checksum(), m.checksum());
        assert_eq!(m.uniform_refine(1).num_triangles(), 4 * m.num_triangles());
        assert_eq!(m.uniform_refine(2).num_triangles(), 16 * m.num_triangles());
    }

    #[test]
    fn children_lie_inside_parents() {
        let m = annulus();
        let marked: BTreeSet<usize> = (0..m.num_triangles()).step_by(3).collect();
        let (fine, trace) = m.bisect(&marked);
        let map = fine.ancestor_map(&m).unwrap();
        for (t, &p) in map.iter().enumerate() {
            for v in fine.triangles()[t] {
                let l = m.barycentric(p, fine.vertices()[v]);
                assert!(l.iter().all(|&x| x > -1e-12), "child {t} escapes parent {p}");
            }
        }
        for (p, children) in &trace.child_map {
            let area: f64 = children.iter().map(|&c| fine.area(c)).sum();
            assert!((area - m.area(*p)).abs() < 1e-14);
        }
    }

    #[test]
    fn ancestor_map_rejects_unrelated_mesh() {
        let m = annulus();
        let other = Domain::UnitSquare.build().unwrap();
        assert!(m.uniform_refine(1).ancestor_map(&other).is_err());
    }
}
