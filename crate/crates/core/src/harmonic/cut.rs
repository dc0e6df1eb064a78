//! Harmonic fields from cuts.
//!
//! For every hole we walk through the dual graph from a triangle touching the
//! hole to one touching the outer boundary. The edges crossed on the way
//! carry a closed cochain `z` whose period is one around that hole and zero
//! around the others. Removing its gradient part, `h = z − Gφ` with
//! `GᵀM₁Gφ = GᵀM₁z`, leaves a discrete harmonic field.

use std::collections::VecDeque;

use super::{orthonormalize, BasisMethod, HarmonicBasis};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, SparseCholesky};
use crate::whitney::DeRhamSpaces;

/// A dual path from one hole to the outer boundary.
#[derive(Debug, Clone)]
pub struct Cut {
    pub hole: usize,
    /// Triangles visited, starting next to the hole.
    pub triangles: Vec<usize>,
    /// Edges crossed: the hole edge, the interior edges, then the outer edge.
    pub crossings: Vec<usize>,
    /// The closed edge cochain carried by the cut.
    pub cocycle: Vec<f64>,
}

fn local_index(mesh: &Mesh, t: usize, e: usize) -> usize {
    mesh.triangle_edges(t).iter().position(|&x| x == e).expect("edge belongs to triangle")
}

impl Cut {
    /// One cut per hole, holes ordered as in [`Mesh::boundary_components`].
    /// Later searches avoid triangles used by earlier cuts, so the cuts are
    /// pairwise disjoint.
    pub fn for_mesh(mesh: &Mesh) -> Result<Vec<Cut>> {
        let components = mesh.boundary_components();
        let mut on_outer = vec![false; mesh.num_edges()];
        for c in components.iter().filter(|c| c.is_outer) {
            for &e in &c.edges {
                on_outer[e] = true;
            }
        }
        let mut used = vec![false; mesh.num_triangles()];
        let mut cuts = Vec::new();
        for (hole, c) in components.iter().filter(|c| !c.is_outer).enumerate() {
            let cut = Self::from_hole(mesh, hole, &c.edges, &on_outer, &used)?;
            for &t in &cut.triangles {
                used[t] = true;
            }
            cuts.push(cut);
        }
        Ok(cuts)
    }

    fn from_hole(mesh: &Mesh, hole: usize, hole_edges: &[usize], on_outer: &[bool], used: &[bool]) -> Result<Cut> {
        let nt = mesh.num_triangles();
        // multi-source BFS, remembering the hole edge each search started from
        let mut came_from: Vec<Option<(usize, usize)>> = vec![None; nt];
        let mut start_edge = vec![usize::MAX; nt];
        let mut queue = VecDeque::new();
        for &e in hole_edges {
            let (t, _) = mesh.edge_triangles(e);
            if !used[t] && start_edge[t] == usize::MAX {
                start_edge[t] = e;
                queue.push_back(t);
            }
        }
        let outer_edge = |t: usize| mesh.triangle_edges(t).into_iter().find(|&e| on_outer[e]);
        let mut end = None;
        while let Some(t) = queue.pop_front() {
            if let Some(e) = outer_edge(t) {
                end = Some((t, e));
                break;
            }
            for e in mesh.triangle_edges(t) {
                if let (a, Some(b)) = mesh.edge_triangles(e) {
                    let s = if a == t { b } else { a };
                    if !used[s] && start_edge[s] == usize::MAX {
                        start_edge[s] = start_edge[t];
                        came_from[s] = Some((t, e));
                        queue.push_back(s);
                    }
                }
            }
        }
        let (last, end_edge) = end.ok_or(Error::CutConstruction { hole })?;

        let mut triangles = vec![last];
        let mut interior = Vec::new();
        let mut t = last;
        while let Some((prev, e)) = came_from[t] {
            triangles.push(prev);
            interior.push((prev, e));
            t = prev;
        }
        triangles.reverse();
        interior.reverse();
        let first = triangles[0];
        let first_edge = start_edge[first];

        let sign = |t: usize, e: usize| mesh.edge_sign(t, local_index(mesh, t, e));
        let mut cocycle = vec![0.0; mesh.num_edges()];
        let mut crossings = vec![first_edge];
        cocycle[first_edge] = -sign(first, first_edge);
        for &(from, e) in &interior {
            cocycle[e] = sign(from, e);
            crossings.push(e);
        }
        cocycle[end_edge] = sign(last, end_edge);
        crossings.push(end_edge);
        Ok(Cut {
            hole,
            triangles,
            crossings,
            cocycle,
        })
    }
}

/// M₁-orthonormal harmonic basis obtained from the cut cochains.
pub fn cutting_basis(spaces: &DeRhamSpaces) -> Result<HarmonicBasis> {
    let mesh = spaces.mesh();
    mesh.betti_number()?;
    let cuts = Cut::for_mesh(mesh)?;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cuts.len());
    if !cuts.is_empty() {
        // Neumann problem with vertex 0 pinned
        let n0 = spaces.n0();
        let reduced: Vec<_> = spaces
            .stiffness
            .triplets()
            .filter(|&(i, j, _)| i != 0 && j != 0)
            .map(|(i, j, v)| (i - 1, j - 1, v))
            .collect();
        let reduced = CsrMatrix::from_triplets(n0 - 1, n0 - 1, &reduced);
        let chol = SparseCholesky::factor(&reduced)?;
        for cut in &cuts {
            let z = &cut.cocycle;
            let rhs = spaces.grad.tr_mul_vec(&spaces.m1.mul_vec(z));
            let phi_red = chol.solve_refined(&reduced, &rhs[1..], 2);
            if phi_red.iter().any(|x| !x.is_finite()) {
                return Err(Error::Solver(format!("potential for hole {} is not finite", cut.hole)));
            }
            let mut phi = vec![0.0; n0];
            phi[1..].copy_from_slice(&phi_red);
            let g = spaces.grad.mul_vec(&phi);
            columns.push(z.iter().zip(&g).map(|(a, b)| a - b).collect());
        }
        orthonormalize(spaces, &mut columns)?;
    }
    Ok(HarmonicBasis {
        mesh: mesh.clone(),
        columns,
        sigma_gap: None,
        method: BasisMethod::Cut,
    })
}
