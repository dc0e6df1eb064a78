//! Lowest-order discrete de Rham complex on a triangle mesh:
//! continuous P1 (V⁰) → Whitney edge elements (V¹) → piecewise constants (V²).
//!
//! An edge degree of freedom is the integral of the tangential component
//! along the edge, oriented from the lower to the higher vertex index. With
//! that choice the gradient matrix is the signed vertex-edge incidence and
//! `rot ∘ grad` cancels exactly. The rotation follows
//! `rot v = ∂y v₁ − ∂x v₂`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// Per-triangle geometry: area and gradients of the barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Result<Self> {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { triangle: usize::MAX, area });
        }
        let grads = std::array::from_fn(|k| {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            [-(b[1] - a[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)]
        });
        Ok(Self { area, grads })
    }

    fn grad_dot(&self, i: usize, j: usize) -> f64 {
        self.grads[i][0] * self.grads[j][0] + self.grads[i][1] * self.grads[j][1]
    }
}

/// Local endpoints `(a, b)` of local edge `k` ordered by global vertex index,
/// so the Whitney function is `λ_a ∇λ_b − λ_b ∇λ_a`.
fn local_edge(tri: &[usize; 3], k: usize) -> (usize, usize) {
    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
    if tri[a] < tri[b] {
        (a, b)
    } else {
        (b, a)
    }
}

/// Value at barycentric point `lambda` of the field with edge coefficients
/// `local` (ordered by local edge) on a triangle.
pub fn whitney_value(tri: &[usize; 3], geo: &ElementGeometry, local: [f64; 3], lambda: [f64; 3]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for (k, c) in local.into_iter().enumerate() {
        let (a, b) = local_edge(tri, k);
        for d in 0..2 {
            v[d] += c * (lambda[a] * geo.grads[b][d] - lambda[b] * geo.grads[a][d]);
        }
    }
    v
}

fn triangle_points(mesh: &Mesh, t: usize) -> [Point; 3] {
    mesh.triangles()[t].map(|v| mesh.vertices()[v])
}

/// Assembled discrete de Rham complex on one mesh.
#[derive(Debug, Clone)]
pub struct DeRhamSpaces {
    mesh: Arc<Mesh>,
    geometry: Vec<ElementGeometry>,
    /// P1 mass matrix.
    pub m0: CsrMatrix,
    /// Whitney edge-element mass matrix.
    pub m1: CsrMatrix,
    /// Piecewise-constant mass matrix (diagonal of areas).
    pub m2: CsrMatrix,
    /// `n1 × n0`: edge coefficients of `∇τ`.
    pub grad: CsrMatrix,
    /// `n2 × n1`: values of `rot v` per triangle.
    pub rot: CsrMatrix,
    /// P1 stiffness matrix assembled directly from element gradients.
    pub stiffness: CsrMatrix,
}

impl DeRhamSpaces {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        let nt = mesh.num_triangles();
        let geometry = (0..nt)
            .map(|t| {
                ElementGeometry::new(triangle_points(&mesh, t)).map_err(|e| match e {
                    Error::DegenerateTriangle { area, .. } => Error::DegenerateTriangle { triangle: t, area },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let (n0, n1) = (mesh.num_vertices(), mesh.num_edges());
        let mut m0 = Vec::with_capacity(9 * nt);
        let mut m1 = Vec::with_capacity(9 * nt);
        let mut stiff = Vec::with_capacity(9 * nt);
        let mut m2 = Vec::with_capacity(nt);
        let mut rot = Vec::with_capacity(3 * nt);
        for (t, geo) in geometry.iter().enumerate() {
            let tri = mesh.triangles()[t];
            let edges = mesh.triangle_edges(t);
            let lmass = |i: usize, j: usize| geo.area * if i == j { 2.0 } else { 1.0 } / 12.0;
            for i in 0..3 {
                for j in 0..3 {
                    m0.push((tri[i], tri[j], lmass(i, j)));
                    stiff.push((tri[i], tri[j], geo.area * geo.grad_dot(i, j)));
                }
            }
            for k in 0..3 {
                let (a, b) = local_edge(&tri, k);
                for l in 0..3 {
                    let (c, d) = local_edge(&tri, l);
                    let v = lmass(a, c) * geo.grad_dot(b, d) - lmass(a, d) * geo.grad_dot(b, c)
                        - lmass(b, c) * geo.grad_dot(a, d)
                        + lmass(b, d) * geo.grad_dot(a, c);
                    m1.push((edges[k], edges[l], v));
                }
                // circulation orientation against the counter-clockwise boundary
                rot.push((t, edges[k], -mesh.edge_sign(t, k) / geo.area));
            }
            m2.push((t, t, geo.area));
        }
        let grad: Vec<_> = mesh
            .edges()
            .iter()
            .enumerate()
            .flat_map(|(e, &[lo, hi])| [(e, lo, -1.0), (e, hi, 1.0)])
            .collect();

        Ok(Self {
            m0: CsrMatrix::from_triplets(n0, n0, &m0),
            m1: CsrMatrix::from_triplets(n1, n1, &m1),
            m2: CsrMatrix::from_triplets(nt, nt, &m2),
            grad: CsrMatrix::from_triplets(n1, n0, &grad),
            rot: CsrMatrix::from_triplets(nt, n1, &rot),
            stiffness: CsrMatrix::from_triplets(n0, n0, &stiff),
            geometry,
            mesh,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n0(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn n1(&self) -> usize {
        self.mesh.num_edges()
    }

    pub fn n2(&self) -> usize {
        self.mesh.num_triangles()
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    /// Coefficients of `coeffs` on the local edges of triangle `t`.
    pub fn local_coeffs(&self, t: usize, coeffs: &[f64]) -> [f64; 3] {
        self.mesh.triangle_edges(t).map(|e| coeffs[e])
    }

    /// Field value at barycentric coordinates `lambda` in triangle `t`.
    pub fn value(&self, t: usize, coeffs: &[f64], lambda: [f64; 3]) -> [f64; 2] {
        whitney_value(&self.mesh.triangles()[t], &self.geometry[t], self.local_coeffs(t, coeffs), lambda)
    }

    /// Elementwise divergence, assembled from the basis functions. Whitney
    /// fields are divergence-free inside each element, so this is zero up to
    /// rounding.
    pub fn divergence(&self, t: usize, coeffs: &[f64]) -> f64 {
        let tri = self.mesh.triangles()[t];
        let geo = &self.geometry[t];
        self.local_coeffs(t, coeffs)
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let (a, b) = local_edge(&tri, k);
                c * (geo.grad_dot(a, b) - geo.grad_dot(b, a))
            })
            .sum()
    }

    /// Edge moments of a vector field, integrated with Simpson's rule (exact
    /// for fields up to quadratic along edges).
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        self.mesh
            .edges()
            .iter()
            .map(|&[lo, hi]| {
                let (a, b) = (self.mesh.vertices()[lo], self.mesh.vertices()[hi]);
                let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let d = [b[0] - a[0], b[1] - a[1]];
                let (fa, fm, fb) = (f(a), f(m), f(b));
                (0..2).map(|k| (fa[k] + 4.0 * fm[k] + fb[k]) / 6.0 * d[k]).sum()
            })
            .collect()
    }

    pub fn interpolate_constant(&self, v: [f64; 2]) -> Vec<f64> {
        self.interpolate(|_| v)
    }

    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        self.m1.inner(coeffs, coeffs).max(0.0).sqrt()
    }

    /// Exact pointwise values. Fails if a point lies outside the mesh.
    pub fn evaluate(&self, coeffs: &[f64], points: &[Point]) -> Result<Vec<[f64; 2]>> {
        let locator = PointLocator::new(&self.mesh);
        points
            .iter()
            .map(|&p| {
                let t = locator.locate(&self.mesh, p).ok_or(Error::PointOutside { x: p[0], y: p[1] })?;
                Ok(self.value(t, coeffs, self.mesh.barycentric(t, p)))
            })
            .collect()
    }

    /// Maximum vector magnitude over the vertices, edge midpoints and
    /// barycenter of every element.
    pub fn linf_norm(&self, coeffs: &[f64]) -> f64 {
        const SAMPLES: [[f64; 3]; 7] = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ];
        (0..self.n2())
            .flat_map(|t| SAMPLES.iter().map(move |&l| self.value(t, coeffs, l)))
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Field value at each barycenter.
    pub fn cell_vectors(&self, coeffs: &[f64]) -> Vec<[f64; 2]> {
        (0..self.n2())
            .map(|t| self.value(t, coeffs, [1.0 / 3.0; 3]))
            .collect()
    }
}

/// Uniform bucket grid over triangle bounding boxes.
struct PointLocator {
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (mesh.num_triangles() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [(hi[0] - lo[0]).max(1e-300) / side as f64, (hi[1] - lo[1]).max(1e-300) / side as f64];
        let mut buckets = vec![Vec::new(); side * side];
        let clamp = |x: f64, d: usize| (((x - lo[d]) / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1);
        for t in 0..mesh.num_triangles() {
            let p = triangle_points(mesh, t);
            let (mut a, mut b) = ([usize::MAX; 2], [0usize; 2]);
            for q in p {
                for d in 0..2 {
                    a[d] = a[d].min(clamp(q[d], d));
                    b[d] = b[d].max(clamp(q[d], d));
                }
            }
            for j in a[1]..=b[1] {
                for i in a[0]..=b[0] {
                    buckets[j * side + i].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn locate(&self, mesh: &Mesh, p: Point) -> Option<usize> {
        let idx = |d: usize| {
            let x = ((p[d] - self.origin[d]) / self.cell[d]).floor();
            (x >= -1e-9 && x <= self.dims[d] as f64 + 1e-9).then(|| (x.max(0.0) as usize).min(self.dims[d] - 1))
        };
        let (i, j) = (idx(0)?, idx(1)?);
        const TOL: f64 = 1e-12;
        self.buckets[j * self.dims[0] + i]
            .iter()
            .copied()
            .find(|&t| mesh.barycentric(t, p).iter().all(|&l| l >= -TOL))
    }
}

/// Edge field together with the mesh it lives on.
#[derive(Debug, Clone)]
pub struct EdgeField {
    pub mesh: Arc<Mesh>,
    pub coeffs: Vec<f64>,
}

impl EdgeField {
    pub fn new(mesh: Arc<Mesh>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), mesh.num_edges());
        Self { mesh, coeffs }
    }
}

/// Represents a field given on `coarse` exactly in the edge space of the
/// descendant mesh `fine`. Each fine edge lies inside (or on the boundary
/// of) one coarse triangle where the field is linear, so the tangential
/// moment is the midpoint value times the edge vector.
pub fn prolong_edge_coeffs(coarse: &Mesh, fine: &Mesh, coeffs: &[f64]) -> Result<Vec<f64>> {
    Ok(prolong_columns(coarse, fine, &[coeffs])?.pop().unwrap())
}

pub fn prolong_columns(coarse: &Mesh, fine: &Mesh, columns: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    for c in columns {
        if c.len() != coarse.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: coarse.num_edges(),
                found: c.len(),
            });
        }
    }
    if fine.checksum() == coarse.checksum() {
        return Ok(columns.iter().map(|c| c.to_vec()).collect());
    }
    let ancestor = fine.ancestor_map(coarse)?;
    let mut geometry: Vec<Option<ElementGeometry>> = vec![None; coarse.num_triangles()];
    let mut out = vec![vec![0.0; fine.num_edges()]; columns.len()];
    for (e, &[lo, hi]) in fine.edges().iter().enumerate() {
        let (t_fine, _) = fine.edge_triangles(e);
        let t = ancestor[t_fine];
        let geo = *geometry[t].get_or_insert_with(|| {
            ElementGeometry::new(triangle_points(coarse, t)).expect("coarse mesh is valid")
        });
        let (a, b) = (fine.vertices()[lo], fine.vertices()[hi]);
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let d = [b[0] - a[0], b[1] - a[1]];
        let lambda = coarse.barycentric(t, mid);
        let tri = coarse.triangles()[t];
        let edges = coarse.triangle_edges(t);
        for (col, dst) in columns.iter().zip(out.iter_mut()) {
            let v = whitney_value(&tri, &geo, edges.map(|k| col[k]), lambda);
            dst[e] = v[0] * d[0] + v[1] * d[1];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    fn reference_triangle() -> Arc<Mesh> {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        // refinement edge (1, 2) opposite vertex 0
        Arc::new(Mesh::new(v, vec![[0, 1, 2]], &[(0, 1, 0), (1, 2, 0), (2, 0, 0)]).unwrap())
    }

    fn spaces(d: Domain, refine: usize) -> DeRhamSpaces {
        DeRhamSpaces::new(Arc::new(d.build().unwrap().uniform_refine(refine))).unwrap()
    }

    #[test]
    fn reference_triangle_masses() {
        let s = DeRhamSpaces::new(reference_triangle()).unwrap();
        assert_eq!(s.m2.get(0, 0), 0.5);
        // Whitney mass on the reference triangle
        let tri = s.mesh().triangles()[0];
        assert_eq!(tri, [0, 1, 2]);
        let e = |a: usize, b: usize| s.mesh().edges().iter().position(|&x| x == [a, b]).unwrap();
        let (e01, e02, e12) = (e(0, 1), e(0, 2), e(1, 2));
        // ∫|λ0∇λ1 − λ1∇λ0|² = 1/3 on the reference triangle
        assert!((s.m1.get(e01, e01) - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.m1.get(e02, e02) - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.m1.get(e12, e12) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn complex_property_is_exact() {
        for s in [spaces(Domain::SquareAnnulus, 1), spaces(Domain::ThreeHoles, 0)] {
            let rg = s.rot.matmul(&s.grad);
            assert_eq!(rg.max_abs(), 0.0);
            assert_eq!((s.grad.nrows(), s.grad.ncols()), (s.n1(), s.n0()));
            assert_eq!((s.rot.nrows(), s.rot.ncols()), (s.n2(), s.n1()));
        }
    }

    #[test]
    fn masses_are_symmetric() {
        let s = spaces(Domain::SquareAnnulus, 0);
        for m in [&s.m0, &s.m1, &s.m2, &s.stiffness] {
            assert!(m.is_symmetric(1e-15));
        }
    }

    #[test]
    fn gradient_form_matches_stiffness() {
        let s = spaces(Domain::ThreeHoles, 1);
        let tau: Vec<f64> = s.mesh().vertices().iter().map(|p| (p[0] * 1.3).sin() + p[1] * p[0]).collect();
        let g = s.grad.mul_vec(&tau);
        let a = s.m1.inner(&g, &g);
        let b = s.stiffness.inner(&tau, &tau);
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn constants_are_reproduced() {
        let s = spaces(Domain::SquareAnnulus, 1);
        let c = s.interpolate_constant([1.0, 0.0]);
        assert!((s.m1.inner(&c, &c) - s.mesh().total_area()).abs() < 1e-12);
        let c = s.interpolate_constant([0.0, 1.0]);
        let pts = [[0.3, 0.2], [2.5, 2.9], [1.5, 0.5], [0.01, 2.99]];
        for v in s.evaluate(&c, &pts).unwrap() {
            assert!((v[0]).abs() < 1e-13 && (v[1] - 1.0).abs() < 1e-13);
        }
        assert!(s.rot.mul_vec(&c).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn whitney_fields_are_divergence_free_with_constant_rot() {
        let s = spaces(Domain::UnitSquare, 0);
        let c: Vec<f64> = (0..s.n1()).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let rot = s.rot.mul_vec(&c);
        for t in 0..s.n2() {
            assert!(s.divergence(t, &c).abs() < 1e-13);
            // rot from finite differences of the linear field
            let geo = s.geometry(t);
            let eps = 1e-3;
            let centre = [1.0 / 3.0; 3];
            let mv = |dl: [f64; 3]| s.value(t, &c, [centre[0] + dl[0], centre[1] + dl[1], centre[2] + dl[2]]);
            // barycentric shift realizing a unit step in x or y
            let step = |d: usize| [geo.grads[0][d] * eps, geo.grads[1][d] * eps, geo.grads[2][d] * eps];
            let (vx, vy, v0) = (mv(step(0)), mv(step(1)), mv([0.0; 3]));
            let fd = (vy[0] - v0[0]) / eps - (vx[1] - v0[1]) / eps;
            assert!((fd - rot[t]).abs() < 1e-9 * (1.0 + rot[t].abs()), "{fd} vs {}", rot[t]);
        }
    }

    #[test]
    fn linf_norms() {
        let s = spaces(Domain::UnitSquare, 0);
        assert_eq!(s.linf_norm(&vec![0.0; s.n1()]), 0.0);
        let c = s.interpolate_constant([3.0, 4.0]);
        assert!((s.linf_norm(&c) - 5.0).abs() < 1e-13);
    }

    #[test]
    fn evaluate_rejects_outside_points() {
        let s = spaces(Domain::SquareAnnulus, 0);
        let c = vec![0.0; s.n1()];
        assert!(matches!(s.evaluate(&c, &[[1.5, 1.5]]), Err(Error::PointOutside { .. })));
        assert!(matches!(s.evaluate(&c, &[[4.0, 0.0]]), Err(Error::PointOutside { .. })));
        assert_eq!(s.evaluate(&c, &[[0.5, 0.5]]).unwrap(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn prolongation_preserves_fields() {
        let coarse = Arc::new(Domain::SquareAnnulus.build().unwrap());
        let fine = Arc::new(coarse.uniform_refine(1));
        let sc = DeRhamSpaces::new(coarse.clone()).unwrap();
        let sf = DeRhamSpaces::new(fine.clone()).unwrap();
        let q: Vec<f64> = (0..sc.n1()).map(|i| ((i as f64) * 0.37).cos()).collect();

        assert_eq!(prolong_edge_coeffs(&coarse, &coarse, &q).unwrap(), q);
        let zero = prolong_edge_coeffs(&coarse, &fine, &vec![0.0; sc.n1()]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let qf = prolong_edge_coeffs(&coarse, &fine, &q).unwrap();
        let (nc, nf) = (sc.m1.inner(&q, &q), sf.m1.inner(&qf, &qf));
        assert!((nc - nf).abs() <= 1e-12 * nc);
        // pointwise agreement
        let pts: Vec<Point> = (0..fine.num_triangles()).map(|t| fine.barycenter(t)).collect();
        let (vc, vf) = (sc.evaluate(&q, &pts).unwrap(), sf.evaluate(&qf, &pts).unwrap());
        for (a, b) in vc.iter().zip(&vf) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        // rot-free coarse gradients stay gradients
        let tau: Vec<f64> = coarse.vertices().iter().map(|p| p[0] * p[0] - p[1]).collect();
        let gf = prolong_edge_coeffs(&coarse, &fine, &sc.grad.mul_vec(&tau)).unwrap();
        assert!(sf.rot.mul_vec(&gf).iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn prolongation_rejects_unrelated_meshes() {
        let a = Domain::SquareAnnulus.build().unwrap();
        let b = Domain::UnitSquare.build().unwrap().uniform_refine(1);
        let q = vec![1.0; a.num_edges()];
        assert!(matches!(prolong_edge_coeffs(&a, &b, &q), Err(Error::NotADescendant)));
    }
}
