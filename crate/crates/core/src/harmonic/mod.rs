//! Discrete harmonic fields: the kernel of `q ↦ (GᵀM₁q, rot q)` in the
//! Whitney edge space.
//!
//! Two independent constructions are provided. [`compute_basis`] extracts the
//! kernel of the scaled constraint operator by shifted subspace iteration.
//! [`cutting_basis`] builds one cut per hole and recovers the harmonic fields
//! from potentials that jump across the cuts. Both return M₁-orthonormal
//! bases and must span the same space.

mod cut;
mod kernel;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

pub use cut::{cutting_basis, Cut};
pub use kernel::compute_basis;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{axpy, dot};
use crate::whitney::{prolong_columns, DeRhamSpaces};

/// Smallest acceptable ratio `σ_{β+1} / σ_β` of the scaled constraint operator.
pub const SPECTRAL_GAP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMethod {
    Kernel,
    Cut,
}

/// M₁-orthonormal basis of the discrete harmonic fields on one mesh.
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    pub mesh: Arc<Mesh>,
    /// Edge-coefficient vectors, one per basis field.
    pub columns: Vec<Vec<f64>>,
    /// `σ_{β+1} / σ_β` of the scaled constraint operator, when computed.
    pub sigma_gap: Option<f64>,
    pub method: BasisMethod,
}

impl HarmonicBasis {
    pub fn beta(&self) -> usize {
        self.columns.len()
    }

    /// Largest entry of `QᵀM₁Q − I`.
    pub fn orthonormality_error(&self, spaces: &DeRhamSpaces) -> f64 {
        let g = gram(spaces, &self.columns, &self.columns);
        let mut err: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[(i, j)] - target).abs());
            }
        }
        err
    }

    /// `(max |GᵀM₁Q|, max |rot Q|)` over all columns.
    pub fn harmonic_residuals(&self, spaces: &DeRhamSpaces) -> (f64, f64) {
        let mut grad_res: f64 = 0.0;
        let mut rot_res: f64 = 0.0;
        for q in &self.columns {
            let m1q = spaces.m1.mul_vec(q);
            grad_res = spaces.grad.tr_mul_vec(&m1q).iter().fold(grad_res, |m, v| m.max(v.abs()));
            rot_res = spaces.rot.mul_vec(q).iter().fold(rot_res, |m, v| m.max(v.abs()));
        }
        (grad_res, rot_res)
    }

    /// Reorders and flips columns to follow `previous` (already prolonged to
    /// this mesh) as closely as possible. Only affects presentation.
    pub fn align_with(&mut self, spaces: &DeRhamSpaces, previous: &[Vec<f64>]) {
        if previous.len() != self.beta() {
            return;
        }
        let g = gram(spaces, previous, &self.columns);
        let mut free: Vec<usize> = (0..self.beta()).collect();
        let mut order = Vec::with_capacity(self.beta());
        for i in 0..previous.len() {
            let (pos, &j) = free
                .iter()
                .enumerate()
                .max_by(|a, b| g[(i, *a.1)].abs().total_cmp(&g[(i, *b.1)].abs()))
                .unwrap();
            free.remove(pos);
            order.push((j, g[(i, j)] < 0.0));
        }
        let old = std::mem::take(&mut self.columns);
        self.columns = order
            .into_iter()
            .map(|(j, flip)| {
                let mut c = old[j].clone();
                if flip {
                    c.iter_mut().for_each(|x| *x = -*x);
                }
                c
            })
            .collect();
    }
}

/// `G_ij = ⟨a_i, b_j⟩` in the M₁ inner product.
pub fn gram(spaces: &DeRhamSpaces, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let mb: Vec<Vec<f64>> = b.iter().map(|v| spaces.m1.mul_vec(v)).collect();
    DMatrix::from_fn(a.len(), b.len(), |i, j| dot(&a[i], &mb[j]))
}

/// Modified Gram–Schmidt in the M₁ inner product, run twice for stability.
/// Fails if the columns are numerically dependent.
pub fn orthonormalize(spaces: &DeRhamSpaces, columns: &mut [Vec<f64>]) -> Result<()> {
    for _pass in 0..2 {
        for j in 0..columns.len() {
            let (done, rest) = columns.split_at_mut(j);
            let v = &mut rest[0];
            for q in done.iter() {
                let r = spaces.m1.inner(q, v);
                axpy(-r, q, v);
            }
            let norm = spaces.l2_norm(v);
            if !(norm > 1e-12) {
                return Err(Error::Solver(format!("basis column {j} is linearly dependent")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(())
}

/// Coefficients `c = QᵀM₁f` and the residual `f − Qc`.
pub fn project_field(spaces: &DeRhamSpaces, basis: &HarmonicBasis, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mf = spaces.m1.mul_vec(f);
    let coeffs: Vec<f64> = basis.columns.iter().map(|q| dot(q, &mf)).collect();
    let mut residual = f.to_vec();
    for (q, c) in basis.columns.iter().zip(&coeffs) {
        axpy(-c, q, &mut residual);
    }
    (coeffs, residual)
}

/// `δ(A, B) = sup_{x∈A, ‖x‖=1} ‖x − P_B x‖` for M₁-orthonormal column sets,
/// evaluated from the explicit residual `A − B(BᵀM₁A)` to avoid the
/// `1 − σ²` cancellation.
pub fn deflection(spaces: &DeRhamSpaces, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ba = gram(spaces, b, a);
    let residual: Vec<Vec<f64>> = (0..a.len())
        .map(|j| {
            let mut r = a[j].clone();
            for (i, bi) in b.iter().enumerate() {
                axpy(-ba[(i, j)], bi, &mut r);
            }
            r
        })
        .collect();
    let rr = gram(spaces, &residual, &residual);
    SymmetricEigen::new(rr).eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt()
}

/// `gap(A, B) = max(δ(A, B), δ(B, A))`.
pub fn subspace_gap(spaces: &DeRhamSpaces, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    deflection(spaces, a, b).max(deflection(spaces, b, a))
}

/// Inner products between a reference basis on a fine mesh and a basis on
/// one of its ancestors.
#[derive(Debug, Clone)]
pub struct CrossGram {
    /// `M_jm = ⟨q_ref^j, q_ℓ^m⟩`, so that `P_ℓ q_ref^j = Σ_m M_jm q_ℓ^m`.
    pub matrix: DMatrix<f64>,
    /// Coarse basis columns represented on the fine mesh.
    pub prolonged: Vec<Vec<f64>>,
}

impl CrossGram {
    /// `P_ℓ q_ref^j` on the fine mesh.
    pub fn projected_reference(&self, j: usize) -> Vec<f64> {
        let n = self.prolonged.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (m, q) in self.prolonged.iter().enumerate() {
            axpy(self.matrix[(j, m)], q, &mut out);
        }
        out
    }
}

pub fn cross_gram(reference: &HarmonicBasis, fine: &DeRhamSpaces, coarse: &HarmonicBasis) -> Result<CrossGram> {
    if reference.beta() != coarse.beta() {
        return Err(Error::DimensionMismatch {
            expected: reference.beta(),
            found: coarse.beta(),
        });
    }
    let cols: Vec<&[f64]> = coarse.columns.iter().map(Vec::as_slice).collect();
    let prolonged = prolong_columns(&coarse.mesh, fine.mesh(), &cols)?;
    let matrix = gram(fine, &reference.columns, &prolonged);
    Ok(CrossGram { matrix, prolonged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    fn setup(d: Domain) -> (DeRhamSpaces, HarmonicBasis) {
        let s = DeRhamSpaces::new(Arc::new(d.build().unwrap())).unwrap();
        let b = compute_basis(&s).unwrap();
        (s, b)
    }

    #[test]
    fn unit_square_has_no_harmonic_fields() {
        let (s, b) = setup(Domain::UnitSquare);
        assert_eq!(b.beta(), 0);
        assert!(cutting_basis(&s).unwrap().columns.is_empty());
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_harmonic() {
        for (d, beta) in [(Domain::SquareAnnulus, 1), (Domain::ThreeHoles, 3)] {
            let (s, b) = setup(d);
            assert_eq!(b.beta(), beta);
            assert!(b.orthonormality_error(&s) < 1e-10);
            let (g, r) = b.harmonic_residuals(&s);
            assert!(g < 1e-9 * s.m1.max_abs(), "grad residual {g}");
            assert!(r < 1e-9, "rot residual {r}");
            assert!(b.sigma_gap.unwrap() >= SPECTRAL_GAP_THRESHOLD);
        }
    }

    #[test]
    fn cut_and_kernel_bases_agree() {
        for d in [Domain::SquareAnnulus, Domain::ThreeHoles] {
            let (s, b) = setup(d);
            let c = cutting_basis(&s).unwrap();
            assert_eq!(c.beta(), b.beta());
            assert!(c.orthonormality_error(&s) < 1e-12);
            let gap = subspace_gap(&s, &b.columns, &c.columns);
            assert!(gap < 1e-8, "gap {gap}");
        }
    }

    #[test]
    fn projection_of_basis_columns_and_gradients() {
        let (s, b) = setup(Domain::ThreeHoles);
        let (c, r) = project_field(&s, &b, &b.columns[1]);
        assert!((c[0]).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && c[2].abs() < 1e-12);
        assert!(s.l2_norm(&r) < 1e-10);

        let tau: Vec<f64> = s.mesh().vertices().iter().map(|p| (p[0] - 2.0).powi(2) * p[1]).collect();
        let g = s.grad.mul_vec(&tau);
        let (c, _) = project_field(&s, &b, &g);
        let scale = s.l2_norm(&g);
        assert!(c.iter().all(|x| x.abs() < 1e-9 * scale), "{c:?}");
    }

    #[test]
    fn projection_is_pythagorean() {
        let (s, b) = setup(Domain::ThreeHoles);
        let f: Vec<f64> = (0..s.n1()).map(|i| ((i * 2654435761usize) % 1000) as f64 / 500.0 - 1.0).collect();
        let (c, r) = project_field(&s, &b, &f);
        let qc: f64 = c.iter().map(|x| x * x).sum();
        let total = s.m1.inner(&f, &f);
        assert!((total - qc - s.m1.inner(&r, &r)).abs() < 1e-10 * total);
        for q in &b.columns {
            assert!(s.m1.inner(q, &r).abs() < 1e-10 * total.sqrt());
        }
    }

    #[test]
    fn cross_gram_on_same_mesh() {
        let (s, b) = setup(Domain::ThreeHoles);
        let m = cross_gram(&b, &s, &b).unwrap().matrix;
        assert!((m - DMatrix::identity(3, 3)).abs().max() < 1e-12);

        let mut permuted = b.clone();
        permuted.columns = vec![
            b.columns[2].clone(),
            b.columns[0].iter().map(|x| -x).collect(),
            b.columns[1].clone(),
        ];
        let m = cross_gram(&b, &s, &permuted).unwrap().matrix;
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!((m - expected).abs().max() < 1e-12);
    }

    #[test]
    fn cross_gram_rejects_dimension_mismatch() {
        let (_, annulus) = setup(Domain::SquareAnnulus);
        let (s, three) = setup(Domain::ThreeHoles);
        assert!(matches!(
            cross_gram(&three, &s, &annulus),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn cross_gram_singular_values_lie_in_unit_interval() {
        let coarse = Arc::new(Domain::SquareAnnulus.build().unwrap());
        let fine = Arc::new(coarse.uniform_refine(2));
        let sc = DeRhamSpaces::new(coarse).unwrap();
        let sf = DeRhamSpaces::new(fine).unwrap();
        let bc = compute_basis(&sc).unwrap();
        let bf = compute_basis(&sf).unwrap();
        let m = cross_gram(&bf, &sf, &bc).unwrap().matrix;
        for s in m.singular_values().iter() {
            assert!(*s > 0.0 && *s <= 1.0 + 1e-12, "{s}");
        }
    }

    #[test]
    fn alignment_reorders_columns() {
        let (s, b) = setup(Domain::ThreeHoles);
        let mut shuffled = b.clone();
        shuffled.columns = vec![
            b.columns[1].iter().map(|x| -x).collect(),
            b.columns[2].clone(),
            b.columns[0].clone(),
        ];
        shuffled.align_with(&s, &b.columns);
        for (x, y) in shuffled.columns.iter().zip(&b.columns) {
            assert!(x.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }
}
