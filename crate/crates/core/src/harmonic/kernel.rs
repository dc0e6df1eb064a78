//! Kernel extraction by shifted subspace iteration.
//!
//! The constraint operator `K q = (D₀^{1/2} GᵀM₁ q, M₂^{1/2} rot q)` with
//! `D₀` the inverse lumped P1 mass vanishes exactly on the harmonic fields.
//! We iterate with `(KᵀK + s M₁)⁻¹ M₁` on a block of `β + 2` vectors and
//! extract the `β` lowest Ritz pairs of `(KᵀK, M₁)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{deflection, orthonormalize, BasisMethod, HarmonicBasis, SPECTRAL_GAP_THRESHOLD};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseCholesky};
use crate::whitney::DeRhamSpaces;

const MAX_ITERATIONS: usize = 40;
const SUBSPACE_TOL: f64 = 1e-11;

struct ConstraintOperator {
    /// `GᵀM₁`, `n0 × n1`.
    grad_t_m1: CsrMatrix,
    /// Inverse lumped P1 mass.
    d0: Vec<f64>,
    areas: Vec<f64>,
    normal: CsrMatrix,
}

impl ConstraintOperator {
    fn new(spaces: &DeRhamSpaces) -> Self {
        let grad_t_m1 = spaces.grad.transpose().matmul(&spaces.m1);
        let d0: Vec<f64> = (0..spaces.n0())
            .map(|v| 1.0 / spaces.m0.row(v).map(|(_, x)| x).sum::<f64>())
            .collect();
        let areas: Vec<f64> = (0..spaces.n2()).map(|t| spaces.m2.get(t, t)).collect();

        let mut t = Vec::new();
        for (v, &w) in d0.iter().enumerate() {
            let row: Vec<(usize, f64)> = grad_t_m1.row(v).collect();
            for &(i, a) in &row {
                for &(j, b) in &row {
                    t.push((i, j, w * a * b));
                }
            }
        }
        for (tri, &area) in areas.iter().enumerate() {
            let row: Vec<(usize, f64)> = spaces.rot.row(tri).collect();
            for &(i, a) in &row {
                for &(j, b) in &row {
                    t.push((i, j, area * a * b));
                }
            }
        }
        let normal = CsrMatrix::from_triplets(spaces.n1(), spaces.n1(), &t);
        Self {
            grad_t_m1,
            d0,
            areas,
            normal,
        }
    }

    /// `‖K q‖²` summed term by term, without forming `qᵀ(KᵀK)q`.
    fn residual_norm_sq(&self, spaces: &DeRhamSpaces, q: &[f64]) -> f64 {
        let g = self.grad_t_m1.mul_vec(q);
        let r = spaces.rot.mul_vec(q);
        let a: f64 = g.iter().zip(&self.d0).map(|(x, w)| w * x * x).sum();
        let b: f64 = r.iter().zip(&self.areas).map(|(x, w)| w * x * x).sum();
        a + b
    }
}

/// Deterministic start vectors (SplitMix64 stream).
fn start_block(n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    (0..p).map(|_| (0..n).map(|_| next()).collect()).collect()
}

/// Rayleigh–Ritz for the pencil `(A, B)` on the span of `y`; returns the
/// Ritz values in ascending order and the B-orthonormal Ritz vectors.
fn rayleigh_ritz(a: &CsrMatrix, b: &CsrMatrix, y: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = y.len();
    let ay: Vec<Vec<f64>> = y.iter().map(|v| a.mul_vec(v)).collect();
    let by: Vec<Vec<f64>> = y.iter().map(|v| b.mul_vec(v)).collect();
    let dot = crate::sparse::dot;
    let sa = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i])));
    let sb = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &by[j]) + dot(&y[j], &by[i])));
    let chol = sb
        .cholesky()
        .ok_or_else(|| Error::Solver("subspace iteration lost rank".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Solver("subspace iteration lost rank".into()))?;
    let c = &l_inv * sa * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let coeffs = l_inv.transpose() * &eig.eigenvectors;
    let n = y[0].len();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v = vec![0.0; n];
            for (i, yi) in y.iter().enumerate() {
                crate::sparse::axpy(coeffs[(i, k)], yi, &mut v);
            }
            v
        })
        .collect();
    Ok((order.iter().map(|&k| eig.eigenvalues[k]).collect(), vectors))
}

/// Harmonic basis from the kernel of the scaled constraint operator. The
/// kernel dimension is taken from the mesh topology; the separation from
/// the rest of the spectrum is checked against [`SPECTRAL_GAP_THRESHOLD`].
pub fn compute_basis(spaces: &DeRhamSpaces) -> Result<HarmonicBasis> {
    let beta = spaces.mesh().betti_number()?;
    if beta == 0 {
        return Ok(HarmonicBasis {
            mesh: spaces.mesh().clone(),
            columns: Vec::new(),
            sigma_gap: None,
            method: BasisMethod::Kernel,
        });
    }
    let op = ConstraintOperator::new(spaces);

    // The first nonzero eigenvalue of (KᵀK, M₁) scales like diam(Ω)⁻²; a
    // shift well below it gives fast convergence while keeping the shifted
    // matrix safely positive definite.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in spaces.mesh().vertices() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let diam2 = (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2);
    let shift = 1e-3 / diam2;
    let shifted_t: Vec<_> = op
        .normal
        .triplets()
        .chain(spaces.m1.triplets().map(|(i, j, v)| (i, j, shift * v)))
        .collect();
    let shifted = CsrMatrix::from_triplets(spaces.n1(), spaces.n1(), &shifted_t);
    let chol = SparseCholesky::factor(&shifted)?;

    let p = beta + 2;
    let mut block = start_block(spaces.n1(), p);
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let mut ritz_values = Vec::new();
    let mut settled = false;
    for iteration in 0..MAX_ITERATIONS {
        let mut rhs: Vec<Vec<f64>> = block.iter().map(|v| spaces.m1.mul_vec(v)).collect();
        chol.solve_columns(&mut rhs);
        let (values, vectors) = rayleigh_ritz(&op.normal, &spaces.m1, &rhs)?;
        ritz_values = values;
        block = vectors;

        if settled {
            break;
        }
        let kernel = &block[..beta];
        if let Some(prev) = &previous {
            // one more sweep once consecutive kernel subspaces agree
            settled = iteration >= 2 && deflection(spaces, kernel, prev) < SUBSPACE_TOL;
        }
        previous = Some(kernel.to_vec());
    }

    let mut columns: Vec<Vec<f64>> = block[..beta].to_vec();
    orthonormalize(spaces, &mut columns)?;
    let kernel_max = columns
        .iter()
        .map(|q| op.residual_norm_sq(spaces, q))
        .fold(0.0f64, f64::max);
    let next = ritz_values[beta].max(0.0);
    let sigma_gap = if kernel_max > 0.0 {
        (next / kernel_max).sqrt()
    } else {
        f64::INFINITY
    };
    if !(sigma_gap >= SPECTRAL_GAP_THRESHOLD) {
        return Err(Error::SpectralGap {
            ratio: sigma_gap,
            threshold: SPECTRAL_GAP_THRESHOLD,
        });
    }
    Ok(HarmonicBasis {
        mesh: spaces.mesh().clone(),
        columns,
        sigma_gap: Some(sigma_gap),
        method: BasisMethod::Kernel,
    })
}
