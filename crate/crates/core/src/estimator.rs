//! A posteriori indicators for harmonic bases.
//!
//! For a field `q` the element indicator is
//! `η(T; q)² = h_T² ‖div q‖²_T + h_T ‖⟦q·n⟧‖²_∂T`, with `h_T = |T|^{1/2}`.
//! Each element integrates the normal jump over its whole boundary, so an
//! interior edge counts for both neighbours. On boundary edges the exterior
//! value is zero. Indicators of several fields are combined by root sum of
//! squares per element.
//!
//! `μ` applies the same functional to the projections `P_ℓ q^j` of a
//! reference basis; `E` measures the subspace defect against it.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harmonic::{CrossGram, HarmonicBasis};
use crate::mesh::{Mesh, RefinementTrace};
use crate::sparse::axpy;
use crate::whitney::DeRhamSpaces;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorKind {
    /// `η`, computable from the discrete basis alone.
    Practical,
    /// `μ`, evaluated on projections of the reference basis.
    Theoretical,
}

#[derive(Debug, Clone)]
pub struct ErrorIndicators {
    pub per_element: Vec<f64>,
    pub total: f64,
    pub kind: IndicatorKind,
}

impl ErrorIndicators {
    fn from_squares(squares: Vec<f64>, kind: IndicatorKind) -> Self {
        let total = squares.iter().sum::<f64>().sqrt();
        Self {
            per_element: squares.into_iter().map(f64::sqrt).collect(),
            total,
            kind,
        }
    }

    /// Sum of squared indicators over a set of elements.
    pub fn sum_sq_over<'a>(&self, elements: impl IntoIterator<Item = &'a usize>) -> f64 {
        elements.into_iter().map(|&t| self.per_element[t].powi(2)).sum()
    }
}

/// `∫_e ⟦q·n⟧²` for every edge. The jump is linear along the edge, so the
/// integral is `L/3 (a² + ab + b²)` in terms of its endpoint values.
pub fn normal_jumps(spaces: &DeRhamSpaces, coeffs: &[f64]) -> Vec<f64> {
    let mesh = spaces.mesh();
    let mut jump_ends = vec![[0.0f64; 2]; mesh.num_edges()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let edges = mesh.triangle_edges(t);
        for (k, &e) in edges.iter().enumerate() {
            let [lo, hi] = mesh.edges()[e];
            let (pl, ph) = (mesh.vertices()[lo], mesh.vertices()[hi]);
            // fixed normal of the edge, independent of the adjacent triangle
            let len = mesh.edge_length(e);
            let n = [(ph[1] - pl[1]) / len, -(ph[0] - pl[0]) / len];
            // sign so that the contribution from t reads q_t · n_t(outward)
            let opposite = mesh.vertices()[tri[k]];
            let outward = if (opposite[0] - pl[0]) * n[0] + (opposite[1] - pl[1]) * n[1] < 0.0 {
                1.0
            } else {
                -1.0
            };
            for (slot, v) in [lo, hi].into_iter().enumerate() {
                let mut lambda = [0.0; 3];
                lambda[tri.iter().position(|&x| x == v).unwrap()] = 1.0;
                let q = spaces.value(t, coeffs, lambda);
                jump_ends[e][slot] += outward * (q[0] * n[0] + q[1] * n[1]);
            }
        }
    }
    jump_ends
        .iter()
        .enumerate()
        .map(|(e, &[a, b])| mesh.edge_length(e) / 3.0 * (a * a + a * b + b * b))
        .collect()
}

/// Squared element indicators `η(T; q)²` of a single field.
pub fn field_indicators_sq(spaces: &DeRhamSpaces, coeffs: &[f64]) -> Vec<f64> {
    let mesh = spaces.mesh();
    let jumps = normal_jumps(spaces, coeffs);
    (0..mesh.num_triangles())
        .map(|t| {
            let area = mesh.area(t);
            let h = area.sqrt();
            let div = spaces.divergence(t, coeffs);
            let boundary: f64 = mesh.triangle_edges(t).iter().map(|&e| jumps[e]).sum();
            h * h * area * div * div + h * boundary
        })
        .collect()
}

/// Root-sum-square aggregation of [`field_indicators_sq`] over several fields.
pub fn eta_fields(spaces: &DeRhamSpaces, fields: &[Vec<f64>], kind: IndicatorKind) -> ErrorIndicators {
    let mut squares = vec![0.0; spaces.n2()];
    for f in fields {
        for (s, v) in squares.iter_mut().zip(field_indicators_sq(spaces, f)) {
            *s += v;
        }
    }
    ErrorIndicators::from_squares(squares, kind)
}

/// Practical indicators `η_ℓ` of a basis on its own mesh.
pub fn eta(spaces: &DeRhamSpaces, basis: &HarmonicBasis) -> ErrorIndicators {
    eta_fields(spaces, &basis.columns, IndicatorKind::Practical)
}

/// Theoretical indicators `μ_ℓ`: `η` evaluated on `P_ℓ q^j = Σ_m M_jm q_ℓ^m`.
pub fn mu(spaces: &DeRhamSpaces, basis: &HarmonicBasis, cross: &CrossGram) -> Result<ErrorIndicators> {
    let beta = basis.beta();
    if cross.matrix.nrows() != beta || cross.matrix.ncols() != beta {
        return Err(Error::DimensionMismatch {
            expected: beta,
            found: cross.matrix.nrows(),
        });
    }
    let projected: Vec<Vec<f64>> = (0..beta)
        .map(|j| {
            let mut p = vec![0.0; spaces.n1()];
            for (m, q) in basis.columns.iter().enumerate() {
                axpy(cross.matrix[(j, m)], q, &mut p);
            }
            p
        })
        .collect();
    Ok(eta_fields(spaces, &projected, IndicatorKind::Theoretical))
}

/// Subspace defect and operator norms of `P_ℓ` restricted to the reference
/// space, all read off the cross-Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectReport {
    pub e: f64,
    pub p_norm: f64,
    pub p_inv_norm: f64,
    pub gap: f64,
}

pub fn defect(m: &DMatrix<f64>) -> Result<DefectReport> {
    let beta = m.nrows();
    if m.ncols() != beta {
        return Err(Error::DimensionMismatch {
            expected: beta,
            found: m.ncols(),
        });
    }
    if beta == 0 {
        return Ok(DefectReport {
            e: 0.0,
            p_norm: 0.0,
            p_inv_norm: 0.0,
            gap: 0.0,
        });
    }
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) {
        return Err(Error::NotInjective(smin));
    }
    let frob2 = m.iter().map(|x| x * x).sum::<f64>();
    Ok(DefectReport {
        e: (beta as f64 - frob2).max(0.0).sqrt(),
        p_norm: smax,
        p_inv_norm: 1.0 / smin,
        gap: (1.0 - smin * smin).max(0.0).sqrt(),
    })
}

/// Both sides of the defect symmetry, from explicit residuals on the fine
/// mesh: `(Σ_j ‖q^j − P_ℓ q^j‖², Σ_m ‖q_ℓ^m − P q_ℓ^m‖²)`.
pub fn defect_sides(fine: &DeRhamSpaces, reference: &HarmonicBasis, cross: &CrossGram) -> (f64, f64) {
    let m = &cross.matrix;
    let forward: f64 = (0..reference.beta())
        .map(|j| {
            let mut r = reference.columns[j].clone();
            for (k, p) in cross.prolonged.iter().enumerate() {
                axpy(-m[(j, k)], p, &mut r);
            }
            fine.m1.inner(&r, &r)
        })
        .sum();
    let backward: f64 = (0..cross.prolonged.len())
        .map(|k| {
            let mut r = cross.prolonged[k].clone();
            for (j, q) in reference.columns.iter().enumerate() {
                axpy(-m[(j, k)], q, &mut r);
            }
            fine.m1.inner(&r, &r)
        })
        .sum();
    (forward, backward)
}

/// The refined set enlarged by one layer of edge neighbours.
pub fn enlarged_refined_set(mesh: &Mesh, trace: &RefinementTrace) -> BTreeSet<usize> {
    let mut set = trace.refined.clone();
    for &t in &trace.refined {
        set.extend(mesh.neighbors(t));
    }
    set
}

/// `Σ_j ‖(P_ℓ − P_{ℓ+1}) q^j‖² / Σ_{T ∈ R̂} η_ℓ(T)²` for consecutive levels,
/// where `R̂` is [`enlarged_refined_set`] on the coarse mesh.
pub fn localized_ratio(mesh: &Mesh, eta: &ErrorIndicators, trace: &RefinementTrace, numerator: f64) -> Result<f64> {
    if trace.refined.is_empty() {
        if numerator > 0.0 {
            return Err(Error::Solver(format!(
                "projection changed by {numerator:e} without any refinement"
            )));
        }
        return Ok(0.0);
    }
    let denom = eta.sum_sq_over(&enlarged_refined_set(mesh, trace));
    Ok(if denom > 0.0 { numerator / denom } else { f64::INFINITY })
}
