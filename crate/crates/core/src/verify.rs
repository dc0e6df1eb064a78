//! Invariant suite run by `harmonic-afem verify`. Every check reports a
//! measured residual against a tolerance.

use std::fmt;
use std::sync::Arc;

use crate::afem::{self, dorfler_mark, AfemConfig};
use crate::error::Result;
use crate::harmonic::{self, project_field, subspace_gap, HarmonicBasis, SPECTRAL_GAP_THRESHOLD};
use crate::mesh::Domain;
use crate::whitney::{prolong_edge_coeffs, DeRhamSpaces};

/// DOF budget of the AFEM part of the suite.
pub const VERIFY_MAX_DOFS: usize = 5000;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
        }
    }

    /// A residual that must not exceed the tolerance; NaN fails.
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<48} residual {:.3e}  tol {:.1e}", self.name, self.residual, self.tolerance)
    }
}

/// Deliberate corruptions used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ZeroColumn,
}

fn domain_label(d: &Domain) -> &'static str {
    match d {
        Domain::UnitSquare => "square",
        Domain::SquareAnnulus => "annulus",
        Domain::ThreeHoles => "three_holes",
        Domain::Polygon { .. } => "polygon",
    }
}

/// Checks on a single basis: orthonormality and both harmonic conditions.
pub fn basis_checks(label: &str, spaces: &DeRhamSpaces, basis: &HarmonicBasis) -> Vec<Check> {
    let (g, r) = basis.harmonic_residuals(spaces);
    vec![
        Check::new(format!("{label}: orthonormality"), basis.orthonormality_error(spaces), 1e-10),
        Check::new(format!("{label}: gradient orthogonality"), g / spaces.m1.max_abs(), 1e-9),
        Check::new(format!("{label}: rot free"), r, 1e-9),
    ]
}

fn structural_checks(domain: &Domain, fault: Option<Fault>) -> Result<Vec<Check>> {
    let label = domain_label(domain);
    let mesh = Arc::new(domain.build()?.uniform_refine(1));
    let s = DeRhamSpaces::new(mesh.clone())?;
    let mut checks = Vec::new();

    checks.push(Check::new(format!("{label}: rot grad = 0"), s.rot.matmul(&s.grad).max_abs(), 0.0));
    let asym = [&s.m0, &s.m1, &s.m2]
        .iter()
        .map(|m| {
            m.triplets()
                .map(|(i, j, v)| (v - m.get(j, i)).abs())
                .fold(0.0, f64::max)
                / m.max_abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::new(format!("{label}: mass symmetry"), asym, 1e-14));

    let tau: Vec<f64> = mesh.vertices().iter().map(|p| (p[0] * 1.3).sin() + p[1] * p[0]).collect();
    let g = s.grad.mul_vec(&tau);
    let lhs = s.m1.inner(&g, &g);
    let rhs = s.stiffness.inner(&tau, &tau);
    checks.push(Check::new(format!("{label}: Galerkin consistency"), (lhs - rhs).abs() / rhs, 1e-12));

    let c = s.interpolate_constant([1.0, 0.0]);
    let area = mesh.total_area();
    checks.push(Check::new(
        format!("{label}: constant reproduction"),
        (s.m1.inner(&c, &c) - area).abs() / area,
        1e-12,
    ));

    let coarse = Arc::new(domain.build()?);
    let sc = DeRhamSpaces::new(coarse.clone())?;
    let q: Vec<f64> = (0..sc.n1()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let p = prolong_edge_coeffs(&coarse, &mesh, &q)?;
    let (nc, nf) = (sc.m1.inner(&q, &q), s.m1.inner(&p, &p));
    checks.push(Check::new(format!("{label}: prolongation isometry"), (nc - nf).abs() / nc, 1e-12));

    let expected = match domain {
        Domain::UnitSquare => Some(0),
        Domain::SquareAnnulus => Some(1),
        Domain::ThreeHoles => Some(3),
        Domain::Polygon { holes, .. } => Some(holes.len()),
    };
    let beta = mesh.betti_number()?;
    checks.push(Check::new(
        format!("{label}: betti number"),
        expected.map_or(0.0, |b| (b as f64 - beta as f64).abs()),
        0.0,
    ));

    let mut kernel = harmonic::compute_basis(&s)?;
    if fault == Some(Fault::ZeroColumn) {
        if let Some(c) = kernel.columns.first_mut() {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    checks.extend(basis_checks(&format!("{label} kernel"), &s, &kernel));
    if let Some(ratio) = kernel.sigma_gap {
        checks.push(Check::new(
            format!("{label}: spectral gap (inverse ratio)"),
            1.0 / ratio,
            1.0 / SPECTRAL_GAP_THRESHOLD,
        ));
    }
    let cut = harmonic::cutting_basis(&s)?;
    checks.extend(basis_checks(&format!("{label} cut"), &s, &cut));
    checks.push(Check::new(
        format!("{label}: cut/kernel span gap"),
        subspace_gap(&s, &kernel.columns, &cut.columns),
        1e-8,
    ));

    if kernel.beta() > 0 {
        let f: Vec<f64> = (0..s.n1()).map(|i| ((i * 2654435761) % 997) as f64 / 498.0 - 1.0).collect();
        let (coef, r) = project_field(&s, &kernel, &f);
        let total = s.m1.inner(&f, &f);
        let split = coef.iter().map(|c| c * c).sum::<f64>() + s.m1.inner(&r, &r);
        checks.push(Check::new(format!("{label}: projection Pythagoras"), (total - split).abs() / total, 1e-10));
    }
    Ok(checks)
}

fn afem_checks(config: &AfemConfig) -> Result<Vec<Check>> {
    let label = domain_label(&config.domain);
    let config = AfemConfig {
        max_dofs: config.max_dofs.min(VERIFY_MAX_DOFS),
        ..config.clone()
    };
    let run = afem::run_adaptive(&config)?;
    let mut checks = Vec::new();
    if run.beta() == 0 {
        return Ok(checks);
    }
    let worst = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) });

    checks.push(Check::new(
        format!("{label} run: orthogonality identity"),
        worst(&mut run.pairs.iter().map(|p| {
            (p.e2_drop - p.projection_change).abs() / run.analysis[p.level].defect_forward
        })),
        1e-9,
    ));
    checks.push(Check::new(
        format!("{label} run: Frobenius identity"),
        worst(&mut run.analysis.iter().flat_map(|a| {
            let e2 = a.defect.e * a.defect.e;
            [(a.defect_forward - e2).abs(), (a.defect_backward - e2).abs()]
        })),
        1e-12,
    ));
    checks.push(Check::new(
        format!("{label} run: gap symmetry"),
        worst(&mut run.analysis.iter().map(|a| (a.deflections.0 - a.deflections.1).abs())),
        1e-10,
    ));
    let mut equivalence = 0.0f64;
    for (l, a) in run.levels.iter().zip(&run.analysis) {
        for (e, m) in l.eta.per_element.iter().zip(&a.mu.per_element) {
            equivalence = equivalence
                .max(m - a.defect.p_norm * e)
                .max(e - a.defect.p_inv_norm * m);
        }
    }
    checks.push(Check::new(format!("{label} run: estimator equivalence"), equivalence, 1e-9));
    checks.push(Check::new(
        format!("{label} run: projection norm <= 1"),
        worst(&mut run.records.iter().map(|r| r.p_norm - 1.0)),
        1e-12,
    ));
    checks.push(Check::new(
        format!("{label} run: inverse norm nonincreasing"),
        worst(&mut run.records.windows(2).map(|w| w[1].p_inv_norm - w[0].p_inv_norm)),
        1e-10,
    ));
    checks.push(Check::new(
        format!("{label} run: projection monotonicity"),
        worst(&mut run.analysis.windows(2).flat_map(|w| {
            w[0].projection_norms
                .iter()
                .zip(&w[1].projection_norms)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
        })),
        1e-10,
    ));
    checks.push(Check::new(
        format!("{label} run: contraction (max ratio, strict)"),
        worst(&mut run.records.iter().filter(|r| r.contraction_ratio.is_finite()).map(|r| r.contraction_ratio)),
        1.0 - f64::EPSILON,
    ));
    // removing the last element of the marked prefix must break the criterion
    let mut minimality = 0.0f64;
    for l in &run.levels {
        if l.marked.is_empty() {
            continue;
        }
        let v = &l.eta.per_element;
        let total: f64 = v.iter().map(|x| x * x).sum();
        let marked: f64 = l.marked.iter().map(|&t| v[t] * v[t]).sum();
        let smallest = l.marked.iter().map(|&t| v[t] * v[t]).fold(f64::INFINITY, f64::min);
        let target = config.theta * config.theta * total;
        let same = dorfler_mark(v, config.theta) == l.marked;
        if !(marked - smallest < target) || !same {
            minimality = 1.0;
        }
    }
    checks.push(Check::new(format!("{label} run: Dörfler minimality"), minimality, 0.0));
    let c = run.complexity_constant();
    checks.push(Check::new(format!("{label} run: complexity constant / 50"), c / 50.0, 1.0));
    Ok(checks)
}

/// The full suite: structural checks on every built-in domain and a short
/// adaptive run on the configured domain.
pub fn run_suite(config: &AfemConfig, fault: Option<Fault>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut domains = vec![Domain::UnitSquare, Domain::SquareAnnulus, Domain::ThreeHoles];
    if !domains.contains(&config.domain) {
        domains.push(config.domain.clone());
    }
    for d in &domains {
        checks.extend(structural_checks(d, fault)?);
    }
    checks.extend(afem_checks(config)?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_checks_pass_on_the_annulus() {
        let checks = structural_checks(&Domain::SquareAnnulus, None).unwrap();
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn zeroed_column_fails_orthonormality() {
        let checks = structural_checks(&Domain::SquareAnnulus, Some(Fault::ZeroColumn)).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"annulus kernel: orthonormality"), "{failed:?}");
    }

    #[test]
    fn nan_residual_fails() {
        assert!(!Check::new("x", f64::NAN, 1.0).passed());
    }
}
