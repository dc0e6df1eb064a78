//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the test harness capture) and then asserts.
//!
//! The AFEM runs are shared between tests and computed once.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use harmonic_afem::afem::{self, dorfler_mark, AfemConfig, AfemRun, RateWindow};
use harmonic_afem::harmonic::{cutting_basis, subspace_gap, SPECTRAL_GAP_THRESHOLD};
use harmonic_afem::mesh::Domain;
use harmonic_afem::whitney::DeRhamSpaces;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUDGET: usize = 30_000;

fn report(name: &str, pass: bool, detail: String) {
    let line = format!("[acceptance] {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

fn config(domain: Domain) -> AfemConfig {
    AfemConfig {
        domain,
        max_dofs: BUDGET,
        ..AfemConfig::default()
    }
}

fn annulus() -> &'static AfemRun {
    static RUN: OnceLock<AfemRun> = OnceLock::new();
    RUN.get_or_init(|| afem::run_adaptive(&config(Domain::SquareAnnulus)).unwrap())
}

/// Uniform run carried past the final adaptive DOF count.
fn annulus_uniform() -> &'static AfemRun {
    static RUN: OnceLock<AfemRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let n1 = annulus().records.last().unwrap().n1;
        let c = AfemConfig {
            max_dofs: n1,
            ..config(Domain::SquareAnnulus)
        };
        afem::run_uniform(&c).unwrap()
    })
}

fn three_holes() -> &'static AfemRun {
    static RUN: OnceLock<AfemRun> = OnceLock::new();
    RUN.get_or_init(|| afem::run_adaptive(&config(Domain::ThreeHoles)).unwrap())
}

fn multiply_connected_runs() -> [(&'static str, &'static AfemRun); 2] {
    [("annulus", annulus()), ("three_holes", three_holes())]
}

#[test]
fn topology() {
    let mut detail = Vec::new();
    let mut pass = true;
    let mut min_gap = f64::INFINITY;
    for (domain, expected) in [(Domain::UnitSquare, 0), (Domain::SquareAnnulus, 1), (Domain::ThreeHoles, 3)] {
        let run = afem::run_adaptive(&AfemConfig {
            max_dofs: 5_000,
            ..config(domain.clone())
        })
        .unwrap();
        for l in &run.levels {
            pass &= l.mesh().betti_number().unwrap() == expected && l.basis.beta() == expected;
            if expected > 0 {
                let gap = l.basis.sigma_gap.unwrap_or(0.0);
                min_gap = min_gap.min(gap);
                pass &= gap >= SPECTRAL_GAP_THRESHOLD;
            }
        }
        detail.push(format!("{domain:?} beta {} over {} levels", run.beta(), run.levels.len()));
    }
    detail.push(format!("min spectral gap {min_gap:.2e} (need >= 1e6)"));
    report("topology", pass, detail.join(", "));
}

#[test]
fn convergence_rates() {
    let (a, u) = (annulus(), annulus_uniform());
    let ra = afem::rate_fit(&a.records, RateWindow::LastDecade).unwrap().vs_dofs;
    let ru = afem::rate_fit(&u.records, RateWindow::LastDecade).unwrap().vs_dofs;
    let last = a.records.last().unwrap();
    let matched = afem::interpolate_error(&u.records, last.n1 as f64).unwrap_or(f64::NAN);
    let pass = (-0.6..=-0.4).contains(&ra) && (-0.40..=-0.26).contains(&ru) && last.e < matched;
    report(
        "convergence rates",
        pass,
        format!(
            "adaptive slope {ra:.3} in [-0.6,-0.4], uniform slope {ru:.3} in [-0.40,-0.26], at n1 = {}: adaptive E {:.4e} < uniform E {matched:.4e}",
            last.n1, last.e
        ),
    );
}

#[test]
fn singularity_signature() {
    let run = annulus();
    let linf: Vec<f64> = run.levels.iter().map(|l| l.linf[0]).collect();
    let mut longest = 1;
    let mut current = 1;
    for w in linf.windows(2) {
        current = if w[1] > w[0] { current + 1 } else { 1 };
        longest = longest.max(current);
    }

    // top-8 indicators on the initial quasi-uniform mesh
    let level = &run.levels[0];
    let mesh = level.mesh();
    let corners = Domain::SquareAnnulus.reentrant_corners();
    let mut order: Vec<usize> = (0..mesh.num_triangles()).collect();
    order.sort_by(|&a, &b| level.eta.per_element[b].total_cmp(&level.eta.per_element[a]).then(a.cmp(&b)));
    let near = order[..8]
        .iter()
        .filter(|&&t| {
            let h = mesh.mesh_size(t);
            mesh.triangles()[t].iter().any(|&v| {
                let p = mesh.vertices()[v];
                corners.iter().any(|c| (p[0] - c[0]).hypot(p[1] - c[1]) <= 2.0 * h)
            })
        })
        .count();
    report(
        "singularity signature",
        longest >= 5 && near == 8,
        format!("longest strictly increasing L-infinity run {longest} levels (need >= 5), top-8 eta near a reentrant corner: {near}/8"),
    );
}

#[test]
fn orthogonality_identity() {
    let mut worst = 0.0f64;
    for (_, run) in multiply_connected_runs() {
        for p in &run.pairs {
            let e2 = run.analysis[p.level].defect_forward;
            worst = worst.max((p.e2_drop - p.projection_change).abs() / e2);
        }
    }
    report(
        "orthogonality identity",
        worst <= 1e-9,
        format!("max |E_l^2 - E_l+1^2 - sum |(P_l - P_l+1) q|^2| / E_l^2 = {worst:.2e} (need <= 1e-9)"),
    );
}

#[test]
fn estimator_equivalence() {
    let mut excess = f64::NEG_INFINITY;
    let mut p_norm = 0.0f64;
    let mut inv_increase = f64::NEG_INFINITY;
    for (_, run) in multiply_connected_runs() {
        for (l, a) in run.levels.iter().zip(&run.analysis) {
            for (e, m) in l.eta.per_element.iter().zip(&a.mu.per_element) {
                excess = excess.max(m - a.defect.p_norm * e).max(e - a.defect.p_inv_norm * m);
            }
            p_norm = p_norm.max(a.defect.p_norm);
        }
        for w in run.records.windows(2) {
            inv_increase = inv_increase.max(w[1].p_inv_norm - w[0].p_inv_norm);
        }
    }
    report(
        "estimator equivalence",
        excess <= 1e-9 && p_norm <= 1.0 + 1e-10 && inv_increase <= 1e-10,
        format!(
            "max elementwise excess {excess:.2e} (need <= 1e-9), max |P| {p_norm:.15}, max increase of |P^-1| {inv_increase:.2e} (need <= 1e-10)"
        ),
    );
}

#[test]
fn defect_identities() {
    let mut frob = 0.0f64;
    let mut sym = 0.0f64;
    let mut band = 0.0f64;
    for (_, run) in multiply_connected_runs() {
        for a in &run.analysis {
            let e2 = a.defect.e * a.defect.e;
            frob = frob.max((a.defect_forward - e2).abs()).max((a.defect_backward - e2).abs());
            sym = sym.max((a.deflections.0 - a.deflections.1).abs());
        }
        let ratios: Vec<f64> = run.records.iter().map(|r| r.eta_total / r.e).collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        band = band.max(hi / lo);
    }
    report(
        "defect identities",
        frob <= 1e-12 && sym <= 1e-10 && band < 20.0,
        format!("Frobenius residual {frob:.2e} (need <= 1e-12), gap asymmetry {sym:.2e} (need <= 1e-10), eta/E max/min {band:.2} (need < 20)"),
    );
}

#[test]
fn contraction() {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, run) in multiply_connected_runs() {
        assert_eq!(run.config.gamma, 0.1);
        for r in run.records.iter().filter(|r| r.contraction_ratio.is_finite()) {
            worst = worst.max(r.contraction_ratio);
            count += 1;
        }
    }
    report(
        "contraction",
        count > 0 && worst < 1.0,
        format!("max rho over {count} level pairs with gamma = 0.1: {worst:.4} (need < 1)"),
    );
}

#[test]
fn oracle_equivalence() {
    let mut worst = 0.0f64;
    let mut checked = Vec::new();
    for (name, run) in multiply_connected_runs() {
        let n = run.levels.len();
        let picks: BTreeSet<usize> = [0, n / 2, n - 1].into_iter().collect();
        for &i in &picks {
            let level = &run.levels[i];
            let spaces = DeRhamSpaces::new(Arc::clone(level.mesh())).unwrap();
            let cut = cutting_basis(&spaces).unwrap();
            worst = worst.max(subspace_gap(&spaces, &level.basis.columns, &cut.columns));
        }
        checked.push(format!("{name} levels {picks:?}"));
    }
    report(
        "oracle equivalence",
        worst < 1e-8 && checked.len() == 2,
        format!("max cut/kernel span gap {worst:.2e} (need < 1e-8) on {}", checked.join(", ")),
    );
}

/// Fewest elements whose squares reach `θ² Σ v²`, by exhaustive search.
fn brute_force_minimum(v: &[f64], theta: f64) -> usize {
    let squares: Vec<f64> = v.iter().map(|x| x * x).collect();
    let target = theta * theta * squares.iter().sum::<f64>();
    let n = v.len();
    let mut best = n;
    let mut sums = vec![0.0f64; 1 << n];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + squares[low];
        let size = mask.count_ones() as usize;
        if size < best && sums[mask] >= target {
            best = size;
        }
    }
    best
}

#[test]
fn dorfler_minimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_241_019);
    let thetas = [0.3, 0.5, 0.9];
    let mut mismatches = 0;
    let mut enumerated = 0;
    for i in 0..100 {
        let n = rng.random_range(4..=50);
        let theta = thetas[i % 3];
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0f64).powi(3)).collect();
        let marked = dorfler_mark(&v, theta);
        let squares: Vec<f64> = v.iter().map(|x| x * x).collect();
        let target = theta * theta * squares.iter().sum::<f64>();
        let reaches = marked.iter().map(|&t| squares[t]).sum::<f64>() >= target;
        let minimum = if n <= 20 {
            enumerated += 1;
            brute_force_minimum(&v, theta)
        } else {
            // any k-element set sums to at most the k largest squares
            let mut sorted = squares.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut acc = 0.0;
            sorted.iter().take_while(|&&s| {
                let short = acc < target;
                acc += s;
                short
            })
            .count()
        };
        if !reaches || marked.len() != minimum {
            mismatches += 1;
        }
    }
    report(
        "Dorfler minimality",
        mismatches == 0,
        format!("{mismatches} mismatches over 100 vectors ({enumerated} by subset enumeration)"),
    );
}

#[test]
fn complexity_constant() {
    let values: Vec<String> = multiply_connected_runs()
        .iter()
        .map(|(name, run)| format!("{name} C = {:.3}", run.complexity_constant()))
        .collect();
    let worst = multiply_connected_runs().iter().map(|(_, r)| r.complexity_constant()).fold(0.0, f64::max);
    report("complexity constant", worst < 50.0, format!("{} (need < 50)", values.join(", ")));
}
