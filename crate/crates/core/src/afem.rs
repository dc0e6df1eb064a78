//! The adaptive loop `solve → estimate → mark → refine`, the uniform
//! baseline, and the convergence diagnostics computed against an overkill
//! reference basis once the last level is known.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimator::{self, DefectReport, ErrorIndicators};
use crate::harmonic::{self, cross_gram, deflection, HarmonicBasis};
use crate::mesh::{Domain, Mesh, RefinementTrace};
use crate::sparse::axpy;
use crate::whitney::{prolong_columns, DeRhamSpaces};

/// Weights reported for the contraction quantity `E² + γμ²`.
pub const REPORTED_GAMMAS: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct AfemConfig {
    pub domain: Domain,
    pub theta: f64,
    /// Stop once the number of edge degrees of freedom exceeds this.
    pub max_dofs: usize,
    /// Stop once the total estimator drops below this.
    pub tol: f64,
    pub gamma: f64,
    /// Uniform refinements of the final mesh used for the reference basis.
    pub reference_extra_refines: usize,
    /// Hard cap on the number of levels.
    pub max_levels: usize,
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self {
            domain: Domain::SquareAnnulus,
            theta: 0.5,
            max_dofs: 30_000,
            tol: 0.0,
            gamma: 0.1,
            reference_extra_refines: 2,
            max_levels: 200,
        }
    }
}

impl AfemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be at least 1".into()));
        }
        let initial = self.domain.build()?.num_edges();
        if self.max_dofs <= initial {
            return Err(Error::Config(format!(
                "max_dofs = {} does not exceed the {initial} initial edge degrees of freedom",
                self.max_dofs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Adaptive,
    Uniform,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::Uniform => "uniform",
        }
    }
}

/// The smallest set `M` with `Σ_M η² ≥ θ² Σ η²`: a prefix of the elements
/// sorted by decreasing indicator, ties broken by increasing id. Returns the
/// empty set if all indicators vanish.
pub fn dorfler_mark(values: &[f64], theta: f64) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..values.len()).filter(|&t| values[t] > 0.0).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    // sum in the same order as the prefix so that θ = 1 selects every
    // nonzero element
    let total: f64 = order.iter().map(|&t| values[t] * values[t]).sum();
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = BTreeSet::new();
    for t in order {
        if acc >= target {
            break;
        }
        acc += values[t] * values[t];
        marked.insert(t);
    }
    marked
}

/// One mesh of a run together with everything computed on it.
#[derive(Debug, Clone)]
pub struct Level {
    pub spaces: Arc<DeRhamSpaces>,
    pub basis: HarmonicBasis,
    pub eta: ErrorIndicators,
    pub linf: Vec<f64>,
    /// Marked set and refinement leading to the next level.
    pub marked: BTreeSet<usize>,
    pub trace: Option<RefinementTrace>,
}

impl Level {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.spaces.mesh()
    }
}

/// Quantities measured against the reference basis on one level.
#[derive(Debug, Clone)]
pub struct LevelAnalysis {
    pub defect: DefectReport,
    /// `Σ_j ‖q^j − P_ℓ q^j‖²` from explicit residuals.
    pub defect_forward: f64,
    /// `Σ_m ‖q_ℓ^m − P q_ℓ^m‖²` from explicit residuals.
    pub defect_backward: f64,
    /// `δ(reference, level)` and `δ(level, reference)`.
    pub deflections: (f64, f64),
    pub mu: ErrorIndicators,
    /// `‖P_ℓ q^j‖` per reference column.
    pub projection_norms: Vec<f64>,
}

/// Quantities relating consecutive levels `ℓ` and `ℓ + 1`.
#[derive(Debug, Clone, Copy)]
pub struct PairAnalysis {
    pub level: usize,
    /// `E_ℓ² − E_{ℓ+1}²`.
    pub e2_drop: f64,
    /// `Σ_j ‖(P_ℓ − P_{ℓ+1}) q^j‖²`.
    pub projection_change: f64,
    pub localized_ratio: f64,
}

/// Per-level summary, one row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub n_triangles: usize,
    pub n1: usize,
    pub beta: usize,
    pub e: f64,
    pub eta_total: f64,
    pub mu_total: f64,
    pub p_norm: f64,
    pub p_inv_norm: f64,
    /// `(E² + γμ²)_{ℓ+1} / (E² + γμ²)_ℓ` for the configured `γ`.
    pub contraction_ratio: f64,
    /// The same ratio for each of [`REPORTED_GAMMAS`].
    pub rho: [f64; 3],
    pub marked_count: usize,
    pub refined_count: usize,
    pub linf_max: f64,
}

impl ConvergenceRecord {
    pub const CSV_HEADER: &'static str = "level,n_triangles,n1,beta,E,eta_total,mu_total,P_norm,P_inv_norm,\
contraction_ratio,rho_g0.01,rho_g0.1,rho_g1,marked_count,refined_count,linf_max";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e}",
            self.level,
            self.n_triangles,
            self.n1,
            self.beta,
            self.e,
            self.eta_total,
            self.mu_total,
            self.p_norm,
            self.p_inv_norm,
            self.contraction_ratio,
            self.rho[0],
            self.rho[1],
            self.rho[2],
            self.marked_count,
            self.refined_count,
            self.linf_max
        )
    }
}

#[derive(Debug, Clone)]
pub struct AfemRun {
    pub config: AfemConfig,
    pub strategy: Strategy,
    pub levels: Vec<Level>,
    pub reference: Option<HarmonicBasis>,
    pub analysis: Vec<LevelAnalysis>,
    pub pairs: Vec<PairAnalysis>,
    pub records: Vec<ConvergenceRecord>,
}

impl AfemRun {
    pub fn beta(&self) -> usize {
        self.levels[0].basis.beta()
    }

    /// `(#T_L − #T_0) / Σ #M_ℓ`.
    pub fn complexity_constant(&self) -> f64 {
        let first = self.levels[0].mesh().num_triangles();
        let last = self.levels.last().unwrap().mesh().num_triangles();
        let marked: usize = self.levels.iter().map(|l| l.marked.len()).sum();
        if marked == 0 {
            0.0
        } else {
            (last - first) as f64 / marked as f64
        }
    }
}

/// Runs the loop with the given refinement strategy. `on_level` sees every
/// level as soon as its mesh, basis and indicators are available.
pub fn run(config: &AfemConfig, strategy: Strategy, on_level: &mut dyn FnMut(usize, &Level) -> Result<()>) -> Result<AfemRun> {
    config.validate()?;
    let mut mesh = Arc::new(config.domain.build()?);
    let mut levels: Vec<Level> = Vec::new();
    loop {
        let spaces = Arc::new(DeRhamSpaces::new(mesh.clone())?);
        let mut basis = harmonic::compute_basis(&spaces)?;
        if let Some(prev) = levels.last() {
            let cols: Vec<&[f64]> = prev.basis.columns.iter().map(Vec::as_slice).collect();
            let prolonged = prolong_columns(prev.mesh(), &mesh, &cols)?;
            basis.align_with(&spaces, &prolonged);
        }
        let eta = estimator::eta(&spaces, &basis);
        let linf = basis.columns.iter().map(|q| spaces.linf_norm(q)).collect();
        let mut level = Level {
            spaces,
            basis,
            eta,
            linf,
            marked: BTreeSet::new(),
            trace: None,
        };

        let done = mesh.num_edges() > config.max_dofs
            || (level.basis.beta() > 0 && level.eta.total < config.tol)
            || levels.len() + 1 >= config.max_levels;
        if !done {
            level.marked = match strategy {
                Strategy::Adaptive => dorfler_mark(&level.eta.per_element, config.theta),
                Strategy::Uniform => (0..mesh.num_triangles()).collect(),
            };
        }
        on_level(levels.len(), &level)?;
        if level.marked.is_empty() {
            levels.push(level);
            break;
        }
        let (next, trace) = mesh.bisect(&level.marked);
        level.trace = Some(trace);
        levels.push(level);
        mesh = Arc::new(next);
    }

    let mut run = AfemRun {
        config: config.clone(),
        strategy,
        levels,
        reference: None,
        analysis: Vec::new(),
        pairs: Vec::new(),
        records: Vec::new(),
    };
    backfill(&mut run)?;
    Ok(run)
}

pub fn run_adaptive(config: &AfemConfig) -> Result<AfemRun> {
    run(config, Strategy::Adaptive, &mut |_, _| Ok(()))
}

pub fn run_uniform(config: &AfemConfig) -> Result<AfemRun> {
    run(config, Strategy::Uniform, &mut |_, _| Ok(()))
}

/// Builds the reference basis on the overkill mesh and fills in every
/// quantity that depends on it.
fn backfill(run: &mut AfemRun) -> Result<()> {
    let beta = run.beta();
    let nan = f64::NAN;
    if beta == 0 {
        run.records = run
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| ConvergenceRecord {
                level: i,
                n_triangles: l.mesh().num_triangles(),
                n1: l.mesh().num_edges(),
                beta: 0,
                e: nan,
                eta_total: l.eta.total,
                mu_total: nan,
                p_norm: nan,
                p_inv_norm: nan,
                contraction_ratio: nan,
                rho: [nan; 3],
                marked_count: l.marked.len(),
                refined_count: l.trace.as_ref().map_or(0, |t| t.refined.len()),
                linf_max: 0.0,
            })
            .collect();
        return Ok(());
    }

    let finest = run.levels.last().unwrap().mesh();
    let fine_mesh = Arc::new(finest.uniform_refine(run.config.reference_extra_refines));
    let fine = DeRhamSpaces::new(fine_mesh)?;
    let reference = harmonic::cutting_basis(&fine)?;

    let mut previous_projection: Option<Vec<Vec<f64>>> = None;
    for (i, level) in run.levels.iter().enumerate() {
        let cg = cross_gram(&reference, &fine, &level.basis)?;
        let defect = estimator::defect(&cg.matrix)?;
        let (defect_forward, defect_backward) = estimator::defect_sides(&fine, &reference, &cg);
        let deflections = (
            deflection(&fine, &reference.columns, &cg.prolonged),
            deflection(&fine, &cg.prolonged, &reference.columns),
        );
        let mu = estimator::mu(&level.spaces, &level.basis, &cg)?;
        let projection: Vec<Vec<f64>> = (0..beta).map(|j| cg.projected_reference(j)).collect();
        let projection_norms = projection.iter().map(|p| fine.l2_norm(p)).collect();

        if let Some(prev) = &previous_projection {
            let change: f64 = prev
                .iter()
                .zip(&projection)
                .map(|(a, b)| {
                    let mut d = a.clone();
                    axpy(-1.0, b, &mut d);
                    fine.m1.inner(&d, &d)
                })
                .sum();
            let coarse = &run.levels[i - 1];
            let localized = estimator::localized_ratio(
                coarse.mesh(),
                &coarse.eta,
                coarse.trace.as_ref().expect("every level but the last is refined"),
                change,
            )?;
            run.pairs.push(PairAnalysis {
                level: i - 1,
                e2_drop: run.analysis[i - 1].defect_forward - defect_forward,
                projection_change: change,
                localized_ratio: localized,
            });
        }
        previous_projection = Some(projection);
        run.analysis.push(LevelAnalysis {
            defect,
            defect_forward,
            defect_backward,
            deflections,
            mu,
            projection_norms,
        });
    }

    let combined = |i: usize, gamma: f64| {
        let a = &run.analysis[i];
        a.defect_forward + gamma * a.mu.total.powi(2)
    };
    let ratio = |i: usize, gamma: f64| {
        if i + 1 < run.levels.len() {
            combined(i + 1, gamma) / combined(i, gamma)
        } else {
            nan
        }
    };
    run.records = run
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let a = &run.analysis[i];
            ConvergenceRecord {
                level: i,
                n_triangles: l.mesh().num_triangles(),
                n1: l.mesh().num_edges(),
                beta,
                e: a.defect_forward.max(0.0).sqrt(),
                eta_total: l.eta.total,
                mu_total: a.mu.total,
                p_norm: a.defect.p_norm,
                p_inv_norm: a.defect.p_inv_norm,
                contraction_ratio: ratio(i, run.config.gamma),
                rho: REPORTED_GAMMAS.map(|g| ratio(i, g)),
                marked_count: l.marked.len(),
                refined_count: l.trace.as_ref().map_or(0, |t| t.refined.len()),
                linf_max: l.linf.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    run.reference = Some(reference);
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::RateFit(usable.len()));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit(1));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateWindow {
    /// The last `k` levels.
    Last(usize),
    /// Levels whose DOF count is within a factor 10 of the final one.
    LastDecade,
    All,
}

/// Empirical convergence rates of `E`: against the edge DOF count and
/// against the number of triangles added since the initial mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub vs_dofs: f64,
    pub vs_added_triangles: f64,
}

pub fn rate_fit(records: &[ConvergenceRecord], window: RateWindow) -> Result<RateFit> {
    let Some(last) = records.last() else {
        return Err(Error::RateFit(0));
    };
    let t0 = records[0].n_triangles as f64;
    let selected: Vec<&ConvergenceRecord> = match window {
        RateWindow::Last(k) => records.iter().rev().take(k).rev().collect(),
        RateWindow::LastDecade => records.iter().filter(|r| r.n1 as f64 * 10.0 >= last.n1 as f64).collect(),
        RateWindow::All => records.iter().collect(),
    };
    let vs_dofs = loglog_slope(&selected.iter().map(|r| (r.n1 as f64, r.e)).collect::<Vec<_>>())?;
    let vs_added = loglog_slope(
        &selected
            .iter()
            .map(|r| (r.n_triangles as f64 - t0, r.e))
            .collect::<Vec<_>>(),
    )
    .unwrap_or(f64::NAN);
    Ok(RateFit {
        vs_dofs,
        vs_added_triangles: vs_added,
    })
}

/// `E` of a run interpolated log-log at `n1`. Fails outside the DOF range.
pub fn interpolate_error(records: &[ConvergenceRecord], n1: f64) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (xa, xb) = (a.n1 as f64, b.n1 as f64);
        if xa <= n1 && n1 <= xb && a.e > 0.0 && b.e > 0.0 {
            let s = if xb > xa { (n1.ln() - xa.ln()) / (xb.ln() - xa.ln()) } else { 0.0 };
            Some((a.e.ln() + s * (b.e.ln() - a.e.ln())).exp())
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub theta: f64,
    pub levels: usize,
    pub final_n1: usize,
    pub final_e: f64,
    pub rate: f64,
    /// Sum of edge DOFs over all levels, a proxy for total work.
    pub work: usize,
    pub complexity_constant: f64,
}

/// Runs the adaptive loop for each `θ` and fits the rate over the last decade.
pub fn threshold_study(base: &AfemConfig, thetas: &[f64]) -> Result<Vec<ThresholdRow>> {
    thetas
        .iter()
        .map(|&theta| {
            let config = AfemConfig { theta, ..base.clone() };
            let run = run_adaptive(&config)?;
            let last = run.records.last().unwrap();
            Ok(ThresholdRow {
                theta,
                levels: run.records.len(),
                final_n1: last.n1,
                final_e: last.e,
                rate: rate_fit(&run.records, RateWindow::LastDecade).map_or(f64::NAN, |r| r.vs_dofs),
                work: run.records.iter().map(|r| r.n1).sum(),
                complexity_constant: run.complexity_constant(),
            })
        })
        .collect()
}
