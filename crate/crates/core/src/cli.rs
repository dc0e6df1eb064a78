//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::afem::{self, AfemRun, RateWindow, Strategy};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator;
use crate::mesh::Mesh;
use crate::output;
use crate::verify::{self, Fault};
use crate::whitney::DeRhamSpaces;

pub const THREADS_ENV: &str = "HARMONIC_AFEM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "harmonic-afem", version, about = "Adaptive computation of harmonic fields on planar domains with holes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adaptive run; writes a run directory.
    Run(Common),
    /// Adaptive and uniform runs on the same domain plus compare.csv.
    Compare(Common),
    /// Invariant suite on small meshes.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt the computed basis to confirm the suite detects it.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Dörfler parameter study.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of θ values.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.5, 0.7, 1.0])]
        thetas: Vec<f64>,
    },
    /// Writes VTK or CSV files for one level of an existing run directory.
    Export {
        /// Run directory produced by `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        what: ExportKind,
        /// Level to export; the last one by default.
        #[arg(long)]
        level: Option<usize>,
        /// Destination directory; the run directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set afem.theta=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub max_dofs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    ZeroColumn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportKind {
    Mesh,
    Field,
    Indicators,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply_overrides(&self.overrides)?;
        if let Some(t) = self.theta {
            config.afem.theta = t;
        }
        if let Some(n) = self.max_dofs {
            config.afem.max_dofs = n;
        }
        if let Some(out) = &self.out {
            config.output.dir = Some(out.clone());
        }
        config.afem.validate()?;
        Ok(config)
    }
}

fn out_dir(config: &RunConfig, default: &str) -> Result<PathBuf> {
    let dir = config.output.dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Reads the thread cap from the environment and configures the solver.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
            if n == 0 {
                return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn configure_threads() -> Result<usize> {
    let n = thread_count()?;
    faer::set_global_parallelism(if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    Ok(n)
}

/// Runs one strategy, persisting every level into `dir` as it is produced.
fn persisted_run(config: &RunConfig, strategy: Strategy, dir: &Path) -> Result<AfemRun> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), config.to_text())?;
    let run = afem::run(&config.afem, strategy, &mut |i, level| output::write_level(dir, i, level))?;
    output::write_records(&dir.join("records.csv"), &run.records)?;
    output::write_pairs(&dir.join("pairs.csv"), &run)?;
    output::write_indicators(&dir.join("indicators.csv"), &run)?;
    if config.output.vtk {
        let last = run.levels.last().unwrap();
        let mesh = last.mesh();
        output::write_vtk(
            &dir.join("final_mesh.vtk"),
            mesh,
            "final mesh",
            &[],
            &[("eta", &last.eta.per_element)],
        )?;
        for (j, q) in last.basis.columns.iter().enumerate() {
            let cells = last.spaces.cell_vectors(q);
            output::write_vtk(
                &dir.join(format!("final_field_{j}.vtk")),
                mesh,
                &format!("harmonic basis field {j}"),
                &[(&format!("q{j}"), &cells)],
                &[],
            )?;
        }
    }
    Ok(run)
}

fn summarize(run: &AfemRun) {
    let last = run.records.last().unwrap();
    println!(
        "{}: {} levels, beta = {}, final n1 = {}, E = {:.4e}, eta = {:.4e}",
        run.strategy.name(),
        run.records.len(),
        last.beta,
        last.n1,
        last.e,
        last.eta_total
    );
    if run.beta() == 0 {
        println!("  beta = 0: the domain has no harmonic fields, E is undefined");
        return;
    }
    if let Ok(fit) = afem::rate_fit(&run.records, RateWindow::LastDecade) {
        println!("  rate over last decade: {:.3} (vs added triangles {:.3})", fit.vs_dofs, fit.vs_added_triangles);
    }
    println!("  complexity constant C = {:.3}", run.complexity_constant());
}

fn cmd_run(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let dir = out_dir(&config, "run")?;
    let run = persisted_run(&config, Strategy::Adaptive, &dir)?;
    summarize(&run);
    println!("run directory: {}", dir.display());
    Ok(())
}

fn cmd_compare(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let dir = out_dir(&config, "compare")?;
    let adaptive = persisted_run(&config, Strategy::Adaptive, &dir.join("adaptive"))?;
    // the uniform run must reach the adaptive budget for a matched comparison
    let final_n1 = adaptive.records.last().unwrap().n1;
    let mut uniform_config = config.clone();
    uniform_config.afem.max_dofs = uniform_config.afem.max_dofs.max(final_n1);
    let uniform = persisted_run(&uniform_config, Strategy::Uniform, &dir.join("uniform"))?;
    output::write_compare(&dir.join("compare.csv"), &[&adaptive, &uniform])?;
    summarize(&adaptive);
    summarize(&uniform);
    if adaptive.beta() > 0 {
        if let Some(e) = afem::interpolate_error(&uniform.records, final_n1 as f64) {
            println!(
                "matched budget n1 = {final_n1}: adaptive E = {:.4e}, uniform E = {e:.4e}",
                adaptive.records.last().unwrap().e
            );
        }
    }
    println!("compare.csv: {}", dir.join("compare.csv").display());
    Ok(())
}

fn cmd_sweep(common: &Common, thetas: &[f64], threads: usize) -> Result<()> {
    let config = common.resolve()?;
    let dir = out_dir(&config, "sweep")?;
    for &t in thetas {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("theta {t} not in (0, 1]")));
        }
    }
    // independent runs, fanned out over worker threads
    let workers = threads.clamp(1, thetas.len().max(1));
    let chunks: Vec<Vec<f64>> = (0..workers)
        .map(|w| thetas.iter().copied().skip(w).step_by(workers).collect())
        .collect();
    let mut rows = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| scope.spawn(|| afem::threshold_study(&config.afem, chunk)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect::<Vec<_>>();
    rows.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    let mut text = String::from("theta,levels,final_n1,final_E,rate,work,complexity_constant\n");
    println!("{:>6} {:>7} {:>9} {:>11} {:>8} {:>10} {:>6}", "theta", "levels", "final_n1", "final_E", "rate", "work", "C");
    for r in &rows {
        text.push_str(&format!(
            "{:?},{},{},{:e},{:e},{},{:e}\n",
            r.theta, r.levels, r.final_n1, r.final_e, r.rate, r.work, r.complexity_constant
        ));
        println!(
            "{:>6.2} {:>7} {:>9} {:>11.4e} {:>8.3} {:>10} {:>6.2}",
            r.theta, r.levels, r.final_n1, r.final_e, r.rate, r.work, r.complexity_constant
        );
    }
    std::fs::write(dir.join("sweep.csv"), text)?;
    Ok(())
}

/// Returns whether every check passed.
fn cmd_verify(common: &Common, fault: Option<FaultArg>) -> Result<bool> {
    let config = common.resolve()?;
    let fault = fault.map(|f| match f {
        FaultArg::ZeroColumn => Fault::ZeroColumn,
    });
    let checks = verify::run_suite(&config.afem, fault)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}

fn cmd_export(run: &Path, what: ExportKind, level: Option<usize>, out: Option<&Path>) -> Result<()> {
    let levels = output::list_levels(run)?;
    let level = match level {
        Some(l) => l,
        None => *levels
            .last()
            .ok_or_else(|| Error::MissingArtifacts(vec![run.join(format!("{}.mesh", output::level_stem(0)))]))?,
    };
    let stem = output::level_stem(level);
    let mesh_path = run.join(format!("{stem}.mesh"));
    let basis_path = run.join(format!("{stem}.basis.csv"));
    let out = out.unwrap_or(run);
    std::fs::create_dir_all(out)?;
    match what {
        ExportKind::Mesh => {
            output::require(&[mesh_path.clone()])?;
            let mesh = Mesh::load(&mesh_path)?;
            let path = out.join(format!("{stem}.vtk"));
            output::write_vtk(&path, &mesh, &format!("mesh of level {level}"), &[], &[])?;
            println!("{}", path.display());
        }
        ExportKind::Field => {
            output::require(&[mesh_path.clone(), basis_path.clone()])?;
            let mesh = std::sync::Arc::new(Mesh::load(&mesh_path)?);
            let columns = output::read_basis_csv(&basis_path)?;
            let spaces = DeRhamSpaces::new(mesh.clone())?;
            for (j, q) in columns.iter().enumerate() {
                if q.len() != spaces.n1() {
                    return Err(Error::DimensionMismatch {
                        expected: spaces.n1(),
                        found: q.len(),
                    });
                }
                let path = out.join(format!("{stem}_field_{j}.vtk"));
                let cells = spaces.cell_vectors(q);
                output::write_vtk(&path, &mesh, &format!("basis field {j} of level {level}"), &[(&format!("q{j}"), &cells)], &[])?;
                println!("{}", path.display());
            }
        }
        ExportKind::Indicators => {
            output::require(&[mesh_path.clone(), basis_path.clone()])?;
            let mesh = std::sync::Arc::new(Mesh::load(&mesh_path)?);
            let columns = output::read_basis_csv(&basis_path)?;
            let spaces = DeRhamSpaces::new(mesh)?;
            let eta = estimator::eta_fields(&spaces, &columns, estimator::IndicatorKind::Practical);
            let mu = read_mu(&run.join("indicators.csv"), level, spaces.n2());
            let path = out.join(format!("{stem}.indicators.csv"));
            let mut text = String::from("triangle_id,eta,mu\n");
            for (t, e) in eta.per_element.iter().enumerate() {
                let m = mu.as_ref().map_or(f64::NAN, |m| m[t]);
                text.push_str(&format!("{t},{e:e},{m:e}\n"));
            }
            std::fs::write(&path, text)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

/// μ values of one level from a run's indicators.csv, if present.
fn read_mu(path: &Path, level: usize, n: usize) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut mu = vec![f64::NAN; n];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() == 4 && f[0].parse::<usize>().ok()? == level {
            let t: usize = f[1].parse().ok()?;
            *mu.get_mut(t)? = f[3].parse().ok()?;
        }
    }
    Some(mu)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidDomain(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c).map(|_| true),
        Command::Compare(c) => cmd_compare(c).map(|_| true),
        Command::Verify { common, inject_fault } => cmd_verify(common, *inject_fault),
        Command::Sweep { common, thetas } => cmd_sweep(common, thetas, threads).map(|_| true),
        Command::Export { run, what, level, out } => cmd_export(run, *what, *level, out.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
