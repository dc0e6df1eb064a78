//! Run directories and the files consumed by the plotting scripts.
//!
//! ```text
//! config.txt             the effective configuration
//! level_XXX.mesh         mesh of level XXX
//! level_XXX.basis.csv    one column per basis field, one row per edge
//! level_XXX.marked       marked triangle ids, one per line
//! records.csv            one ConvergenceRecord per level
//! pairs.csv              level,e2_drop,projection_change,localized_ratio
//! indicators.csv         level,triangle_id,eta,mu
//! final_mesh.vtk, final_field_J.vtk
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::afem::{AfemRun, ConvergenceRecord, Level};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub fn level_stem(level: usize) -> String {
    format!("level_{level:03}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_basis_csv(path: &Path, columns: &[Vec<f64>], n1: usize) -> Result<()> {
    let mut out = create(path)?;
    let header: Vec<String> = (0..columns.len()).map(|j| format!("q{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for e in 0..n1 {
        let row: Vec<String> = columns.iter().map(|c| format!("{:?}", c[e])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_basis_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let beta = if header.trim().is_empty() { 0 } else { header.split(',').count() };
    let mut columns = vec![Vec::new(); beta];
    for (i, line) in lines.enumerate() {
        let line = line?;
        if beta == 0 {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != beta {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("expected {beta} values, found {}", values.len()),
            });
        }
        for (c, v) in columns.iter_mut().zip(values) {
            c.push(v.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("malformed number '{v}'"),
            })?);
        }
    }
    Ok(columns)
}

/// Writes the per-level artifacts of one level.
pub fn write_level(dir: &Path, index: usize, level: &Level) -> Result<()> {
    let stem = level_stem(index);
    level.mesh().save(&dir.join(format!("{stem}.mesh")))?;
    write_basis_csv(&dir.join(format!("{stem}.basis.csv")), &level.basis.columns, level.mesh().num_edges())?;
    let mut out = create(&dir.join(format!("{stem}.marked")))?;
    for t in &level.marked {
        writeln!(out, "{t}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", ConvergenceRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pairs(path: &Path, run: &AfemRun) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "level,e2_drop,projection_change,localized_ratio")?;
    for p in &run.pairs {
        writeln!(out, "{},{:e},{:e},{:e}", p.level, p.e2_drop, p.projection_change, p.localized_ratio)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_indicators(path: &Path, run: &AfemRun) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "level,triangle_id,eta,mu")?;
    for (i, level) in run.levels.iter().enumerate() {
        let mu = run.analysis.get(i).map(|a| &a.mu.per_element);
        for (t, eta) in level.eta.per_element.iter().enumerate() {
            let m = mu.map_or(f64::NAN, |m| m[t]);
            writeln!(out, "{i},{t},{eta:e},{m:e}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `method,level,dofs,E,eta` rows for several runs.
pub fn write_compare(path: &Path, runs: &[&AfemRun]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "method,level,dofs,E,eta")?;
    for run in runs {
        for r in &run.records {
            writeln!(out, "{},{},{},{:e},{:e}", run.strategy.name(), r.level, r.n1, r.e, r.eta_total)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with optional cell data.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    title: &str,
    vectors: &[(&str, &[[f64; 2]])],
    scalars: &[(&str, &[f64])],
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(out, "{:?} {:?} 0", p[0], p[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    if !vectors.is_empty() || !scalars.is_empty() {
        writeln!(out, "CELL_DATA {nt}")?;
    }
    for (name, data) in vectors {
        writeln!(out, "VECTORS {name} double")?;
        for v in data.iter() {
            writeln!(out, "{:?} {:?} 0", v[0], v[1])?;
        }
    }
    for (name, data) in scalars {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in data.iter() {
            writeln!(out, "{v:?}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Level files present in a run directory, in level order.
pub fn list_levels(dir: &Path) -> Result<Vec<usize>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifacts(vec![dir.to_path_buf()]));
    }
    let mut levels: Vec<usize> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_prefix("level_")?.strip_suffix(".mesh")?.parse().ok()
        })
        .collect();
    levels.sort_unstable();
    Ok(levels)
}

/// Fails with the list of absent files if any is missing.
pub fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    #[test]
    fn basis_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let cols = vec![vec![0.1, -2.5e-17, 3.0], vec![1.0 / 3.0, 0.0, -7.25]];
        write_basis_csv(&path, &cols, 3).unwrap();
        assert_eq!(read_basis_csv(&path).unwrap(), cols);
        write_basis_csv(&path, &[], 3).unwrap();
        assert!(read_basis_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let mesh = Domain::SquareAnnulus.build().unwrap();
        let v = vec![[1.0, 2.0]; mesh.num_triangles()];
        let s = vec![0.5; mesh.num_triangles()];
        write_vtk(&path, &mesh, "annulus", &[("q0", &v)], &[("eta", &s)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], format!("POINTS {} double", mesh.num_vertices()));
        let cells = 5 + mesh.num_vertices();
        assert_eq!(lines[cells], format!("CELLS 64 256"));
        assert!(text.contains("CELL_TYPES 64\n5\n"));
        assert!(text.contains("CELL_DATA 64\nVECTORS q0 double\n1.0 2.0 0\n"));
        assert!(text.contains("SCALARS eta double 1\nLOOKUP_TABLE default\n0.5\n"));
    }

    #[test]
    fn missing_artifacts_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        std::fs::write(&a, "").unwrap();
        let b = dir.path().join("b");
        match require(&[a, b.clone()]) {
            Err(Error::MissingArtifacts(m)) => assert_eq!(m, vec![b]),
            other => panic!("{other:?}"),
        }
    }
}
