//! Run configuration in a flat sectioned `key = value` format:
//!
//! ```text
//! [domain]
//! name = annulus            # square | annulus | three_holes | polygon
//! outer = 0,0; 4,0; 4,4; 0,4
//! hole = 1,1; 2,1; 2,2; 1,2 # repeatable, polygon domains only
//!
//! [afem]
//! theta = 0.5
//! max_dofs = 30000
//! tol = 0
//! gamma = 0.1
//! reference_extra_refines = 2
//! max_levels = 200
//!
//! [output]
//! dir = runs/annulus
//! vtk = true
//! ```
//!
//! Overrides use the dotted form `afem.theta=0.3`.

use std::path::{Path, PathBuf};

use crate::afem::AfemConfig;
use crate::error::{Error, Result};
use crate::mesh::{Domain, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, vtk: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub afem: AfemConfig,
    pub output: OutputConfig,
}

#[derive(Default)]
struct DomainDraft {
    name: Option<String>,
    outer: Option<Vec<Point>>,
    holes: Vec<Vec<Point>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut draft = DomainDraft::default();
        let mut section = String::new();
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "domain" | "afem" | "output") {
                    return Err(err(i + 1, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected 'key = value', found '{line}'")))?;
            if section.is_empty() {
                return Err(err(i + 1, "key outside of any section".into()));
            }
            config
                .set(&mut draft, &section, key.trim(), value.trim())
                .map_err(|msg| err(i + 1, msg))?;
        }
        config.afem.domain = draft.finish().map_err(|msg| err(0, msg))?;
        Ok(config)
    }

    /// Applies `section.key=value` overrides on top of a parsed config.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        let mut draft = DomainDraft::from_domain(&self.afem.domain);
        let mut domain_touched = false;
        for o in overrides {
            let (path, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not of the form section.key=value")))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key '{path}' needs a section prefix")))?;
            domain_touched |= section == "domain";
            self.set(&mut draft, section, key, value.trim()).map_err(Error::Config)?;
        }
        if domain_touched {
            self.afem.domain = draft.finish().map_err(Error::Config)?;
        }
        Ok(())
    }

    fn set(&mut self, draft: &mut DomainDraft, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("invalid value '{value}' for {key}"))
        }
        let a = &mut self.afem;
        match (section, key) {
            ("domain", "name") => draft.name = Some(value.to_string()),
            ("domain", "outer") => draft.outer = Some(parse_points(value)?),
            ("domain", "hole") => draft.holes.push(parse_points(value)?),
            ("afem", "theta") => a.theta = num(key, value)?,
            ("afem", "max_dofs") => a.max_dofs = num(key, value)?,
            ("afem", "tol") => a.tol = num(key, value)?,
            ("afem", "gamma") => a.gamma = num(key, value)?,
            ("afem", "reference_extra_refines") => a.reference_extra_refines = num(key, value)?,
            ("afem", "max_levels") => a.max_levels = num(key, value)?,
            ("output", "dir") => self.output.dir = Some(PathBuf::from(value)),
            ("output", "vtk") => self.output.vtk = num(key, value)?,
            _ => return Err(format!("unknown key '{key}' in section [{section}]")),
        }
        Ok(())
    }

    /// Serializes back to the file format; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let a = &self.afem;
        let mut s = String::from("[domain]\n");
        match &a.domain {
            Domain::UnitSquare => s.push_str("name = square\n"),
            Domain::SquareAnnulus => s.push_str("name = annulus\n"),
            Domain::ThreeHoles => s.push_str("name = three_holes\n"),
            Domain::Polygon { outer, holes } => {
                s.push_str("name = polygon\n");
                s.push_str(&format!("outer = {}\n", format_points(outer)));
                for h in holes {
                    s.push_str(&format!("hole = {}\n", format_points(h)));
                }
            }
        }
        s.push_str(&format!(
            "\n[afem]\ntheta = {:?}\nmax_dofs = {}\ntol = {:?}\ngamma = {:?}\nreference_extra_refines = {}\nmax_levels = {}\n",
            a.theta, a.max_dofs, a.tol, a.gamma, a.reference_extra_refines, a.max_levels
        ));
        s.push_str("\n[output]\n");
        if let Some(dir) = &self.output.dir {
            s.push_str(&format!("dir = {}\n", dir.display()));
        }
        s.push_str(&format!("vtk = {}\n", self.output.vtk));
        s
    }
}

impl DomainDraft {
    fn from_domain(d: &Domain) -> Self {
        let (name, outer, holes) = match d {
            Domain::UnitSquare => ("square", None, vec![]),
            Domain::SquareAnnulus => ("annulus", None, vec![]),
            Domain::ThreeHoles => ("three_holes", None, vec![]),
            Domain::Polygon { outer, holes } => ("polygon", Some(outer.clone()), holes.clone()),
        };
        Self {
            name: Some(name.into()),
            outer,
            holes,
        }
    }

    fn finish(self) -> std::result::Result<Domain, String> {
        let name = self.name.as_deref().unwrap_or("annulus");
        let builtin = |d: Domain| {
            if self.outer.is_some() || !self.holes.is_empty() {
                Err(format!("domain '{name}' does not take outer/hole coordinates"))
            } else {
                Ok(d)
            }
        };
        match name {
            "square" | "unit_square" => builtin(Domain::UnitSquare),
            "annulus" | "square_annulus" => builtin(Domain::SquareAnnulus),
            "three_holes" => builtin(Domain::ThreeHoles),
            "polygon" => Ok(Domain::Polygon {
                outer: self.outer.ok_or("polygon domain needs an 'outer' key")?,
                holes: self.holes,
            }),
            other => Err(format!("unknown domain '{other}'")),
        }
    }
}

fn parse_points(value: &str) -> std::result::Result<Vec<Point>, String> {
    value
        .split(';')
        .map(|p| {
            let (x, y) = p.split_once(',').ok_or_else(|| format!("point '{}' is not 'x,y'", p.trim()))?;
            let x = x.trim().parse().map_err(|_| format!("bad coordinate '{}'", x.trim()))?;
            let y = y.trim().parse().map_err(|_| format!("bad coordinate '{}'", y.trim()))?;
            Ok([x, y])
        })
        .collect()
}

fn format_points(points: &[Point]) -> String {
    points
        .iter()
        .map(|p| format!("{:?},{:?}", p[0], p[1]))
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# annulus run
[domain]
name = annulus

[afem]
theta = 0.4
max_dofs = 5000   # small budget

[output]
dir = out/annulus
vtk = false
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE, Path::new("a.cfg")).unwrap();
        assert_eq!(c.afem.domain, Domain::SquareAnnulus);
        assert_eq!(c.afem.theta, 0.4);
        assert_eq!(c.afem.max_dofs, 5000);
        assert_eq!(c.afem.gamma, 0.1);
        assert_eq!(c.output.dir.as_deref(), Some(Path::new("out/annulus")));
        assert!(!c.output.vtk);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::parse(SAMPLE, Path::new("a.cfg")).unwrap();
        c.afem.domain = Domain::Polygon {
            outer: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]],
            holes: vec![vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.5], [1.0, 2.5]]],
        };
        let back = RunConfig::parse(&c.to_text(), Path::new("b.cfg")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = RunConfig::parse(SAMPLE, Path::new("a.cfg")).unwrap();
        c.apply_overrides(&["afem.theta=0.7".into(), "domain.name = three_holes".into()])
            .unwrap();
        assert_eq!(c.afem.theta, 0.7);
        assert_eq!(c.afem.domain, Domain::ThreeHoles);
        assert!(c.apply_overrides(&["theta=1".into()]).is_err());
        assert!(c.apply_overrides(&["afem.nope=1".into()]).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line) in [
            ("[afem]\ntheta = x\n", 2),
            ("[domain]\nname = annulus\n[bogus]\n", 3),
            ("theta = 0.5\n", 1),
            ("[afem]\n\nmax_dofs\n", 3),
        ] {
            match RunConfig::parse(text, Path::new("c.cfg")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn builtin_domains_reject_coordinates() {
        let text = "[domain]\nname = annulus\nouter = 0,0; 1,0; 1,1; 0,1\n";
        assert!(RunConfig::parse(text, Path::new("d.cfg")).is_err());
        let text = "[domain]\nname = polygon\n";
        assert!(RunConfig::parse(text, Path::new("d.cfg")).is_err());
    }
}
