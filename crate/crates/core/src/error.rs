use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("degenerate triangle {triangle} (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("mesh is not a refinement descendant of the requested ancestor")]
    NotADescendant,

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutside { x: f64, y: f64 },

    #[error("kernel separation too weak: sigma ratio {ratio:e} below {threshold:e}")]
    SpectralGap { ratio: f64, threshold: f64 },

    #[error("could not build a cut for hole {hole}")]
    CutConstruction { hole: usize },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("projection is not injective (smallest singular value {0:e})")]
    NotInjective(f64),

    #[error("not enough data points for a rate fit: {0}")]
    RateFit(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<PathBuf>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
