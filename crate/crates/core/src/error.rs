use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the denoising toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode index {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank {rank} out of range 1..={max} for mode {mode}")]
    RankOutOfRange { mode: usize, rank: usize, max: usize },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic: not a cube file")]
    BadMagic,

    #[error("unsupported cube header: {0}")]
    UnsupportedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("constant cube cannot be normalized (min = max = {0})")]
    ConstantCube(f64),

    #[error("noise spec: {0}")]
    NoiseSpec(String),

    #[error("subspace estimation needs at least {needed} bands, got {got}")]
    TooFewBands { needed: usize, got: usize },

    #[error("regression is underdetermined: {bands} bands but only {pixels} pixels")]
    Underdetermined { bands: usize, pixels: usize },

    #[error("patch size {p} does not fit a {n1}x{n2} image")]
    PatchTooLarge { p: usize, n1: usize, n2: usize },

    #[error("search window holds {available} candidates, need {needed}")]
    InsufficientCandidates { available: usize, needed: usize },

    #[error("patch at ({0}, {1}) is out of bounds")]
    OutOfBounds(usize, usize),

    #[error("SSIM window {window} larger than band {rows}x{cols}")]
    WindowTooLarge { window: usize, rows: usize, cols: usize },

    #[error("reference band {0} has zero mean")]
    ZeroMeanBand(usize),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("solver state became non-finite at outer iteration {0}")]
    Diverged(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
