use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swlrtr::config::SolverConfig;

/// What a command was asked to do, with every input needed to redo it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Synth {
        rows: usize,
        cols: usize,
        bands: usize,
        rank: usize,
        seed: u64,
        out: PathBuf,
    },
    Simulate {
        clean: PathBuf,
        case: u8,
        seed: u64,
        unscaled: bool,
        out: PathBuf,
    },
    Denoise {
        noisy: PathBuf,
        truth: Option<PathBuf>,
        normalize: bool,
        out: PathBuf,
    },
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        out: Option<PathBuf>,
    },
    Bench {
        sizes: Vec<(usize, usize)>,
        bands: usize,
        case: u8,
        seed: u64,
        out: Option<PathBuf>,
    },
}

impl Invocation {
    /// Points the outputs at `dir`, keeping file names.
    pub fn redirect(&mut self, dir: &Path) {
        let rehome = |p: &PathBuf| dir.join(p.file_name().unwrap_or(p.as_os_str()));
        match self {
            Invocation::Synth { out, .. } => *out = rehome(out),
            Invocation::Simulate { out, .. } | Invocation::Denoise { out, .. } => *out = dir.to_path_buf(),
            Invocation::Metrics { out, .. } | Invocation::Bench { out, .. } => {
                *out = Some(out.as_ref().map_or_else(|| dir.join("report.csv"), rehome))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub invocation: Invocation,
    /// Fully resolved solver parameters, when the command uses them.
    pub config: Option<SolverConfig>,
    pub threads: Option<usize>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(invocation: Invocation, config: Option<SolverConfig>, threads: Option<usize>) -> Self {
        RunManifest {
            tool: format!("swlrtr {}", env!("CARGO_PKG_VERSION")),
            invocation,
            config,
            threads,
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Manifest location for an output file: `<file>.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
