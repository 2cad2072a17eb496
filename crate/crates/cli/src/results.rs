//! Result documents and atomic file output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use evoctl_core::levelset::{FrontGeometry, SolutionSheet};
use evoctl_core::{CostBreakdown, OptResult};
use serde::{Deserialize, Serialize};

pub const RESULT_FORMAT_VERSION: u32 = 1;

/// Version of the program that produced a document.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format_version: u32,
    pub artifact_version: String,
    pub command: String,
    /// The config exactly as read.
    pub config_text: String,
    pub seed: u64,
    pub outputs: Outputs,
    pub wall_clock_seconds: f64,
    pub forward_propagations: u64,
    pub backward_propagations: u64,
}

impl ResultDocument {
    /// Copy with the wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outputs {
    Optimize {
        s: Vec<f64>,
        c: Vec<f64>,
        result: OptResult,
    },
    Sweep {
        sheet: SolutionSheet,
        failed_nodes: usize,
        unconverged_nodes: usize,
    },
    Predict(Box<PredictOutput>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub branch: usize,
    pub extrapolated: bool,
    /// Interpolated control, flat layout.
    pub b: Vec<f64>,
    pub predicted_cost: CostBreakdown,
    pub geometry: FrontGeometry,
    /// Short local polish started from the prediction.
    pub refined: Option<OptResult>,
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = temp_path(path)?;
    if let Err(e) = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    Ok(())
}

fn temp_path(path: &Path) -> io::Result<PathBuf> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    Ok(path.with_file_name(tmp_name))
}
