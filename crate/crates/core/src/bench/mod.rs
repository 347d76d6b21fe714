//! Benchmark construction: screening, hard-negative mining, splits and
//! cross-survey matching, plus a synthetic generator for running it all
//! without survey archives.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{SpectrumError, Task};

pub mod classifier;
pub mod criteria;
pub mod crossmatch;
pub mod sampling;
pub mod splits;
pub mod synth;

pub use classifier::{train_weak_classifier, TrainConfig, WeakClassifier};
pub use criteria::{build_prompt, CriteriaRegistry};
pub use crossmatch::{cross_match, separation_arcsec, SkyMatch, SkyPoint};
pub use sampling::{rejection_sample, rejection_sample_by, SamplingReport};
pub use splits::{assemble_splits, BenchItem, Split, SplitCounts, SplitRequest};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {min} spectra per class, got {positives} positive / {negatives} negative")]
    InsufficientData { positives: usize, negatives: usize, min: usize },
    #[error("spectrum {id} does not pass the SNR > {min} filter")]
    LowSnr { id: String, min: f64 },
    #[error("requested counts unavailable: {0}")]
    CountUnavailable(String),
    #[error("spectrum {0} has no sky coordinates")]
    MissingCoordinates(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// File-system safe name for a spectrum id.
pub fn spectrum_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn spectrum_path(id: &str) -> String {
    format!("spectra/{}.specvi.json", spectrum_file_stem(id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub task: Task,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingReport>,
    pub items: Vec<BenchItem>,
}

impl BenchManifest {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), BenchError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads `manifest.json` from a directory, or the file itself.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MANIFEST_FILE);
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
    }
}
