use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dpmlm::evalkit::MetricsSummary;
use dpmlm::{Calibration, ClipRange, RerankConfig, StopwordPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Everything needed to redo a rewrite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewritePlan {
    pub input: PathBuf,
    pub output: PathBuf,
    pub scorer: String,
    pub max_vocab: usize,
    pub epsilons: Vec<f64>,
    pub clip: ClipRange,
    /// Present when the clip range came from a calibration file.
    pub calibration: Option<Calibration>,
    pub add_prob: f64,
    pub del_prob: f64,
    pub stopwords: StopwordPolicy,
    pub seed: u64,
    pub rerank: Option<RerankConfig>,
    pub workers: usize,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub scorer_description: String,
    pub plan: RewritePlan,
    pub input_sha256: String,
    pub output_sha256: String,
    pub records_written: usize,
    pub metrics: MetricsSummary,
}

impl RunManifest {
    pub fn sibling_path(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
