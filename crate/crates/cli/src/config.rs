use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::ArgError;

/// Flat JSON config. Keys match the long flag names; a flag given on the
/// command line wins over the file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub updates: Option<usize>,
    pub batch: Option<usize>,
    pub gestures: Option<usize>,
    pub window: Option<usize>,
    pub beam_width: Option<usize>,
    pub p: Option<usize>,
    pub t: Option<usize>,
    pub noise: Option<f64>,
    pub fps: Option<f64>,
    pub segment: Option<usize>,
    pub hop: Option<usize>,
    pub lr0: Option<f64>,
    pub weight_decay: Option<f64>,
    pub coupled_weight_decay: Option<bool>,
    pub head_updates: Option<usize>,
    pub utterance: Option<usize>,
    pub test_utterances: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| ArgError(format!("config {}: {e}", path.display())).into())
    }
}

/// Flag value if given, else the config value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
