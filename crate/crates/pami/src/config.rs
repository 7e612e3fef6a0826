//! JSON configuration files. Command-line flags override file values, which
//! override the built-in defaults.
//!
//! ```json
//! {
//!   "scorer": "stdio:python bridge.py",
//!   "strategy": "segment",
//!   "runs": 2,
//!   "mask": "blurred", "kernel_size": 49, "sigma": 100,
//!   "segmenters": [{"algorithm": "slic", "params": {"n_segments": 40, "compactness": 20}}]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use pami_core::segment::SegmenterConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scorer: Option<String>,
    pub strategy: Option<String>,
    pub class: Option<usize>,
    pub shape: Option<String>,
    pub radius: Option<usize>,
    pub step: Option<usize>,
    pub mask: Option<String>,
    pub kernel_size: Option<usize>,
    pub sigma: Option<f64>,
    pub runs: Option<u8>,
    pub steps: Option<usize>,
    pub seeds: Option<bool>,
    pub segmenters: Option<Vec<SegmenterEntry>>,
    pub max_in_flight: Option<usize>,
    pub batch_size: Option<usize>,
    pub dedup: Option<bool>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterEntry {
    pub algorithm: String,
    pub params: BTreeMap<String, f64>,
}

impl SegmenterEntry {
    pub fn to_config(&self) -> Result<SegmenterConfig, pami_core::Error> {
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        SegmenterConfig::from_params(&self.algorithm, &params)
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn segmenter_configs(&self) -> Result<Option<Vec<SegmenterConfig>>, String> {
        let Some(entries) = &self.segmenters else { return Ok(None) };
        if entries.is_empty() {
            return Err("\"segmenters\" must not be empty".into());
        }
        entries
            .iter()
            .enumerate()
            .map(|(i, e)| e.to_config().map_err(|err| format!("segmenter {i}: {err}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}
