use std::path::Path;

use anyhow::{Context, Result};
use moss_core::cd::CdConfig;
use moss_core::rule_gen::ForestConfig;
use moss_core::solver::CuttingPlaneConfig;
use serde::Deserialize;

/// Settings read from a TOML file. Every key is optional; command-line flags
/// override these and these override the library defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub target: Option<String>,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    pub folds: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub metric: Option<String>,
    pub lambda2: Option<f64>,
    pub lambda2_scale: Option<f64>,
    pub forest: ForestConfig,
    pub cutting_plane: CuttingPlaneConfig,
    pub cd: CdConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
