use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dilemma_core::agents::PolicyParams;
use dilemma_core::attrib::AttribParams;
use dilemma_core::eval::{BatchConfig, HttpConfig};
use dilemma_core::scene::StyleConfig;

use crate::CliError;

/// Settings read from `--config`. Secrets never live here: the `http`
/// section names the environment variable that holds the key.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub style: StyleConfig,
    pub batch: BatchConfig,
    pub http: Option<HttpConfig>,
    /// Named synthetic agents usable as `--client synthetic:<name>`.
    pub agents: BTreeMap<String, PolicyParams>,
    pub attrib: AttribParams,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
