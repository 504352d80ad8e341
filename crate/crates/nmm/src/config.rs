use std::fs;
use std::path::Path;

use nmm_core::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] nmm_core::Error),
}

/// Parses and validates a run configuration. Missing keys take their
/// defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Canonical text form; parsing it gives back an equal config.
pub fn to_text(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run config always serializes")
}
