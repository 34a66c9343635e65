//! Setting resolution. Precedence: environment > flags > config file > defaults.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use stereoprobe::Error;

/// Keys accepted in the TOML config file. Each also has an environment
/// override named `STEREOPROBE_<KEY>` in upper case.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub adapter: Option<String>,
    pub model: Option<String>,
    pub parallelism: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub seed: Option<u64>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("config {}: {e}", path.display())))
    }
}

pub fn env_var(key: &str) -> Option<String> {
    std::env::var(format!("STEREOPROBE_{}", key.to_uppercase()))
        .ok()
        .filter(|v| !v.is_empty())
}

/// Resolve one setting; `None` only when no layer provides it.
pub fn resolve<T: FromStr + Clone>(key: &str, flag: Option<T>, file: Option<T>) -> Result<Option<T>, Error>
where
    T::Err: std::fmt::Display,
{
    if let Some(raw) = env_var(key) {
        let v = raw
            .parse()
            .map_err(|e| Error::Invalid(format!("STEREOPROBE_{}={raw:?}: {e}", key.to_uppercase())))?;
        return Ok(Some(v));
    }
    Ok(flag.or(file))
}

pub fn resolve_or<T: FromStr + Clone>(key: &str, flag: Option<T>, file: Option<T>, default: T) -> Result<T, Error>
where
    T::Err: std::fmt::Display,
{
    Ok(resolve(key, flag, file)?.unwrap_or(default))
}
