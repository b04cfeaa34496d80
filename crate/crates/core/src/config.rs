//! Run configuration, read from TOML. The API credential is only ever taken
//! from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Params;
use crate::eval::{MatchMode, PriceTable};
use crate::llm::{LiveClient, LlmClient, LlmError, RecordingClient, ReplayClient, API_KEY_ENV};
use crate::meta_rag::RetrievalConfig;
use crate::tokens::CounterChoice;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Replay,
    Record,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    /// Chat-completion URL; `METARAG_ENDPOINT` overrides it.
    pub endpoint: Option<String>,
    pub replay_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mode: BackendMode::Replay,
            endpoint: None,
            replay_dir: None,
            record_dir: None,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub repo: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub model: String,
    pub counter: CounterChoice,
    pub matching_mode: MatchMode,
    pub backend: BackendConfig,
    pub retrieval: RetrievalConfig,
    pub bm25: Bm25Params,
    pub prices: Option<PriceTable>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            repo: None,
            store: None,
            model: "gpt-4o".into(),
            counter: CounterChoice::Approx,
            matching_mode: MatchMode::Covering,
            backend: BackendConfig::default(),
            retrieval: RetrievalConfig::default(),
            bm25: Bm25Params::default(),
            prices: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.retrieval;
        if r.budget == 0 || r.shortlist_cap == 0 || r.max_rounds == 0 {
            return Err(ConfigError::Invalid(
                "retrieval budget, shortlist_cap and max_rounds must be positive".into(),
            ));
        }
        self.bm25
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.backend.max_in_flight == 0 {
            return Err(ConfigError::Invalid("backend.max_in_flight must be positive".into()));
        }
        Ok(())
    }

    /// The configured backend. Replay needs an existing transcript
    /// directory; live and record need the credential variable.
    pub fn client(&self) -> Result<Box<dyn LlmClient>, ConfigError> {
        let b = &self.backend;
        let live = || -> Result<LiveClient, ConfigError> {
            if std::env::var_os(API_KEY_ENV).is_none() {
                return Err(ConfigError::Invalid(format!("{API_KEY_ENV} must be set for live calls")));
            }
            let mut client = LiveClient::from_env(b.max_in_flight)?;
            if let (Some(url), None) = (&b.endpoint, std::env::var_os(crate::llm::ENDPOINT_ENV)) {
                client = client.with_endpoint(url.clone());
            }
            Ok(client)
        };
        match b.mode {
            BackendMode::Replay => {
                let dir = b
                    .replay_dir
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("backend.replay_dir is required in replay mode".into()))?;
                Ok(Box::new(ReplayClient::new(dir)?))
            }
            BackendMode::Record => {
                let dir = b
                    .record_dir
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("backend.record_dir is required in record mode".into()))?;
                Ok(Box::new(RecordingClient::new(live()?, dir)?))
            }
            BackendMode::Live => Ok(Box::new(live()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let config = RunConfig::from_toml(
            r#"
model = "gpt-4o"
counter = "whitespace"
matching_mode = "exact"

[backend]
mode = "replay"
replay_dir = "fixtures/transcripts"

[retrieval]
budget = 5000

[bm25]
k1 = 1.2
idf_variant = "robertson-walker"

[prices]
prompt_per_1k = 0.005
completion_per_1k = 0.015
"#,
        )
        .unwrap();
        assert_eq!(config.retrieval.budget, 5000);
        assert_eq!(config.retrieval.shortlist_cap, 10);
        assert_eq!(config.bm25.k1, 1.2);
        assert_eq!(config.bm25.b, 0.75);
        assert_eq!(config.matching_mode, MatchMode::Exact);
        assert!(config.prices.is_some());
    }

    #[test]
    fn credential_fields_are_rejected() {
        assert!(RunConfig::from_toml("[backend]\napi_key = \"sk-123\"\n").is_err());
    }

    #[test]
    fn replay_needs_existing_dir() {
        let config = RunConfig::from_toml("[backend]\nreplay_dir = \"/definitely/not/here\"\n").unwrap();
        assert!(config.client().is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RunConfig::from_toml("[bm25]\nb = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[retrieval]\nbudget = 0\n").is_err());
    }
}
