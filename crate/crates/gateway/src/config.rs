use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use smart_suggest_core::prompt::DEFAULT_TOKEN_BUDGET;
use smart_suggest_core::provider::ENV_API_KEY;
use smart_suggest_core::{ProviderConfig, ProviderError};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(30);
pub const DEFAULT_RATE_BUCKET: u32 = 5;
pub const DEFAULT_RATE_REFILL: f64 = 0.5;
/// Regeneration context outlives cached results by this factor.
pub const CONTEXT_TTL_FACTOR: u32 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{var}: {reason}")]
    Invalid { var: &'static str, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Live,
    Mock,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub port: u16,
    pub cache_ttl: Duration,
    pub rate_bucket: u32,
    pub rate_refill_per_s: f64,
    pub data_dir: PathBuf,
    pub token_budget: usize,
    pub task_file: Option<PathBuf>,
    pub provider_kind: ProviderKind,
    pub provider: ProviderConfig,
    /// fsync each log record before acknowledging it.
    pub sync_writes: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            cache_ttl: DEFAULT_CACHE_TTL,
            rate_bucket: DEFAULT_RATE_BUCKET,
            rate_refill_per_s: DEFAULT_RATE_REFILL,
            data_dir: PathBuf::from("data"),
            token_budget: DEFAULT_TOKEN_BUDGET,
            task_file: None,
            provider_kind: ProviderKind::Live,
            provider: ProviderConfig::default(),
            sync_writes: true,
        }
    }
}

fn parse<T: std::str::FromStr>(var: &'static str, raw: &str) -> Result<T, ConfigError> {
    raw.trim().parse().map_err(|_| ConfigError::Invalid {
        var,
        reason: format!("cannot parse {raw:?}"),
    })
}

impl GatewayConfig {
    pub fn context_ttl(&self) -> Duration {
        self.cache_ttl * CONTEXT_TTL_FACTOR
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup<F>(lookup: F) -> Result<Self, ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut cfg = Self {
            provider: ProviderConfig::from_lookup(&lookup)?,
            ..Self::default()
        };
        if let Some(v) = lookup("SG_PORT") {
            cfg.port = parse("SG_PORT", &v)?;
        }
        if let Some(v) = lookup("SG_CACHE_TTL_S") {
            let secs: f64 = parse("SG_CACHE_TTL_S", &v)?;
            if !secs.is_finite() || secs < 0.0 {
                return Err(ConfigError::Invalid {
                    var: "SG_CACHE_TTL_S",
                    reason: "must be a non-negative number".into(),
                });
            }
            cfg.cache_ttl = Duration::from_secs_f64(secs);
        }
        if let Some(v) = lookup("SG_RATE_BUCKET") {
            cfg.rate_bucket = parse("SG_RATE_BUCKET", &v)?;
            if cfg.rate_bucket == 0 {
                return Err(ConfigError::Invalid {
                    var: "SG_RATE_BUCKET",
                    reason: "must be at least 1".into(),
                });
            }
        }
        if let Some(v) = lookup("SG_RATE_REFILL") {
            cfg.rate_refill_per_s = parse("SG_RATE_REFILL", &v)?;
            if !cfg.rate_refill_per_s.is_finite() || cfg.rate_refill_per_s <= 0.0 {
                return Err(ConfigError::Invalid {
                    var: "SG_RATE_REFILL",
                    reason: "must be positive".into(),
                });
            }
        }
        if let Some(v) = lookup("SG_DATA_DIR") {
            cfg.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup("SG_TOKEN_BUDGET") {
            cfg.token_budget = parse("SG_TOKEN_BUDGET", &v)?;
        }
        cfg.task_file = lookup("SG_TASK_FILE").map(PathBuf::from);
        cfg.provider_kind = match lookup("SG_PROVIDER").as_deref().map(str::trim) {
            None | Some("") | Some("live") => ProviderKind::Live,
            Some("mock") => ProviderKind::Mock,
            Some(other) => {
                return Err(ConfigError::Invalid {
                    var: "SG_PROVIDER",
                    reason: format!("expected live or mock, got {other:?}"),
                })
            }
        };
        if cfg.provider_kind == ProviderKind::Live
            && lookup(&cfg.provider.api_key_ref).is_none_or(|k| k.is_empty())
        {
            return Err(ConfigError::Invalid {
                var: ENV_API_KEY,
                reason: "not set; required for the live provider".into(),
            });
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn cfg(vars: &[(&str, &str)]) -> Result<GatewayConfig, ConfigError> {
        let map: HashMap<String, String> = vars
            .iter()
            .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
            .collect();
        GatewayConfig::from_lookup(|k| map.get(k).cloned())
    }

    #[test]
    fn defaults_with_mock_provider() {
        let c = cfg(&[("SG_PROVIDER", "mock")]).unwrap();
        assert_eq!(c.port, 8080);
        assert_eq!(c.cache_ttl, Duration::from_secs(30));
        assert_eq!(c.rate_bucket, 5);
        assert_eq!(c.rate_refill_per_s, 0.5);
        assert_eq!(c.context_ttl(), Duration::from_secs(300));
        assert_eq!(c.token_budget, 3000);
    }

    #[test]
    fn overrides_and_errors() {
        let c = cfg(&[
            ("SG_PROVIDER", "live"),
            ("SG_LLM_API_KEY", "sk-test"),
            ("SG_PORT", "9000"),
            ("SG_CACHE_TTL_S", "5"),
            ("SG_RATE_BUCKET", "10"),
            ("SG_RATE_REFILL", "2"),
            ("SG_DATA_DIR", "/tmp/sg"),
        ])
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.rate_bucket, 10);
        assert_eq!(c.data_dir, PathBuf::from("/tmp/sg"));
        assert_eq!(c.provider_kind, ProviderKind::Live);

        assert!(cfg(&[]).is_err(), "live provider without key");
        assert!(cfg(&[("SG_PROVIDER", "mock"), ("SG_RATE_REFILL", "0")]).is_err());
        assert!(cfg(&[("SG_PROVIDER", "mock"), ("SG_PORT", "x")]).is_err());
        assert!(cfg(&[("SG_PROVIDER", "other")]).is_err());
    }

    #[test]
    fn key_value_never_in_errors() {
        let err = cfg(&[("SG_LLM_API_KEY", "sk-secret"), ("SG_PORT", "nope")]).unwrap_err();
        assert!(!err.to_string().contains("sk-secret"));
    }
}
