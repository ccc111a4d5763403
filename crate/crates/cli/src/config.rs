//! Effective configuration: defaults, then the TOML file, then presets, then flags.

use crate::Usage;
use anyhow::{Context, Result};
use pecan_core::providers::{DecisionSource, HttpConfig, HttpProvider, MockProvider, Provider};
use pecan_core::search::PRESETS;
use pecan_core::{BuildConfig, SearchConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// Mock only: scripted decisions such as `no,no,yes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    /// Mock only: seed of the stochastic decision rule.
    pub seed: u64,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            token: None,
            script: None,
            seed: 0,
            timeout_secs: 120,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub workers: usize,
    pub provider: ProviderSettings,
    pub build: BuildConfig,
    pub search: SearchConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    workers: Option<usize>,
    provider: ProviderSettings,
    build: Option<toml::Table>,
    search: Option<toml::Table>,
}

/// Flag values that override the file. `None` leaves the file value alone.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub provider: Option<ProviderKind>,
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub script: Option<String>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub workers: Option<usize>,
    pub build: BuildOverrides,
    pub search: SearchOverrides,
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct BuildOverrides {
    /// Level-1 chunk length in tokens.
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Batch length threshold `s` in tokens.
    #[arg(long)]
    pub batch_threshold: Option<usize>,
    #[arg(long)]
    pub min_levels: Option<usize>,
    /// Collapse each batch into one summary node (tree ablation).
    #[arg(long)]
    pub no_ip_graph: bool,
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct SearchOverrides {
    /// Stop patience: confident Yes decisions needed to stop.
    #[arg(long = "t-n")]
    pub t_n: Option<usize>,
    /// Confidence threshold on p_yes, in (0, 1).
    #[arg(long = "t-p")]
    pub t_p: Option<f64>,
    /// Cap on retrievals after the seed.
    #[arg(long)]
    pub max_retrievals: Option<usize>,
    /// Retrievals per query when dynamic control is off.
    #[arg(long)]
    pub fixed_budget: Option<usize>,
    #[arg(long)]
    pub fusion_weight: Option<f64>,
    /// Provider context window; an oversized seed is trimmed by similarity.
    #[arg(long)]
    pub window_tokens: Option<usize>,
    #[arg(long)]
    pub no_attention_retrieval: bool,
    #[arg(long)]
    pub no_dynamic_control: bool,
    #[arg(long)]
    pub no_embedding_similarity: bool,
}

/// Deserializes a partial table over the type's defaults, rejecting unknown keys.
fn section<T: Default + Serialize + serde::de::DeserializeOwned>(name: &str, table: toml::Table) -> Result<T> {
    let known = serde_json::to_value(T::default())?;
    if let Some(key) = table.keys().find(|k| known.get(k.as_str()).is_none()) {
        return Err(Usage(format!("[{name}] section: unknown key {key:?}")).into());
    }
    Ok(toml::Value::Table(table)
        .try_into()
        .map_err(|e| Usage(format!("[{name}] section: {e}")))?)
}

fn preset_names() -> String {
    PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

impl CliConfig {
    pub fn load(path: Option<&Path>, o: Overrides) -> Result<Self> {
        let file: FileConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("config file not found or unreadable: {}", p.display()))?;
                toml::from_str(&text).map_err(|e| Usage(format!("config file {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };

        let table = file.search.unwrap_or_default();
        let explicit_t_p = table.contains_key("t_p");
        let mut search: SearchConfig = section("search", table)?;

        let preset = o.preset.or(file.preset);
        if let Some(name) = &preset {
            let p = SearchConfig::preset(name)
                .ok_or_else(|| Usage(format!("unknown preset {name:?}; known presets: {}", preset_names())))?;
            if !explicit_t_p {
                search.t_p = p.t_p;
            }
        }

        let s = o.search;
        if let Some(v) = s.t_n {
            search.t_n = v;
        }
        if let Some(v) = s.t_p {
            search.t_p = v;
        }
        if s.max_retrievals.is_some() {
            search.max_retrievals = s.max_retrievals;
        }
        if let Some(v) = s.fixed_budget {
            search.fixed_budget = v;
        }
        if let Some(v) = s.fusion_weight {
            search.fusion_weight = v;
        }
        if s.window_tokens.is_some() {
            search.window_tokens = s.window_tokens;
        }
        search.attention_retrieval &= !s.no_attention_retrieval;
        search.dynamic_control &= !s.no_dynamic_control;
        search.embedding_similarity &= !s.no_embedding_similarity;

        let mut build: BuildConfig = section("build", file.build.unwrap_or_default())?;
        let b = o.build;
        if let Some(v) = b.chunk_size {
            build.chunk_size_tokens = v;
        }
        if let Some(v) = b.batch_threshold {
            build.batch_threshold_s = v;
        }
        if let Some(v) = b.min_levels {
            build.min_levels = v;
        }
        build.ip_graph &= !b.no_ip_graph;
        search.ip_graph = build.ip_graph;

        let mut provider = file.provider;
        if let Some(k) = o.provider {
            provider.kind = k;
        }
        if o.endpoint.is_some() {
            provider.endpoint = o.endpoint;
        }
        if o.token.is_some() {
            provider.token = o.token;
        }
        if o.script.is_some() {
            provider.script = o.script;
        }
        if let Some(v) = o.seed {
            provider.seed = v;
        }

        let cfg = Self {
            preset,
            workers: o.workers.or(file.workers).unwrap_or(1),
            provider,
            build,
            search,
        };
        cfg.build.check().map_err(|e| Usage(format!("build config: {e}")))?;
        cfg.search.check().map_err(|e| Usage(format!("search config: {e}")))?;
        if cfg.workers == 0 {
            return Err(Usage("workers must be at least 1".into()).into());
        }
        Ok(cfg)
    }

    /// TOML rendering with the auth token masked.
    pub fn redacted(&self) -> String {
        let mut shown = self.clone();
        if shown.provider.token.is_some() {
            shown.provider.token = Some("[redacted]".into());
        }
        toml::to_string(&shown).unwrap_or_else(|e| format!("unprintable config: {e}"))
    }

    pub fn provider(&self) -> Result<Box<dyn Provider>> {
        let p = &self.provider;
        match p.kind {
            ProviderKind::Mock => {
                let decisions = match &p.script {
                    Some(spec) => DecisionSource::parse_script(spec).map_err(|e| Usage(format!("--script: {e}")))?,
                    None => DecisionSource::Seeded { seed: p.seed },
                };
                Ok(Box::new(MockProvider::new(decisions)))
            }
            ProviderKind::Http => {
                let endpoint = p
                    .endpoint
                    .clone()
                    .ok_or_else(|| Usage("the http provider needs --endpoint or PECAN_ENDPOINT".into()))?;
                let client = HttpProvider::new(HttpConfig {
                    bearer_token: p.token.clone(),
                    timeout: Duration::from_secs(p.timeout_secs),
                    max_attempts: p.max_attempts,
                    ..HttpConfig::new(endpoint)
                })?;
                Ok(Box::new(client))
            }
        }
    }
}
