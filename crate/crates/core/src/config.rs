//! Pipeline configuration: one TOML file shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::CodebookTrainConfig;
use crate::detok::DetokConfig;
use crate::generator::{Optimizer, TransformerConfig};
use crate::metrics::EvalConfig;
use crate::sequence::{EdgeStrategy, FaceStrategy, VocabLayout};
use crate::util::short_hash;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: usize,
    pub jitter: f64,
    /// `kind:weight` list, e.g. `box:1,n_prism:1`.
    pub kind_mix: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { count: 100, jitter: 0.05, kind_mix: "box:1,n_prism:1,cylinder_approx:1,l_bracket:1".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizeConfig {
    pub face_strategy: FaceStrategy,
    pub edge_strategy: EdgeStrategy,
    pub class_conditional: bool,
    pub strict: bool,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self {
            face_strategy: FaceStrategy::Dfs,
            edge_strategy: EdgeStrategy::MaxIdxA,
            class_conditional: false,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ngram,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub ngram_order: usize,
    pub ngram_alpha: f64,
    /// Key n-gram contexts by grammar slot and block ordinal.
    pub ngram_slotted: bool,
    pub epochs: usize,
    pub transformer: TransformerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Transformer,
            ngram_order: 4,
            ngram_alpha: 1e-6,
            ngram_slotted: true,
            epochs: 50,
            transformer: TransformerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub top_p: f64,
    pub max_len: usize,
    pub count: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { top_p: 0.6, max_len: 1024, count: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub dataset: u64,
    pub codebook: u64,
    pub tokenize: u64,
    pub model: u64,
    pub sample: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { dataset: 0, codebook: 1, tokenize: 2, model: 3, sample: 4, eval: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub layout: VocabLayout,
    pub dataset: DatasetConfig,
    pub codebook: CodebookTrainConfig,
    pub tokenize: TokenizeConfig,
    pub detok: DetokConfig,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
    pub seeds: Seeds,
}

impl Config {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the fully resolved configuration, defaults included.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let l = &self.layout;
        if l.n_max == 0 || l.n_geo == 0 || l.levels < 2 {
            return bad(format!("layout needs n_max ≥ 1, n_geo ≥ 1 and levels ≥ 2, got {l:?}"));
        }
        if self.codebook.n_geo != l.n_geo as usize {
            return bad(format!("codebook.n_geo {} differs from layout.n_geo {}", self.codebook.n_geo, l.n_geo));
        }
        if !(self.detok.tau_merge > 0.0) || !(self.detok.eps_cb >= 0.0) {
            return bad("detok.tau_merge must be positive and detok.eps_cb non-negative".into());
        }
        if !(self.sampling.top_p > 0.0 && self.sampling.top_p <= 1.0) {
            return bad(format!("sampling.top_p must lie in (0, 1], got {}", self.sampling.top_p));
        }
        if self.model.ngram_order == 0 {
            return bad("model.ngram_order must be at least 1".into());
        }
        self.model.transformer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.grid_res == 0 || self.eval.n_points == 0 {
            return bad("eval.grid_res and eval.n_points must be positive".into());
        }
        Ok(())
    }

    /// Small settings that run the whole pipeline in seconds.
    pub fn desk() -> Self {
        let layout = VocabLayout { n_max: 16, n_geo: 4096, levels: 256, n_classes: 4 };
        Self {
            layout,
            dataset: DatasetConfig { count: 24, ..Default::default() },
            codebook: CodebookTrainConfig { n_geo: 4096, epochs: 4, batch_size: 256, ..Default::default() },
            model: ModelConfig {
                kind: ModelKind::Ngram,
                epochs: 5,
                transformer: TransformerConfig {
                    layers: 1,
                    heads: 2,
                    d_model: 16,
                    d_ff: 32,
                    t_max: 512,
                    lr: 3e-3,
                    optimizer: Optimizer::adamw(),
                    ..Default::default()
                },
                ..Default::default()
            },
            sampling: SamplingConfig { top_p: 0.9, max_len: 512, count: 8 },
            eval: EvalConfig { n_points: 200, ..Default::default() },
            ..Default::default()
        }
    }
}
