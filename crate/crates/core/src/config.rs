//! Run configuration, read from JSON. Every field has a default; unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::variant::Variant;

/// How long-term and short-term reader vectors are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    Sum,
    /// Concatenate and project back to the model dimension.
    ConcatProject,
}

/// Pairwise dissimilarity used by the diversity metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissimilarity {
    /// One minus cosine similarity of news representations.
    Cosine,
    /// One minus Jaccard overlap of {category, subcategory} label sets.
    CategoryJaccard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub news: Option<PathBuf>,
    pub behaviors: Option<PathBuf>,
    /// Pretrained word vectors, `token v_1 … v_D` per line.
    pub embeddings: Option<PathBuf>,
    pub min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            news: None,
            behaviors: None,
            embeddings: None,
            min_count: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word, taxonomy, news, and reader vector size.
    pub dim: usize,
    /// Convolution filter count.
    pub filters: usize,
    /// Convolution window, odd.
    pub filter_size: usize,
    /// Hidden size of the additive attention projections.
    pub attention_dim: usize,
    pub dropout: f64,
    pub headline_len: usize,
    pub snippet_len: usize,
    /// Most recent clicks fed to the LSTM.
    pub recent_window: usize,
    /// Most recent clicks summed into the long-term vector.
    pub history_cap: usize,
    pub combine: Combine,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 300,
            filters: 200,
            filter_size: 3,
            attention_dim: 200,
            dropout: 0.2,
            headline_len: 30,
            snippet_len: 100,
            recent_window: 100,
            history_cap: 500,
            combine: Combine::Sum,
            freeze_embeddings: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub neg_ratio: usize,
    pub max_epochs: usize,
    /// Epochs without validation-AUC improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 0.001,
            batch_size: 256,
            neg_ratio: 5,
            max_epochs: 10,
            patience: 2,
            clip_norm: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metric_ks: Vec<usize>,
    pub dissimilarity: Dissimilarity,
    /// Catalog negatives per held-out click when no impression exists.
    pub fallback_negatives: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metric_ks: vec![5, 10, 20, 50],
            dissimilarity: Dissimilarity::Cosine,
            fallback_negatives: 49,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synthetic: Option<SyntheticConfig>,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub evaluation: EvalConfig,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            synthetic: None,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            evaluation: EvalConfig::default(),
            variant: Variant::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text)?;
        // Relative data paths are resolved against the config's directory.
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data.news, &mut cfg.data.behaviors, &mut cfg.data.embeddings]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let has_files = self.data.news.is_some() || self.data.behaviors.is_some();
        match (&self.synthetic, has_files) {
            (Some(s), false) => s.validate()?,
            (None, true) => {
                if self.data.news.is_none() || self.data.behaviors.is_none() {
                    return bad("data needs both news and behaviors paths".into());
                }
            }
            (Some(_), true) => return bad("give either data files or a synthetic block, not both".into()),
            (None, false) => return bad("no data: set data.news/data.behaviors or synthetic".into()),
        }
        if self.data.min_count == 0 {
            return bad("data.min_count must be at least 1".into());
        }
        let m = &self.model;
        if m.dim == 0 || m.filters == 0 || m.attention_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        if m.filter_size % 2 == 0 {
            return bad(format!("model.filter_size {} must be odd", m.filter_size));
        }
        if m.headline_len == 0 || m.snippet_len == 0 {
            return bad("headline_len and snippet_len must be positive".into());
        }
        if m.recent_window == 0 || m.history_cap == 0 {
            return bad("recent_window and history_cap must be positive".into());
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return bad(format!("model.dropout {} outside [0, 1)", m.dropout));
        }
        if let Some(h) = self.variant.heads {
            if m.dim % h != 0 {
                return bad(format!("model.dim {} is not divisible by {h} heads", m.dim));
            }
        }
        let o = &self.optimizer;
        if o.learning_rate < 0.0 || o.l2 < 0.0 || o.epsilon <= 0.0 || o.clip_norm <= 0.0 {
            return bad("optimizer rates must be non-negative and epsilon, clip_norm positive".into());
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer betas must lie in [0, 1)".into());
        }
        if o.batch_size == 0 || o.neg_ratio == 0 || o.max_epochs == 0 {
            return bad("batch_size, neg_ratio, max_epochs must be positive".into());
        }
        let e = &self.evaluation;
        if e.metric_ks.is_empty() || e.metric_ks.contains(&0) {
            return bad("evaluation.metric_ks must be non-empty positive cutoffs".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_operating_point() {
        let c = RunConfig::default();
        assert_eq!(c.model.dim, 300);
        assert_eq!(c.model.filters, 200);
        assert_eq!(c.model.filter_size, 3);
        assert_eq!(c.model.dropout, 0.2);
        assert_eq!(c.optimizer.learning_rate, 0.001);
        assert_eq!(c.optimizer.beta1, 0.9);
        assert_eq!(c.optimizer.beta2, 0.999);
        assert_eq!(c.optimizer.batch_size, 256);
        assert_eq!(c.optimizer.l2, 0.001);
        assert_eq!(c.optimizer.neg_ratio, 5);
        assert_eq!(c.evaluation.metric_ks, [5, 10, 20, 50]);
    }

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::from_json_str(r#"{"synthetic": {}, "model": {"dimm": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("dimm"), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            synthetic: Some(SyntheticConfig::default()),
            variant: "sti(s-)".parse().unwrap(),
            ..Default::default()
        };
        let back = RunConfig::from_json_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn heads_must_divide_dim() {
        let c = RunConfig {
            synthetic: Some(SyntheticConfig::default()),
            variant: "multihead:16".parse().unwrap(),
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
