//! Glue from a [`RunConfig`] to a dataset, a model, and trained parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::config::RunConfig;
use crate::data::{
    generate_synthetic, load_embedding_file, parse_behaviors_tsv, parse_news_tsv, Dataset, NewsCatalog,
};
use crate::error::{Error, Result};
use crate::model::{D2nn, ModelDims};

/// Loads the files named by the config, or generates the synthetic corpus
/// from `cfg.seed`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (news, impressions) = match &cfg.synthetic {
        Some(s) => {
            let d = generate_synthetic(s, cfg.seed)?;
            (d.news, d.impressions)
        }
        None => {
            let news_path = cfg.data.news.as_ref().ok_or_else(|| Error::Config("data.news is not set".into()))?;
            let beh_path = cfg
                .data
                .behaviors
                .as_ref()
                .ok_or_else(|| Error::Config("data.behaviors is not set".into()))?;
            (parse_news_tsv(news_path)?, parse_behaviors_tsv(beh_path)?)
        }
    };
    let catalog = NewsCatalog::build(news, cfg.data.min_count, cfg.model.headline_len, cfg.model.snippet_len)?;
    Ok(Dataset::new(catalog, &impressions))
}

/// Model and initial parameters for a dataset.
pub fn build_model(cfg: &RunConfig, dataset: &Dataset) -> Result<(D2nn, ParamStore)> {
    let embeddings = match &cfg.data.embeddings {
        Some(p) => Some(load_embedding_file(p, &dataset.catalog.vocab, cfg.model.dim, cfg.seed)?),
        None => None,
    };
    D2nn::init(&cfg.model, cfg.variant, ModelDims::of(&dataset.catalog), embeddings, cfg.seed)
}

/// Label-table fingerprints stored beside a checkpoint so it is never
/// applied to a corpus with different ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabFingerprint {
    pub words: u32,
    pub categories: u32,
    pub subcategories: u32,
}

impl VocabFingerprint {
    pub fn of(catalog: &NewsCatalog) -> Self {
        VocabFingerprint {
            words: catalog.vocab.fingerprint(),
            categories: catalog.categories.fingerprint(),
            subcategories: catalog.subcategories.fingerprint(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("fingerprint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Sidecar path of a checkpoint's vocabulary fingerprint.
pub fn fingerprint_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".vocab.json");
    checkpoint.with_file_name(name)
}
