//! The assembled recommender: parameters, forward pass, and scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, ParamStore, Tensor, Var};
use crate::config::ModelConfig;
use crate::data::{EmbeddingTable, NewsCatalog};
use crate::error::{Error, Result};
use crate::news_encoder::{NewsEncoder, NewsEncoderShape, NewsInput, NewsRepr};
use crate::reader_encoder::{ReaderEncoder, ReaderEncoderShape, ReaderRepr};
use crate::variant::Variant;

/// Forward-pass mode. Dropout draws from the generator in training only.
pub enum Mode<'r> {
    Train(&'r mut ChaCha8Rng),
    Eval,
}

/// Label-table sizes the model is built against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub categories: usize,
    pub subcategories: usize,
}

impl ModelDims {
    pub fn of(catalog: &NewsCatalog) -> Self {
        ModelDims {
            vocab: catalog.vocab.len(),
            categories: catalog.categories.len(),
            subcategories: catalog.subcategories.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct D2nn {
    pub config: ModelConfig,
    pub variant: Variant,
    pub news: NewsEncoder,
    pub reader: ReaderEncoder,
}

impl D2nn {
    /// Builds the model and its freshly initialized parameters. The word
    /// table is random unless `embeddings` is given.
    pub fn init(
        config: &ModelConfig,
        variant: Variant,
        dims: ModelDims,
        embeddings: Option<EmbeddingTable>,
        seed: u64,
    ) -> Result<(Self, ParamStore)> {
        if let Some(h) = variant.heads {
            if config.dim % h != 0 {
                return Err(Error::Config(format!("model.dim {} is not divisible by {h} heads", config.dim)));
            }
        }
        let table = match embeddings {
            Some(t) => {
                if t.matrix.shape() != [dims.vocab, config.dim] {
                    return Err(Error::Dimension(format!(
                        "embedding table {:?} vs vocabulary {} x dim {}",
                        t.matrix.shape(),
                        dims.vocab,
                        config.dim
                    )));
                }
                t
            }
            None => EmbeddingTable::random(dims.vocab, config.dim, seed),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut store = ParamStore::new();
        let shape = NewsEncoderShape {
            vocab: dims.vocab,
            categories: dims.categories,
            subcategories: dims.subcategories,
            dim: config.dim,
            filters: config.filters,
            filter_size: config.filter_size,
            attention_dim: config.attention_dim,
            heads: variant.heads,
        };
        let mut news = NewsEncoder::init(&mut store, &shape, table.matrix, &mut rng)?;
        store.get_mut(news.word_embedding).requires_grad = !config.freeze_embeddings;
        news.dropout = config.dropout;
        news.use_snippet = !variant.no_snippet;
        news.use_taxonomy = !variant.no_taxonomy;
        news.word_attention = !variant.no_word_attn;
        news.news_attention_on = !variant.no_news_attn;
        let reader = ReaderEncoder::init(
            &mut store,
            &ReaderEncoderShape {
                dim: config.dim,
                attention_dim: config.attention_dim,
                history_cap: config.history_cap,
                recent_window: config.recent_window,
                combine: config.combine,
            },
            &variant,
            &mut rng,
        )?;
        Ok((
            D2nn {
                config: config.clone(),
                variant,
                news,
                reader,
            },
            store,
        ))
    }

    pub fn encode_news(&self, g: &mut Graph, catalog: &NewsCatalog, news: usize, mode: &mut Mode) -> Result<NewsRepr> {
        let input = NewsInput {
            headline: &catalog.headline[news],
            snippet: &catalog.snippet[news],
            category: catalog.category[news],
            subcategory: catalog.subcategory[news],
        };
        self.news.encode(g, input, mode)
    }

    pub fn encode_reader(&self, g: &mut Graph, clicks: &[Var]) -> Result<ReaderRepr> {
        self.reader.encode(g, clicks)
    }

    /// Click probabilities `sigmoid(r · c)` for each candidate vector.
    pub fn score(&self, g: &mut Graph, reader: Var, candidates: &[Var]) -> Result<Var> {
        let rows = g.stack(candidates)?;
        let logits = g.matvec(rows, reader)?;
        g.sigmoid(logits)
    }

    /// Vectors of every catalog item under evaluation mode.
    pub fn news_vectors(&self, store: &ParamStore, catalog: &NewsCatalog) -> Result<Vec<Vec<f64>>> {
        (0..catalog.len())
            .map(|n| {
                let mut g = Graph::frozen(store);
                let r = self.encode_news(&mut g, catalog, n, &mut Mode::Eval)?;
                Ok(g.value(r.vector).data().to_vec())
            })
            .collect()
    }

    /// Reader vector from precomputed click vectors, evaluation mode.
    pub fn reader_vector(&self, store: &ParamStore, clicks: &[&[f64]]) -> Result<Vec<f64>> {
        let mut g = Graph::frozen(store);
        let vars = clicks
            .iter()
            .map(|c| g.constant(Tensor::vector(c.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        let r = self.encode_reader(&mut g, &vars)?;
        Ok(g.value(r.vector).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PAD;
    use crate::variant::Interest;

    fn small() -> ModelConfig {
        ModelConfig {
            dim: 6,
            filters: 5,
            attention_dim: 4,
            ..ModelConfig::default()
        }
    }

    const DIMS: ModelDims = ModelDims {
        vocab: 20,
        categories: 4,
        subcategories: 6,
    };

    #[test]
    fn init_is_seeded_and_pad_row_is_fixed() {
        let (m, a) = D2nn::init(&small(), Variant::default(), DIMS, None, 4).unwrap();
        let (_, b) = D2nn::init(&small(), Variant::default(), DIMS, None, 4).unwrap();
        let (_, c) = D2nn::init(&small(), Variant::default(), DIMS, None, 5).unwrap();
        let flat = |s: &ParamStore| s.iter().flat_map(|(_, p)| p.value.data().to_vec()).collect::<Vec<_>>();
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
        let emb = a.get(m.news.word_embedding);
        assert_eq!(emb.fixed_rows, [PAD]);
        assert_eq!(emb.value.row(PAD), [0.0; 6]);
        assert!(emb.requires_grad);
    }

    #[test]
    fn frozen_embeddings_do_not_train() {
        let cfg = ModelConfig { freeze_embeddings: true, ..small() };
        let (m, s) = D2nn::init(&cfg, Variant::default(), DIMS, None, 1).unwrap();
        assert!(!s.get(m.news.word_embedding).requires_grad);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let v = Variant { heads: Some(4), ..Variant::default() };
        assert!(matches!(D2nn::init(&small(), v, DIMS, None, 1), Err(Error::Config(_))));
        let t = EmbeddingTable::random(DIMS.vocab, 7, 1);
        assert!(matches!(D2nn::init(&small(), Variant::default(), DIMS, Some(t), 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn score_is_sigmoid_of_dot() {
        let (m, s) = D2nn::init(&small(), Variant::default(), DIMS, None, 1).unwrap();
        let mut g = Graph::frozen(&s);
        let r = g.constant(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let a = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let b = g.constant(Tensor::vector(vec![3f64.ln(), 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let rho = m.score(&mut g, r, &[a, b]).unwrap();
        let d = g.value(rho).data();
        assert_eq!(d[0], 0.5);
        assert!((d[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lti_model_has_no_combination_weights_and_sums_clicks() {
        let v = Variant { interest: Interest::LongTerm, ..Variant::default() };
        let (m, s) = D2nn::init(&small(), v, DIMS, None, 1).unwrap();
        let a = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let b = [1.0; 6];
        let r = m.reader_vector(&s, &[&a, &b]).unwrap();
        let want: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert_eq!(r, want);
        assert!(s.id("reader.combine").is_none());
    }
}
