//! Article encoder: headline and snippet word networks, taxonomy dense
//! layers, and a field-level attention that mixes them into one vector.

use rand::Rng;

use crate::attention::{AdditiveAttention, MultiHeadSelfAttention, PROJ_INIT};
use crate::autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::data::{PAD, UNK};
use crate::error::Result;
use crate::model::Mode;

/// Affine map `W x + b`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Dense {
            weight: store.add_uniform(format!("{prefix}.weight"), &[output, input], PROJ_INIT, rng)?,
            bias: store.add_uniform(format!("{prefix}.bias"), &[output], 0.0, rng)?,
        })
    }

    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.linear(x, w, Some(b))
    }
}

/// How a field's word embeddings are contextualized.
#[derive(Clone, Debug)]
pub enum Context {
    /// Same-length convolution with ReLU, then a bias-free projection from
    /// the filter count back to the model dimension after pooling.
    Conv {
        kernel: ParamId,
        bias: ParamId,
        projection: ParamId,
    },
    SelfAttention(MultiHeadSelfAttention),
}

/// Word network for one text field.
#[derive(Clone, Debug)]
pub struct FieldEncoder {
    pub context: Context,
    pub attention: AdditiveAttention,
}

/// Summary of one text field.
#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    /// Field vector of the model dimension; zero for an all-PAD field.
    pub vector: Var,
    /// Word weights over the first `len` positions (the rest are PAD and
    /// weigh zero). `None` when the field is all PAD or word attention is off.
    pub weights: Option<Var>,
    pub len: usize,
}

/// The article fields that can feed the final representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Headline,
    Snippet,
    Category,
    Subcategory,
}

/// Index-level view of one article.
#[derive(Clone, Copy, Debug)]
pub struct NewsInput<'a> {
    pub headline: &'a [usize],
    pub snippet: &'a [usize],
    pub category: usize,
    pub subcategory: usize,
}

#[derive(Clone, Debug)]
pub struct NewsRepr {
    pub vector: Var,
    /// Active fields in the order their weights appear.
    pub fields: Vec<Field>,
    /// Field weights; `None` when field attention is off.
    pub field_weights: Option<Var>,
    pub headline: Option<FieldOutput>,
    pub snippet: Option<FieldOutput>,
}

#[derive(Clone, Debug)]
pub struct NewsEncoder {
    pub dim: usize,
    pub dropout: f64,
    pub word_embedding: ParamId,
    pub headline: FieldEncoder,
    pub snippet: FieldEncoder,
    pub category_embedding: ParamId,
    pub subcategory_embedding: ParamId,
    pub category_dense: Dense,
    pub subcategory_dense: Dense,
    /// One parameter set scores every field summary.
    pub news_attention: AdditiveAttention,
    pub use_snippet: bool,
    pub use_taxonomy: bool,
    pub word_attention: bool,
    pub news_attention_on: bool,
}

/// Sizes the news encoder is built for.
#[derive(Clone, Copy, Debug)]
pub struct NewsEncoderShape {
    pub vocab: usize,
    pub categories: usize,
    pub subcategories: usize,
    pub dim: usize,
    pub filters: usize,
    pub filter_size: usize,
    pub attention_dim: usize,
    /// Self-attention heads in place of the convolution.
    pub heads: Option<usize>,
}

impl FieldEncoder {
    fn init<R: Rng>(store: &mut ParamStore, prefix: &str, s: &NewsEncoderShape, rng: &mut R) -> Result<Self> {
        let (context, width) = match s.heads {
            Some(h) => (
                Context::SelfAttention(MultiHeadSelfAttention::init(
                    store,
                    &format!("{prefix}.selfattn"),
                    s.dim,
                    h,
                    rng,
                )?),
                s.dim,
            ),
            None => {
                let bound = 1.0 / ((s.filter_size * s.dim) as f64).sqrt();
                let kernel = store.add_uniform(
                    format!("{prefix}.conv.kernel"),
                    &[s.filters, s.filter_size, s.dim],
                    bound,
                    rng,
                )?;
                let bias = store.add_uniform(format!("{prefix}.conv.bias"), &[s.filters], 0.0, rng)?;
                let projection =
                    store.add_uniform(format!("{prefix}.projection"), &[s.dim, s.filters], PROJ_INIT, rng)?;
                (
                    Context::Conv {
                        kernel,
                        bias,
                        projection,
                    },
                    s.filters,
                )
            }
        };
        let attention = AdditiveAttention::init(store, &format!("{prefix}.attention"), width, s.attention_dim, rng)?;
        Ok(FieldEncoder { context, attention })
    }
}

/// Drops entries with probability `rate` and rescales survivors, in
/// training mode only.
pub(crate) fn dropout(g: &mut Graph, x: Var, rate: f64, mode: &mut Mode) -> Result<Var> {
    let rng = match mode {
        Mode::Train(rng) if rate > 0.0 => rng,
        _ => return Ok(x),
    };
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?)?;
    g.mul(x, m)
}

impl NewsEncoder {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        s: &NewsEncoderShape,
        word_embedding: Tensor,
        rng: &mut R,
    ) -> Result<Self> {
        let word_embedding = store.add("news.word_embedding", word_embedding)?;
        store.get_mut(word_embedding).fixed_rows = vec![PAD];
        let headline = FieldEncoder::init(store, "news.headline", s, rng)?;
        let snippet = FieldEncoder::init(store, "news.snippet", s, rng)?;
        let category_embedding =
            store.add_uniform("news.category_embedding", &[s.categories, s.dim], PROJ_INIT, rng)?;
        let subcategory_embedding =
            store.add_uniform("news.subcategory_embedding", &[s.subcategories, s.dim], PROJ_INIT, rng)?;
        let category_dense = Dense::init(store, "news.category_dense", s.dim, s.dim, rng)?;
        let subcategory_dense = Dense::init(store, "news.subcategory_dense", s.dim, s.dim, rng)?;
        let news_attention = AdditiveAttention::init(store, "news.field_attention", s.dim, s.attention_dim, rng)?;
        Ok(NewsEncoder {
            dim: s.dim,
            dropout: 0.0,
            word_embedding,
            headline,
            snippet,
            category_embedding,
            subcategory_embedding,
            category_dense,
            subcategory_dense,
            news_attention,
            use_snippet: true,
            use_taxonomy: true,
            word_attention: true,
            news_attention_on: true,
        })
    }

    pub fn encode_headline(&self, g: &mut Graph, tokens: &[usize], mode: &mut Mode) -> Result<FieldOutput> {
        self.encode_field(g, &self.headline, tokens, mode)
    }

    pub fn encode_snippet(&self, g: &mut Graph, tokens: &[usize], mode: &mut Mode) -> Result<FieldOutput> {
        self.encode_field(g, &self.snippet, tokens, mode)
    }

    /// Contextualized word vectors of a field under multi-head
    /// self-attention, with each head's attention matrix. `None` when the
    /// field uses the convolution or holds no real token.
    pub fn encode_field_selfattn(
        &self,
        g: &mut Graph,
        field: Field,
        tokens: &[usize],
        mode: &mut Mode,
    ) -> Result<Option<(Var, Vec<Var>)>> {
        let enc = match field {
            Field::Headline => &self.headline,
            Field::Snippet => &self.snippet,
            _ => return Ok(None),
        };
        let Context::SelfAttention(sa) = &enc.context else {
            return Ok(None);
        };
        let len = real_len(tokens);
        if len == 0 {
            return Ok(None);
        }
        let x = self.embed(g, &tokens[..len], mode)?;
        let mask: Vec<bool> = tokens[..len].iter().map(|t| *t != PAD).collect();
        sa.forward(g, x, &mask).map(Some)
    }

    fn embed(&self, g: &mut Graph, tokens: &[usize], mode: &mut Mode) -> Result<Var> {
        let table = g.param(self.word_embedding);
        let x = g.gather(table, tokens)?;
        dropout(g, x, self.dropout, mode)
    }

    /// Trailing PAD positions are cut before contextualizing. They are zero
    /// embeddings, exactly what the convolution's own edge padding supplies,
    /// and masked out everywhere else, so the result is unchanged.
    fn encode_field(
        &self,
        g: &mut Graph,
        enc: &FieldEncoder,
        tokens: &[usize],
        mode: &mut Mode,
    ) -> Result<FieldOutput> {
        let len = real_len(tokens);
        if len == 0 {
            return Ok(FieldOutput {
                vector: g.zeros(&[self.dim])?,
                weights: None,
                len: 0,
            });
        }
        let tokens = &tokens[..len];
        let mask: Vec<bool> = tokens.iter().map(|t| *t != PAD).collect();
        let x = self.embed(g, tokens, mode)?;
        let ctx = match &enc.context {
            Context::Conv { kernel, bias, .. } => {
                let (k, b) = (g.param(*kernel), g.param(*bias));
                g.conv1d_relu(x, k, b)?
            }
            Context::SelfAttention(sa) => sa.forward(g, x, &mask)?.0,
        };
        let (pooled, weights) = if self.word_attention {
            let (p, w) = enc.attention.pool(g, ctx, mask)?;
            (p, Some(w))
        } else {
            (g.mean_rows(ctx, mask)?, None)
        };
        let vector = match &enc.context {
            Context::Conv { projection, .. } => {
                let p = g.param(*projection);
                g.linear(pooled, p, None)?
            }
            Context::SelfAttention(_) => pooled,
        };
        Ok(FieldOutput { vector, weights, len })
    }

    /// Category and subcategory vectors, `ReLU(V e + v)` each. Ids outside
    /// the label tables fall back to the UNK row.
    pub fn encode_taxonomy(&self, g: &mut Graph, category: usize, subcategory: usize) -> Result<(Var, Var)> {
        let tc = self.taxonomy_one(g, self.category_embedding, &self.category_dense, category)?;
        let tsc = self.taxonomy_one(g, self.subcategory_embedding, &self.subcategory_dense, subcategory)?;
        Ok((tc, tsc))
    }

    fn taxonomy_one(&self, g: &mut Graph, table: ParamId, dense: &Dense, id: usize) -> Result<Var> {
        let rows = g.store().value(table).shape()[0];
        let id = if id < rows { id } else { UNK };
        let t = g.param(table);
        let e = g.gather(t, &[id])?;
        let e = g.reshape(e, &[self.dim])?;
        let h = dense.apply(g, e)?;
        g.relu(h)
    }

    /// Mixes field vectors by field attention, or by their plain mean when
    /// field attention is off. Returns the vector and the weights.
    pub fn combine_news(&self, g: &mut Graph, fields: &[Var]) -> Result<(Var, Option<Var>)> {
        let rows = g.stack(fields)?;
        if self.news_attention_on {
            let (v, w) = self.news_attention.pool(g, rows, vec![true; fields.len()])?;
            Ok((v, Some(w)))
        } else {
            Ok((g.mean_rows(rows, vec![true; fields.len()])?, None))
        }
    }

    pub fn encode(&self, g: &mut Graph, news: NewsInput, mode: &mut Mode) -> Result<NewsRepr> {
        let mut fields = vec![Field::Headline];
        let h = self.encode_headline(g, news.headline, mode)?;
        let mut vectors = vec![h.vector];
        let snippet = if self.use_snippet {
            let s = self.encode_snippet(g, news.snippet, mode)?;
            fields.push(Field::Snippet);
            vectors.push(s.vector);
            Some(s)
        } else {
            None
        };
        if self.use_taxonomy {
            let (tc, tsc) = self.encode_taxonomy(g, news.category, news.subcategory)?;
            fields.extend([Field::Category, Field::Subcategory]);
            vectors.extend([tc, tsc]);
        }
        let (vector, field_weights) = self.combine_news(g, &vectors)?;
        Ok(NewsRepr {
            vector,
            fields,
            field_weights,
            headline: Some(h),
            snippet,
        })
    }
}

/// Length up to and including the last non-PAD token.
fn real_len(tokens: &[usize]) -> usize {
    tokens.iter().rposition(|t| *t != PAD).map_or(0, |i| i + 1)
}
