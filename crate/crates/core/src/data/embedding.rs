use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::news::{lines, read_text};
use super::vocab::{Vocabulary, PAD};
use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Half-width of the uniform initializer for rows without a pretrained vector.
pub const EMBEDDING_INIT: f64 = 0.1;

/// Word-embedding matrix aligned with a [`Vocabulary`].
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    /// `[V, D]`; row 0 (PAD) is all zeros.
    pub matrix: Tensor,
    pub trainable: bool,
    /// Fraction of non-reserved vocabulary tokens found in the file.
    pub coverage: f64,
}

impl EmbeddingTable {
    /// Every row drawn from uniform(-0.1, 0.1) except the zero PAD row.
    pub fn random(vocab_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<f64> = (0..vocab_len * dim)
            .map(|_| rng.gen_range(-EMBEDDING_INIT..EMBEDDING_INIT))
            .collect();
        data[PAD * dim..(PAD + 1) * dim].fill(0.0);
        EmbeddingTable {
            matrix: Tensor::matrix(vocab_len, dim, data).expect("shape matches data"),
            trainable: true,
            coverage: 0.0,
        }
    }
}

/// Fills a table from `token v_1 … v_D` lines. Tokens outside the
/// vocabulary are ignored; the first line for a token wins.
pub fn parse_embeddings_str(
    text: &str,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab.len(), dim, seed);
    let mut filled = vec![false; vocab.len()];
    for (line_no, line) in lines(text) {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("bad value {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Config(format!(
                "embedding line {line_no} has {} values, model dimension is {dim}",
                values.len()
            )));
        }
        let Some(id) = vocab.get(token) else { continue };
        if filled[id] {
            continue;
        }
        filled[id] = true;
        let row = &mut table.matrix.data_mut()[id * dim..(id + 1) * dim];
        row.copy_from_slice(&values);
    }
    table.matrix.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
    let real = vocab.len().saturating_sub(2);
    let hit = filled.iter().skip(2).filter(|f| **f).count();
    table.coverage = if real == 0 { 0.0 } else { hit as f64 / real as f64 };
    log::info!(
        "embedding coverage {:.4} ({hit} of {real} tokens)",
        table.coverage
    );
    Ok(table)
}

pub fn load_embedding_file(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    parse_embeddings_str(&read_text(path.as_ref())?, vocab, dim, seed)
}
