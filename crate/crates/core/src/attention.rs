//! Attention layers shared by the news and reader encoders.

use rand::Rng;

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// Bound of the uniform initializer for projections and queries.
pub const PROJ_INIT: f64 = 0.1;

/// Additive attention: `µ_i = q · tanh(V x_i + v)`, softmax over unmasked rows.
#[derive(Clone, Copy, Debug)]
pub struct AdditiveAttention {
    pub proj: ParamId,
    pub bias: ParamId,
    pub query: ParamId,
}

impl AdditiveAttention {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AdditiveAttention {
            proj: store.add_uniform(format!("{prefix}.proj"), &[attn_dim, input_dim], PROJ_INIT, rng)?,
            bias: store.add_uniform(format!("{prefix}.bias"), &[attn_dim], 0.0, rng)?,
            query: store.add_uniform(format!("{prefix}.query"), &[attn_dim], PROJ_INIT, rng)?,
        })
    }

    /// Raw scores for each row of `rows` (`[n, d]`), shape `[n]`.
    pub fn scores(&self, g: &mut Graph, rows: Var) -> Result<Var> {
        let (w, b, q) = (g.param(self.proj), g.param(self.bias), g.param(self.query));
        let hidden = g.linear(rows, w, Some(b))?;
        let hidden = g.tanh(hidden)?;
        g.matvec(hidden, q)
    }

    /// Attention-weighted sum of `rows` and the weights, masked rows
    /// receiving zero weight.
    pub fn pool(&self, g: &mut Graph, rows: Var, mask: Vec<bool>) -> Result<(Var, Var)> {
        let s = self.scores(g, rows)?;
        let alpha = g.softmax(s, Some(mask))?;
        let pooled = g.weighted_sum(alpha, rows)?;
        Ok((pooled, alpha))
    }
}

/// One head of multi-head self-attention: bilinear scores `Q`, output map `V`.
#[derive(Clone, Copy, Debug)]
pub struct SelfAttentionHead {
    pub query: ParamId,
    pub value: ParamId,
}

#[derive(Clone, Debug)]
pub struct MultiHeadSelfAttention {
    pub heads: Vec<SelfAttentionHead>,
}

impl MultiHeadSelfAttention {
    /// `heads` heads over `dim`-wide inputs; each head emits `dim / heads`.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let head_dim = dim / heads;
        let heads = (0..heads)
            .map(|k| {
                Ok(SelfAttentionHead {
                    query: store.add_uniform(format!("{prefix}.head{k}.q"), &[dim, dim], PROJ_INIT, rng)?,
                    value: store.add_uniform(format!("{prefix}.head{k}.v"), &[head_dim, dim], PROJ_INIT, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiHeadSelfAttention { heads })
    }

    /// Contextualizes the rows of `x` (`[M, D]`). Returns the concatenated
    /// head outputs `[M, D]` and each head's `[M, M]` attention matrix.
    /// Masked columns get zero weight in every row.
    pub fn forward(&self, g: &mut Graph, x: Var, mask: &[bool]) -> Result<(Var, Vec<Var>)> {
        let xt = g.transpose(x)?;
        let mut outputs = Vec::with_capacity(self.heads.len());
        let mut attn = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = g.param(head.query);
            let v = g.param(head.value);
            let xq = g.matmul(x, q)?;
            let scores = g.matmul(xq, xt)?;
            let a = g.softmax(scores, Some(mask.to_vec()))?;
            let mixed = g.matmul(a, x)?;
            outputs.push(g.linear(mixed, v, None)?);
            attn.push(a);
        }
        Ok((g.concat_cols(&outputs)?, attn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    fn flat(r: &[Vec<f64>]) -> Tensor {
        Tensor::matrix(r.len(), r[0].len(), r.concat()).unwrap()
    }

    #[test]
    fn additive_pool_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let att = AdditiveAttention::init(&mut store, "a", 3, 4, &mut rng).unwrap();
        store.get_mut(att.bias).value = Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]);
        let x = rows(&mut rng, 4, 3);
        let mut g = Graph::frozen(&store);
        let xv = g.constant(flat(&x)).unwrap();
        let (pooled, alpha) = att.pool(&mut g, xv, vec![true; 4]).unwrap();

        let (v, b, q) = (store.value(att.proj), store.value(att.bias), store.value(att.query));
        let mu: Vec<f64> = x
            .iter()
            .map(|xi| {
                (0..4)
                    .map(|a| {
                        let pre: f64 = (0..3).map(|j| v.data()[a * 3 + j] * xi[j]).sum::<f64>() + b.data()[a];
                        q.data()[a] * pre.tanh()
                    })
                    .sum()
            })
            .collect();
        let z: f64 = mu.iter().map(|m| m.exp()).sum();
        let w: Vec<f64> = mu.iter().map(|m| m.exp() / z).collect();
        for i in 0..4 {
            assert!((g.value(alpha).data()[i] - w[i]).abs() < 1e-10);
        }
        for j in 0..3 {
            let want: f64 = (0..4).map(|i| w[i] * x[i][j]).sum();
            assert!((g.value(pooled).data()[j] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn additive_pool_single_row_and_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let att = AdditiveAttention::init(&mut store, "a", 2, 2, &mut rng).unwrap();
        let mut g = Graph::frozen(&store);
        let x = g.constant(Tensor::matrix(3, 2, vec![0.4, -0.7, 0.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let (pooled, alpha) = att.pool(&mut g, x, vec![true, false, false]).unwrap();
        assert_eq!(g.value(alpha).data(), [1.0, 0.0, 0.0]);
        assert_eq!(g.value(pooled).data(), [0.4, -0.7]);

        let same = g.constant(Tensor::matrix(3, 2, [0.25, -0.5].repeat(3)).unwrap()).unwrap();
        let (pooled, _) = att.pool(&mut g, same, vec![true; 3]).unwrap();
        for (got, want) in g.value(pooled).data().iter().zip([0.25, -0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn self_attention_matches_double_loop() {
        let (m, d, h) = (3, 6, 3);
        let hd = d / h;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let mh = MultiHeadSelfAttention::init(&mut store, "s", d, h, &mut rng).unwrap();
        let x = rows(&mut rng, m, d);
        let mut g = Graph::frozen(&store);
        let xv = g.constant(flat(&x)).unwrap();
        let (out, attn) = mh.forward(&mut g, xv, &[true; 3]).unwrap();
        assert_eq!(g.shape(out), [m, d]);
        for (k, head) in mh.heads.iter().enumerate() {
            let (qm, vm) = (store.value(head.query).data(), store.value(head.value).data());
            for i in 0..m {
                let s: Vec<f64> = (0..m)
                    .map(|j| {
                        let mut acc = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                acc += x[i][a] * qm[a * d + b] * x[j][b];
                            }
                        }
                        acc
                    })
                    .collect();
                let z: f64 = s.iter().map(|v| v.exp()).sum();
                let alpha: Vec<f64> = s.iter().map(|v| v.exp() / z).collect();
                for j in 0..m {
                    assert!((g.value(attn[k]).data()[i * m + j] - alpha[j]).abs() < 1e-10);
                }
                for c in 0..hd {
                    let mut want = 0.0;
                    for j in 0..m {
                        for b in 0..d {
                            want += vm[c * d + b] * alpha[j] * x[j][b];
                        }
                    }
                    let got = g.value(out).data()[i * d + k * hd + c];
                    assert!((got - want).abs() < 1e-10, "head {k} row {i} col {c}");
                }
            }
        }
    }

    #[test]
    fn self_attention_rows_normalize_and_skip_masked_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let mh = MultiHeadSelfAttention::init(&mut store, "s", 4, 2, &mut rng).unwrap();
        let x = rows(&mut rng, 4, 4);
        let mut g = Graph::frozen(&store);
        let xv = g.constant(flat(&x)).unwrap();
        let (_, attn) = mh.forward(&mut g, xv, &[true, true, false, true]).unwrap();
        for a in attn {
            for row in g.value(a).data().chunks(4) {
                assert_eq!(row[2], 0.0);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let one = g.constant(flat(&x[..1])).unwrap();
        let (_, attn) = mh.forward(&mut g, one, &[true]).unwrap();
        assert!(attn.iter().all(|a| g.value(*a).data() == [1.0]));
    }
}
