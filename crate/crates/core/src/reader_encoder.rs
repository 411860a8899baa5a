//! Reader encoder: long-term interest as the sum of clicked-news vectors,
//! short-term interest from an LSTM over recent clicks, and a diversity
//! attention over the LSTM hidden states.

use rand::Rng;

use crate::attention::{AdditiveAttention, MultiHeadSelfAttention, PROJ_INIT};
use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::config::Combine;
use crate::error::Result;
use crate::news_encoder::Dense;
use crate::variant::{Interest, Variant};

/// LSTM cell; each gate acts on `[h_{t-1}; x_t]`.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub forget: Dense,
    pub input: Dense,
    pub candidate: Dense,
    pub output: Dense,
}

impl Lstm {
    pub fn init<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Lstm {
            forget: Dense::init(store, &format!("{prefix}.forget"), 2 * dim, dim, rng)?,
            input: Dense::init(store, &format!("{prefix}.input"), 2 * dim, dim, rng)?,
            candidate: Dense::init(store, &format!("{prefix}.candidate"), 2 * dim, dim, rng)?,
            output: Dense::init(store, &format!("{prefix}.output"), 2 * dim, dim, rng)?,
        })
    }
}

/// How the hidden-state sequence is summarized into the short-term vector.
#[derive(Clone, Debug)]
pub enum ShortTermPool {
    Diversity(AdditiveAttention),
    /// Self-attention over hidden states, then the mean over steps.
    SelfAttention(MultiHeadSelfAttention),
    /// The last hidden state.
    Last,
}

#[derive(Clone, Debug)]
pub struct ReaderEncoder {
    pub dim: usize,
    pub interest: Interest,
    pub history_cap: usize,
    pub recent_window: usize,
    pub lstm: Lstm,
    pub pool: ShortTermPool,
    /// `[D, 2D]` map applied to `[lt; st]` under concatenation.
    pub combine: Option<ParamId>,
}

#[derive(Clone, Debug)]
pub struct ReaderRepr {
    pub vector: Var,
    pub long_term: Option<Var>,
    /// Last LSTM hidden state.
    pub short_term: Option<Var>,
    /// Attention-pooled short-term vector.
    pub short_term_pooled: Option<Var>,
    /// Diversity weights over the real LSTM steps.
    pub weights: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct ReaderEncoderShape {
    pub dim: usize,
    pub attention_dim: usize,
    pub history_cap: usize,
    pub recent_window: usize,
    pub combine: Combine,
}

impl ReaderEncoder {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        s: &ReaderEncoderShape,
        variant: &Variant,
        rng: &mut R,
    ) -> Result<Self> {
        let lstm = Lstm::init(store, "reader.lstm", s.dim, rng)?;
        let pool = match (variant.heads, variant.no_reader_attn) {
            (Some(h), _) => ShortTermPool::SelfAttention(MultiHeadSelfAttention::init(
                store,
                "reader.selfattn",
                s.dim,
                h,
                rng,
            )?),
            (None, true) => ShortTermPool::Last,
            (None, false) => ShortTermPool::Diversity(AdditiveAttention::init(
                store,
                "reader.diversity",
                s.dim,
                s.attention_dim,
                rng,
            )?),
        };
        let combine = match (s.combine, variant.interest) {
            (Combine::ConcatProject, Interest::Combined) => {
                Some(store.add_uniform("reader.combine", &[s.dim, 2 * s.dim], PROJ_INIT, rng)?)
            }
            _ => None,
        };
        Ok(ReaderEncoder {
            dim: s.dim,
            interest: variant.interest,
            history_cap: s.history_cap,
            recent_window: s.recent_window,
            lstm,
            pool,
            combine,
        })
    }

    /// Sum of the clicked-news vectors; zero for an empty history.
    pub fn long_term_interest(&self, g: &mut Graph, clicks: &[Var]) -> Result<Var> {
        if clicks.is_empty() {
            return g.zeros(&[self.dim]);
        }
        let rows = g.stack(clicks)?;
        g.sum_rows(rows)
    }

    pub fn lstm_step(&self, g: &mut Graph, h: Var, c: Var, x: Var) -> Result<(Var, Var)> {
        let hx = g.concat(&[h, x])?;
        let l = &self.lstm;
        let f = l.forget.apply(g, hx)?;
        let f = g.sigmoid(f)?;
        let i = l.input.apply(g, hx)?;
        let i = g.sigmoid(i)?;
        let cand = l.candidate.apply(g, hx)?;
        let cand = g.tanh(cand)?;
        let o = l.output.apply(g, hx)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs the LSTM from a zero state over `recent`. Returns every hidden
    /// state and the last one (zero when `recent` is empty).
    pub fn short_term_interest(&self, g: &mut Graph, recent: &[Var]) -> Result<(Vec<Var>, Var)> {
        let mut h = g.zeros(&[self.dim])?;
        let mut c = h;
        let mut hs = Vec::with_capacity(recent.len());
        for &x in recent {
            (h, c) = self.lstm_step(g, h, c, x)?;
            hs.push(h);
        }
        Ok((hs, h))
    }

    /// Attention-pooled hidden states and the per-step weights. Zero with
    /// no weights for an empty sequence.
    pub fn diversity_attention(&self, g: &mut Graph, hidden: &[Var]) -> Result<(Var, Option<Var>)> {
        if hidden.is_empty() {
            return Ok((g.zeros(&[self.dim])?, None));
        }
        match &self.pool {
            ShortTermPool::Diversity(attn) => {
                let rows = g.stack(hidden)?;
                let (v, w) = attn.pool(g, rows, vec![true; hidden.len()])?;
                Ok((v, Some(w)))
            }
            ShortTermPool::SelfAttention(sa) => {
                let rows = g.stack(hidden)?;
                let (ctx, _) = sa.forward(g, rows, &vec![true; hidden.len()])?;
                Ok((g.mean_rows(ctx, vec![true; hidden.len()])?, None))
            }
            ShortTermPool::Last => Ok((*hidden.last().expect("non-empty"), None)),
        }
    }

    pub fn combine_reader(&self, g: &mut Graph, long_term: Var, short_term: Var) -> Result<Var> {
        match self.combine {
            None => g.add(long_term, short_term),
            Some(w) => {
                let x = g.concat(&[long_term, short_term])?;
                let w = g.param(w);
                g.linear(x, w, None)
            }
        }
    }

    /// Encodes a reader from the vectors of their clicks, oldest first.
    pub fn encode(&self, g: &mut Graph, clicks: &[Var]) -> Result<ReaderRepr> {
        let long_term = if self.interest != Interest::ShortTerm {
            let start = clicks.len().saturating_sub(self.history_cap);
            if start > 0 {
                log::debug!("long-term history capped: {} of {} clicks kept", self.history_cap, clicks.len());
            }
            Some(self.long_term_interest(g, &clicks[start..])?)
        } else {
            None
        };
        let (short_term, pooled, weights) = if self.interest != Interest::LongTerm {
            let start = clicks.len().saturating_sub(self.recent_window);
            let (hs, last) = self.short_term_interest(g, &clicks[start..])?;
            let (pooled, w) = self.diversity_attention(g, &hs)?;
            (Some(last), Some(pooled), w)
        } else {
            (None, None, None)
        };
        let vector = match (long_term, pooled) {
            (Some(lt), Some(st)) => self.combine_reader(g, lt, st)?,
            (Some(lt), None) => lt,
            (None, Some(st)) => st,
            (None, None) => unreachable!("every interest mode uses at least one path"),
        };
        Ok(ReaderRepr {
            vector,
            long_term,
            short_term,
            short_term_pooled: pooled,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const D: usize = 3;

    fn shape() -> ReaderEncoderShape {
        ReaderEncoderShape {
            dim: D,
            attention_dim: 4,
            history_cap: 500,
            recent_window: 100,
            combine: Combine::Sum,
        }
    }

    fn encoder(seed: u64, variant: Variant) -> (ReaderEncoder, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = ReaderEncoder::init(&mut store, &shape(), &variant, &mut rng).unwrap();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        (enc, store)
    }

    fn vecs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..D).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    fn consts(g: &mut Graph, v: &[Vec<f64>]) -> Vec<Var> {
        v.iter().map(|x| g.constant(Tensor::vector(x.clone())).unwrap()).collect()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    // Hand-rolled cell update.
    fn step_oracle(store: &ParamStore, l: &Lstm, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hx: Vec<f64> = h.iter().chain(x).copied().collect();
        let gate = |d: &Dense, act: fn(f64) -> f64| -> Vec<f64> {
            let (w, b) = (store.value(d.weight).data(), store.value(d.bias).data());
            (0..D).map(|o| act((0..2 * D).map(|j| w[o * 2 * D + j] * hx[j]).sum::<f64>() + b[o])).collect()
        };
        let (f, i, ct, o) = (gate(&l.forget, sig), gate(&l.input, sig), gate(&l.candidate, f64::tanh), gate(&l.output, sig));
        let c: Vec<f64> = (0..D).map(|k| f[k] * c[k] + i[k] * ct[k]).collect();
        let h = (0..D).map(|k| o[k] * c[k].tanh()).collect();
        (h, c)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn long_term_examples() {
        let (enc, store) = encoder(1, Variant::default());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut g = Graph::frozen(&store);
        let z = enc.long_term_interest(&mut g, &[]).unwrap();
        assert_eq!(g.value(z).data(), [0.0; D]);
        let v = vecs(&mut rng, 3);
        let x = consts(&mut g, &v);
        let one = enc.long_term_interest(&mut g, &x[..1]).unwrap();
        assert_eq!(g.value(one).data(), v[0].as_slice());
        let all = enc.long_term_interest(&mut g, &x).unwrap();
        let want: Vec<f64> = (0..D).map(|j| v.iter().map(|r| r[j]).sum()).collect();
        assert!(close(g.value(all).data(), &want, 1e-12));
        let shuffled = enc.long_term_interest(&mut g, &[x[2], x[0], x[1]]).unwrap();
        assert!(close(g.value(shuffled).data(), g.value(all).data(), 1e-12));
    }

    #[test]
    fn zero_lstm_stays_at_zero() {
        let (enc, mut store) = encoder(2, Variant::default());
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut g = Graph::frozen(&store);
        let x = consts(&mut g, &vecs(&mut rng, 4));
        let (hs, last) = enc.short_term_interest(&mut g, &x).unwrap();
        assert_eq!(g.value(last).data(), [0.0; D]);
        assert!(hs.iter().all(|h| g.value(*h).data() == [0.0; D]));
        let (_, last) = enc.short_term_interest(&mut g, &x[..1]).unwrap();
        assert_eq!(g.value(last).data(), [0.0; D]);
    }

    #[test]
    fn lstm_step_and_fold_match_oracle() {
        for seed in 0..5 {
            let (enc, store) = encoder(seed, Variant::default());
            let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
            let v = vecs(&mut rng, 3);
            let mut g = Graph::frozen(&store);
            let x = consts(&mut g, &v);
            let (hs, last) = enc.short_term_interest(&mut g, &x).unwrap();
            let (mut h, mut c) = (vec![0.0; D], vec![0.0; D]);
            for (t, xt) in v.iter().enumerate() {
                (h, c) = step_oracle(&store, &enc.lstm, &h, &c, xt);
                assert!(close(g.value(hs[t]).data(), &h, 1e-12));
            }
            assert!(close(g.value(last).data(), &h, 1e-12));
        }
        let (enc, store) = encoder(9, Variant::default());
        let mut g = Graph::frozen(&store);
        let (hs, last) = enc.short_term_interest(&mut g, &[]).unwrap();
        assert!(hs.is_empty());
        assert_eq!(g.value(last).data(), [0.0; D]);
    }

    #[test]
    fn short_term_is_order_sensitive() {
        let differs = (0..20).any(|seed| {
            let (enc, store) = encoder(seed, Variant::default());
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let mut g = Graph::frozen(&store);
            let x = consts(&mut g, &vecs(&mut rng, 3));
            let (_, a) = enc.short_term_interest(&mut g, &x).unwrap();
            let (_, b) = enc.short_term_interest(&mut g, &[x[2], x[1], x[0]]).unwrap();
            !close(g.value(a).data(), g.value(b).data(), 1e-6)
        });
        assert!(differs);
    }

    #[test]
    fn diversity_attention_examples() {
        let (enc, store) = encoder(3, Variant::default());
        let ShortTermPool::Diversity(att) = &enc.pool else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let v = vecs(&mut rng, 4);
        let mut g = Graph::frozen(&store);
        let x = consts(&mut g, &v);
        let (p, w) = enc.diversity_attention(&mut g, &x[..1]).unwrap();
        assert_eq!(g.value(w.unwrap()).data(), [1.0]);
        assert_eq!(g.value(p).data(), v[0].as_slice());

        let (p, _) = enc.diversity_attention(&mut g, &[x[1]; 3]).unwrap();
        assert!(close(g.value(p).data(), &v[1], 1e-15));

        let (p, w) = enc.diversity_attention(&mut g, &x).unwrap();
        let (vm, b, q) = (store.value(att.proj).data(), store.value(att.bias).data(), store.value(att.query).data());
        let mu: Vec<f64> = v
            .iter()
            .map(|h| (0..4).map(|a| q[a] * ((0..D).map(|j| vm[a * D + j] * h[j]).sum::<f64>() + b[a]).tanh()).sum())
            .collect();
        let z: f64 = mu.iter().map(|m| m.exp()).sum();
        let alpha: Vec<f64> = mu.iter().map(|m| m.exp() / z).collect();
        assert!(close(g.value(w.unwrap()).data(), &alpha, 1e-10));
        let want: Vec<f64> = (0..D).map(|j| (0..4).map(|i| alpha[i] * v[i][j]).sum()).collect();
        assert!(close(g.value(p).data(), &want, 1e-10));

        let (p, w) = enc.diversity_attention(&mut g, &[]).unwrap();
        assert!(w.is_none());
        assert_eq!(g.value(p).data(), [0.0; D]);
    }

    #[test]
    fn combine_is_a_sum() {
        let (enc, store) = encoder(4, Variant::default());
        let mut g = Graph::frozen(&store);
        let a = g.constant(Tensor::vector(vec![0.5, -1.0, 2.0])).unwrap();
        let b = g.constant(Tensor::vector(vec![0.25, 0.0, -3.0])).unwrap();
        let z = g.zeros(&[D]).unwrap();
        let r = enc.combine_reader(&mut g, a, z).unwrap();
        assert_eq!(g.value(r).data(), [0.5, -1.0, 2.0]);
        let r = enc.combine_reader(&mut g, z, z).unwrap();
        assert_eq!(g.value(r).data(), [0.0; D]);
        let r = enc.combine_reader(&mut g, a, b).unwrap();
        assert_eq!(g.value(r).data(), [0.75, -1.0, -1.0]);
    }

    #[test]
    fn concat_project_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let s = ReaderEncoderShape { combine: Combine::ConcatProject, ..shape() };
        let enc = ReaderEncoder::init(&mut store, &s, &Variant::default(), &mut rng).unwrap();
        let w = store.value(enc.combine.unwrap()).data().to_vec();
        let mut g = Graph::frozen(&store);
        let a = g.constant(Tensor::vector(vec![1.0, 0.0, 0.0])).unwrap();
        let b = g.constant(Tensor::vector(vec![0.0, 0.0, 1.0])).unwrap();
        let r = enc.combine_reader(&mut g, a, b).unwrap();
        let want: Vec<f64> = (0..D).map(|o| w[o * 2 * D] + w[o * 2 * D + 5]).collect();
        assert!(close(g.value(r).data(), &want, 1e-15));
    }

    #[test]
    fn variants_pick_their_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let v = vecs(&mut rng, 5);
        let run = |variant: Variant| {
            let (enc, store) = encoder(6, variant);
            let mut g = Graph::frozen(&store);
            let x = consts(&mut g, &v);
            let r = enc.encode(&mut g, &x).unwrap();
            let get = |o: Option<Var>| o.map(|v| g.value(v).data().to_vec());
            (g.value(r.vector).data().to_vec(), get(r.long_term), get(r.short_term), get(r.short_term_pooled))
        };
        let (r, lt, last, pooled) = run(Variant::default());
        let sum: Vec<f64> = lt.as_ref().unwrap().iter().zip(pooled.as_ref().unwrap()).map(|(a, b)| a + b).collect();
        assert!(close(&r, &sum, 1e-15));
        assert!(last.is_some());

        let (r, lt, _, pooled) = run(Variant { interest: Interest::LongTerm, ..Variant::default() });
        assert_eq!(Some(r), lt);
        assert!(pooled.is_none());

        let (r, lt, _, pooled) = run(Variant { interest: Interest::ShortTerm, ..Variant::default() });
        assert_eq!(Some(r), pooled);
        assert!(lt.is_none());

        let (r, lt, last, _) = run(Variant { no_reader_attn: true, ..Variant::default() });
        let sum: Vec<f64> = lt.unwrap().iter().zip(last.unwrap()).map(|(a, b)| a + b).collect();
        assert!(close(&r, &sum, 1e-15));
    }

    #[test]
    fn window_and_cap_truncate_from_the_front() {
        let (mut enc, store) = encoder(7, Variant::default());
        enc.history_cap = 2;
        enc.recent_window = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let v = vecs(&mut rng, 6);
        let mut g = Graph::frozen(&store);
        let x = consts(&mut g, &v);
        let r = enc.encode(&mut g, &x).unwrap();
        let lt = enc.long_term_interest(&mut g, &x[4..]).unwrap();
        assert_eq!(g.value(r.long_term.unwrap()).data(), g.value(lt).data());
        let (_, last) = enc.short_term_interest(&mut g, &x[3..]).unwrap();
        assert_eq!(g.value(r.short_term.unwrap()).data(), g.value(last).data());
        assert_eq!(g.shape(r.weights.unwrap()), [3]);
    }

    #[test]
    fn multihead_reader_pool_is_a_mean_of_contexts() {
        let variant = Variant { heads: Some(3), ..Variant::default() };
        let (enc, store) = encoder(8, variant);
        let ShortTermPool::SelfAttention(sa) = &enc.pool else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let v = vecs(&mut rng, 4);
        let mut g = Graph::frozen(&store);
        let x = consts(&mut g, &v);
        let (p, w) = enc.diversity_attention(&mut g, &x).unwrap();
        assert!(w.is_none());
        let rows = g.stack(&x).unwrap();
        let (ctx, _) = sa.forward(&mut g, rows, &[true; 4]).unwrap();
        let c = g.value(ctx).data().to_vec();
        let want: Vec<f64> = (0..D).map(|j| (0..4).map(|i| c[i * D + j]).sum::<f64>() / 4.0).collect();
        assert!(close(g.value(p).data(), &want, 1e-15));
    }
}
