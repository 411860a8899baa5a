use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{clip_global_norm, Adam};
use super::sampling::{build_groups, SampleGroup};
use crate::autograd::{Gradients, Graph, ParamStore, Var};
use crate::config::{EvalConfig, OptimizerConfig};
use crate::data::{Dataset, EvalSplit};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_model;
use crate::model::{Mode, D2nn};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the per-batch mean losses.
    pub loss: f64,
    pub batches: usize,
    pub positives: usize,
    pub negatives: usize,
    pub seconds: f64,
    /// Largest pre-clipping gradient norm seen in the epoch.
    pub max_grad_norm: f64,
    /// `NaN` until validation has run, or when the split is empty.
    pub val_auc: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str =
        "epoch,loss,batches,positives,negatives,seconds,max_grad_norm,val_auc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{},{}",
            self.epoch,
            self.loss,
            self.batches,
            self.positives,
            self.negatives,
            self.seconds,
            self.max_grad_norm,
            self.val_auc
        )
    }
}

/// Mean loss of a batch and its gradients. News items are encoded once per
/// batch and shared by every history and candidate slot that names them.
pub fn batch_gradients(
    model: &D2nn,
    store: &ParamStore,
    dataset: &Dataset,
    groups: &[SampleGroup],
    mode: &mut Mode,
) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(store);
    let loss = batch_loss(model, &mut g, dataset, groups, mode)?;
    let value = g.value(loss).item()?;
    Ok((value, g.backward(loss)?))
}

/// Builds the batch-mean loss on `g`.
pub fn batch_loss(
    model: &D2nn,
    g: &mut Graph,
    dataset: &Dataset,
    groups: &[SampleGroup],
    mode: &mut Mode,
) -> Result<Var> {
    if groups.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut encoded: HashMap<usize, Var> = HashMap::new();
    let mut encode = |g: &mut Graph, n: usize, mode: &mut Mode| -> Result<Var> {
        if let Some(v) = encoded.get(&n) {
            return Ok(*v);
        }
        let v = model.encode_news(g, &dataset.catalog, n, mode)?.vector;
        encoded.insert(n, v);
        Ok(v)
    };
    let mut losses = Vec::with_capacity(groups.len());
    let mut samples = 0usize;
    for group in groups {
        let timeline = &dataset.timelines[group.timeline];
        let history = timeline.clicks[..group.position]
            .iter()
            .map(|c| encode(g, c.news, mode))
            .collect::<Result<Vec<_>>>()?;
        let reader = model.encode_reader(g, &history)?;
        let (cands, labels) = group.candidates();
        let cand_vars = cands
            .iter()
            .map(|n| encode(g, *n, mode))
            .collect::<Result<Vec<_>>>()?;
        let rho = model.score(g, reader.vector, &cand_vars)?;
        losses.push(g.nll(rho, &labels)?);
        samples += labels.len();
    }
    let parts = losses.iter().map(|l| g.reshape(*l, &[1])).collect::<Result<Vec<_>>>()?;
    let stacked = g.concat(&parts)?;
    let total = g.sum(stacked)?;
    g.scale(total, 1.0 / samples as f64)
}

/// Splits shuffled groups into batches of at most `batch_size` samples.
/// A group never straddles two batches.
pub fn batches(groups: &[SampleGroup], batch_size: usize) -> Vec<&[SampleGroup]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut size = 0;
    for (i, gr) in groups.iter().enumerate() {
        if size > 0 && size + gr.len() > batch_size {
            out.push(&groups[start..i]);
            start = i;
            size = 0;
        }
        size += gr.len();
    }
    if start < groups.len() {
        out.push(&groups[start..]);
    }
    out
}

/// One pass over freshly sampled, shuffled training groups.
pub fn train_epoch(
    model: &D2nn,
    store: &mut ParamStore,
    adam: &mut Adam,
    dataset: &Dataset,
    cfg: &OptimizerConfig,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    let started = Instant::now();
    let mut groups = build_groups(dataset, cfg.neg_ratio, rng);
    if groups.is_empty() {
        return Err(Error::Contract("no training samples: every reader has fewer than two training clicks".into()));
    }
    groups.shuffle(rng);
    let mut loss_sum = 0.0;
    let mut max_norm = 0.0f64;
    let parts = batches(&groups, cfg.batch_size);
    for batch in &parts {
        let (loss, mut grads) = batch_gradients(model, store, dataset, batch, &mut Mode::Train(rng))?;
        max_norm = max_norm.max(clip_global_norm(&mut grads, cfg.clip_norm));
        adam.step(store, &grads)?;
        loss_sum += loss;
    }
    let negatives: usize = groups.iter().map(|g| g.negatives.len()).sum();
    Ok(EpochStats {
        epoch,
        loss: loss_sum / parts.len() as f64,
        batches: parts.len(),
        positives: groups.len(),
        negatives,
        seconds: started.elapsed().as_secs_f64(),
        max_grad_norm: max_norm,
        val_auc: f64::NAN,
    })
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

/// Trains with early stopping on validation AUC and leaves the best
/// epoch's parameters in `store`. `on_epoch` sees each epoch's stats, the
/// current parameters, and whether they are the new best.
pub fn fit(
    model: &D2nn,
    store: &mut ParamStore,
    dataset: &Dataset,
    opt: &OptimizerConfig,
    eval: &EvalConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochStats, &ParamStore, bool) -> Result<()>,
) -> Result<FitReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(opt, store);
    let has_validation = !dataset.eval_cases(EvalSplit::Validation, 1, seed).is_empty();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut stale = 0;
    let mut epochs = Vec::new();
    for epoch in 1..=opt.max_epochs {
        let mut stats = train_epoch(model, store, &mut adam, dataset, opt, epoch, &mut rng)?;
        if has_validation {
            stats.val_auc = evaluate_model(model, store, dataset, EvalSplit::Validation, eval, seed)?.auc;
        }
        let improved = match &best {
            None => true,
            Some((_, b, _)) => !has_validation || stats.val_auc > *b,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}, val auc {:.4}, {:.1}s",
            stats.loss,
            stats.val_auc,
            stats.seconds
        );
        on_epoch(&stats, store, improved)?;
        epochs.push(stats.clone());
        if improved {
            best = Some((epoch, stats.val_auc, store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= opt.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let (best_epoch, best_val_auc, params) = best.expect("at least one epoch runs");
    *store = params;
    Ok(FitReport {
        epochs,
        best_epoch,
        best_val_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::data::{generate_synthetic, NewsCatalog, SyntheticConfig};
    use crate::model::ModelDims;
    use crate::variant::Variant;

    fn tiny() -> (D2nn, ParamStore, Dataset) {
        let syn = SyntheticConfig {
            news: 60,
            readers: 8,
            sessions_per_reader: 2,
            session_length: 3,
            impression_size: 6,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&syn, 2).unwrap();
        let catalog = NewsCatalog::build(d.news, 1, 6, 8).unwrap();
        let ds = Dataset::new(catalog, &d.impressions);
        let cfg = ModelConfig {
            dim: 6,
            filters: 6,
            attention_dim: 4,
            ..ModelConfig::default()
        };
        let (m, s) = D2nn::init(&cfg, Variant::default(), ModelDims::of(&ds.catalog), None, 2).unwrap();
        (m, s, ds)
    }

    fn group(n: usize) -> SampleGroup {
        SampleGroup {
            timeline: 0,
            position: 1,
            positive: 0,
            negatives: vec![1; n],
        }
    }

    #[test]
    fn batches_keep_groups_whole() {
        // Group sizes 6, 6, 3, 6, 1.
        let groups: Vec<SampleGroup> = [5, 5, 2, 5, 0].iter().map(|n| group(*n)).collect();
        let sizes: Vec<usize> = batches(&groups, 12).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [2, 3]);
        // A group larger than the batch still gets a batch of its own.
        let sizes: Vec<usize> = batches(&groups, 3).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [1, 1, 1, 1, 1]);
        assert!(batches(&[], 4).is_empty());
    }

    #[test]
    fn empty_batch_is_a_contract_error() {
        let (m, s, ds) = tiny();
        let r = batch_gradients(&m, &s, &ds, &[], &mut Mode::Eval);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn batch_loss_is_the_mean_over_samples() {
        let (m, s, ds) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let groups = build_groups(&ds, 5, &mut rng);
        let (loss, _) = batch_gradients(&m, &s, &ds, &groups[..3], &mut Mode::Eval).unwrap();
        // Recompute each group separately and average by sample count.
        let mut total = 0.0;
        let mut count = 0;
        for gr in &groups[..3] {
            let (l, _) = batch_gradients(&m, &s, &ds, std::slice::from_ref(gr), &mut Mode::Eval).unwrap();
            total += l * gr.len() as f64;
            count += gr.len();
        }
        assert!((loss - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (m, mut s, ds) = tiny();
        let before = s.clone();
        let opt = OptimizerConfig {
            learning_rate: 0.0,
            batch_size: 16,
            ..OptimizerConfig::default()
        };
        let mut adam = Adam::new(&opt, &s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = train_epoch(&m, &mut s, &mut adam, &ds, &opt, 1, &mut rng).unwrap();
        assert_eq!(stats.negatives, 5 * stats.positives);
        for ((_, a), (_, b)) in before.iter().zip(s.iter()) {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }

    #[test]
    fn fit_keeps_the_best_epoch() {
        let (m, mut s, ds) = tiny();
        let opt = OptimizerConfig {
            batch_size: 16,
            max_epochs: 3,
            ..OptimizerConfig::default()
        };
        let mut seen = Vec::new();
        let mut hook = |st: &EpochStats, _: &ParamStore, improved: bool| {
            seen.push((st.epoch, improved));
            Ok(())
        };
        let eval = EvalConfig {
            dissimilarity: crate::config::Dissimilarity::CategoryJaccard,
            ..EvalConfig::default()
        };
        let rep = fit(&m, &mut s, &ds, &opt, &eval, 4, &mut hook).unwrap();
        assert_eq!(seen.len(), rep.epochs.len());
        assert!(seen[0].1);
        let best = rep
            .epochs
            .iter()
            .map(|e| e.val_auc)
            .fold(f64::MIN, f64::max);
        assert_eq!(rep.best_val_auc, best);
        assert!(rep.epochs.iter().all(|e| e.loss.is_finite() && e.batches > 0));
    }

    #[test]
    fn csv_row_matches_header() {
        let st = EpochStats {
            epoch: 2,
            loss: 0.5,
            batches: 3,
            positives: 4,
            negatives: 20,
            seconds: 1.23456,
            max_grad_norm: 0.7,
            val_auc: f64::NAN,
        };
        assert_eq!(st.csv_row(), "2,0.5,3,4,20,1.235,0.7,NaN");
        assert_eq!(EpochStats::CSV_HEADER.split(',').count(), st.csv_row().split(',').count());
    }
}
