//! Scores held-out ranking problems and aggregates them into a report.

use crate::autograd::ParamStore;
use crate::config::{Dissimilarity, EvalConfig};
use crate::data::{Dataset, EvalCase, EvalSplit};
use crate::error::{Error, Result};
use crate::metrics::{cosine_dissimilarity, jaccard_dissimilarity, MetricsReport, RankedItem, RankedList};
use crate::model::D2nn;
use crate::training::score;

/// Scores every candidate of an evaluation case.
pub trait Scorer {
    fn score_case(&mut self, dataset: &Dataset, case: &EvalCase) -> Result<Vec<f64>>;
}

/// A trained model with every catalog item encoded once up front.
pub struct ModelScorer<'a> {
    pub model: &'a D2nn,
    pub store: &'a ParamStore,
    pub news_vectors: Vec<Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a D2nn, store: &'a ParamStore, dataset: &Dataset) -> Result<Self> {
        Ok(ModelScorer {
            model,
            store,
            news_vectors: model.news_vectors(store, &dataset.catalog)?,
        })
    }
}

impl Scorer for ModelScorer<'_> {
    fn score_case(&mut self, _dataset: &Dataset, case: &EvalCase) -> Result<Vec<f64>> {
        let clicks: Vec<&[f64]> = case.history.iter().map(|n| self.news_vectors[*n].as_slice()).collect();
        let r = self.model.reader_vector(self.store, &clicks)?;
        Ok(case
            .candidates
            .iter()
            .map(|c| score(&r, &self.news_vectors[*c]))
            .collect())
    }
}

impl<F> Scorer for F
where
    F: FnMut(&Dataset, &EvalCase) -> Result<Vec<f64>>,
{
    fn score_case(&mut self, dataset: &Dataset, case: &EvalCase) -> Result<Vec<f64>> {
        self(dataset, case)
    }
}

/// Ranked lists for every case of a split.
pub fn rank_cases(dataset: &Dataset, cases: &[EvalCase], scorer: &mut dyn Scorer) -> Result<Vec<RankedList>> {
    cases
        .iter()
        .map(|case| {
            let scores = scorer.score_case(dataset, case)?;
            if scores.len() != case.candidates.len() {
                return Err(Error::Dimension(format!(
                    "scorer returned {} scores for {} candidates",
                    scores.len(),
                    case.candidates.len()
                )));
            }
            let items = case
                .candidates
                .iter()
                .zip(&scores)
                .zip(&case.labels)
                .map(|((n, s), y)| RankedItem {
                    news: *n,
                    news_id: dataset.catalog.id_of(*n).to_string(),
                    score: *s,
                    label: *y,
                })
                .collect();
            Ok(RankedList::new(dataset.timelines[case.timeline].reader_id.clone(), items))
        })
        .collect()
}

/// Report over ranked lists, with diversity measured on `vectors` (cosine)
/// or on the catalog's taxonomy labels (Jaccard).
pub fn report(
    dataset: &Dataset,
    lists: &[RankedList],
    cfg: &EvalConfig,
    vectors: Option<&[Vec<f64>]>,
) -> Result<MetricsReport> {
    let cat = &dataset.catalog;
    match (cfg.dissimilarity, vectors) {
        (Dissimilarity::Cosine, Some(v)) => MetricsReport::from_lists(lists, &cfg.metric_ks, |l, i, j| {
            cosine_dissimilarity(&v[lists[l].items[i].news], &v[lists[l].items[j].news])
        }),
        (Dissimilarity::Cosine, None) => Err(Error::Contract("cosine diversity needs news vectors".into())),
        (Dissimilarity::CategoryJaccard, _) => MetricsReport::from_lists(lists, &cfg.metric_ks, |l, i, j| {
            let (a, b) = (lists[l].items[i].news, lists[l].items[j].news);
            // Offset subcategory ids so the two label spaces stay disjoint.
            let off = cat.categories.len();
            jaccard_dissimilarity(
                &[cat.category[a], off + cat.subcategory[a]],
                &[cat.category[b], off + cat.subcategory[b]],
            )
        }),
    }
}

/// Full evaluation of a model on one split.
pub fn evaluate_model(
    model: &D2nn,
    store: &ParamStore,
    dataset: &Dataset,
    split: EvalSplit,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let cases = dataset.eval_cases(split, cfg.fallback_negatives, seed);
    if cases.is_empty() {
        return Err(Error::Contract(format!("{split:?} split has no readers with enough clicks")));
    }
    let mut scorer = ModelScorer::new(model, store, dataset)?;
    let lists = rank_cases(dataset, &cases, &mut scorer)?;
    report(dataset, &lists, cfg, Some(&scorer.news_vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, NewsCatalog, SyntheticConfig};
    use crate::metrics::tradeoff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset_with(readers: usize) -> Dataset {
        let cfg = SyntheticConfig { readers, ..SyntheticConfig::default() };
        let d = generate_synthetic(&cfg, 3).unwrap();
        let catalog = NewsCatalog::build(d.news, 1, 8, 16).unwrap();
        Dataset::new(catalog, &d.impressions)
    }

    fn dataset() -> Dataset {
        dataset_with(200)
    }

    fn jaccard() -> EvalConfig {
        EvalConfig {
            dissimilarity: Dissimilarity::CategoryJaccard,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn perfect_scorer_is_perfect() {
        let ds = dataset();
        let cases = ds.eval_cases(EvalSplit::Test, 49, 1);
        assert!(!cases.is_empty());
        let mut oracle = |_: &Dataset, c: &EvalCase| Ok(c.labels.iter().map(|y| *y as f64).collect());
        let lists = rank_cases(&ds, &cases, &mut oracle).unwrap();
        let r = report(&ds, &lists, &jaccard(), None).unwrap();
        assert_eq!(r.auc, 1.0);
        assert!(r.ndcg.iter().all(|v| *v == 1.0));
        assert_eq!(r.rmse, 0.0);
    }

    #[test]
    fn random_scorer_is_near_half() {
        // 2000 positives keep the AUC's sampling spread near 0.006.
        let ds = dataset_with(2000);
        let cases = ds.eval_cases(EvalSplit::Test, 49, 1);
        // AUC is global, so every positive pairs with every negative.
        let labels: Vec<u8> = cases.iter().flat_map(|c| c.labels.clone()).collect();
        let p = labels.iter().filter(|y| **y == 1).count();
        assert!(p * (labels.len() - p) >= 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut random = |_: &Dataset, c: &EvalCase| Ok(c.candidates.iter().map(|_| rng.gen::<f64>()).collect());
        let lists = rank_cases(&ds, &cases, &mut random).unwrap();
        let r = report(&ds, &lists, &jaccard(), None).unwrap();
        assert!((r.auc - 0.5).abs() < 0.02, "{}", r.auc);
        assert_eq!(r.tradeoff, tradeoff(r.mean_ndcg, r.mean_div));
    }

    #[test]
    fn wrong_score_count_is_rejected() {
        let ds = dataset();
        let cases = ds.eval_cases(EvalSplit::Validation, 49, 1);
        let mut short = |_: &Dataset, _: &EvalCase| Ok(vec![0.5]);
        assert!(matches!(rank_cases(&ds, &cases, &mut short), Err(Error::Dimension(_))));
        let lists = rank_cases(&ds, &cases[..1], &mut |_: &Dataset, c: &EvalCase| Ok(vec![0.5; c.candidates.len()])).unwrap();
        assert!(matches!(report(&ds, &lists, &EvalConfig::default(), None), Err(Error::Contract(_))));
    }
}
