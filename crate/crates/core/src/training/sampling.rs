//! Negative sampling: each observed click is paired with `ratio` unclicked
//! candidates from the same impression, topped up from the catalog.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, ImpressionRecord};

/// One labelled (history, candidate) pair at the news-id level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingSample {
    pub history: Vec<String>,
    pub candidate: String,
    pub label: u8,
}

/// Draws up to `ratio` items from `pool` without replacement, then tops up
/// from `catalog`. Nothing in `exclude` or already drawn is ever returned.
pub fn draw_negatives<T, R>(pool: &[T], catalog: &[T], exclude: &HashSet<T>, ratio: usize, rng: &mut R) -> Vec<T>
where
    T: Clone + Eq + std::hash::Hash,
    R: Rng + ?Sized,
{
    let mut seen: HashSet<&T> = HashSet::new();
    let eligible: Vec<&T> = pool.iter().filter(|m| !exclude.contains(*m) && seen.insert(*m)).collect();
    let mut out: Vec<T> = eligible.choose_multiple(rng, ratio.min(eligible.len())).map(|m| (*m).clone()).collect();
    if out.len() < ratio && !catalog.is_empty() {
        let mut taken: HashSet<T> = out.iter().cloned().collect();
        // Rejection draws first; a full scan only when those come up short,
        // which keeps the top-up cheap for large catalogs.
        for _ in 0..20 * ratio {
            if out.len() == ratio {
                break;
            }
            let m = &catalog[rng.gen_range(0..catalog.len())];
            if !exclude.contains(m) && taken.insert(m.clone()) {
                out.push(m.clone());
            }
        }
        if out.len() < ratio {
            let mut seen = HashSet::new();
            let rest: Vec<&T> = catalog
                .iter()
                .filter(|m| !exclude.contains(*m) && !taken.contains(*m) && seen.insert(*m))
                .collect();
            let extra: Vec<T> = rest
                .choose_multiple(rng, (ratio - out.len()).min(rest.len()))
                .map(|m| (*m).clone())
                .collect();
            out.extend(extra);
        }
    }
    out
}

/// Samples for every clicked candidate of one impression: the click with
/// label 1 followed by `ratio` label-0 candidates. `reader_clicks` holds
/// every news the reader clicked anywhere; none of them become negatives.
/// An impression without clicks yields nothing.
pub fn sample_negatives<R: Rng + ?Sized>(
    impression: &ImpressionRecord,
    ratio: usize,
    catalog: &[String],
    reader_clicks: &HashSet<String>,
    rng: &mut R,
) -> Vec<TrainingSample> {
    let pool: Vec<String> = impression.negatives().map(str::to_string).collect();
    let mut exclude = reader_clicks.clone();
    exclude.extend(impression.positives().map(str::to_string));
    let mut out = Vec::new();
    for pos in impression.positives() {
        out.push(TrainingSample {
            history: impression.history.clone(),
            candidate: pos.to_string(),
            label: 1,
        });
        for neg in draw_negatives(&pool, catalog, &exclude, ratio, rng) {
            out.push(TrainingSample {
                history: impression.history.clone(),
                candidate: neg,
                label: 0,
            });
        }
    }
    if out.is_empty() {
        log::debug!("impression {} has no click; skipped", impression.impression_id);
    }
    out
}

/// A click in a reader's training prefix with its drawn negatives. The
/// history is the reader's clicks before `position`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleGroup {
    pub timeline: usize,
    pub position: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

impl SampleGroup {
    pub fn len(&self) -> usize {
        1 + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Candidates with the positive first, and their labels.
    pub fn candidates(&self) -> (Vec<usize>, Vec<f64>) {
        let mut c = vec![self.positive];
        c.extend(&self.negatives);
        let mut l = vec![0.0; c.len()];
        l[0] = 1.0;
        (c, l)
    }
}

/// One group per training-prefix click that has at least one earlier
/// click, negatives drawn afresh from `rng`.
pub fn build_groups<R: Rng + ?Sized>(dataset: &Dataset, ratio: usize, rng: &mut R) -> Vec<SampleGroup> {
    let catalog: Vec<usize> = (0..dataset.catalog.len()).collect();
    let mut groups = Vec::new();
    for (ti, t) in dataset.timelines.iter().enumerate() {
        let clicked = t.clicked();
        for position in 1..t.train_len() {
            let click = &t.clicks[position];
            let negatives = draw_negatives(&click.negatives, &catalog, &clicked, ratio, rng);
            groups.push(SampleGroup {
                timeline: ti,
                position,
                positive: click.news,
                negatives,
            });
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn imp(cands: &[(&str, u8)]) -> ImpressionRecord {
        ImpressionRecord {
            impression_id: "1".into(),
            reader_id: "U1".into(),
            time: 0,
            history: vec!["N0".into()],
            candidates: cands.iter().map(|(n, l)| (n.to_string(), *l)).collect(),
        }
    }

    #[test]
    fn forced_set() {
        let r = imp(&[("P", 1), ("A", 0), ("B", 0), ("C", 0), ("D", 0), ("E", 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_negatives(&r, 5, &[], &HashSet::new(), &mut rng);
        let mut negs: Vec<_> = s.iter().filter(|x| x.label == 0).map(|x| x.candidate.as_str()).collect();
        negs.sort();
        assert_eq!(negs, ["A", "B", "C", "D", "E"]);
        assert_eq!(s[0].candidate, "P");
    }

    #[test]
    fn catalog_top_up_skips_clicks() {
        let r = imp(&[("P", 1), ("A", 0)]);
        let catalog: Vec<String> = ["A", "P", "N0", "X", "Y", "Z"].iter().map(|s| s.to_string()).collect();
        let clicks: HashSet<String> = ["N0".to_string()].into();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_negatives(&r, 3, &catalog, &clicks, &mut rng);
        let negs: Vec<_> = s.iter().filter(|x| x.label == 0).map(|x| x.candidate.clone()).collect();
        assert_eq!(negs.len(), 3);
        assert!(negs.contains(&"A".to_string()));
        for n in &negs {
            assert!(n != "P" && n != "N0");
        }
        let uniq: HashSet<_> = negs.iter().collect();
        assert_eq!(uniq.len(), 3);
    }

    #[test]
    fn no_click_no_samples() {
        let r = imp(&[("A", 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_negatives(&r, 5, &[], &HashSet::new(), &mut rng).is_empty());
    }
}
