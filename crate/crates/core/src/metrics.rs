//! Accuracy and diversity metrics over ranked candidate lists.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Root-mean-square error of predictions against 0/1 labels.
pub fn rmse(pairs: &[(f64, u8)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("rmse of an empty set".into()));
    }
    let se: f64 = pairs.iter().map(|(p, y)| (p - f64::from(*y)).powi(2)).sum();
    Ok((se / pairs.len() as f64).sqrt())
}

/// Area under the ROC curve: the share of (positive, negative) pairs in
/// which the positive scores higher, ties counting one half. `None` when
/// either class is absent.
pub fn auc(pairs: &[(f64, u8)]) -> Option<f64> {
    let mut sorted: Vec<(f64, u8)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut pos, mut neg) = (0u64, 0u64);
    for (_, y) in &sorted {
        if *y > 0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    // Walk tie blocks in ascending score order, counting the negatives
    // strictly below each block.
    let mut wins = 0.0f64;
    let mut below = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut bp, mut bn) = (0u64, 0u64);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 > 0 {
                bp += 1;
            } else {
                bn += 1;
            }
            j += 1;
        }
        wins += bp as f64 * below as f64 + 0.5 * (bp * bn) as f64;
        below += bn;
        i = j;
    }
    Some(wins / (pos as f64 * neg as f64))
}

/// NDCG at `k` for binary relevance given in rank order. Zero when nothing
/// is relevant.
pub fn ndcg_at_k(labels: &[u8], k: usize) -> f64 {
    let m = k.min(labels.len());
    let dcg: f64 = labels[..m]
        .iter()
        .enumerate()
        .filter(|(_, y)| **y > 0)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let relevant = labels.iter().filter(|y| **y > 0).count().min(m);
    let idcg: f64 = (0..relevant).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// One minus cosine similarity, clamped to [0, 1]. A zero vector is fully
/// dissimilar to everything.
pub fn cosine_dissimilarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 1.0)
}

/// One minus the Jaccard overlap of two label sets.
pub fn jaccard_dissimilarity(a: &[usize], b: &[usize]) -> f64 {
    let union: std::collections::BTreeSet<_> = a.iter().chain(b).collect();
    if union.is_empty() {
        return 0.0;
    }
    let inter = a.iter().collect::<std::collections::BTreeSet<_>>().intersection(&b.iter().collect()).count();
    1.0 - inter as f64 / union.len() as f64
}

/// Mean pairwise dissimilarity among the first `min(k, n)` of `n` ranked
/// items. `None` when fewer than two items are in range.
pub fn div_at_k_with(n: usize, k: usize, dissim: impl Fn(usize, usize) -> f64) -> Option<f64> {
    let m = k.min(n);
    if m < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            total += dissim(i, j);
        }
    }
    Some(2.0 * total / (m * (m - 1)) as f64)
}

/// Cosine diversity of the top `k` representations, given in rank order.
pub fn div_at_k(reps: &[&[f64]], k: usize) -> Option<f64> {
    div_at_k_with(reps.len(), k, |i, j| cosine_dissimilarity(reps[i], reps[j]))
}

/// Harmonic mean of accuracy and diversity; zero when both are zero.
pub fn tradeoff(accuracy: f64, diversity: f64) -> f64 {
    let s = accuracy + diversity;
    if s == 0.0 {
        0.0
    } else {
        2.0 * accuracy * diversity / s
    }
}

/// A candidate in a ranked list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedItem {
    pub news: usize,
    pub news_id: String,
    pub score: f64,
    pub label: u8,
}

/// Candidates ordered by descending score, ties by ascending news id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub reader_id: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn new(reader_id: impl Into<String>, mut items: Vec<RankedItem>) -> Self {
        items.sort_by(|a, b| match b.score.total_cmp(&a.score) {
            Ordering::Equal => a.news_id.cmp(&b.news_id),
            o => o,
        });
        RankedList {
            reader_id: reader_id.into(),
            items,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|i| i.label).collect()
    }
}

/// Summary metrics of one evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    /// `NaN` when the split holds only one class.
    pub auc: f64,
    pub ks: Vec<usize>,
    pub ndcg: Vec<f64>,
    pub div: Vec<f64>,
    pub mean_ndcg: f64,
    pub mean_div: f64,
    pub tradeoff: f64,
    pub readers: usize,
    /// Readers left out of the DIV mean at each k (fewer than two items).
    pub div_skipped: Vec<usize>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl MetricsReport {
    /// Aggregates ranked lists. AUC and RMSE pool every scored pair; NDCG
    /// and DIV are averaged over readers. `dissim(list, i, j)` compares
    /// ranks `i` and `j` of list `list`.
    pub fn from_lists(
        lists: &[RankedList],
        ks: &[usize],
        dissim: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        if lists.is_empty() {
            return Err(Error::Contract("no ranked lists to evaluate".into()));
        }
        let pairs: Vec<(f64, u8)> =
            lists.iter().flat_map(|l| l.items.iter().map(|i| (i.score, i.label))).collect();
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let mut ndcg = Vec::with_capacity(ks.len());
        let mut div = Vec::with_capacity(ks.len());
        let mut div_skipped = Vec::with_capacity(ks.len());
        for &k in &ks {
            let per: Vec<f64> = lists.iter().map(|l| ndcg_at_k(&l.labels(), k)).collect();
            ndcg.push(mean(&per));
            let per: Vec<Option<f64>> = lists
                .iter()
                .enumerate()
                .map(|(li, l)| div_at_k_with(l.items.len(), k, |i, j| dissim(li, i, j)))
                .collect();
            let defined: Vec<f64> = per.iter().flatten().copied().collect();
            div_skipped.push(per.len() - defined.len());
            div.push(mean(&defined));
        }
        let mean_ndcg = mean(&ndcg);
        let mean_div = mean(&div);
        Ok(MetricsReport {
            rmse: rmse(&pairs)?,
            auc: auc(&pairs).unwrap_or(f64::NAN),
            ks,
            ndcg,
            div,
            mean_ndcg,
            mean_div,
            tradeoff: tradeoff(mean_ndcg, mean_div),
            readers: lists.len(),
            div_skipped,
        })
    }

    /// `metric,k,value` rows in the fixed order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,k,value\n");
        let _ = writeln!(s, "rmse,,{}", self.rmse);
        let _ = writeln!(s, "auc,,{}", self.auc);
        for (k, v) in self.ks.iter().zip(&self.ndcg) {
            let _ = writeln!(s, "ndcg,{k},{v}");
        }
        for (k, v) in self.ks.iter().zip(&self.div) {
            let _ = writeln!(s, "div,{k},{v}");
        }
        let _ = writeln!(s, "mean_ndcg,,{}", self.mean_ndcg);
        let _ = writeln!(s, "mean_div,,{}", self.mean_div);
        let _ = writeln!(s, "tradeoff,,{}", self.tradeoff);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "metric,k,value" => {}
            _ => return Err(Error::parse(1, "expected header metric,k,value")),
        }
        let mut r = MetricsReport {
            rmse: f64::NAN,
            auc: f64::NAN,
            ks: Vec::new(),
            ndcg: Vec::new(),
            div: Vec::new(),
            mean_ndcg: f64::NAN,
            mean_div: f64::NAN,
            tradeoff: f64::NAN,
            readers: 0,
            div_skipped: Vec::new(),
        };
        let mut div_ks = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in lines {
            let n = i + 1;
            let cols: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            let [metric, k, value] = cols[..] else {
                return Err(Error::parse(n, "expected three columns"));
            };
            if !seen.insert((metric.to_string(), k.to_string())) {
                return Err(Error::parse(n, format!("repeated row {metric},{k}")));
            }
            let value: f64 = value.parse().map_err(|_| Error::parse(n, format!("bad value {value:?}")))?;
            let k_num = || -> Result<usize> {
                k.parse().map_err(|_| Error::parse(n, format!("bad cutoff {k:?}")))
            };
            match metric {
                "rmse" => r.rmse = value,
                "auc" => r.auc = value,
                "mean_ndcg" => r.mean_ndcg = value,
                "mean_div" => r.mean_div = value,
                "tradeoff" => r.tradeoff = value,
                "ndcg" => {
                    r.ks.push(k_num()?);
                    r.ndcg.push(value);
                }
                "div" => {
                    div_ks.push(k_num()?);
                    r.div.push(value);
                }
                other => return Err(Error::parse(n, format!("unknown metric {other:?}"))),
            }
        }
        if div_ks != r.ks {
            return Err(Error::parse(0, "ndcg and div rows name different cutoffs"));
        }
        r.div_skipped = vec![0; r.ks.len()];
        Ok(r)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[(1.0, 1), (0.0, 0)]).unwrap(), 0.0);
        assert_eq!(rmse(&[(1.0, 0), (0.0, 1)]).unwrap(), 1.0);
        assert_eq!(rmse(&[(0.5, 1)]).unwrap(), 0.5);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[(0.9, 1), (0.4, 0), (0.6, 1)]), Some(1.0));
        assert_eq!(auc(&[(0.3, 1), (0.3, 0), (0.3, 0)]), Some(0.5));
        assert_eq!(auc(&[(0.3, 1)]), None);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1, 0, 0], 5), 1.0);
        assert!((ndcg_at_k(&[0, 1], 5) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&[0, 0], 5), 0.0);
        assert_eq!(ndcg_at_k(&[0, 1], 1), 0.0);
    }

    #[test]
    fn div_examples() {
        let a = [1.0, 0.0];
        let b = [0.0, 2.0];
        assert_eq!(div_at_k(&[&a, &a, &a], 5), Some(0.0));
        assert_eq!(div_at_k(&[&a, &b], 5), Some(1.0));
        assert_eq!(div_at_k(&[&a], 5), None);
        assert_eq!(cosine_dissimilarity(&[0.0, 0.0], &a), 1.0);
        assert_eq!(jaccard_dissimilarity(&[1, 2], &[1, 3]), 1.0 - 1.0 / 3.0);
    }

    #[test]
    fn tradeoff_examples() {
        assert!((tradeoff(0.479, 0.572) - 0.521).abs() < 5e-4);
        assert!((tradeoff(0.331, 0.4815) - 0.392).abs() < 5e-4);
        for x in [0.4, 0.123, 1.0] {
            assert!((tradeoff(x, x) - x).abs() < 1e-15);
        }
        assert_eq!(tradeoff(0.0, 0.5), 0.0);
        assert_eq!(tradeoff(0.0, 0.0), 0.0);
    }

    #[test]
    fn tie_break_by_news_id() {
        let item = |id: &str, s| RankedItem {
            news: 0,
            news_id: id.into(),
            score: s,
            label: 0,
        };
        let l = RankedList::new("U", vec![item("N2", 0.5), item("N1", 0.5), item("N3", 0.9)]);
        let ids: Vec<_> = l.items.iter().map(|i| i.news_id.as_str()).collect();
        assert_eq!(ids, ["N3", "N1", "N2"]);
    }
}
