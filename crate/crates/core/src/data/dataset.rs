//! Index-based view of a loaded corpus used by training and evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::behaviors::ImpressionRecord;
use super::news::NewsItem;
use super::split::{train_prefix_len, MIN_HELD_OUT_CLICKS};
use super::vocab::{build_vocabulary, Vocabulary};
use crate::error::{Error, Result};

/// News items with token and taxonomy ids resolved.
#[derive(Clone, Debug)]
pub struct NewsCatalog {
    pub items: Vec<NewsItem>,
    index: HashMap<String, usize>,
    /// Headline ids, PAD-filled to the configured length.
    pub headline: Vec<Vec<usize>>,
    pub snippet: Vec<Vec<usize>>,
    pub category: Vec<usize>,
    pub subcategory: Vec<usize>,
    pub vocab: Vocabulary,
    pub categories: Vocabulary,
    pub subcategories: Vocabulary,
}

impl NewsCatalog {
    pub fn build(
        items: Vec<NewsItem>,
        min_count: usize,
        headline_len: usize,
        snippet_len: usize,
    ) -> Result<Self> {
        let vocab = build_vocabulary(&items, min_count)?;
        let categories = Vocabulary::from_labels(items.iter().map(|n| n.category.as_str()));
        let subcategories = Vocabulary::from_labels(items.iter().map(|n| n.subcategory.as_str()));
        let mut index = HashMap::with_capacity(items.len());
        for (i, n) in items.iter().enumerate() {
            if index.insert(n.news_id.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate news id {}", n.news_id)));
            }
        }
        Ok(NewsCatalog {
            headline: items.iter().map(|n| vocab.encode(&n.headline_tokens, headline_len)).collect(),
            snippet: items.iter().map(|n| vocab.encode(&n.snippet_tokens, snippet_len)).collect(),
            category: items.iter().map(|n| categories.id(&n.category)).collect(),
            subcategory: items.iter().map(|n| subcategories.id(&n.subcategory)).collect(),
            items,
            index,
            vocab,
            categories,
            subcategories,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_of(&self, news_id: &str) -> Option<usize> {
        self.index.get(news_id).copied()
    }

    pub fn id_of(&self, news: usize) -> &str {
        &self.items[news].news_id
    }
}

/// A click and the unclicked candidates shown alongside it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClickEvent {
    pub news: usize,
    pub time: i64,
    /// Unclicked candidates of the same impression; empty when the click
    /// came from a history column.
    pub negatives: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timeline {
    pub reader_id: String,
    pub clicks: Vec<ClickEvent>,
}

impl Timeline {
    pub fn clicked(&self) -> HashSet<usize> {
        self.clicks.iter().map(|c| c.news).collect()
    }

    /// Number of leading clicks that belong to the training split.
    pub fn train_len(&self) -> usize {
        train_prefix_len(self.clicks.len())
    }

    pub fn history(&self, upto: usize) -> Vec<usize> {
        self.clicks[..upto].iter().map(|c| c.news).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Validation,
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(EvalSplit::Validation),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One reader's ranking problem at a held-out click.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalCase {
    pub timeline: usize,
    pub history: Vec<usize>,
    pub candidates: Vec<usize>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub catalog: NewsCatalog,
    pub timelines: Vec<Timeline>,
    /// Clicks or candidates naming news absent from the catalog.
    pub unknown_news: usize,
}

impl Dataset {
    /// Resolves impressions against the catalog into per-reader timelines,
    /// following the same merge rule as
    /// [`reader_histories`](super::split::reader_histories).
    pub fn new(catalog: NewsCatalog, impressions: &[ImpressionRecord]) -> Self {
        let mut by_reader: BTreeMap<&str, Vec<&ImpressionRecord>> = BTreeMap::new();
        for r in impressions {
            by_reader.entry(&r.reader_id).or_default().push(r);
        }
        let mut unknown = 0usize;
        let mut resolve = |id: &str| {
            let found = catalog.index_of(id);
            if found.is_none() {
                unknown += 1;
            }
            found
        };
        let mut timelines = Vec::with_capacity(by_reader.len());
        for (reader, mut recs) in by_reader {
            recs.sort_by_key(|r| r.time);
            let mut clicks: Vec<ClickEvent> = recs[0]
                .history
                .iter()
                .filter_map(|id| resolve(id))
                .map(|news| ClickEvent {
                    news,
                    time: recs[0].time,
                    negatives: Vec::new(),
                })
                .collect();
            for r in &recs {
                let negatives: Vec<usize> = r.negatives().filter_map(|id| resolve(id)).collect();
                for pos in r.positives() {
                    if let Some(news) = resolve(pos) {
                        clicks.push(ClickEvent {
                            news,
                            time: r.time,
                            negatives: negatives.clone(),
                        });
                    }
                }
            }
            timelines.push(Timeline {
                reader_id: reader.to_string(),
                clicks,
            });
        }
        if unknown > 0 {
            log::warn!("{unknown} news references not found in the catalog were dropped");
        }
        Dataset {
            catalog,
            timelines,
            unknown_news: unknown,
        }
    }

    pub fn click_count(&self) -> usize {
        self.timelines.iter().map(|t| t.clicks.len()).sum()
    }

    /// Ranking problems for the held-out click of every reader with at
    /// least three clicks. The pool is the impression's unclicked
    /// candidates when there are any, otherwise `fallback_negatives` catalog
    /// items drawn with `seed`. The reader's own clicks never appear as
    /// negatives.
    pub fn eval_cases(&self, split: EvalSplit, fallback_negatives: usize, seed: u64) -> Vec<EvalCase> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..self.catalog.len()).collect();
        let mut out = Vec::new();
        for (ti, t) in self.timelines.iter().enumerate() {
            let n = t.clicks.len();
            if n < MIN_HELD_OUT_CLICKS {
                continue;
            }
            let pos = match split {
                EvalSplit::Validation => n - 2,
                EvalSplit::Test => n - 1,
            };
            let click = &t.clicks[pos];
            let clicked = t.clicked();
            let mut seen = HashSet::new();
            let mut negatives: Vec<usize> = click
                .negatives
                .iter()
                .copied()
                .filter(|m| !clicked.contains(m) && seen.insert(*m))
                .collect();
            if negatives.is_empty() {
                let eligible: Vec<usize> = all.iter().copied().filter(|m| !clicked.contains(m)).collect();
                negatives = eligible
                    .choose_multiple(&mut rng, fallback_negatives.min(eligible.len()))
                    .copied()
                    .collect();
            }
            let mut candidates = vec![click.news];
            candidates.extend(&negatives);
            let mut labels = vec![0u8; candidates.len()];
            labels[0] = 1;
            out.push(EvalCase {
                timeline: ti,
                history: t.history(pos),
                candidates,
                labels,
            });
        }
        out
    }
}
