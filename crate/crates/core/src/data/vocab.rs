use std::collections::HashMap;

use super::news::NewsItem;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Token ↔ id map with PAD = 0 and UNK = 1 reserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary over `tokens` in the given order, after PAD and UNK.
    /// Repeated tokens keep their first position.
    pub fn from_ordered<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) && t != PAD_TOKEN && t != UNK_TOKEN {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    /// Label vocabulary (categories, subcategories) in sorted order.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut sorted: Vec<&str> = labels.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        Vocabulary::from_ordered(sorted)
    }

    /// Id of `token`, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Number of ids including PAD and UNK.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids for `tokens`, truncated or PAD-filled to exactly `len`.
    pub fn encode(&self, tokens: &[String], len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().take(len).map(|t| self.id(t)).collect();
        ids.resize(len, PAD);
        ids
    }

    /// CRC-32 over the id-ordered token list.
    pub fn fingerprint(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(&[0]);
        }
        h.finalize()
    }
}

/// Builds the word vocabulary from headline and snippet tokens.
///
/// Tokens seen at least `min_count` times get ids in descending frequency,
/// ties broken lexicographically; the rest fall back to UNK.
pub fn build_vocabulary(corpus: &[NewsItem], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Contract("cannot build a vocabulary from no news".into()));
    }
    if min_count == 0 {
        return Err(Error::Contract("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for n in corpus {
        for t in n.headline_tokens.iter().chain(&n.snippet_tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(Vocabulary::from_ordered(kept.into_iter().map(|(t, _)| t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(title: &str) -> NewsItem {
        NewsItem::new("N", "c", "s", title, "")
    }

    #[test]
    fn threshold() {
        let v = build_vocabulary(&[item("a a a b")], 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), UNK);
        let all = build_vocabulary(&[item("a a a b")], 1).unwrap();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(build_vocabulary(&[], 1), Err(Error::Contract(_))));
    }

    #[test]
    fn encode_pads_and_truncates() {
        let v = Vocabulary::from_ordered(["x", "y"]);
        let toks: Vec<String> = ["y", "z", "x"].iter().map(|s| s.to_string()).collect();
        assert_eq!(v.encode(&toks, 5), [3, UNK, 2, PAD, PAD]);
        assert_eq!(v.encode(&toks, 2), [3, UNK]);
    }
}
