//! Seeded topic-mixture news and click generator.
//!
//! Each topic owns a category, a few subcategories, and a private word
//! list; a shared word list adds noise to every article. Each reader has a
//! long-term topic mixture peaked on one favourite topic. Every session
//! either follows that mixture (with probability `mixing_weight`) or drifts
//! to a mixture peaked on a uniformly drawn topic. Clicks are drawn from
//! the session mixture; each click becomes one impression whose unclicked
//! candidates are drawn from the complement of the session mixture.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::behaviors::ImpressionRecord;
use super::news::NewsItem;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub news: usize,
    pub readers: usize,
    pub sessions_per_reader: usize,
    pub session_length: usize,
    /// Probability that a session follows the reader's long-term mixture.
    pub mixing_weight: f64,
    /// Mass spread over non-peak topics in every mixture.
    pub topic_noise: f64,
    /// Candidates per impression, the clicked one included.
    pub impression_size: usize,
    pub words_per_topic: usize,
    pub shared_words: usize,
    pub subcategories_per_topic: usize,
    /// Probability that a word comes from the article's topic list.
    pub topic_word_share: f64,
    pub headline_words: [usize; 2],
    pub snippet_words: [usize; 2],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics: 2,
            news: 500,
            readers: 200,
            sessions_per_reader: 3,
            session_length: 5,
            mixing_weight: 0.7,
            topic_noise: 0.02,
            impression_size: 20,
            words_per_topic: 40,
            shared_words: 20,
            subcategories_per_topic: 3,
            topic_word_share: 0.8,
            headline_words: [4, 8],
            snippet_words: [8, 16],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic: {m}")));
        if self.topics < 2 {
            return bad(format!("need at least 2 topics, got {}", self.topics));
        }
        if self.news < self.topics {
            return bad("fewer news items than topics".into());
        }
        if self.readers == 0 || self.sessions_per_reader == 0 || self.session_length == 0 {
            return bad("readers, sessions, and session length must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mixing_weight) {
            return bad(format!("mixing_weight {} outside [0, 1]", self.mixing_weight));
        }
        if !(0.0..1.0).contains(&self.topic_noise) {
            return bad(format!("topic_noise {} outside [0, 1)", self.topic_noise));
        }
        if !(0.0..=1.0).contains(&self.topic_word_share) {
            return bad("topic_word_share outside [0, 1]".into());
        }
        if self.impression_size < 2 {
            return bad("impression_size must be at least 2".into());
        }
        if self.words_per_topic == 0 || self.subcategories_per_topic == 0 {
            return bad("each topic needs words and subcategories".into());
        }
        for (name, [lo, hi]) in [("headline_words", self.headline_words), ("snippet_words", self.snippet_words)] {
            if lo > hi || hi == 0 {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        let clicks = self.sessions_per_reader * self.session_length;
        if clicks + self.impression_size > self.news {
            return bad("catalog too small for one reader's clicks plus an impression".into());
        }
        Ok(())
    }
}

/// Generated data plus the hidden structure that produced it.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub news: Vec<NewsItem>,
    pub impressions: Vec<ImpressionRecord>,
    /// Topic of each news item, aligned with `news`.
    pub news_topic: Vec<usize>,
    /// Long-term mixture per reader (reader `r` is `U{r+1}`).
    pub long_term: Vec<Vec<f64>>,
    /// Mixture of every session, per reader.
    pub sessions: Vec<Vec<Vec<f64>>>,
}

const BASE_TIME: i64 = 1_600_000_000;

fn peaked(topics: usize, peak: usize, noise: f64) -> Vec<f64> {
    let rest = noise / (topics - 1) as f64;
    (0..topics).map(|t| if t == peak { 1.0 - noise } else { rest }).collect()
}

fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn words<R: Rng>(cfg: &SyntheticConfig, topic: usize, range: [usize; 2], rng: &mut R) -> String {
    let n = rng.gen_range(range[0]..=range[1]);
    (0..n)
        .map(|_| {
            if cfg.shared_words == 0 || rng.gen::<f64>() < cfg.topic_word_share {
                format!("t{topic}w{}", rng.gen_range(0..cfg.words_per_topic))
            } else {
                format!("common{}", rng.gen_range(0..cfg.shared_words))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pure function of `(cfg, seed)`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_count = cfg.topics;

    let mut news = Vec::with_capacity(cfg.news);
    let mut news_topic = Vec::with_capacity(cfg.news);
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); t_count];
    for n in 0..cfg.news {
        let topic = n % t_count;
        let sub = rng.gen_range(0..cfg.subcategories_per_topic);
        let title = words(cfg, topic, cfg.headline_words, &mut rng);
        let snippet = words(cfg, topic, cfg.snippet_words, &mut rng);
        let mut item = NewsItem::new(
            format!("N{}", n + 1),
            format!("topic{topic}"),
            format!("topic{topic}-sub{sub}"),
            title,
            snippet,
        );
        item.publication_time = Some(BASE_TIME - 86_400 + n as i64 * 60);
        news.push(item);
        news_topic.push(topic);
        by_topic[topic].push(n);
    }

    let mut impressions = Vec::new();
    let mut long_term = Vec::with_capacity(cfg.readers);
    let mut sessions_out = Vec::with_capacity(cfg.readers);
    for r in 0..cfg.readers {
        let favourite = rng.gen_range(0..t_count);
        let lt = peaked(t_count, favourite, cfg.topic_noise);
        let mut clicked: Vec<usize> = Vec::new();
        let mut clicked_set: HashSet<usize> = HashSet::new();
        let mut click_meta: Vec<(i64, usize)> = Vec::new();
        let mut mixtures = Vec::with_capacity(cfg.sessions_per_reader);
        for s in 0..cfg.sessions_per_reader {
            let mixture = if rng.gen::<f64>() < cfg.mixing_weight {
                lt.clone()
            } else {
                peaked(t_count, rng.gen_range(0..t_count), cfg.topic_noise)
            };
            for c in 0..cfg.session_length {
                let topic = draw(&mixture, &mut rng);
                let pool: Vec<usize> = by_topic[topic]
                    .iter()
                    .copied()
                    .filter(|n| !clicked_set.contains(n))
                    .collect();
                let n = match pool.choose(&mut rng) {
                    Some(n) => *n,
                    None => (0..cfg.news)
                        .filter(|n| !clicked_set.contains(n))
                        .collect::<Vec<_>>()
                        .choose(&mut rng)
                        .copied()
                        .expect("validated catalog size"),
                };
                clicked.push(n);
                clicked_set.insert(n);
                let time = BASE_TIME + s as i64 * 86_400 + c as i64 * 600 + r as i64;
                click_meta.push((time, mixtures.len()));
            }
            mixtures.push(mixture);
        }

        for (k, (&n, &(time, session))) in clicked.iter().zip(&click_meta).enumerate() {
            let complement: Vec<f64> = mixtures[session].iter().map(|m| 1.0 - m).collect();
            let mut chosen: HashSet<usize> = HashSet::new();
            let mut candidates = vec![(news[n].news_id.clone(), 1u8)];
            while candidates.len() < cfg.impression_size {
                let topic = draw(&complement, &mut rng);
                let eligible = |m: &usize| !clicked_set.contains(m) && !chosen.contains(m);
                let pool: Vec<usize> = by_topic[topic].iter().copied().filter(eligible).collect();
                let pick = match pool.choose(&mut rng) {
                    Some(m) => *m,
                    None => {
                        let any: Vec<usize> = (0..cfg.news).filter(eligible).collect();
                        *any.choose(&mut rng).expect("validated catalog size")
                    }
                };
                chosen.insert(pick);
                candidates.push((news[pick].news_id.clone(), 0));
            }
            candidates.shuffle(&mut rng);
            impressions.push(ImpressionRecord {
                impression_id: format!("I{}", impressions.len() + 1),
                reader_id: format!("U{}", r + 1),
                time,
                history: clicked[..k].iter().map(|m| news[*m].news_id.clone()).collect(),
                candidates,
            });
        }
        long_term.push(lt);
        sessions_out.push(mixtures);
    }

    Ok(SyntheticData {
        news,
        impressions,
        news_topic,
        long_term,
        sessions: sessions_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_two_topics() {
        let cfg = SyntheticConfig {
            topics: 1,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn shapes() {
        let cfg = SyntheticConfig {
            readers: 10,
            news: 100,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg, 3).unwrap();
        assert_eq!(d.news.len(), 100);
        assert_eq!(d.impressions.len(), 10 * 15);
        for imp in &d.impressions {
            assert_eq!(imp.candidates.len(), cfg.impression_size);
            assert_eq!(imp.positives().count(), 1);
        }
    }
}
