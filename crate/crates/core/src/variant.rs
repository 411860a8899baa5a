//! Ablation variants: which reader interests feed the final vector, which
//! article fields are encoded, and which attention layers are active.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Reader-side base model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interest {
    /// Long-term plus diversity-attended short-term interests.
    Combined,
    /// Long-term interests only.
    LongTerm,
    /// Diversity-attended short-term interests only.
    ShortTerm,
}

/// Head counts accepted by the multi-head self-attention variant.
pub const HEAD_CHOICES: [usize; 4] = [3, 5, 10, 16];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub interest: Interest,
    pub no_snippet: bool,
    pub no_taxonomy: bool,
    pub no_word_attn: bool,
    pub no_news_attn: bool,
    /// Use the last LSTM hidden state instead of diversity attention.
    pub no_reader_attn: bool,
    /// Multi-head self-attention replaces the convolution and the
    /// diversity attention.
    pub heads: Option<usize>,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            interest: Interest::Combined,
            no_snippet: false,
            no_taxonomy: false,
            no_word_attn: false,
            no_news_attn: false,
            no_reader_attn: false,
            heads: None,
        }
    }
}

impl Variant {
    pub fn uses_long_term(&self) -> bool {
        self.interest != Interest::ShortTerm
    }

    pub fn uses_short_term(&self) -> bool {
        self.interest != Interest::LongTerm
    }

    /// Name safe to use as a file stem.
    pub fn file_stem(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| match c {
                '(' | ':' => '_',
                ')' => '\0',
                c => c,
            })
            .filter(|c| *c != '\0')
            .collect()
    }
}

fn bad(s: &str, why: &str) -> Error {
    Error::Config(format!("unknown variant {s:?}: {why}"))
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `d2nn`, `lti`, `sti`, `multihead:N`, each optionally followed
    /// by minus flags in parentheses such as `sti(s-t-)`, and the aliases
    /// `no_snippet`, `no_snippet_taxonomy`, `no_word_attn`, `no_news_attn`,
    /// `no_reader_attn`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let alias = |f: fn(&mut Variant)| {
            let mut v = Variant::default();
            f(&mut v);
            Ok(v)
        };
        match t {
            "no_snippet" => return alias(|v| v.no_snippet = true),
            "no_snippet_taxonomy" => {
                return alias(|v| {
                    v.no_snippet = true;
                    v.no_taxonomy = true;
                })
            }
            "no_word_attn" => return alias(|v| v.no_word_attn = true),
            "no_news_attn" => return alias(|v| v.no_news_attn = true),
            "no_reader_attn" => return alias(|v| v.no_reader_attn = true),
            _ => {}
        }

        let (base, flags) = match t.find('(') {
            Some(open) => {
                let close = t
                    .strip_suffix(')')
                    .ok_or_else(|| bad(s, "unclosed flag list"))?;
                (&t[..open], &close[open + 1..])
            }
            None => (t, ""),
        };
        let mut v = Variant::default();
        match base {
            "d2nn" => {}
            "lti" => v.interest = Interest::LongTerm,
            "sti" => v.interest = Interest::ShortTerm,
            b if b.starts_with("multihead:") => {
                let n: usize = b["multihead:".len()..]
                    .parse()
                    .map_err(|_| bad(s, "head count is not a number"))?;
                if !HEAD_CHOICES.contains(&n) {
                    return Err(bad(s, "head count must be one of 3, 5, 10, 16"));
                }
                v.heads = Some(n);
            }
            _ => return Err(bad(s, "base must be d2nn, lti, sti, or multihead:N")),
        }

        let mut rest = flags;
        while !rest.is_empty() {
            let (flag, tail) = rest.split_at(rest.char_indices().nth(1).map_or(rest.len(), |(i, _)| i));
            let tail = tail
                .strip_prefix('-')
                .ok_or_else(|| bad(s, "flags look like s-t-"))?;
            let slot = match flag {
                "s" => &mut v.no_snippet,
                "t" => &mut v.no_taxonomy,
                "w" => &mut v.no_word_attn,
                "n" => &mut v.no_news_attn,
                "r" => &mut v.no_reader_attn,
                _ => return Err(bad(s, "flags are s, t, w, n, r")),
            };
            if *slot {
                return Err(bad(s, "repeated flag"));
            }
            *slot = true;
            rest = tail;
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.heads, self.interest) {
            (Some(h), _) => write!(f, "multihead:{h}")?,
            (None, Interest::Combined) => f.write_str("d2nn")?,
            (None, Interest::LongTerm) => f.write_str("lti")?,
            (None, Interest::ShortTerm) => f.write_str("sti")?,
        }
        let flags: String = [
            (self.no_snippet, "s-"),
            (self.no_taxonomy, "t-"),
            (self.no_word_attn, "w-"),
            (self.no_news_attn, "n-"),
            (self.no_reader_attn, "r-"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
        if !flags.is_empty() {
            write!(f, "({flags})")?;
        }
        Ok(())
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
