use std::collections::BTreeMap;

use super::behaviors::ImpressionRecord;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Click {
    pub news_id: String,
    pub time: i64,
}

/// A reader's clicks, oldest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReaderHistory {
    pub reader_id: String,
    pub clicks: Vec<Click>,
}

/// Merges a reader's impressions into one click sequence.
///
/// The history column of the reader's earliest impression seeds the
/// sequence (stamped with that impression's time); every clicked candidate
/// is then appended in impression-time order. Later history columns only
/// repeat clicks already known and are not read again. Readers come out
/// sorted by id.
pub fn reader_histories(impressions: &[ImpressionRecord]) -> Vec<ReaderHistory> {
    let mut by_reader: BTreeMap<&str, Vec<&ImpressionRecord>> = BTreeMap::new();
    for r in impressions {
        by_reader.entry(&r.reader_id).or_default().push(r);
    }
    by_reader
        .into_iter()
        .map(|(reader, mut recs)| {
            recs.sort_by_key(|r| r.time);
            let mut clicks: Vec<Click> = recs[0]
                .history
                .iter()
                .map(|id| Click {
                    news_id: id.clone(),
                    time: recs[0].time,
                })
                .collect();
            for r in &recs {
                clicks.extend(r.positives().map(|id| Click {
                    news_id: id.to_string(),
                    time: r.time,
                }));
            }
            ReaderHistory {
                reader_id: reader.to_string(),
                clicks,
            }
        })
        .collect()
}

/// Where a held-out click sits in its reader's sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldOut {
    pub reader_id: String,
    pub position: usize,
    pub click: Click,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeaveOneOut {
    pub train: Vec<ReaderHistory>,
    pub validation: Vec<HeldOut>,
    pub test: Vec<HeldOut>,
}

/// Minimum clicks for a reader to contribute validation and test items.
pub const MIN_HELD_OUT_CLICKS: usize = 3;

/// Length of the training prefix for a sequence of `n` clicks.
pub fn train_prefix_len(n: usize) -> usize {
    if n >= MIN_HELD_OUT_CLICKS {
        n - 2
    } else {
        n
    }
}

/// Last click to test, second-last to validation, the rest to training.
/// Readers with fewer than three clicks go entirely to training.
pub fn split_leave_one_out(histories: &[ReaderHistory]) -> LeaveOneOut {
    let mut out = LeaveOneOut::default();
    for h in histories {
        let mut clicks = h.clicks.clone();
        clicks.sort_by_key(|c| c.time);
        let n = clicks.len();
        let keep = train_prefix_len(n);
        if keep < n {
            out.validation.push(HeldOut {
                reader_id: h.reader_id.clone(),
                position: n - 2,
                click: clicks[n - 2].clone(),
            });
            out.test.push(HeldOut {
                reader_id: h.reader_id.clone(),
                position: n - 1,
                click: clicks[n - 1].clone(),
            });
        }
        clicks.truncate(keep);
        out.train.push(ReaderHistory {
            reader_id: h.reader_id.clone(),
            clicks,
        });
    }
    out
}
