use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;

use super::news::{lines, read_text};
use crate::error::{Error, Result};

/// One row of a behaviors TSV file: what a reader was shown and clicked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpressionRecord {
    pub impression_id: String,
    pub reader_id: String,
    /// Epoch seconds.
    pub time: i64,
    /// Earlier clicks, oldest first.
    pub history: Vec<String>,
    pub candidates: Vec<(String, u8)>,
}

impl ImpressionRecord {
    pub fn positives(&self) -> impl Iterator<Item = &str> {
        self.candidates
            .iter()
            .filter(|(_, l)| *l == 1)
            .map(|(id, _)| id.as_str())
    }

    pub fn negatives(&self) -> impl Iterator<Item = &str> {
        self.candidates
            .iter()
            .filter(|(_, l)| *l == 0)
            .map(|(id, _)| id.as_str())
    }
}

/// Accepts integer epoch seconds or the `11/15/2019 8:55:22 AM` layout.
fn parse_time(field: &str, line: usize) -> Result<i64> {
    let field = field.trim();
    if let Ok(t) = field.parse::<i64>() {
        return Ok(t);
    }
    NaiveDateTime::parse_from_str(field, "%m/%d/%Y %I:%M:%S %p")
        .map(|dt| dt.and_utc().timestamp())
        .map_err(|_| Error::parse(line, format!("unrecognised time {field:?}")))
}

fn parse_candidate(tok: &str, line: usize) -> Result<(String, u8)> {
    let Some((id, label)) = tok.rsplit_once('-') else {
        return Err(Error::parse(line, format!("candidate {tok:?} has no label")));
    };
    let label = match label {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(Error::parse(
                line,
                format!("label {other:?} of {id:?} is not 0 or 1"),
            ))
        }
    };
    if id.is_empty() {
        return Err(Error::parse(line, "candidate with empty news id"));
    }
    Ok((id.to_string(), label))
}

/// Parses rows of: impression id, reader id, time, space-separated history,
/// space-separated `newsid-label` candidates.
pub fn parse_behaviors_str(text: &str) -> Result<Vec<ImpressionRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::parse(
                line_no,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let history = cols[3].split_whitespace().map(str::to_string).collect();
        let candidates = cols[4]
            .split_whitespace()
            .map(|t| parse_candidate(t, line_no))
            .collect::<Result<_>>()?;
        out.push(ImpressionRecord {
            impression_id: cols[0].to_string(),
            reader_id: cols[1].to_string(),
            time: parse_time(cols[2], line_no)?,
            history,
            candidates,
        });
    }
    Ok(out)
}

pub fn parse_behaviors_tsv(path: impl AsRef<Path>) -> Result<Vec<ImpressionRecord>> {
    parse_behaviors_str(&read_text(path.as_ref())?)
}

/// Writes rows with the time as integer epoch seconds.
pub fn write_behaviors_str(records: &[ImpressionRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let cands: Vec<String> = r
            .candidates
            .iter()
            .map(|(id, l)| format!("{id}-{l}"))
            .collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.impression_id,
            r.reader_id,
            r.time,
            r.history.join(" "),
            cands.join(" ")
        );
    }
    s
}

pub fn write_behaviors_tsv(path: impl AsRef<Path>, records: &[ImpressionRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_behaviors_str(records)).map_err(|e| Error::io(path, e))
}
