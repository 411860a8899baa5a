use std::fmt::Write as _;
use std::path::Path;

use super::tokenize::tokenize;
use crate::error::{Error, Result};

/// One article as read from a news TSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct NewsItem {
    pub news_id: String,
    pub category: String,
    pub subcategory: String,
    pub title: String,
    pub abstract_text: String,
    pub headline_tokens: Vec<String>,
    pub snippet_tokens: Vec<String>,
    /// Epoch seconds. The TSV schema has no column for it.
    pub publication_time: Option<i64>,
}

impl NewsItem {
    pub fn new(
        news_id: impl Into<String>,
        category: impl Into<String>,
        subcategory: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Self {
        let title = title.into();
        let abstract_text = abstract_text.into();
        NewsItem {
            news_id: news_id.into(),
            category: category.into(),
            subcategory: subcategory.into(),
            headline_tokens: tokenize(&title),
            snippet_tokens: tokenize(&abstract_text),
            title,
            abstract_text,
            publication_time: None,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits text into `(1-based line number, line)` pairs, dropping blank
/// lines and a trailing carriage return.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses news rows: id, category, subcategory, title, abstract, then
/// optional url and entity columns, which are ignored.
pub fn parse_news_str(text: &str) -> Result<Vec<NewsItem>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::parse(
                line_no,
                format!("expected at least 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].is_empty() {
            return Err(Error::parse(line_no, "empty news id"));
        }
        if !seen.insert(cols[0]) {
            return Err(Error::parse(line_no, format!("duplicate news id {}", cols[0])));
        }
        out.push(NewsItem::new(cols[0], cols[1], cols[2], cols[3], cols[4]));
    }
    Ok(out)
}

pub fn parse_news_tsv(path: impl AsRef<Path>) -> Result<Vec<NewsItem>> {
    parse_news_str(&read_text(path.as_ref())?)
}

/// Writes rows in the eight-column layout with empty url and entity fields.
pub fn write_news_str(items: &[NewsItem]) -> String {
    let mut s = String::new();
    for n in items {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t\t\t",
            n.news_id, n.category, n.subcategory, n.title, n.abstract_text
        );
    }
    s
}

pub fn write_news_tsv(path: impl AsRef<Path>, items: &[NewsItem]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_news_str(items)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_row() {
        let items = parse_news_str("N1\tsports\tsoccer\tCity wins cup\tThe team won late.\t\t\t\n").unwrap();
        assert_eq!(items.len(), 1);
        let n = &items[0];
        assert_eq!(n.category, "sports");
        assert_eq!(n.subcategory, "soccer");
        assert_eq!(n.headline_tokens, ["city", "wins", "cup"]);
        assert_eq!(n.snippet_tokens, ["the", "team", "won", "late"]);
    }

    #[test]
    fn empty_abstract() {
        let items = parse_news_str("N1\tsports\tsoccer\tCity wins cup\t\n").unwrap();
        assert!(items[0].snippet_tokens.is_empty());
    }

    #[test]
    fn short_row_names_line() {
        let err = parse_news_str("N1\ta\tb\tt\tx\nN2\ta\tb\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_news_str("N1\ta\tb\tt\tx\nN1\ta\tb\tt\ty\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_news_tsv("/nonexistent/news.tsv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
