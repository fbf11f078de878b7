//! Operation event log CSV: `time,source,description`.
//!
//! A description cell may hold several sentences. Each sentence becomes one
//! entry at the row's time. A sentence opening with `Source:` or with a known
//! source name takes that source; otherwise the row's `source` column applies.

use serde::{Deserialize, Serialize};

use super::gazetteer::Gazetteers;
use super::hazop::{header_matches, record_line, split_directives};
use crate::{Error, Result};

pub const LOG_HEADER: [&str; 3] = ["time", "source", "description"];

/// Source of a sentence without any source information.
pub const UNKNOWN_SOURCE: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub source: String,
    pub description: String,
    pub line: usize,
}

/// Splits after `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            out.push(std::mem::take(&mut current));
        }
    }
    out.push(current);
    out.into_iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_event_log(text: &str, source_name: &str) -> Result<Vec<LogEntry>> {
    parse_event_log_with(text, source_name, &Gazetteers::builtin())
}

pub fn parse_event_log_with(
    text: &str,
    source_name: &str,
    gaz: &Gazetteers,
) -> Result<Vec<LogEntry>> {
    let (_, body, offset) = split_directives(text);
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = r.headers()?.clone();
    if !header_matches(&header, &LOG_HEADER) {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: offset + 1,
            message: format!("expected header {}", LOG_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = record_line(body, &rec, offset);
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let raw_t = rec.get(0).unwrap_or("").trim();
        let t: f64 = raw_t
            .parse()
            .map_err(|_| parse_err(format!("time is not a number: {raw_t:?}")))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(parse_err(format!("time must be >= 0, got {t}")));
        }
        let row_source = rec.get(1).unwrap_or("").trim();
        for sentence in split_sentences(rec.get(2).unwrap_or("")) {
            let (source, description) =
                if let Some((src, rest)) = gaz.split_source_prefix(&sentence) {
                    (src.name.clone(), rest.to_string())
                } else if let Some(src) = gaz.source_at_start(&sentence) {
                    (src.name.clone(), sentence.clone())
                } else if !row_source.is_empty() {
                    (row_source.to_string(), sentence.clone())
                } else {
                    (UNKNOWN_SOURCE.to_string(), sentence.clone())
                };
            if description.is_empty() {
                continue;
            }
            out.push(LogEntry {
                t,
                source,
                description,
                line,
            });
        }
    }
    Ok(out)
}

/// One row per entry with the source in its own column.
pub fn write_event_log(entries: &[LogEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOG_HEADER)?;
    for e in entries {
        w.write_record([e.t.to_string(), e.source.clone(), e.description.clone()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 strings"))
}
