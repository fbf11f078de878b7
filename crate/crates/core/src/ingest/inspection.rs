//! Daily inspection record CSV: `item,result`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::gazetteer::Gazetteers;
use super::hazop::{header_matches, record_line, split_directives};
use crate::{Error, Result};

pub const INSPECTION_HEADER: [&str; 2] = ["item", "result"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectionStatus {
    Pass,
    Fail,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectionItem {
    pub item: String,
    pub result: String,
    pub status: InspectionStatus,
    pub line: usize,
}

fn leading_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d{1,2}[.)]|[-*\u{2022}])\s+").expect("valid regex"))
}

fn clean(cell: &str) -> String {
    let stripped = leading_marker().replace(cell, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_inspection(text: &str, source_name: &str) -> Result<Vec<InspectionItem>> {
    parse_inspection_with(text, source_name, &Gazetteers::builtin())
}

pub fn parse_inspection_with(
    text: &str,
    source_name: &str,
    gaz: &Gazetteers,
) -> Result<Vec<InspectionItem>> {
    let (_, body, offset) = split_directives(text);
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = r.headers()?.clone();
    if !header_matches(&header, &INSPECTION_HEADER) {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: offset + 1,
            message: format!("expected header {}", INSPECTION_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = record_line(body, &rec, offset);
        let item = clean(rec.get(0).unwrap_or(""));
        if item.is_empty() {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line,
                message: "empty check item".into(),
            });
        }
        let result = rec
            .get(1)
            .unwrap_or("")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        let status = gaz.classify_result(&result);
        out.push(InspectionItem {
            item,
            result,
            status,
            line,
        });
    }
    Ok(out)
}

pub fn write_inspection(items: &[InspectionItem]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(INSPECTION_HEADER)?;
    for i in items {
        w.write_record([i.item.as_str(), i.result.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 strings"))
}
