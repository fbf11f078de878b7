//! HAZOP worksheet CSV.
//!
//! ```text
//! # parameter: flow
//! Deviation,Causes,Consequences,Safeguards,Recommendations
//! No,"1. Pump failure 2. Manual valve closed",Potential pipe failure,...
//! ```
//!
//! Leading `# key: value` lines are sheet directives; `parameter` names the
//! process parameter the guidewords refer to.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HAZOP_HEADER: [&str; 5] = [
    "Deviation",
    "Causes",
    "Consequences",
    "Safeguards",
    "Recommendations",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazopRow {
    pub deviation: String,
    pub causes: Vec<String>,
    pub consequences: Vec<String>,
    pub safeguards: Vec<String>,
    pub recommendations: Vec<String>,
    /// 1-based line of the row in its document.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazopSheet {
    pub parameter: Option<String>,
    pub rows: Vec<HazopRow>,
    /// Rows that could not be read; the rest of the sheet is still returned.
    pub errors: Vec<RowError>,
}

fn item_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\s)(?:\d{1,2}[.)]|[-*\u{2022}])\s+").expect("valid regex"))
}

/// Splits an itemized cell on enumeration markers (`1.`, `2)`, `-`, `*`,
/// bullets), line breaks and semicolons.
pub fn split_items(cell: &str) -> Vec<String> {
    cell.split(['\n', ';'])
        .flat_map(|part| {
            item_marker()
                .split(part)
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Strips `# key: value` directive and comment lines preceding the header.
/// Returns the directives, the remaining text, and its line offset.
pub(crate) fn split_directives(text: &str) -> (Vec<(String, String)>, &str, usize) {
    let mut directives = Vec::new();
    let mut offset = 0;
    let mut rest = text;
    loop {
        let (line, tail) = match rest.split_once('\n') {
            Some((l, t)) => (l, t),
            None => (rest, ""),
        };
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            if let Some((k, v)) = trimmed.trim_start_matches('#').split_once(':') {
                directives.push((k.trim().to_lowercase(), v.trim().to_string()));
            }
        } else if !trimmed.is_empty() || tail.is_empty() {
            break;
        }
        offset += 1;
        rest = tail;
        if rest.is_empty() {
            break;
        }
    }
    (directives, rest, offset)
}

/// 1-based line of `rec` in the document `body` was cut from.
pub(crate) fn record_line(body: &str, rec: &csv::StringRecord, offset: usize) -> usize {
    let mut byte = rec
        .position()
        .map(|p| p.byte() as usize)
        .unwrap_or(0)
        .min(body.len());
    // the reported start may sit on skipped blank lines
    while matches!(body.as_bytes().get(byte), Some(b'\n' | b'\r')) {
        byte += 1;
    }
    offset
        + 1
        + body.as_bytes()[..byte]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
}

pub(crate) fn header_matches(actual: &csv::StringRecord, expected: &[&str]) -> bool {
    actual.len() == expected.len()
        && actual
            .iter()
            .zip(expected)
            .all(|(a, e)| a.trim().eq_ignore_ascii_case(e))
}

pub fn parse_hazop(text: &str, source_name: &str) -> Result<HazopSheet> {
    let (directives, body, offset) = split_directives(text);
    let parameter = directives
        .into_iter()
        .find(|(k, _)| k == "parameter")
        .map(|(_, v)| v);
    let mut sheet = HazopSheet {
        parameter,
        ..HazopSheet::default()
    };
    if body.trim().is_empty() {
        return Ok(sheet);
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = r.headers()?.clone();
    if !header_matches(&header, &HAZOP_HEADER) {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: offset + 1,
            message: format!("expected header {}", HAZOP_HEADER.join(",")),
        });
    }
    for rec in r.records() {
        let rec = rec?;
        let line = record_line(body, &rec, offset);
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let deviation = cell(0).split_whitespace().collect::<Vec<_>>().join(" ");
        if deviation.is_empty() {
            sheet.errors.push(RowError {
                line,
                message: "missing deviation".into(),
            });
            continue;
        }
        let row = HazopRow {
            deviation,
            causes: split_items(cell(1)),
            consequences: split_items(cell(2)),
            safeguards: split_items(cell(3)),
            recommendations: split_items(cell(4)),
            line,
        };
        if row.causes.is_empty() && row.consequences.is_empty() {
            sheet.errors.push(RowError {
                line,
                message: "row has neither causes nor consequences".into(),
            });
            continue;
        }
        sheet.rows.push(row);
    }
    Ok(sheet)
}

/// Writes a sheet that [`parse_hazop`] reads back to the same rows (line
/// numbers aside).
pub fn write_hazop(sheet: &HazopSheet) -> Result<String> {
    let mut out = String::new();
    if let Some(p) = &sheet.parameter {
        out.push_str(&format!("# parameter: {p}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HAZOP_HEADER)?;
    for row in &sheet.rows {
        let join = |items: &[String]| items.join("; ");
        w.write_record([
            row.deviation.clone(),
            join(&row.causes),
            join(&row.consequences),
            join(&row.safeguards),
            join(&row.recommendations),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(bytes).expect("CSV of UTF-8 strings"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_enumerations() {
        assert_eq!(
            split_items("1. Pump failure 2. Manual valve closed 3. Closed block valve anywhere in water piping"),
            vec!["Pump failure", "Manual valve closed", "Closed block valve anywhere in water piping"]
        );
        assert_eq!(split_items("a; b\n- c"), vec!["a", "b", "c"]);
        assert_eq!(
            split_items("first-order kinetics"),
            vec!["first-order kinetics"]
        );
        assert!(split_items("  ").is_empty());
    }

    #[test]
    fn empty_document() {
        let s = parse_hazop("", "x").unwrap();
        assert!(s.rows.is_empty() && s.errors.is_empty());
    }

    #[test]
    fn bad_header_is_fatal_bad_row_is_not() {
        assert!(parse_hazop("a,b,c\n1,2,3\n", "x").is_err());
        let text = "Deviation,Causes,Consequences,Safeguards,Recommendations\n,x,y,,\nHigh,c,,,\n";
        let s = parse_hazop(text, "x").unwrap();
        assert_eq!(
            s.errors,
            vec![RowError {
                line: 2,
                message: "missing deviation".into()
            }]
        );
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].line, 3);
    }

    #[test]
    fn directives_shift_line_numbers() {
        let text = "# parameter: flow\n# comment\nDeviation,Causes,Consequences,Safeguards,Recommendations\nNo,Pump failure,,,\n";
        let s = parse_hazop(text, "x").unwrap();
        assert_eq!(s.parameter.as_deref(), Some("flow"));
        assert_eq!(s.rows[0].line, 4);
    }
}
