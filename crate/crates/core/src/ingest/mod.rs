//! Document ingestion: HAZOP sheets, event logs and inspection records into
//! reviewed risk-graph triples.

pub mod extract;
pub mod gazetteer;
pub mod hazop;
pub mod inspection;
pub mod log;
pub mod review;

use std::path::Path;

pub use extract::{CandidateStatus, CandidateTriple, EntityCandidate, EntityRef, Extraction};
pub use gazetteer::Gazetteers;
pub use hazop::{HazopRow, HazopSheet};
pub use inspection::{InspectionItem, InspectionStatus};
pub use log::LogEntry;
pub use review::{apply_review, build_graph, parse_review, AuditEntry, ReviewDecision};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Hazop(HazopSheet),
    Log(Vec<LogEntry>),
    Inspection(Vec<InspectionItem>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    Hazop,
    Log,
    Inspection,
}

/// Recognizes a document by its header row.
pub fn sniff(text: &str) -> Option<DocumentKind> {
    let (_, body, _) = hazop::split_directives(text);
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = r.records().next()?.ok()?;
    if hazop::header_matches(&header, &hazop::HAZOP_HEADER) {
        Some(DocumentKind::Hazop)
    } else if hazop::header_matches(&header, &log::LOG_HEADER) {
        Some(DocumentKind::Log)
    } else if hazop::header_matches(&header, &inspection::INSPECTION_HEADER) {
        Some(DocumentKind::Inspection)
    } else {
        None
    }
}

pub fn parse_document(text: &str, name: &str, gaz: &Gazetteers) -> Result<Document> {
    match sniff(text) {
        Some(DocumentKind::Hazop) => Ok(Document::Hazop(hazop::parse_hazop(text, name)?)),
        Some(DocumentKind::Log) => Ok(Document::Log(log::parse_event_log_with(text, name, gaz)?)),
        Some(DocumentKind::Inspection) => Ok(Document::Inspection(
            inspection::parse_inspection_with(text, name, gaz)?,
        )),
        None => Err(Error::Parse {
            source_name: name.to_string(),
            line: 1,
            message: "not a HAZOP sheet, event log or inspection record".into(),
        }),
    }
}

pub fn extract_document(doc: &Document, name: &str, gaz: &Gazetteers) -> Extraction {
    match doc {
        Document::Hazop(s) => extract::extract_hazop(s, name, gaz),
        Document::Log(e) => extract::extract_log(e, name, gaz),
        Document::Inspection(i) => extract::extract_inspection(i, name, gaz),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// `(file name, document)` in file-name order.
    pub documents: Vec<(String, Document)>,
    /// Files that were not recognized.
    pub skipped: Vec<String>,
}

impl Corpus {
    /// Reads every `.csv` file directly under `dir`.
    pub fn load(dir: &Path, gaz: &Gazetteers) -> Result<Self> {
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.to_ascii_lowercase().ends_with(".csv"))
            .collect();
        names.sort();
        let mut corpus = Corpus::default();
        for name in names {
            let text = std::fs::read_to_string(dir.join(&name))?;
            if sniff(&text).is_none() {
                ::log::warn!("{name}: unrecognized header, skipped");
                corpus.skipped.push(name);
                continue;
            }
            let doc = parse_document(&text, &name, gaz)?;
            if let Document::Hazop(s) = &doc {
                for e in &s.errors {
                    ::log::warn!("{name}:{}: {}", e.line, e.message);
                }
            }
            corpus.documents.push((name, doc));
        }
        Ok(corpus)
    }

    pub fn extract(&self, gaz: &Gazetteers) -> Extraction {
        let mut out = Extraction::default();
        for (name, doc) in &self.documents {
            out.extend(extract_document(doc, name, gaz));
        }
        out
    }
}
