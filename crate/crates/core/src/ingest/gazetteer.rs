//! Plain-text word lists driving the extraction rules.
//!
//! The built-in lists live under `resources/gazetteers/`; a directory holding
//! files of the same names replaces the corresponding lists.

use std::collections::BTreeSet;
use std::path::Path;

use crate::text::tokens;
use crate::Result;

const SOURCES: &str = include_str!("../../resources/gazetteers/sources.txt");
const EQUIPMENT: &str = include_str!("../../resources/gazetteers/equipment.txt");
const HAZARDS: &str = include_str!("../../resources/gazetteers/hazards.txt");
const NEGATIVE: &str = include_str!("../../resources/gazetteers/negative_findings.txt");
const DEFECTS: &str = include_str!("../../resources/gazetteers/defects.txt");
const GUIDEWORDS: &str = include_str!("../../resources/gazetteers/guidewords.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub name: String,
    pub worker: bool,
    tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Phrase {
    text: String,
    tokens: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Gazetteers {
    sources: Vec<Source>,
    equipment: Vec<Phrase>,
    hazards: Vec<Phrase>,
    negative: Vec<Vec<String>>,
    defects: BTreeSet<String>,
    guidewords: Vec<Phrase>,
}

impl Default for Gazetteers {
    fn default() -> Self {
        Self::builtin()
    }
}

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn phrases(text: &str) -> Vec<Phrase> {
    let mut out: Vec<Phrase> = entries(text)
        .map(|l| Phrase {
            text: l.to_string(),
            tokens: tokens(l),
        })
        .filter(|p| !p.tokens.is_empty())
        .collect();
    // longest first so that "coolant valve" wins over "valve"
    out.sort_by_key(|p| std::cmp::Reverse(p.tokens.len()));
    out
}

fn sources(text: &str) -> Vec<Source> {
    let mut out: Vec<Source> = entries(text)
        .map(|l| {
            let mut parts = l.split(['\t', '|']).map(str::trim);
            let name = parts.next().unwrap_or_default().to_string();
            let worker = parts.any(|p| p.eq_ignore_ascii_case("worker"));
            Source {
                tokens: tokens(&name),
                name,
                worker,
            }
        })
        .filter(|s| !s.tokens.is_empty())
        .collect();
    out.sort_by_key(|p| std::cmp::Reverse(p.tokens.len()));
    out
}

impl Gazetteers {
    pub fn builtin() -> Self {
        Self {
            sources: sources(SOURCES),
            equipment: phrases(EQUIPMENT),
            hazards: phrases(HAZARDS),
            negative: entries(NEGATIVE)
                .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
                .collect(),
            defects: entries(DEFECTS).flat_map(tokens).collect(),
            guidewords: phrases(GUIDEWORDS),
        }
    }

    /// Built-in lists, with any of `sources.txt`, `equipment.txt`,
    /// `hazards.txt`, `negative_findings.txt`, `defects.txt`, `guidewords.txt`
    /// found in `dir` taking their place.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut g = Self::builtin();
        let read = |name: &str| -> Result<Option<String>> {
            let p = dir.join(name);
            if p.is_file() {
                Ok(Some(std::fs::read_to_string(p)?))
            } else {
                Ok(None)
            }
        };
        if let Some(t) = read("sources.txt")? {
            g.sources = sources(&t);
        }
        if let Some(t) = read("equipment.txt")? {
            g.equipment = phrases(&t);
        }
        if let Some(t) = read("hazards.txt")? {
            g.hazards = phrases(&t);
        }
        if let Some(t) = read("negative_findings.txt")? {
            g.negative = entries(&t)
                .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
                .collect();
        }
        if let Some(t) = read("defects.txt")? {
            g.defects = entries(&t).flat_map(tokens).collect();
        }
        if let Some(t) = read("guidewords.txt")? {
            g.guidewords = phrases(&t);
        }
        Ok(g)
    }

    pub fn source(&self, name: &str) -> Option<&Source> {
        let t = tokens(name);
        self.sources.iter().find(|s| s.tokens == t)
    }

    pub fn is_worker(&self, name: &str) -> bool {
        self.source(name).is_some_and(|s| s.worker)
    }

    /// Splits a `Source: text` prefix when `Source` is a known source.
    pub fn split_source_prefix<'a>(&self, sentence: &'a str) -> Option<(&Source, &'a str)> {
        let (head, rest) = sentence.split_once(':')?;
        let src = self.source(head)?;
        Some((src, rest.trim()))
    }

    /// A known source opening the sentence ("Operator opened ...").
    pub fn source_at_start(&self, sentence: &str) -> Option<&Source> {
        let t = tokens(sentence);
        self.sources.iter().find(|s| t.starts_with(&s.tokens))
    }

    /// First equipment mention, by position, then length.
    pub fn equipment_in(&self, text: &str) -> Option<String> {
        first_phrase(&self.equipment, &tokens(text))
    }

    /// All hazard phrases mentioned, in gazetteer order.
    pub fn hazards_in(&self, text: &str) -> Vec<String> {
        let t = tokens(text);
        self.hazards
            .iter()
            .filter(|h| t.windows(h.tokens.len()).any(|w| w == h.tokens.as_slice()))
            .map(|h| h.text.clone())
            .collect()
    }

    /// The whole cell is a guideword.
    pub fn guideword(&self, cell: &str) -> Option<String> {
        let t = tokens(cell);
        self.guidewords
            .iter()
            .find(|g| g.tokens == t)
            .map(|_| cell.trim().to_string())
    }

    /// Token spans covered by negative-finding patterns.
    fn negative_spans(&self, toks: &[String]) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        for pat in &self.negative {
            for start in 0..toks.len() {
                if let Some(end) = match_pattern(pat, &toks[start..]) {
                    spans.push((start, start + end));
                }
            }
        }
        spans
    }

    /// `pass` for a clean finding, `fail` when a defect word appears outside
    /// every negated span, `note` otherwise.
    pub fn classify_result(&self, result: &str) -> super::InspectionStatus {
        use super::InspectionStatus;
        let toks = tokens(result);
        let spans = self.negative_spans(&toks);
        let covered = |i: usize| spans.iter().any(|(a, b)| i >= *a && i < *b);
        let defect = toks
            .iter()
            .enumerate()
            .any(|(i, t)| self.defects.contains(t) && !covered(i));
        if defect {
            InspectionStatus::Fail
        } else if !spans.is_empty() {
            InspectionStatus::Pass
        } else {
            InspectionStatus::Note
        }
    }
}

fn first_phrase(list: &[Phrase], toks: &[String]) -> Option<String> {
    (0..toks.len()).find_map(|start| {
        list.iter()
            .find(|p| toks[start..].starts_with(&p.tokens))
            .map(|p| p.text.clone())
    })
}

/// Matches `pat` at the start of `toks`; returns the matched length.
fn match_pattern(pat: &[String], toks: &[String]) -> Option<usize> {
    const GAP: usize = 4;
    match pat.split_first() {
        None => Some(0),
        Some((p, rest)) if p == "*" => (0..=GAP.min(toks.len()))
            .find_map(|skip| match_pattern(rest, &toks[skip..]).map(|n| n + skip)),
        Some((p, rest)) => {
            let (t, tail) = toks.split_first()?;
            (t == p)
                .then(|| match_pattern(rest, tail).map(|n| n + 1))
                .flatten()
        }
    }
}
