//! Manual review of candidate triples.
//!
//! A decision file holds one `id,decision[,head,relation,tail]` record per
//! line, `decision` being `accept`, `reject` or `edit`. Edited endpoints are
//! written `kind:label` or just `label` (keeping the original kind); an empty
//! field keeps the original value. Blank lines and `#` comments are ignored.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::extract::{CandidateStatus, CandidateTriple, EntityRef, Extraction};
use crate::graph::{NodeKind, RelationKind, RiskGraph, Triple};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum Decision {
    Accept,
    Reject,
    Edit {
        head: Option<String>,
        relation: Option<RelationKind>,
        tail: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub id: String,
    pub decision: Decision,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub status: CandidateStatus,
    pub before: String,
    pub after: Option<String>,
    /// Line of the decision in the review file.
    pub line: usize,
}

fn describe(t: &CandidateTriple) -> String {
    format!(
        "({}:{}, {}, {}:{})",
        t.head.kind, t.head.label, t.relation, t.tail.kind, t.tail.label
    )
}

pub fn parse_review(text: &str, source_name: &str) -> Result<Vec<ReviewDecision>> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(trimmed.as_bytes());
        let rec = r
            .records()
            .next()
            .ok_or_else(|| err("empty record".into()))??;
        let field = |i: usize| {
            rec.get(i)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let id = field(0).ok_or_else(|| err("missing candidate id".into()))?;
        let decision = match field(1).map(|d| d.to_lowercase()).as_deref() {
            Some("accept") if rec.len() <= 2 => Decision::Accept,
            Some("reject") if rec.len() <= 2 => Decision::Reject,
            Some("accept" | "reject") => {
                return Err(err("only edit decisions take replacement fields".into()))
            }
            Some("edit") => {
                let relation = match field(3) {
                    Some(r) => Some(
                        RelationKind::parse(&r)
                            .ok_or_else(|| err(format!("unknown relation {r:?}")))?,
                    ),
                    None => None,
                };
                let d = Decision::Edit {
                    head: field(2),
                    relation,
                    tail: field(4),
                };
                if d == (Decision::Edit {
                    head: None,
                    relation: None,
                    tail: None,
                }) {
                    return Err(err("edit without replacement fields".into()));
                }
                d
            }
            Some(other) => return Err(err(format!("unknown decision {other:?}"))),
            None => return Err(err("missing decision".into())),
        };
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(err(format!(
                "second decision for {id} (first on line {first})"
            )));
        }
        out.push(ReviewDecision { id, decision, line });
    }
    Ok(out)
}

/// `kind:label` or a bare label keeping `original`'s kind.
fn endpoint(text: &str, original: &EntityRef) -> EntityRef {
    if let Some((k, label)) = text.split_once(':') {
        if let Some(kind) = NodeKind::parse(k.trim()) {
            return EntityRef::new(kind, label.trim());
        }
    }
    EntityRef::new(original.kind, text.trim())
}

/// Applies `decisions` to pending candidates. Nothing changes unless every
/// decision is valid.
pub fn apply_review(
    candidates: &mut [CandidateTriple],
    decisions: &[ReviewDecision],
) -> Result<Vec<AuditEntry>> {
    let index: HashMap<&str, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let unknown: Vec<String> = decisions
        .iter()
        .filter(|d| !index.contains_key(d.id.as_str()))
        .map(|d| d.id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownIds(unknown));
    }
    let mut updates = Vec::with_capacity(decisions.len());
    for d in decisions {
        let c = &candidates[index[d.id.as_str()]];
        if c.status != CandidateStatus::Pending {
            return Err(Error::invalid(format!(
                "candidate {} was already reviewed ({:?})",
                c.id, c.status
            )));
        }
        let mut next = c.clone();
        next.status = match &d.decision {
            Decision::Accept => CandidateStatus::Accepted,
            Decision::Reject => CandidateStatus::Rejected,
            Decision::Edit {
                head,
                relation,
                tail,
            } => {
                if let Some(h) = head {
                    next.head = endpoint(h, &c.head);
                }
                if let Some(r) = relation {
                    next.relation = *r;
                }
                if let Some(t) = tail {
                    next.tail = endpoint(t, &c.tail);
                }
                if next.head.label.is_empty() || next.tail.label.is_empty() {
                    return Err(Error::invalid(format!(
                        "edit of {} leaves an empty label",
                        c.id
                    )));
                }
                if !next.relation.allows(next.head.kind, next.tail.kind) {
                    return Err(Error::invalid(format!(
                        "edit of {} gives {} between {} and {}",
                        c.id, next.relation, next.head.kind, next.tail.kind
                    )));
                }
                next.provenance.note = Some("edited".into());
                CandidateStatus::Edited
            }
        };
        let audit = AuditEntry {
            id: c.id.clone(),
            status: next.status,
            before: describe(c),
            after: (next.status == CandidateStatus::Edited).then(|| describe(&next)),
            line: d.line,
        };
        updates.push((index[d.id.as_str()], next, audit));
    }
    let mut audit = Vec::with_capacity(updates.len());
    for (i, next, entry) in updates {
        candidates[i] = next;
        audit.push(entry);
    }
    Ok(audit)
}

pub fn accepted(candidates: &[CandidateTriple]) -> impl Iterator<Item = &CandidateTriple> {
    candidates.iter().filter(|c| {
        matches!(
            c.status,
            CandidateStatus::Accepted | CandidateStatus::Edited
        )
    })
}

/// An all-accept decision file for `candidates`, with each triple as a comment.
pub fn review_template(candidates: &[CandidateTriple]) -> String {
    let mut out = String::from("# id,decision[,head,relation,tail]\n");
    for c in candidates {
        out.push_str(&format!(
            "# {} {}\n{},accept\n",
            c.provenance,
            describe(c),
            c.id
        ));
    }
    out
}

/// Loads accepted and edited triples into a new graph. Refuses while any
/// candidate is still pending.
pub fn build_graph(extraction: &Extraction) -> Result<RiskGraph> {
    let pending = extraction
        .triples
        .iter()
        .filter(|c| c.status == CandidateStatus::Pending)
        .count();
    if pending > 0 {
        return Err(Error::invalid(format!(
            "{pending} of {} candidate triples are pending review",
            extraction.triples.len()
        )));
    }
    let mut g = RiskGraph::new();
    let mut ids: HashMap<EntityRef, String> = HashMap::new();
    let mut node_for = |g: &mut RiskGraph, e: &EntityRef| -> Result<String> {
        if let Some(id) = ids.get(e) {
            return Ok(id.clone());
        }
        let provenance: BTreeSet<_> = extraction.provenance_of(e).into_iter().collect();
        let mut provenance = provenance.into_iter();
        let id = g.ensure_node(e.kind, &e.label, extraction.slots_of(e), provenance.next())?;
        for p in provenance {
            g.ensure_node(e.kind, &e.label, Default::default(), Some(p))?;
        }
        ids.insert(e.clone(), id.clone());
        Ok(id)
    };
    for c in accepted(&extraction.triples) {
        let head = node_for(&mut g, &c.head)?;
        let tail = node_for(&mut g, &c.tail)?;
        if head == tail {
            continue;
        }
        g.add_triple(Triple::new(head, c.relation, tail).with_provenance(c.provenance.clone()))?;
    }
    Ok(g)
}
