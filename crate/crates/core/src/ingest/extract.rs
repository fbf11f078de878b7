//! Rule-based mapping from parsed documents to entity and triple candidates.
//!
//! HAZOP rows: each cause `causes` the deviation, the deviation `causes` each
//! consequence, each safeguard and recommendation `mitigates` the deviation.
//! Event logs: entries of adjacent time groups are linked by `precedes`,
//! entries sharing a time by `concurrent`, and worker sources `perform` their
//! entries. Any event naming a gazetteer hazard `involves` it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::gazetteer::Gazetteers;
use super::hazop::HazopSheet;
use super::inspection::{InspectionItem, InspectionStatus};
use super::log::LogEntry;
use crate::graph::{FiveW1Y, NodeKind, Provenance, RelationKind};
use crate::text::{fnv1a, normalize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: NodeKind,
    pub label: String,
}

impl EntityRef {
    pub fn new(kind: NodeKind, label: impl Into<String>) -> Self {
        Self {
            kind,
            label: label.into(),
        }
    }

    fn key(&self) -> (NodeKind, String) {
        (self.kind, normalize(&self.label))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub kind: NodeKind,
    pub label: String,
    pub slots: FiveW1Y,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    Accepted,
    Rejected,
    Edited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub id: String,
    pub head: EntityRef,
    pub relation: RelationKind,
    pub tail: EntityRef,
    pub provenance: Provenance,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub entities: Vec<EntityCandidate>,
    pub triples: Vec<CandidateTriple>,
}

impl Extraction {
    pub fn extend(&mut self, other: Extraction) {
        let ids: HashSet<String> = self.triples.iter().map(|t| t.id.clone()).collect();
        self.entities.extend(other.entities);
        self.triples
            .extend(other.triples.into_iter().filter(|t| !ids.contains(&t.id)));
    }

    /// Merged slots of every mention of `entity`.
    pub fn slots_of(&self, entity: &EntityRef) -> FiveW1Y {
        let key = entity.key();
        let mut slots = FiveW1Y::default();
        for e in self
            .entities
            .iter()
            .filter(|e| (e.kind, normalize(&e.label)) == key)
        {
            slots.fill_from(&e.slots);
        }
        slots
    }

    pub fn provenance_of(&self, entity: &EntityRef) -> Vec<Provenance> {
        let key = entity.key();
        self.entities
            .iter()
            .filter(|e| (e.kind, normalize(&e.label)) == key)
            .map(|e| e.provenance.clone())
            .collect()
    }
}

/// Stable candidate id: FNV-1a over document, line and the triple.
pub fn candidate_id(
    provenance: &Provenance,
    head: &EntityRef,
    relation: RelationKind,
    tail: &EntityRef,
) -> String {
    let key = format!(
        "{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}",
        provenance.document,
        provenance.line,
        head.kind,
        normalize(&head.label),
        relation,
        tail.kind,
        normalize(&tail.label)
    );
    format!("{:016x}", fnv1a(key.as_bytes()))
}

/// `"{guideword} {parameter} deviation"` for a bare guideword, the cell text
/// otherwise.
pub fn deviation_label(deviation: &str, parameter: Option<&str>, gaz: &Gazetteers) -> String {
    match (
        gaz.guideword(deviation),
        parameter.filter(|p| !p.trim().is_empty()),
    ) {
        (Some(g), Some(p)) => format!("{g} {} deviation", p.trim()),
        (Some(g), None) => format!("{g} deviation"),
        (None, _) => deviation.trim().to_string(),
    }
}

struct Builder<'a> {
    doc: &'a str,
    gaz: &'a Gazetteers,
    out: Extraction,
    entity_seen: HashSet<(NodeKind, String, usize)>,
    triple_seen: HashSet<String>,
}

impl<'a> Builder<'a> {
    fn new(doc: &'a str, gaz: &'a Gazetteers) -> Self {
        Self {
            doc,
            gaz,
            out: Extraction::default(),
            entity_seen: HashSet::new(),
            triple_seen: HashSet::new(),
        }
    }

    fn entity(&mut self, kind: NodeKind, label: &str, slots: FiveW1Y, line: usize) -> EntityRef {
        let r = EntityRef::new(kind, label.trim());
        if self.entity_seen.insert((kind, normalize(label), line)) {
            self.out.entities.push(EntityCandidate {
                kind,
                label: r.label.clone(),
                slots: slots.normalized(),
                provenance: Provenance::new(self.doc, line),
            });
        }
        r
    }

    /// An event with `what` and `where` filled, plus `involves` links to any
    /// hazard it names.
    fn event(&mut self, label: &str, mut slots: FiveW1Y, line: usize) -> EntityRef {
        slots.what.get_or_insert_with(|| label.to_string());
        if slots.where_.is_none() {
            slots.where_ = self.gaz.equipment_in(label);
        }
        let e = self.entity(NodeKind::Event, label, slots, line);
        for h in self.gaz.hazards_in(label) {
            let hz = self.entity(NodeKind::Hazard, &h, FiveW1Y::what(h.clone()), line);
            self.triple(&e, RelationKind::Involves, &hz, line);
        }
        e
    }

    fn triple(&mut self, head: &EntityRef, relation: RelationKind, tail: &EntityRef, line: usize) {
        if head.key() == tail.key() {
            return;
        }
        let provenance = Provenance::new(self.doc, line);
        let id = candidate_id(&provenance, head, relation, tail);
        if self.triple_seen.insert(id.clone()) {
            self.out.triples.push(CandidateTriple {
                id,
                head: head.clone(),
                relation,
                tail: tail.clone(),
                provenance,
                status: CandidateStatus::Pending,
            });
        }
    }
}

pub fn extract_hazop(sheet: &HazopSheet, doc: &str, gaz: &Gazetteers) -> Extraction {
    let mut b = Builder::new(doc, gaz);
    for row in &sheet.rows {
        let label = deviation_label(&row.deviation, sheet.parameter.as_deref(), gaz);
        let dev = b.event(&label, FiveW1Y::default(), row.line);
        for cause in &row.causes {
            let c = b.event(cause, FiveW1Y::default(), row.line);
            b.triple(&c, RelationKind::Causes, &dev, row.line);
        }
        for consequence in &row.consequences {
            let c = b.event(consequence, FiveW1Y::default(), row.line);
            b.triple(&dev, RelationKind::Causes, &c, row.line);
        }
        for measure in row.safeguards.iter().chain(&row.recommendations) {
            let t = b.entity(
                NodeKind::Treatment,
                measure,
                FiveW1Y::what(measure.clone()),
                row.line,
            );
            b.triple(&t, RelationKind::Mitigates, &dev, row.line);
        }
    }
    b.out
}

fn strip_terminal_punctuation(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', '?']).trim_end()
}

pub fn extract_log(entries: &[LogEntry], doc: &str, gaz: &Gazetteers) -> Extraction {
    let mut b = Builder::new(doc, gaz);
    let mut groups: Vec<(f64, Vec<EntityRef>)> = Vec::new();
    for e in entries {
        let label = strip_terminal_punctuation(&e.description);
        if label.is_empty() {
            continue;
        }
        let slots = FiveW1Y {
            who: Some(e.source.clone()),
            when: Some(e.t.to_string()),
            ..FiveW1Y::default()
        };
        let ev = b.event(label, slots, e.line);
        if gaz.is_worker(&e.source) {
            let w = b.entity(
                NodeKind::Worker,
                &e.source,
                FiveW1Y {
                    who: Some(e.source.clone()),
                    ..FiveW1Y::default()
                },
                e.line,
            );
            b.triple(&w, RelationKind::Performs, &ev, e.line);
        }
        match groups.iter_mut().find(|(t, _)| *t == e.t) {
            Some((_, g)) => g.push(ev.clone()),
            None => groups.push((e.t, vec![ev.clone()])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let line_of = |r: &EntityRef, t: f64| {
        entries
            .iter()
            .find(|e| {
                e.t == t
                    && normalize(strip_terminal_punctuation(&e.description)) == normalize(&r.label)
            })
            .map(|e| e.line)
            .unwrap_or(0)
    };
    for (t, group) in &groups {
        for (i, a) in group.iter().enumerate() {
            for c in &group[i + 1..] {
                b.triple(a, RelationKind::Concurrent, c, line_of(c, *t));
            }
        }
    }
    for pair in groups.windows(2) {
        let (t_late, late) = (&pair[1].0, &pair[1].1);
        for a in &pair[0].1 {
            for c in late {
                b.triple(a, RelationKind::Precedes, c, line_of(c, *t_late));
            }
        }
    }
    b.out
}

/// Failed inspection items become events seen by the inspector.
pub fn extract_inspection(items: &[InspectionItem], doc: &str, gaz: &Gazetteers) -> Extraction {
    let mut b = Builder::new(doc, gaz);
    for item in items.iter().filter(|i| i.status == InspectionStatus::Fail) {
        let label = strip_terminal_punctuation(&item.result);
        let slots = FiveW1Y {
            who: Some("Inspector".into()),
            where_: gaz
                .equipment_in(label)
                .or_else(|| gaz.equipment_in(&item.item)),
            why: Some(item.item.clone()),
            ..FiveW1Y::default()
        };
        b.event(label, slots, item.line);
    }
    b.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guideword_expansion() {
        let g = Gazetteers::builtin();
        assert_eq!(deviation_label("No", Some("flow"), &g), "No flow deviation");
        assert_eq!(deviation_label("High", None, &g), "High deviation");
        assert_eq!(
            deviation_label("Upstream heater activation", Some("x"), &g),
            "Upstream heater activation"
        );
    }

    #[test]
    fn single_entry_log_has_no_relations() {
        let g = Gazetteers::builtin();
        let e = LogEntry {
            t: 5.0,
            source: "MPC record".into(),
            description: "Held.".into(),
            line: 2,
        };
        let x = extract_log(&[e], "log.csv", &g);
        assert_eq!(x.entities.len(), 1);
        assert!(x.triples.is_empty());
        assert_eq!(x.entities[0].slots.when.as_deref(), Some("5"));
    }

    #[test]
    fn ids_are_stable() {
        let p = Provenance::new("a.csv", 3);
        let h = EntityRef::new(NodeKind::Event, "Pump failure");
        let t = EntityRef::new(NodeKind::Event, "No flow deviation");
        let id = candidate_id(&p, &h, RelationKind::Causes, &t);
        assert_eq!(
            id,
            candidate_id(
                &p,
                &EntityRef::new(NodeKind::Event, "pump  FAILURE"),
                RelationKind::Causes,
                &t
            )
        );
        assert_ne!(id, candidate_id(&p, &h, RelationKind::Precedes, &t));
        assert_eq!(id.len(), 16);
    }
}
