//! Ontology-typed risk knowledge graph.
//!
//! Nodes are identified by `kind:slug`; two nodes of the same kind whose
//! normalized labels agree are the same node and their provenance is merged.
//! Triples are checked against the relation signature table on insert.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::text::{normalize, slug, tokens};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Event,
    Worker,
    Hazard,
    Risk,
    Treatment,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Event,
        NodeKind::Worker,
        NodeKind::Hazard,
        NodeKind::Risk,
        NodeKind::Treatment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Event => "event",
            NodeKind::Worker => "worker",
            NodeKind::Hazard => "hazard",
            NodeKind::Risk => "risk",
            NodeKind::Treatment => "treatment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_lowercase())
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Causes,
    Precedes,
    Contains,
    Concurrent,
    Performs,
    ExposedTo,
    Involves,
    Poses,
    Mitigates,
}

impl RelationKind {
    pub const ALL: [RelationKind; 9] = [
        RelationKind::Causes,
        RelationKind::Precedes,
        RelationKind::Contains,
        RelationKind::Concurrent,
        RelationKind::Performs,
        RelationKind::ExposedTo,
        RelationKind::Involves,
        RelationKind::Poses,
        RelationKind::Mitigates,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationKind::Causes => "causes",
            RelationKind::Precedes => "precedes",
            RelationKind::Contains => "contains",
            RelationKind::Concurrent => "concurrent",
            RelationKind::Performs => "performs",
            RelationKind::ExposedTo => "exposed_to",
            RelationKind::Involves => "involves",
            RelationKind::Poses => "poses",
            RelationKind::Mitigates => "mitigates",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim().to_lowercase())
    }

    /// Allowed (head kinds, tail kinds).
    pub fn signature(&self) -> (&'static [NodeKind], &'static [NodeKind]) {
        use NodeKind::*;
        match self {
            RelationKind::Causes
            | RelationKind::Precedes
            | RelationKind::Contains
            | RelationKind::Concurrent => (&[Event], &[Event]),
            RelationKind::Performs => (&[Worker], &[Event]),
            RelationKind::ExposedTo => (&[Worker], &[Hazard]),
            RelationKind::Involves => (&[Event], &[Hazard]),
            RelationKind::Poses => (&[Hazard], &[Risk]),
            RelationKind::Mitigates => (&[Treatment], &[Event, Risk]),
        }
    }

    pub fn allows(&self, head: NodeKind, tail: NodeKind) -> bool {
        let (h, t) = self.signature();
        h.contains(&head) && t.contains(&tail)
    }

    fn check(&self, head: NodeKind, tail: NodeKind) -> Result<(), GraphError> {
        if self.allows(head, tail) {
            return Ok(());
        }
        let (h, t) = self.signature();
        let join = |ks: &[NodeKind]| {
            ks.iter()
                .map(NodeKind::as_str)
                .collect::<Vec<_>>()
                .join("|")
        };
        Err(GraphError::SignatureViolation {
            relation: self.as_str().to_string(),
            expected: format!("({} -> {})", join(h), join(t)),
            head_kind: head.as_str().to_string(),
            tail_kind: tail.as_str().to_string(),
        })
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// who / what / when / where / why / how.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FiveW1Y {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub who: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub what: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default, rename = "where", skip_serializing_if = "Option::is_none")]
    pub where_: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub why: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub how: Option<String>,
}

impl FiveW1Y {
    pub fn what(text: impl Into<String>) -> Self {
        Self {
            what: Some(text.into()),
            ..Self::default()
        }
    }

    fn slots(&self) -> [&Option<String>; 6] {
        [
            &self.who,
            &self.what,
            &self.when,
            &self.where_,
            &self.why,
            &self.how,
        ]
    }

    fn slots_mut(&mut self) -> [&mut Option<String>; 6] {
        [
            &mut self.who,
            &mut self.what,
            &mut self.when,
            &mut self.where_,
            &mut self.why,
            &mut self.how,
        ]
    }

    /// Empty slots become `None`.
    pub fn normalized(mut self) -> Self {
        for s in self.slots_mut() {
            if s.as_deref().is_some_and(|v| v.trim().is_empty()) {
                *s = None;
            }
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.slots().iter().all(|s| s.is_none())
    }

    /// Fills slots that are empty here from `other`.
    pub fn fill_from(&mut self, other: &FiveW1Y) {
        for (mine, theirs) in self.slots_mut().into_iter().zip(other.slots()) {
            if mine.is_none() {
                mine.clone_from(theirs);
            }
        }
    }

    pub fn text(&self) -> String {
        self.slots()
            .iter()
            .filter_map(|s| s.as_deref())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Source document and 1-based line of an extracted fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub document: String,
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Provenance {
    pub fn new(document: impl Into<String>, line: usize) -> Self {
        Self {
            document: document.into(),
            line,
            note: None,
        }
    }

    /// An empty note is the same as no note.
    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = (!note.is_empty()).then_some(note);
        self
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.document, self.line)?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default)]
    pub slots: FiveW1Y,
    #[serde(default)]
    pub provenance: BTreeSet<Provenance>,
}

impl Node {
    /// A node with the canonical id `kind:slug(label)`.
    pub fn new(kind: NodeKind, label: impl Into<String>) -> Self {
        let label = label.into();
        Self {
            id: node_id(kind, &label),
            kind,
            label,
            slots: FiveW1Y::default(),
            provenance: BTreeSet::new(),
        }
    }

    pub fn with_slots(mut self, slots: FiveW1Y) -> Self {
        self.slots = slots.normalized();
        self
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance.insert(p);
        self
    }

    pub fn normalized_label(&self) -> String {
        normalize(&self.label)
    }

    /// Label tokens followed by slot tokens.
    pub fn search_tokens(&self) -> Vec<String> {
        let mut t = tokens(&self.label);
        t.extend(tokens(&self.slots.text()));
        t
    }
}

pub fn node_id(kind: NodeKind, label: &str) -> String {
    format!("{}:{}", kind.as_str(), slug(label))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: RelationKind,
    pub tail: String,
    #[serde(default)]
    pub provenance: BTreeSet<Provenance>,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: RelationKind, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation,
            tail: tail.into(),
            provenance: BTreeSet::new(),
        }
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance.insert(p);
        self
    }

    pub fn key(&self) -> TripleKey {
        (self.head.clone(), self.relation, self.tail.clone())
    }
}

pub type TripleKey = (String, RelationKind, String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Indices {
    out_edges: BTreeMap<String, BTreeSet<TripleKey>>,
    in_edges: BTreeMap<String, BTreeSet<TripleKey>>,
    tokens: BTreeMap<String, BTreeSet<String>>,
    labels: HashMap<(NodeKind, String), String>,
}

impl Indices {
    fn add_node(&mut self, node: &Node) {
        for t in node.search_tokens() {
            self.tokens.entry(t).or_default().insert(node.id.clone());
        }
        self.labels
            .insert((node.kind, node.normalized_label()), node.id.clone());
    }

    fn add_triple(&mut self, key: &TripleKey) {
        self.out_edges
            .entry(key.0.clone())
            .or_default()
            .insert(key.clone());
        self.in_edges
            .entry(key.2.clone())
            .or_default()
            .insert(key.clone());
    }

    fn build(nodes: &BTreeMap<String, Node>, triples: &BTreeMap<TripleKey, Triple>) -> Self {
        let mut idx = Self::default();
        for n in nodes.values() {
            idx.add_node(n);
        }
        for k in triples.keys() {
            idx.add_triple(k);
        }
        idx
    }
}

#[derive(Debug, Clone, Default)]
pub struct RiskGraph {
    nodes: BTreeMap<String, Node>,
    triples: BTreeMap<TripleKey, Triple>,
    index: Indices,
}

/// Structural equality: node and triple sets, ignoring index state.
impl PartialEq for RiskGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.triples == other.triples
    }
}

impl Eq for RiskGraph {}

impl RiskGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph without any checks; indices are derived from the parts.
    /// Intended for importing foreign data that is then passed to [`validate`](Self::validate).
    pub fn from_parts_unchecked(nodes: Vec<Node>, triples: Vec<Triple>) -> Self {
        let nodes: BTreeMap<String, Node> = nodes.into_iter().map(|n| (n.id.clone(), n)).collect();
        let triples: BTreeMap<TripleKey, Triple> =
            triples.into_iter().map(|t| (t.key(), t)).collect();
        let index = Indices::build(&nodes, &triples);
        Self {
            nodes,
            triples,
            index,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.triples.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Triples in (head, relation, tail) order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn triple(&self, key: &TripleKey) -> Option<&Triple> {
        self.triples.get(key)
    }

    pub fn contains_triple(&self, head: &str, relation: RelationKind, tail: &str) -> bool {
        self.triples
            .contains_key(&(head.to_string(), relation, tail.to_string()))
    }

    pub fn find_by_label(&self, kind: NodeKind, label: &str) -> Option<&Node> {
        self.index
            .labels
            .get(&(kind, normalize(label)))
            .and_then(|id| self.nodes.get(id))
    }

    pub fn out_edges<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.index
            .out_edges
            .get(id)
            .into_iter()
            .flatten()
            .filter_map(|k| self.triples.get(k))
    }

    pub fn in_edges<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.index
            .in_edges
            .get(id)
            .into_iter()
            .flatten()
            .filter_map(|k| self.triples.get(k))
    }

    /// Ids of nodes carrying `token` in their label or slots.
    pub fn nodes_with_token(&self, token: &str) -> BTreeSet<String> {
        self.index.tokens.get(token).cloned().unwrap_or_default()
    }

    /// Inserts a node or merges it into the existing node of the same kind and
    /// normalized label. Returns the id of the stored node.
    pub fn add_node(&mut self, node: Node) -> Result<String, GraphError> {
        if normalize(&node.label).is_empty() {
            return Err(GraphError::EmptyLabel(node.id));
        }
        if let Some(existing) = self
            .index
            .labels
            .get(&(node.kind, node.normalized_label()))
            .cloned()
        {
            let stored = self
                .nodes
                .get_mut(&existing)
                .expect("label index points at a node");
            stored.provenance.extend(node.provenance);
            let before = stored.search_tokens();
            stored.slots.fill_from(&node.slots);
            if stored.search_tokens() != before {
                let stored = stored.clone();
                self.index.add_node(&stored);
            }
            return Ok(existing);
        }
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        let mut node = node;
        node.slots = node.slots.normalized();
        self.index.add_node(&node);
        let id = node.id.clone();
        self.nodes.insert(id.clone(), node);
        Ok(id)
    }

    /// Adds a node of `kind`/`label`, choosing a fresh id when the canonical
    /// one is taken by a node with a different label.
    pub fn ensure_node(
        &mut self,
        kind: NodeKind,
        label: &str,
        slots: FiveW1Y,
        provenance: Option<Provenance>,
    ) -> Result<String, GraphError> {
        let mut node = Node::new(kind, label).with_slots(slots);
        if let Some(p) = provenance {
            node.provenance.insert(p);
        }
        if self.find_by_label(kind, label).is_none() {
            let base = node.id.clone();
            let mut n = 2;
            while self.nodes.contains_key(&node.id) {
                node.id = format!("{base}-{n}");
                n += 1;
            }
        }
        self.add_node(node)
    }

    /// Signature-checked insertion; re-adding an existing triple merges its
    /// provenance.
    pub fn add_triple(&mut self, triple: Triple) -> Result<(), GraphError> {
        if triple.head == triple.tail {
            return Err(GraphError::SelfLoop(triple.head));
        }
        let head = self
            .nodes
            .get(&triple.head)
            .ok_or_else(|| GraphError::DanglingEndpoint(triple.head.clone()))?;
        let tail = self
            .nodes
            .get(&triple.tail)
            .ok_or_else(|| GraphError::DanglingEndpoint(triple.tail.clone()))?;
        triple.relation.check(head.kind, tail.kind)?;
        let key = triple.key();
        match self.triples.get_mut(&key) {
            Some(existing) => existing.provenance.extend(triple.provenance),
            None => {
                self.index.add_triple(&key);
                self.triples.insert(key, triple);
            }
        }
        Ok(())
    }

    #[doc(hidden)]
    /// Drops the out-edge index entry of `id`, leaving the triple set intact.
    pub fn corrupt_out_index(&mut self, id: &str) {
        self.index.out_edges.remove(id);
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for t in self.triples.values() {
            let head = self.nodes.get(&t.head);
            let tail = self.nodes.get(&t.tail);
            if head.is_none() {
                report.dangling.push(format!(
                    "{} -[{}]-> {}: missing head",
                    t.head, t.relation, t.tail
                ));
            }
            if tail.is_none() {
                report.dangling.push(format!(
                    "{} -[{}]-> {}: missing tail",
                    t.head, t.relation, t.tail
                ));
            }
            if let (Some(h), Some(tl)) = (head, tail) {
                if let Err(e) = t.relation.check(h.kind, tl.kind) {
                    report
                        .signature_violations
                        .push(format!("{} -[{}]-> {}: {e}", t.head, t.relation, t.tail));
                }
            }
            if t.head == t.tail {
                report.signature_violations.push(format!(
                    "{} -[{}]-> {}: self loop",
                    t.head, t.relation, t.tail
                ));
            }
        }
        let mut by_label: BTreeMap<(NodeKind, String), Vec<&str>> = BTreeMap::new();
        for n in self.nodes.values() {
            if normalize(&n.label).is_empty() {
                report
                    .index_inconsistencies
                    .push(format!("node {} has an empty label", n.id));
            }
            by_label
                .entry((n.kind, n.normalized_label()))
                .or_default()
                .push(&n.id);
        }
        for ((kind, label), ids) in by_label {
            if ids.len() > 1 {
                report
                    .duplicate_labels
                    .push(format!("{kind} \"{label}\": {}", ids.join(", ")));
            }
        }
        let mut touched = BTreeSet::new();
        for (h, _, t) in self.triples.keys() {
            touched.insert(h.as_str());
            touched.insert(t.as_str());
        }
        report.isolated_nodes = self
            .nodes
            .keys()
            .filter(|id| !touched.contains(id.as_str()))
            .cloned()
            .collect();
        report.causal_cycles = self.causal_cycles();
        let expected = Indices::build(&self.nodes, &self.triples);
        report
            .index_inconsistencies
            .extend(index_diff(&expected, &self.index));
        report
    }

    /// Strongly connected components of the `causes` subgraph that contain a
    /// cycle, each as a sorted id list.
    fn causal_cycles(&self) -> Vec<Vec<String>> {
        let succ = |id: &str| -> Vec<String> {
            self.triples
                .range((id.to_string(), RelationKind::Causes, String::new())..)
                .take_while(|((h, r, _), _)| h == id && *r == RelationKind::Causes)
                .map(|((_, _, t), _)| t.clone())
                .collect()
        };
        let ids: Vec<&String> = self.nodes.keys().collect();
        let pos: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let adj: Vec<Vec<usize>> = ids
            .iter()
            .map(|id| {
                succ(id)
                    .iter()
                    .filter_map(|t| pos.get(t.as_str()).copied())
                    .collect()
            })
            .collect();
        let mut out: Vec<Vec<String>> = tarjan(&adj)
            .into_iter()
            .filter(|c| c.len() > 1)
            .map(|c| {
                let mut v: Vec<String> = c.into_iter().map(|i| ids[i].clone()).collect();
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }

    pub fn stats(&self) -> GraphStats {
        let mut s = GraphStats {
            nodes: self.nodes.len(),
            triples: self.triples.len(),
            nodes_by_kind: NodeKind::ALL.iter().map(|k| (*k, 0)).collect(),
            triples_by_relation: RelationKind::ALL.iter().map(|r| (*r, 0)).collect(),
        };
        for n in self.nodes.values() {
            *s.nodes_by_kind.entry(n.kind).or_default() += 1;
        }
        for (_, r, _) in self.triples.keys() {
            *s.triples_by_relation.entry(*r).or_default() += 1;
        }
        s
    }

    /// Induced copy restricted to `ids`, keeping only triples whose endpoints
    /// are both retained.
    pub fn induced(&self, ids: &BTreeSet<String>) -> RiskGraph {
        let nodes = ids
            .iter()
            .filter_map(|id| self.nodes.get(id))
            .cloned()
            .collect();
        let triples = self
            .triples
            .values()
            .filter(|t| ids.contains(&t.head) && ids.contains(&t.tail))
            .cloned()
            .collect();
        RiskGraph::from_parts_unchecked(nodes, triples)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{GRAPH_HEADER}")?;
        for n in self.nodes.values() {
            let mut fields = vec![
                "N".to_string(),
                escape(&n.id),
                n.kind.as_str().to_string(),
                escape(&n.label),
            ];
            fields.extend(
                n.slots
                    .slots()
                    .iter()
                    .map(|s| escape(s.as_deref().unwrap_or(""))),
            );
            push_provenance(&mut fields, &n.provenance);
            writeln!(w, "{}", fields.join("\t"))?;
        }
        for t in self.triples.values() {
            let mut fields = vec![
                "T".to_string(),
                escape(&t.head),
                t.relation.as_str().to_string(),
                escape(&t.tail),
            ];
            push_provenance(&mut fields, &t.provenance);
            writeln!(w, "{}", fields.join("\t"))?;
        }
        writeln!(w, "# end {} {}", self.nodes.len(), self.triples.len())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("graph text is UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write(&mut f)?;
            f.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(text.as_bytes(), "<memory>")
    }

    /// Parses the line format; returns an error (never a partial graph) on
    /// any malformed line or a missing end marker.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut g = RiskGraph::new();
        let mut saw_header = false;
        let mut end: Option<(usize, usize)> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if end.is_some() {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(err(lineno, "content after end marker".into()));
            }
            if !saw_header {
                if line != GRAPH_HEADER {
                    return Err(err(lineno, format!("expected header `{GRAPH_HEADER}`")));
                }
                saw_header = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix("# end ") {
                let counts: Vec<usize> = rest.split(' ').filter_map(|s| s.parse().ok()).collect();
                if counts.len() != 2 {
                    return Err(err(lineno, "malformed end marker".into()));
                }
                end = Some((counts[0], counts[1]));
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line
                .split('\t')
                .map(unescape)
                .collect::<Result<_, _>>()
                .map_err(|m| err(lineno, m))?;
            match fields[0].as_str() {
                "N" => {
                    if fields.len() < 10 || !(fields.len() - 10).is_multiple_of(3) {
                        return Err(err(
                            lineno,
                            format!("node record has {} fields", fields.len()),
                        ));
                    }
                    let kind = NodeKind::parse(&fields[2])
                        .ok_or_else(|| err(lineno, format!("unknown node kind `{}`", fields[2])))?;
                    let opt = |s: &String| (!s.is_empty()).then(|| s.clone());
                    let slots = FiveW1Y {
                        who: opt(&fields[4]),
                        what: opt(&fields[5]),
                        when: opt(&fields[6]),
                        where_: opt(&fields[7]),
                        why: opt(&fields[8]),
                        how: opt(&fields[9]),
                    };
                    let provenance = parse_provenance(&fields[10..]).map_err(|m| err(lineno, m))?;
                    let node = Node {
                        id: fields[1].clone(),
                        kind,
                        label: fields[3].clone(),
                        slots,
                        provenance,
                    };
                    if g.nodes.contains_key(&node.id)
                        || g.find_by_label(kind, &node.label).is_some()
                    {
                        return Err(err(lineno, format!("duplicate node `{}`", node.id)));
                    }
                    g.add_node(node).map_err(|e| err(lineno, e.to_string()))?;
                }
                "T" => {
                    if fields.len() < 4 || !(fields.len() - 4).is_multiple_of(3) {
                        return Err(err(
                            lineno,
                            format!("triple record has {} fields", fields.len()),
                        ));
                    }
                    let relation = RelationKind::parse(&fields[2])
                        .ok_or_else(|| err(lineno, format!("unknown relation `{}`", fields[2])))?;
                    let provenance = parse_provenance(&fields[4..]).map_err(|m| err(lineno, m))?;
                    let triple = Triple {
                        head: fields[1].clone(),
                        relation,
                        tail: fields[3].clone(),
                        provenance,
                    };
                    if g.triples.contains_key(&triple.key()) {
                        return Err(err(lineno, "duplicate triple".into()));
                    }
                    g.add_triple(triple)
                        .map_err(|e| err(lineno, e.to_string()))?;
                }
                other => return Err(err(lineno, format!("unknown record type `{other}`"))),
            }
        }
        if !saw_header {
            return Err(err(1, "empty file".into()));
        }
        match end {
            Some((n, t)) if n == g.nodes.len() && t == g.triples.len() => Ok(g),
            Some((n, t)) => Err(err(
                0,
                format!(
                    "end marker counts {n}/{t} do not match {}/{} records read",
                    g.nodes.len(),
                    g.triples.len()
                ),
            )),
            None => Err(err(0, "truncated: missing end marker".into())),
        }
    }

    /// GraphML document with `kind`, `label` and `relation` attributes.
    pub fn write_graphml<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
        writeln!(
            w,
            r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#
        )?;
        writeln!(
            w,
            r#"  <key id="kind" for="node" attr.name="kind" attr.type="string"/>"#
        )?;
        writeln!(
            w,
            r#"  <key id="label" for="node" attr.name="label" attr.type="string"/>"#
        )?;
        writeln!(
            w,
            r#"  <key id="relation" for="edge" attr.name="relation" attr.type="string"/>"#
        )?;
        writeln!(w, r#"  <graph id="risk" edgedefault="directed">"#)?;
        for n in self.nodes.values() {
            writeln!(
                w,
                r#"    <node id="{}"><data key="kind">{}</data><data key="label">{}</data></node>"#,
                xml_escape(&n.id),
                n.kind,
                xml_escape(&n.label)
            )?;
        }
        for t in self.triples.values() {
            writeln!(
                w,
                r#"    <edge source="{}" target="{}"><data key="relation">{}</data></edge>"#,
                xml_escape(&t.head),
                xml_escape(&t.tail),
                t.relation
            )?;
        }
        writeln!(w, "  </graph>")?;
        writeln!(w, "</graphml>")?;
        Ok(())
    }
}

pub const GRAPH_HEADER: &str = "# risk-graph v1";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub dangling: Vec<String>,
    pub signature_violations: Vec<String>,
    pub duplicate_labels: Vec<String>,
    pub isolated_nodes: Vec<String>,
    pub causal_cycles: Vec<Vec<String>>,
    pub index_inconsistencies: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.dangling.is_empty()
            && self.signature_violations.is_empty()
            && self.duplicate_labels.is_empty()
            && self.isolated_nodes.is_empty()
            && self.causal_cycles.is_empty()
            && self.index_inconsistencies.is_empty()
    }

    /// True when nothing but cycles and isolated nodes were found.
    pub fn is_sound(&self) -> bool {
        self.dangling.is_empty()
            && self.signature_violations.is_empty()
            && self.duplicate_labels.is_empty()
            && self.index_inconsistencies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub triples: usize,
    pub nodes_by_kind: BTreeMap<NodeKind, usize>,
    pub triples_by_relation: BTreeMap<RelationKind, usize>,
}

fn index_diff(expected: &Indices, actual: &Indices) -> Vec<String> {
    let mut out = Vec::new();
    let cmp = |name: &str,
               e: &BTreeMap<String, BTreeSet<TripleKey>>,
               a: &BTreeMap<String, BTreeSet<TripleKey>>,
               out: &mut Vec<String>| {
        let keys: BTreeSet<&String> = e.keys().chain(a.keys()).collect();
        for k in keys {
            let ev = e.get(k).cloned().unwrap_or_default();
            let av = a.get(k).cloned().unwrap_or_default();
            if ev != av {
                out.push(format!(
                    "{name} index of `{k}` has {} entries, expected {}",
                    av.len(),
                    ev.len()
                ));
            }
        }
    };
    cmp("out-edge", &expected.out_edges, &actual.out_edges, &mut out);
    cmp("in-edge", &expected.in_edges, &actual.in_edges, &mut out);
    for (tok, ids) in &expected.tokens {
        let have = actual.tokens.get(tok).cloned().unwrap_or_default();
        if !ids.is_subset(&have) {
            out.push(format!("token index of `{tok}` is missing nodes"));
        }
    }
    for (key, id) in &expected.labels {
        if actual.labels.get(key) != Some(id) {
            out.push(format!("label index of `{id}` is stale"));
        }
    }
    out
}

fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(s: &mut State<'_>, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for &w in &s.adj[v] {
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("non-empty stack");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            s.out.push(comp);
        }
    }
    let n = adj.len();
    let mut s = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.out
}

fn push_provenance(fields: &mut Vec<String>, provenance: &BTreeSet<Provenance>) {
    for p in provenance {
        fields.push(escape(&p.document));
        fields.push(p.line.to_string());
        fields.push(escape(p.note.as_deref().unwrap_or("")));
    }
}

fn parse_provenance(fields: &[String]) -> Result<BTreeSet<Provenance>, String> {
    fields
        .chunks(3)
        .map(|c| {
            let line = c[1]
                .parse()
                .map_err(|_| format!("bad provenance line `{}`", c[1]))?;
            Ok(Provenance {
                document: c[0].clone(),
                line,
                note: (!c[2].is_empty()).then(|| c[2].clone()),
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(format!(
                    "bad escape sequence `\\{}`",
                    other.map(String::from).unwrap_or_default()
                ))
            }
        }
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
