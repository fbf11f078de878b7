//! Keyword queries over the risk graph: seed matching, causal expansion,
//! causal chains and ranked countermeasures.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{Node, NodeKind, RelationKind, RiskGraph, Triple};
use crate::text::{contains_phrase, tokens};
use crate::{Error, Result};

pub const DEFAULT_MAX_DEPTH: usize = 4;
pub const MAX_CHAIN_LEN: usize = 8;
pub const MAX_CHAINS: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    /// Towards causes.
    Upstream,
    /// Towards consequences.
    Downstream,
    #[default]
    Both,
}

impl Traversal {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upstream" | "up" => Some(Self::Upstream),
            "downstream" | "down" => Some(Self::Downstream),
            "both" => Some(Self::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub keywords: Vec<String>,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub direction: Traversal,
    /// Match nodes carrying any keyword instead of all of them.
    #[serde(default)]
    pub match_any: bool,
}

fn default_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

impl Query {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> Result<Self> {
        let q = Self {
            keywords: keywords
                .iter()
                .map(|k| k.as_ref().trim().to_string())
                .collect(),
            max_depth: DEFAULT_MAX_DEPTH,
            direction: Traversal::Both,
            match_any: false,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_direction(mut self, direction: Traversal) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_match_any(mut self, any: bool) -> Self {
        self.match_any = any;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords.iter().all(|k| tokens(k).is_empty()) {
            return Err(Error::invalid("query needs at least one non-empty keyword"));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalChain {
    /// Root cause first, seed last.
    pub nodes: Vec<String>,
}

impl CausalChain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub treatment: String,
    pub treatment_label: String,
    pub anchor: String,
    pub anchor_label: String,
    /// Index into [`QueryResult::chains`].
    pub chain: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: Query,
    pub seeds: Vec<String>,
    pub nodes: Vec<Node>,
    pub triples: Vec<Triple>,
    pub chains: Vec<CausalChain>,
    pub recommendations: Vec<Recommendation>,
}

impl QueryResult {
    pub fn subgraph(&self) -> RiskGraph {
        RiskGraph::from_parts_unchecked(self.nodes.clone(), self.triples.clone())
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    fn label<'a>(&'a self, id: &'a str) -> &'a str {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .map(|n| n.label.as_str())
            .unwrap_or(id)
    }

    /// Plain-text report: seeds, nodes, edges, chains, recommendations.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mode = if self.query.match_any { "any" } else { "all" };
        let _ = writeln!(
            s,
            "# query: {} ({mode}, depth {}, {:?})",
            self.query.keywords.join(" | "),
            self.query.max_depth,
            self.query.direction
        );
        let _ = writeln!(s, "seeds:");
        for id in &self.seeds {
            let _ = writeln!(s, "  {id}\t{}", self.label(id));
        }
        let _ = writeln!(s, "nodes:");
        for n in &self.nodes {
            let _ = writeln!(s, "  {}\t{}", n.id, n.label);
        }
        let _ = writeln!(s, "edges:");
        for t in &self.triples {
            let _ = writeln!(s, "  {}\t{}\t{}", t.head, t.relation, t.tail);
        }
        let _ = writeln!(s, "chains:");
        for (i, c) in self.chains.iter().enumerate() {
            let labels: Vec<&str> = c.nodes.iter().map(|id| self.label(id)).collect();
            let _ = writeln!(s, "  {}. {}", i + 1, labels.join(" -> "));
        }
        let _ = writeln!(s, "recommendations:");
        for (i, r) in self.recommendations.iter().enumerate() {
            let _ = writeln!(
                s,
                "  {}. {:.3}\t{}\tmitigates\t{}",
                i + 1,
                r.score,
                r.treatment_label,
                r.anchor_label
            );
        }
        s
    }
}

fn node_matches(node: &Node, keyword: &[String]) -> bool {
    let s = &node.slots;
    std::iter::once(Some(node.label.as_str()))
        .chain([&s.who, &s.what, &s.when, &s.where_, &s.why, &s.how].map(|v| v.as_deref()))
        .flatten()
        .any(|field| contains_phrase(&tokens(field), keyword))
}

/// Nodes whose label or a slot contains every keyword as a token phrase
/// (any keyword with `match_any`), in id order.
pub fn match_nodes<S: AsRef<str>>(
    graph: &RiskGraph,
    keywords: &[S],
    match_any: bool,
) -> Result<Vec<String>> {
    let phrases: Vec<Vec<String>> = keywords
        .iter()
        .map(|k| tokens(k.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    if phrases.is_empty() {
        return Err(Error::invalid("query needs at least one non-empty keyword"));
    }
    let mut out: Vec<String> = graph
        .nodes()
        .filter(|n| {
            if match_any {
                phrases.iter().any(|p| node_matches(n, p))
            } else {
                phrases.iter().all(|p| node_matches(n, p))
            }
        })
        .map(|n| n.id.clone())
        .collect();
    out.sort();
    Ok(out)
}

fn causal_closure(
    graph: &RiskGraph,
    seeds: &[String],
    max_depth: usize,
    upstream: bool,
) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = seeds
        .iter()
        .filter(|s| graph.node(s).is_some())
        .cloned()
        .collect();
    let mut queue: VecDeque<(String, usize)> = seen.iter().map(|s| (s.clone(), 0)).collect();
    while let Some((id, d)) = queue.pop_front() {
        if d == max_depth {
            continue;
        }
        let next: Vec<String> = if upstream {
            graph
                .in_edges(&id)
                .filter(|t| t.relation == RelationKind::Causes)
                .map(|t| t.head.clone())
                .collect()
        } else {
            graph
                .out_edges(&id)
                .filter(|t| t.relation == RelationKind::Causes)
                .map(|t| t.tail.clone())
                .collect()
        };
        for n in next {
            if seen.insert(n.clone()) {
                queue.push_back((n, d + 1));
            }
        }
    }
    seen
}

/// Node ids within `max_depth` causal hops of the seeds, plus the treatments,
/// workers and hazards adjacent to any included event. `Both` is the union
/// of the upstream and downstream closures.
pub fn expand(
    graph: &RiskGraph,
    seeds: &[String],
    max_depth: usize,
    direction: Traversal,
) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    if matches!(direction, Traversal::Upstream | Traversal::Both) {
        ids.extend(causal_closure(graph, seeds, max_depth, true));
    }
    if matches!(direction, Traversal::Downstream | Traversal::Both) {
        ids.extend(causal_closure(graph, seeds, max_depth, false));
    }
    let attachable = |id: &str| {
        graph.node(id).is_some_and(|n| {
            matches!(
                n.kind,
                NodeKind::Treatment | NodeKind::Worker | NodeKind::Hazard
            )
        })
    };
    let events: Vec<String> = ids
        .iter()
        .filter(|id| graph.node(id).is_some_and(|n| n.kind == NodeKind::Event))
        .cloned()
        .collect();
    for e in events {
        let neighbors: Vec<String> = graph
            .out_edges(&e)
            .map(|t| t.tail.clone())
            .chain(graph.in_edges(&e).map(|t| t.head.clone()))
            .filter(|n| attachable(n))
            .collect();
        ids.extend(neighbors);
    }
    ids
}

/// Maximal simple `causes` paths ending at each seed, longest first, ties by
/// id sequence. Paths stop growing at `max_len` nodes; at most
/// [`MAX_CHAINS`] are enumerated.
pub fn causal_chains(graph: &RiskGraph, seeds: &[String], max_len: usize) -> Vec<CausalChain> {
    fn walk(graph: &RiskGraph, path: &mut Vec<String>, max_len: usize, out: &mut Vec<Vec<String>>) {
        if out.len() >= MAX_CHAINS {
            return;
        }
        let head = path.last().expect("non-empty path").clone();
        let preds: Vec<String> = if path.len() < max_len {
            graph
                .in_edges(&head)
                .filter(|t| t.relation == RelationKind::Causes && !path.contains(&t.head))
                .map(|t| t.head.clone())
                .collect()
        } else {
            Vec::new()
        };
        if preds.is_empty() {
            out.push(path.iter().rev().cloned().collect());
            return;
        }
        for p in preds {
            path.push(p);
            walk(graph, path, max_len, out);
            path.pop();
        }
    }
    let mut raw = Vec::new();
    for s in seeds.iter().filter(|s| graph.node(s).is_some()) {
        walk(graph, &mut vec![s.clone()], max_len.max(1), &mut raw);
    }
    raw.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    raw.dedup();
    raw.into_iter().map(|nodes| CausalChain { nodes }).collect()
}

/// Treatments mitigating a chain node. An anchor's depth is its index in the
/// highest-ranked chain containing it; score is `1 / (1 + depth)`. Each
/// treatment keeps its best anchor. Ties are ordered by treatment id.
pub fn recommend(graph: &RiskGraph, chains: &[CausalChain]) -> Vec<Recommendation> {
    let mut position: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (ci, c) in chains.iter().enumerate() {
        for (i, id) in c.nodes.iter().enumerate() {
            position.entry(id.as_str()).or_insert((ci, i));
        }
    }
    let mut best: BTreeMap<String, Recommendation> = BTreeMap::new();
    for (&anchor, &(chain, depth)) in &position {
        for t in graph
            .in_edges(anchor)
            .filter(|t| t.relation == RelationKind::Mitigates)
        {
            let Some(treatment) = graph
                .node(&t.head)
                .filter(|n| n.kind == NodeKind::Treatment)
            else {
                continue;
            };
            let rec = Recommendation {
                treatment: treatment.id.clone(),
                treatment_label: treatment.label.clone(),
                anchor: anchor.to_string(),
                anchor_label: graph
                    .node(anchor)
                    .map(|n| n.label.clone())
                    .unwrap_or_default(),
                chain,
                score: 1.0 / (1.0 + depth as f64),
            };
            let better = best.get(&treatment.id).is_none_or(|b| {
                rec.score > b.score
                    || (rec.score == b.score && (rec.chain, &rec.anchor) < (b.chain, &b.anchor))
            });
            if better {
                best.insert(treatment.id.clone(), rec);
            }
        }
    }
    let mut out: Vec<Recommendation> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.treatment.cmp(&b.treatment))
    });
    out
}

pub fn run_query(graph: &RiskGraph, query: &Query) -> Result<QueryResult> {
    query.validate()?;
    let seeds = match_nodes(graph, &query.keywords, query.match_any)?;
    let ids = expand(graph, &seeds, query.max_depth, query.direction);
    let sub = graph.induced(&ids);
    let chains = causal_chains(&sub, &seeds, MAX_CHAIN_LEN);
    let recommendations = recommend(&sub, &chains);
    Ok(QueryResult {
        query: query.clone(),
        seeds,
        nodes: sub.nodes().cloned().collect(),
        triples: sub.triples().cloned().collect(),
        chains,
        recommendations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FiveW1Y;

    fn ev(g: &mut RiskGraph, label: &str) -> String {
        g.ensure_node(NodeKind::Event, label, FiveW1Y::default(), None)
            .unwrap()
    }

    fn causes(g: &mut RiskGraph, a: &str, b: &str) {
        g.add_triple(Triple::new(a, RelationKind::Causes, b))
            .unwrap();
    }

    #[test]
    fn empty_keywords_rejected() {
        let g = RiskGraph::new();
        assert!(match_nodes::<&str>(&g, &[], false).is_err());
        assert!(match_nodes(&g, &["  ", "!!"], false).is_err());
        assert!(Query::new(&["x"])
            .unwrap()
            .with_depth(0)
            .validate()
            .is_err());
    }

    #[test]
    fn isolated_seed_depth_one() {
        let mut g = RiskGraph::new();
        let a = ev(&mut g, "lonely");
        ev(&mut g, "other");
        let ids = expand(&g, std::slice::from_ref(&a), 1, Traversal::Both);
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![a.clone()]);
        assert_eq!(
            causal_chains(&g, std::slice::from_ref(&a), 8),
            vec![CausalChain { nodes: vec![a] }]
        );
    }

    #[test]
    fn diamond_gives_two_chains() {
        let mut g = RiskGraph::new();
        let [r, a, b, s] = ["root", "left", "right", "seed"].map(|l| ev(&mut g, l));
        causes(&mut g, &r, &a);
        causes(&mut g, &r, &b);
        causes(&mut g, &a, &s);
        causes(&mut g, &b, &s);
        let c = causal_chains(&g, std::slice::from_ref(&s), 8);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].nodes, vec![r.clone(), a, s.clone()]);
        assert_eq!(c[1].nodes, vec![r, b, s]);
    }

    #[test]
    fn cycles_terminate() {
        let mut g = RiskGraph::new();
        let [a, b, c] = ["a", "b", "c"].map(|l| ev(&mut g, l));
        causes(&mut g, &a, &b);
        causes(&mut g, &b, &c);
        causes(&mut g, &c, &a);
        assert_eq!(
            expand(&g, std::slice::from_ref(&a), 10, Traversal::Both).len(),
            3
        );
        let chains = causal_chains(&g, std::slice::from_ref(&a), 8);
        assert_eq!(
            chains,
            vec![CausalChain {
                nodes: vec![b, c, a]
            }]
        );
    }

    #[test]
    fn chain_length_cap() {
        let mut g = RiskGraph::new();
        let ids: Vec<String> = (0..12).map(|i| ev(&mut g, &format!("e{i}"))).collect();
        for w in ids.windows(2) {
            causes(&mut g, &w[0], &w[1]);
        }
        let c = causal_chains(&g, &[ids[11].clone()], MAX_CHAIN_LEN);
        assert_eq!(c[0].len(), MAX_CHAIN_LEN);
        assert_eq!(c[0].nodes.last(), Some(&ids[11]));
    }

    #[test]
    fn root_treatment_outranks_symptom_treatment() {
        let mut g = RiskGraph::new();
        let [root, mid, seed] = ["root cause", "middle", "symptom"].map(|l| ev(&mut g, l));
        causes(&mut g, &root, &mid);
        causes(&mut g, &mid, &seed);
        let fix_root = g
            .ensure_node(NodeKind::Treatment, "fix root", FiveW1Y::default(), None)
            .unwrap();
        let fix_seed = g
            .ensure_node(NodeKind::Treatment, "a patch", FiveW1Y::default(), None)
            .unwrap();
        g.add_triple(Triple::new(&fix_root, RelationKind::Mitigates, &root))
            .unwrap();
        g.add_triple(Triple::new(&fix_seed, RelationKind::Mitigates, &seed))
            .unwrap();
        let chains = causal_chains(&g, std::slice::from_ref(&seed), 8);
        let r = recommend(&g, &chains);
        assert_eq!(
            r.iter().map(|r| r.treatment.as_str()).collect::<Vec<_>>(),
            vec![fix_root.as_str(), fix_seed.as_str()]
        );
        assert_eq!(r[0].score, 1.0);
        assert!((r[1].score - 1.0 / 3.0).abs() < 1e-15);
        assert!(recommend(&RiskGraph::new(), &chains).is_empty());
    }

    #[test]
    fn equal_depth_ties_by_id() {
        let mut g = RiskGraph::new();
        let s = ev(&mut g, "seed");
        let b = g
            .ensure_node(NodeKind::Treatment, "bravo", FiveW1Y::default(), None)
            .unwrap();
        let a = g
            .ensure_node(NodeKind::Treatment, "alpha", FiveW1Y::default(), None)
            .unwrap();
        g.add_triple(Triple::new(&b, RelationKind::Mitigates, &s))
            .unwrap();
        g.add_triple(Triple::new(&a, RelationKind::Mitigates, &s))
            .unwrap();
        let r = recommend(&g, &causal_chains(&g, &[s], 8));
        assert_eq!(r[0].treatment, a);
        assert_eq!(r[1].treatment, b);
    }

    #[test]
    fn phrases_do_not_span_fields() {
        let mut g = RiskGraph::new();
        g.ensure_node(
            NodeKind::Event,
            "Feed tank",
            FiveW1Y::what("temperature rising"),
            None,
        )
        .unwrap();
        assert!(match_nodes(&g, &["tank temperature"], false)
            .unwrap()
            .is_empty());
        assert_eq!(
            match_nodes(&g, &["TANK", "temperature"], false)
                .unwrap()
                .len(),
            1
        );
        assert!(match_nodes(&g, &["nonexistent"], false).unwrap().is_empty());
        assert_eq!(
            match_nodes(&g, &["nonexistent", "feed"], true)
                .unwrap()
                .len(),
            1
        );
    }
}
