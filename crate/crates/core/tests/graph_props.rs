use proactive_safety::graph::{FiveW1Y, NodeKind, Provenance, RelationKind, RiskGraph, Triple};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = NodeKind> {
    prop::sample::select(NodeKind::ALL.to_vec())
}

fn relation() -> impl Strategy<Value = RelationKind> {
    prop::sample::select(RelationKind::ALL.to_vec())
}

#[derive(Debug, Clone)]
struct Shape {
    nodes: Vec<(NodeKind, String, Option<String>, Option<(String, usize)>)>,
    edges: Vec<(usize, RelationKind, usize, Option<String>)>,
}

fn shape() -> impl Strategy<Value = Shape> {
    let node = (
        kind(),
        "[a-z]{1,6}( [a-zA-Z0-9\t\\\\,\"é]{0,8})?",
        prop::option::of("\\PC{0,12}"),
        prop::option::of(("[a-z_.]{1,8}", 1usize..500)),
    );
    prop::collection::vec(node, 1..30).prop_flat_map(|nodes| {
        let n = nodes.len();
        let edge = (0..n, relation(), 0..n, prop::option::of("[ -~]{0,10}"));
        (Just(nodes), prop::collection::vec(edge, 0..60))
            .prop_map(|(nodes, edges)| Shape { nodes, edges })
    })
}

fn build(shape: &Shape) -> RiskGraph {
    let mut g = RiskGraph::new();
    let mut ids = Vec::new();
    for (i, (k, label, why, prov)) in shape.nodes.iter().enumerate() {
        let slots = FiveW1Y {
            why: why.clone(),
            ..FiveW1Y::default()
        };
        let prov = prov.as_ref().map(|(d, l)| Provenance::new(d.clone(), *l));
        ids.push(
            g.ensure_node(*k, &format!("{label} {i}"), slots, prov)
                .unwrap(),
        );
    }
    for (h, r, t, note) in &shape.edges {
        let (hk, tk) = (
            g.node(&ids[*h]).unwrap().kind,
            g.node(&ids[*t]).unwrap().kind,
        );
        if h == t || !r.allows(hk, tk) {
            continue;
        }
        let mut triple = Triple::new(ids[*h].clone(), *r, ids[*t].clone());
        if let Some(n) = note {
            triple = triple.with_provenance(Provenance::new("doc", 1).with_note(n.clone()));
        }
        g.add_triple(triple).unwrap();
    }
    g
}

proptest! {
    #[test]
    fn save_load_roundtrip(s in shape()) {
        let g = build(&s);
        let text = g.to_text();
        let back = RiskGraph::from_text(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_text(), text);
        prop_assert!(back.validate().is_sound());
    }

    #[test]
    fn truncated_text_is_rejected(s in shape(), cut in 0.0f64..1.0) {
        let text = build(&s).to_text();
        let lines: Vec<&str> = text.lines().collect();
        let keep = ((lines.len() - 1) as f64 * cut) as usize;
        let partial = lines[..keep].join("\n");
        prop_assert!(RiskGraph::from_text(&partial).is_err());
    }

    #[test]
    fn signature_enforced(hk in kind(), tk in kind(), r in relation()) {
        let mut g = RiskGraph::new();
        let h = g.ensure_node(hk, "head", FiveW1Y::default(), None).unwrap();
        let t = g.ensure_node(tk, "tail", FiveW1Y::default(), None).unwrap();
        let res = g.add_triple(Triple::new(h, r, t));
        prop_assert_eq!(res.is_ok(), r.allows(hk, tk));
        prop_assert_eq!(g.triple_count(), usize::from(r.allows(hk, tk)));
    }

    #[test]
    fn index_corruption_is_flagged(s in shape()) {
        let g = build(&s);
        let first = g.triples().next().cloned();
        if let Some(t) = first {
            let mut c = g.clone();
            c.corrupt_out_index(&t.head);
            prop_assert!(!c.validate().index_inconsistencies.is_empty());
            prop_assert!(c.out_edges(&t.head).next().is_none());
        }
    }
}

#[test]
fn insertion_order_does_not_change_bytes() {
    let mut a = RiskGraph::new();
    let mut b = RiskGraph::new();
    let x = a
        .ensure_node(NodeKind::Event, "Pump failure", FiveW1Y::default(), None)
        .unwrap();
    let y = a
        .ensure_node(
            NodeKind::Event,
            "No flow deviation",
            FiveW1Y::default(),
            None,
        )
        .unwrap();
    a.add_triple(Triple::new(x.clone(), RelationKind::Causes, y.clone()))
        .unwrap();
    let y2 = b
        .ensure_node(
            NodeKind::Event,
            "No flow deviation",
            FiveW1Y::default(),
            None,
        )
        .unwrap();
    let x2 = b
        .ensure_node(NodeKind::Event, "Pump failure", FiveW1Y::default(), None)
        .unwrap();
    b.add_triple(Triple::new(x2, RelationKind::Causes, y2))
        .unwrap();
    assert_eq!(a.to_text(), b.to_text());
}
