use std::path::Path;

use proactive_safety::graph::RelationKind;
use proactive_safety::ingest::extract::CandidateStatus;
use proactive_safety::ingest::hazop::{parse_hazop, write_hazop, HazopRow, HazopSheet};
use proactive_safety::ingest::review::{apply_review, build_graph, Decision, ReviewDecision};
use proactive_safety::ingest::{Corpus, Gazetteers};
use proptest::prelude::*;

fn corpus_extraction() -> proactive_safety::ingest::extract::Extraction {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cstr_corpus");
    let gaz = Gazetteers::builtin();
    Corpus::load(&dir, &gaz).unwrap().extract(&gaz)
}

fn items() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[A-Za-z][a-z,'()]{0,8}( [a-z(][a-z,'()]{0,8}){0,3}", 0..4)
}

fn row() -> impl Strategy<Value = HazopRow> {
    (
        "[A-Z][a-z]{1,8}( [a-z]{1,6})?",
        prop::collection::vec("[A-Za-z][a-z,'()]{0,8}( [a-z(][a-z,'()]{0,8}){0,3}", 1..4),
        items(),
        items(),
        items(),
    )
        .prop_map(
            |(deviation, causes, consequences, safeguards, recommendations)| HazopRow {
                deviation,
                causes,
                consequences,
                safeguards,
                recommendations,
                line: 0,
            },
        )
}

proptest! {
    #[test]
    fn hazop_write_parse_roundtrip(param in prop::option::of("[a-z]{1,10}"), rows in prop::collection::vec(row(), 0..8)) {
        let sheet = HazopSheet { parameter: param, rows, errors: vec![] };
        let text = write_hazop(&sheet).unwrap();
        let mut back = parse_hazop(&text, "gen.csv").unwrap();
        prop_assert!(back.errors.is_empty());
        for r in &mut back.rows {
            r.line = 0;
        }
        prop_assert_eq!(back, sheet);
    }

    #[test]
    fn review_is_all_or_nothing(
        picks in prop::collection::vec((0u8..4, prop::sample::select(RelationKind::ALL.to_vec())), 40..60),
        unknown in any::<bool>(),
    ) {
        let ex = corpus_extraction();
        let mut cands = ex.triples.clone();
        let mut decisions: Vec<ReviewDecision> = cands
            .iter()
            .zip(&picks)
            .enumerate()
            .map(|(i, (c, (p, r)))| ReviewDecision {
                id: c.id.clone(),
                decision: match p {
                    0 | 1 => Decision::Accept,
                    2 => Decision::Reject,
                    _ => Decision::Edit { head: None, relation: Some(*r), tail: None },
                },
                line: i + 1,
            })
            .collect();
        if unknown {
            decisions.push(ReviewDecision { id: "ffffffffffffffff".into(), decision: Decision::Accept, line: 99 });
        }
        match apply_review(&mut cands, &decisions) {
            Ok(audit) => {
                prop_assert!(!unknown);
                prop_assert_eq!(audit.len(), decisions.len());
                for (c, d) in cands.iter().zip(&decisions) {
                    let want = match d.decision {
                        Decision::Accept => CandidateStatus::Accepted,
                        Decision::Reject => CandidateStatus::Rejected,
                        Decision::Edit { .. } => CandidateStatus::Edited,
                    };
                    prop_assert_eq!(c.status, want);
                    prop_assert!(c.relation.allows(c.head.kind, c.tail.kind));
                }
                let pending = cands.iter().any(|c| c.status == CandidateStatus::Pending);
                let mut reviewed = ex.clone();
                reviewed.triples = cands;
                prop_assert_eq!(build_graph(&reviewed).is_ok(), !pending);
            }
            Err(_) => prop_assert_eq!(cands, ex.triples),
        }
    }
}

#[test]
fn candidate_ids_are_stable_and_unique() {
    let a = corpus_extraction();
    let b = corpus_extraction();
    assert_eq!(a, b);
    let mut ids: Vec<&str> = a.triples.iter().map(|t| t.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), a.triples.len());
    assert!(a
        .triples
        .iter()
        .all(|t| t.status == CandidateStatus::Pending));
    assert!(
        build_graph(&a).is_err(),
        "pending candidates never reach the graph"
    );
}

#[test]
fn reviewing_twice_is_refused() {
    let ex = corpus_extraction();
    let mut cands = ex.triples.clone();
    let d = vec![ReviewDecision {
        id: cands[0].id.clone(),
        decision: Decision::Reject,
        line: 1,
    }];
    apply_review(&mut cands, &d).unwrap();
    let snapshot = cands.clone();
    assert!(apply_review(&mut cands, &d).is_err());
    assert_eq!(cands, snapshot);
}
