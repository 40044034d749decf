mod common;

use std::collections::BTreeSet;

use common::*;
use flarko_core::kg::{serialize_jsonld, Class, Graph, Predicate, Term, Triple, Vocabulary, XSD_NS};
use proptest::prelude::*;
use serde_json::Value;

/// Rebuilds triples from emitted JSON-LD using only the JSON structure.
fn triples_from_jsonld(text: &str) -> BTreeSet<Triple> {
    let doc: Value = serde_json::from_str(text).expect("valid JSON");
    let ctx = doc["@context"].as_object().expect("context");
    let mut out = BTreeSet::new();
    for node in doc["@graph"].as_array().expect("graph array") {
        let node = node.as_object().unwrap();
        let subject = Term::iri(node["@id"].as_str().unwrap()).unwrap();
        for (key, val) in node {
            if key == "@id" {
                continue;
            }
            let pred = match ctx.get(key) {
                Some(Value::String(iri)) => iri.clone(),
                _ => key.clone(),
            };
            let values: Vec<&Value> = match val {
                Value::Array(a) => a.iter().collect(),
                v => vec![v],
            };
            for v in values {
                let obj = match v {
                    Value::String(s) => Term::literal(s.as_str()),
                    Value::Object(o) if o.contains_key("@id") => Term::iri(o["@id"].as_str().unwrap()).unwrap(),
                    Value::Object(o) => {
                        let ty = o["@type"].as_str().unwrap();
                        let ty = match ty.strip_prefix("xsd:") {
                            Some(local) => format!("{XSD_NS}{local}"),
                            None => ty.to_string(),
                        };
                        Term::typed_literal(o["@value"].as_str().unwrap(), ty)
                    }
                    other => panic!("unexpected value {other}"),
                };
                out.insert(Triple::new(subject.clone(), Term::iri(pred.as_str()).unwrap(), obj).unwrap());
            }
        }
    }
    out
}

#[test]
fn fig3a_five_edges_insert() {
    let v = Vocabulary::default();
    let s = v.entity("Transaction_1");
    let mut g = Graph::new();
    let edges = [
        (Predicate::HasParticipant, Term::literal("00017496858921195E5A")),
        (Predicate::InvolvesSecurity, Term::literal("GRS434003000")),
        (Predicate::TransactionValue, Term::decimal(dec("11000"))),
        (Predicate::TransactionTimestamp, Term::date(d(2020, 3, 27))),
        (Predicate::Type, v.class(Class::SellTransaction)),
    ];
    for (p, o) in edges {
        g.insert(Triple::new(s.clone(), v.predicate(p), o).unwrap());
    }
    assert_eq!(g.len(), 5);
}

#[test]
fn fig3a_extraction_and_serialization() {
    let v = Vocabulary::default();
    let pkg = fig3a_pkg(&v);
    let sub = pkg.extract_subgraph(&[v.entity("Transaction_1")]);
    assert_eq!(sub, pkg);
    let fig_edges: Vec<_> = sub.iter().filter(|t| t.object() != &v.class(Class::Transaction)).collect();
    assert_eq!(fig_edges.len(), 5);

    let json: Value = serde_json::from_str(&serialize_jsonld(&sub, &v)).unwrap();
    let nodes = json["@graph"].as_array().unwrap();
    assert_eq!(nodes.len(), 1);
    let node = nodes[0].as_object().unwrap();
    assert!(node["@id"].as_str().unwrap().ends_with("Transaction_1"));
    let keys: BTreeSet<&str> = node.keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        BTreeSet::from(["@id", "hasParticipant", "involvesSecurity", "transactionTimestamp", "transactionValue", "type"])
    );
    assert_eq!(pkg.list_entities(&v, &v.class(Class::Transaction)), vec![v.entity("Transaction_1")]);
}

#[test]
fn list_entities_counts_seven_summaries() {
    let v = Vocabulary::default();
    let class = v.class(Class::TenWeekPriceSummary);
    let mut g = Graph::new();
    for i in (1..=7).rev() {
        let s = v.entity(&format!("TenWeekPriceSummary_{i}"));
        g.insert(Triple::new(s.clone(), v.predicate(Predicate::Type), class.clone()).unwrap());
        g.insert(Triple::new(s, v.predicate(Predicate::PriceOf), v.entity("Asset_1")).unwrap());
    }
    let got = g.list_entities(&v, &class);
    assert_eq!(got.len(), 7);
    assert!(got.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn serialization_of_twenty_random_graphs_round_trips() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let v = Vocabulary::default();
    let mut runner = TestRunner::deterministic();
    for _ in 0..20 {
        let g = arb_graph(60, 12).new_tree(&mut runner).unwrap().current();
        let text = serialize_jsonld(&g, &v);
        assert_eq!(triples_from_jsonld(&text), g.iter().cloned().collect::<BTreeSet<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extraction_equals_brute_force(g in arb_graph(300, 40), nodes in arb_nodes(20, 40)) {
        prop_assert_eq!(sorted(&g.extract_subgraph(&nodes)), brute_force_extract(&g, &nodes));
    }

    #[test]
    fn extraction_is_idempotent(g in arb_graph(120, 20), nodes in arb_nodes(6, 20)) {
        let once = g.extract_subgraph(&nodes);
        prop_assert_eq!(once.extract_subgraph(&nodes), once.clone());
        prop_assert!(once.is_subgraph_of(&g));
    }

    #[test]
    fn extraction_is_monotone_and_decomposes(g in arb_graph(120, 20), a in arb_nodes(6, 20), b in arb_nodes(6, 20)) {
        let both: Vec<Term> = a.iter().chain(b.iter()).cloned().collect();
        let ea = g.extract_subgraph(&a);
        let eb = g.extract_subgraph(&b);
        let eab = g.extract_subgraph(&both);
        prop_assert!(ea.is_subgraph_of(&eab));
        prop_assert_eq!(ea.union(&eb), eab);
    }

    #[test]
    fn indexes_agree_with_scan(g in arb_graph(120, 15), n in arb_object(15)) {
        let by_obj: Vec<_> = g.by_object(&n).cloned().collect();
        let scan: Vec<_> = g.iter().filter(|t| t.object() == &n).cloned().collect();
        prop_assert_eq!(by_obj, scan);
        let by_subj: Vec<_> = g.by_subject(&n).cloned().collect();
        let scan: Vec<_> = g.iter().filter(|t| t.subject() == &n).cloned().collect();
        prop_assert_eq!(by_subj, scan);
    }

    #[test]
    fn jsonld_is_deterministic_and_round_trips(g in arb_graph(80, 12)) {
        let v = Vocabulary::default();
        let a = serialize_jsonld(&g, &v);
        // rebuild in reverse insertion order; output must not depend on it
        let rebuilt: Graph = g.iter().rev().cloned().collect();
        prop_assert_eq!(&a, &serialize_jsonld(&rebuilt, &v));
        prop_assert_eq!(triples_from_jsonld(&a), g.iter().cloned().collect::<BTreeSet<_>>());
    }
}

#[test]
fn extraction_matches_brute_force_on_large_graphs() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    for _ in 0..10 {
        let g = arb_graph(1000, 200).new_tree(&mut runner).unwrap().current();
        let nodes = arb_nodes(20, 200).new_tree(&mut runner).unwrap().current();
        assert_eq!(sorted(&g.extract_subgraph(&nodes)), brute_force_extract(&g, &nodes));
    }
}
