use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::{Map, Value};

use super::{Graph, Predicate, Term, Vocabulary, XSD_NS};

/// Compacted JSON-LD: `{"@context": {...}, "@graph": [...]}`.
///
/// The context maps every vocabulary local name to its predicate IRI (plus
/// an `xsd` prefix for literal datatypes). The graph holds one node object
/// per subject, in IRI order, keyed by predicate local name; a predicate
/// with several objects becomes an array in term order. Referenced nodes are
/// never nested. Output is compact and byte-stable for a given graph.
pub fn serialize_jsonld(graph: &Graph, vocab: &Vocabulary) -> String {
    let mut context = BTreeMap::new();
    context.insert(String::from("xsd"), Value::String(XSD_NS.into()));
    for p in Predicate::ALL {
        context.insert(p.local_name().into(), Value::String(vocab.predicate(p).value().into()));
    }

    let mut nodes = Vec::new();
    for subject in graph.subjects() {
        let mut props: BTreeMap<String, Vec<Value>> = BTreeMap::new();
        for t in graph.by_subject(subject) {
            let key = match vocab.lookup_predicate(t.predicate().value()) {
                Some(p) => String::from(p.local_name()),
                None => String::from(t.predicate().value()),
            };
            props.entry(key).or_default().push(term_value(t.object()));
        }
        let mut node = Map::new();
        node.insert("@id".into(), Value::String(subject.value().into()));
        for (key, mut values) in props {
            let v = if values.len() == 1 {
                values.pop().unwrap_or(Value::Null)
            } else {
                Value::Array(values)
            };
            node.insert(key, v);
        }
        nodes.push(Value::Object(node));
    }

    let mut doc = Map::new();
    doc.insert("@context".into(), Value::Object(context.into_iter().collect()));
    doc.insert("@graph".into(), Value::Array(nodes));
    serde_json::to_string(&Value::Object(doc)).unwrap_or_default()
}

fn term_value(term: &Term) -> Value {
    if term.is_iri() {
        let mut m = Map::new();
        m.insert("@id".into(), Value::String(term.value().into()));
        return Value::Object(m);
    }
    match term.datatype() {
        None => Value::String(term.value().into()),
        Some(dt) => {
            let ty = match dt.strip_prefix(XSD_NS) {
                Some(local) => alloc::format!("xsd:{local}"),
                None => String::from(dt),
            };
            let mut m = Map::new();
            m.insert("@type".into(), Value::String(ty));
            m.insert("@value".into(), Value::String(term.value().into()));
            Value::Object(m)
        }
    }
}
