use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{Predicate, Term, Triple, Vocabulary};

/// In-memory triple set with subject and object indexes.
///
/// Triples are shared between the main set and the indexes, so a graph costs
/// one allocation per distinct triple. Once built, a graph is only read;
/// derived graphs (subgraphs, truncations) are new values.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    triples: BTreeSet<Arc<Triple>>,
    by_subject: BTreeMap<Term, BTreeSet<Arc<Triple>>>,
    by_object: BTreeMap<Term, BTreeSet<Arc<Triple>>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for Graph {}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Adds a triple. Returns `false` if it was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        if self.triples.contains(&triple) {
            return false;
        }
        let triple = Arc::new(triple);
        self.by_subject
            .entry(triple.subject().clone())
            .or_default()
            .insert(Arc::clone(&triple));
        self.by_object
            .entry(triple.object().clone())
            .or_default()
            .insert(Arc::clone(&triple));
        self.triples.insert(triple);
        true
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// All triples in `(subject, predicate, object)` order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Triple> + ExactSizeIterator + '_ {
        self.triples.iter().map(|t| &**t)
    }

    pub fn by_subject<'a>(&'a self, subject: &Term) -> impl Iterator<Item = &'a Triple> + 'a {
        self.by_subject.get(subject).into_iter().flatten().map(|t| &**t)
    }

    pub fn by_object<'a>(&'a self, object: &Term) -> impl Iterator<Item = &'a Triple> + 'a {
        self.by_object.get(object).into_iter().flatten().map(|t| &**t)
    }

    /// Distinct subjects in term order.
    pub fn subjects(&self) -> impl Iterator<Item = &Term> + '_ {
        self.by_subject.keys()
    }

    /// Objects of `(subject, predicate, ?)`.
    pub fn objects<'a>(&'a self, subject: &Term, predicate: &'a Term) -> impl Iterator<Item = &'a Term> + 'a {
        self.by_subject(subject)
            .filter(move |t| t.predicate() == predicate)
            .map(Triple::object)
    }

    /// First object of `(subject, predicate, ?)` in term order.
    pub fn object<'a>(&'a self, subject: &Term, predicate: &'a Term) -> Option<&'a Term> {
        self.objects(subject, predicate).next()
    }

    /// Every triple in which one of `nodes` is the subject or the object.
    ///
    /// Same result as the `CONSTRUCT { ?s ?p ?o }` query produced by
    /// [`render_construct_query`](super::render_construct_query) for the
    /// same node list. Unknown nodes match nothing; duplicates are harmless.
    pub fn extract_subgraph(&self, nodes: &[Term]) -> Graph {
        let mut out = Graph::new();
        for node in nodes {
            for t in self.by_subject.get(node).into_iter().chain(self.by_object.get(node)).flatten() {
                out.insert_shared(t);
            }
        }
        out
    }

    fn insert_shared(&mut self, triple: &Arc<Triple>) {
        if !self.triples.insert(Arc::clone(triple)) {
            return;
        }
        self.by_subject
            .entry(triple.subject().clone())
            .or_default()
            .insert(Arc::clone(triple));
        self.by_object
            .entry(triple.object().clone())
            .or_default()
            .insert(Arc::clone(triple));
    }

    /// Sorted distinct subjects `s` with `(s, type, class)` in the graph.
    pub fn list_entities(&self, vocab: &Vocabulary, class: &Term) -> Vec<Term> {
        let type_pred = vocab.predicate(Predicate::Type);
        let found: BTreeSet<&Term> = self
            .by_object(class)
            .filter(|t| t.predicate() == &type_pred)
            .map(Triple::subject)
            .collect();
        found.into_iter().cloned().collect()
    }

    /// Copy of this graph without any triple whose subject is in `drop`.
    pub fn without_subjects(&self, drop: &BTreeSet<Term>) -> Graph {
        let mut out = Graph::new();
        for t in &self.triples {
            if !drop.contains(t.subject()) {
                out.insert_shared(t);
            }
        }
        out
    }

    pub fn union(&self, other: &Graph) -> Graph {
        let mut out = self.clone();
        for t in &other.triples {
            out.insert_shared(t);
        }
        out
    }

    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.triples.is_subset(&other.triples)
    }
}

impl FromIterator<Triple> for Graph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut g = Graph::new();
        g.extend(iter);
        g
    }
}

impl Extend<Triple> for Graph {
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t);
        }
    }
}
