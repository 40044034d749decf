//! RDF-style data model and the subgraph operations the retrieval stages
//! are built on.

mod graph;
mod jsonld;
mod sparql;
mod term;
mod vocab;

pub use graph::Graph;
pub use jsonld::serialize_jsonld;
pub use sparql::render_construct_query;
pub use term::{local_name as term_local_name, Term, TermKind, Triple, XSD_DATE, XSD_DECIMAL, XSD_NS};
pub use vocab::{Class, Predicate, Vocabulary, DEFAULT_NAMESPACE};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KgError {
    #[error("invalid IRI {0:?}: must be non-empty and contain no whitespace")]
    InvalidIri(String),
    #[error("triple {position} must be an IRI, got literal {value:?}")]
    LiteralInIriPosition { position: &'static str, value: String },
    #[error("CONSTRUCT query needs at least one node")]
    EmptyNodeList,
    #[error("CONSTRUCT query nodes must be IRIs, got literal {0:?}")]
    LiteralNode(String),
}
