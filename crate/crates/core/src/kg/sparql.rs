use alloc::string::String;
use core::fmt::Write;

use super::{KgError, Term};

/// Renders the CONSTRUCT query that returns every triple with one of `nodes`
/// as its subject or object.
///
/// `nodes` become a space-delimited list of `<iri>` entries in the VALUES
/// clause, in the given order. The rest of the text is fixed.
pub fn render_construct_query(nodes: &[Term]) -> Result<String, KgError> {
    if nodes.is_empty() {
        return Err(KgError::EmptyNodeList);
    }
    let mut list = String::new();
    for (i, node) in nodes.iter().enumerate() {
        if !node.is_iri() {
            return Err(KgError::LiteralNode(node.value().into()));
        }
        if i > 0 {
            list.push(' ');
        }
        list.push('<');
        push_iri_escaped(&mut list, node.value());
        list.push('>');
    }
    let mut q = String::with_capacity(160 + list.len());
    q.push_str("CONSTRUCT { ?s ?p ?o }\n");
    q.push_str("WHERE {\n");
    let _ = writeln!(q, "    VALUES ?node {{ {list} }}");
    q.push_str("    { ?node ?p ?o . BIND(?node as ?s) }\n");
    q.push_str("    UNION\n");
    q.push_str("    { ?s ?p ?node . BIND(?node as ?o) }\n");
    q.push('}');
    Ok(q)
}

// Characters IRIREF forbids are written as \u escapes.
fn push_iri_escaped(out: &mut String, iri: &str) {
    for c in iri.chars() {
        match c {
            '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
}
