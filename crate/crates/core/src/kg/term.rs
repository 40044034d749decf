use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use super::KgError;

pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DATE: &str = "http://www.w3.org/2001/XMLSchema#date";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TermKind {
    Iri,
    Literal,
}

/// A graph node or edge label.
///
/// Equality and ordering cover kind, value and datatype, which is the same
/// notion of term identity SPARQL uses when matching `?s ?p ?node`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Term {
    kind: TermKind,
    value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Result<Self, KgError> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return Err(KgError::InvalidIri(value));
        }
        Ok(Self {
            kind: TermKind::Iri,
            value,
            datatype: None,
        })
    }

    /// Plain (untyped) literal.
    pub fn literal(value: impl Into<String>) -> Self {
        Self {
            kind: TermKind::Literal,
            value: value.into(),
            datatype: None,
        }
    }

    pub fn typed_literal(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        Self {
            kind: TermKind::Literal,
            value: value.into(),
            datatype: Some(datatype.into()),
        }
    }

    /// Decimal literal in canonical lexical form (no trailing zeros).
    pub fn decimal(value: rust_decimal::Decimal) -> Self {
        Self::typed_literal(value.normalize().to_string(), XSD_DECIMAL)
    }

    /// ISO-8601 `xsd:date` literal.
    pub fn date(value: chrono::NaiveDate) -> Self {
        Self::typed_literal(value.format("%Y-%m-%d").to_string(), XSD_DATE)
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn is_iri(&self) -> bool {
        self.kind == TermKind::Iri
    }

    pub fn is_literal(&self) -> bool {
        self.kind == TermKind::Literal
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn datatype(&self) -> Option<&str> {
        self.datatype.as_deref()
    }

    /// Trailing segment of an IRI after the last `:`, `/` or `#`.
    pub fn local_name(&self) -> &str {
        local_name(&self.value)
    }
}

/// Trailing segment of an IRI after the last `:`, `/` or `#`.
pub fn local_name(iri: &str) -> &str {
    match iri.rfind([':', '/', '#']) {
        Some(i) => &iri[i + 1..],
        None => iri,
    }
}

impl fmt::Display for Term {
    /// N-Triples style rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TermKind::Iri => write!(f, "<{}>", self.value),
            TermKind::Literal => {
                f.write_str("\"")?;
                for c in self.value.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(dt) = &self.datatype {
                    write!(f, "^^<{dt}>")?;
                }
                Ok(())
            }
        }
    }
}

/// A fact. Subject and predicate are always IRIs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, KgError> {
        if !subject.is_iri() {
            return Err(KgError::LiteralInIriPosition {
                position: "subject",
                value: subject.value,
            });
        }
        if !predicate.is_iri() {
            return Err(KgError::LiteralInIriPosition {
                position: "predicate",
                value: predicate.value,
            });
        }
        Ok(Self {
            subject,
            predicate,
            object,
        })
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    pub fn mentions(&self, node: &Term) -> bool {
        &self.subject == node || &self.object == node
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}
