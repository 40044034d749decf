use alloc::format;
use alloc::string::String;

use super::{KgError, Term};

pub const DEFAULT_NAMESPACE: &str = "urn:flarko:";

/// Edge labels of the personal and market graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    HasParticipant,
    InvolvesSecurity,
    TransactionValue,
    TransactionTimestamp,
    Type,
    PriceOf,
    PeriodEndPrice,
    PeriodAveragePrice,
    PeriodHighPrice,
    PeriodLowPrice,
    PeriodEndDate,
    Identifier,
    Category,
    Sector,
    Industry,
}

impl Predicate {
    pub const ALL: [Predicate; 15] = [
        Predicate::HasParticipant,
        Predicate::InvolvesSecurity,
        Predicate::TransactionValue,
        Predicate::TransactionTimestamp,
        Predicate::Type,
        Predicate::PriceOf,
        Predicate::PeriodEndPrice,
        Predicate::PeriodAveragePrice,
        Predicate::PeriodHighPrice,
        Predicate::PeriodLowPrice,
        Predicate::PeriodEndDate,
        Predicate::Identifier,
        Predicate::Category,
        Predicate::Sector,
        Predicate::Industry,
    ];

    pub fn local_name(self) -> &'static str {
        match self {
            Predicate::HasParticipant => "hasParticipant",
            Predicate::InvolvesSecurity => "involvesSecurity",
            Predicate::TransactionValue => "transactionValue",
            Predicate::TransactionTimestamp => "transactionTimestamp",
            Predicate::Type => "type",
            Predicate::PriceOf => "priceOf",
            Predicate::PeriodEndPrice => "periodEndPrice",
            Predicate::PeriodAveragePrice => "periodAveragePrice",
            Predicate::PeriodHighPrice => "periodHighPrice",
            Predicate::PeriodLowPrice => "periodLowPrice",
            Predicate::PeriodEndDate => "periodEndDate",
            Predicate::Identifier => "identifier",
            Predicate::Category => "category",
            Predicate::Sector => "sector",
            Predicate::Industry => "industry",
        }
    }
}

/// Node classes used as objects of `type` edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    /// Base class carried by every transaction node, whatever its direction.
    Transaction,
    BuyTransaction,
    SellTransaction,
    TenWeekPriceSummary,
}

impl Class {
    pub fn local_name(self) -> &'static str {
        match self {
            Class::Transaction => "Transaction",
            Class::BuyTransaction => "BuyTransaction",
            Class::SellTransaction => "SellTransaction",
            Class::TenWeekPriceSummary => "TenWeekPriceSummary",
        }
    }
}

/// IRI minting for one namespace. Every predicate, class and entity IRI is
/// `namespace + local name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    namespace: String,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            namespace: String::from(DEFAULT_NAMESPACE),
        }
    }
}

impl Vocabulary {
    pub fn new(namespace: impl Into<String>) -> Result<Self, KgError> {
        let namespace = namespace.into();
        // Validate once so the infallible accessors below hold.
        Term::iri(format!("{namespace}x"))?;
        Ok(Self { namespace })
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn predicate(&self, p: Predicate) -> Term {
        self.entity(p.local_name())
    }

    pub fn class(&self, c: Class) -> Term {
        self.entity(c.local_name())
    }

    /// `namespace + local`. Panics if `local` contains whitespace.
    pub fn entity(&self, local: &str) -> Term {
        Term::iri(format!("{}{}", self.namespace, local)).expect("entity local names contain no whitespace")
    }

    /// Maps a predicate IRI back onto the vocabulary, if it belongs to it.
    pub fn lookup_predicate(&self, iri: &str) -> Option<Predicate> {
        let local = iri.strip_prefix(self.namespace.as_str())?;
        Predicate::ALL.into_iter().find(|p| p.local_name() == local)
    }
}
