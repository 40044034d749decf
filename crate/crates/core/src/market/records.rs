use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::MarketError;

/// `true` for two uppercase letters, nine uppercase alphanumerics and a
/// trailing digit. The check digit itself is not verified.
pub fn is_isin(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 12
        && b[..2].iter().all(u8::is_ascii_uppercase)
        && b[2..11].iter().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        && b[11].is_ascii_digit()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Isin(String);

impl Isin {
    pub fn parse(s: &str) -> Result<Self, MarketError> {
        let s = s.trim();
        if is_isin(s) {
            Ok(Self(s.into()))
        } else {
            Err(MarketError::InvalidIsin(s.into()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Isin {
    type Error = MarketError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Isin::parse(&s)
    }
}

impl From<Isin> for String {
    fn from(i: Isin) -> String {
        i.0
    }
}

impl FromStr for Isin {
    type Err = MarketError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Isin::parse(s)
    }
}

impl fmt::Display for Isin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for Isin {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxnType {
    Buy,
    Sell,
}

impl FromStr for TxnType {
    type Err = MarketError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("buy") || t.eq_ignore_ascii_case("b") {
            Ok(TxnType::Buy)
        } else if t.eq_ignore_ascii_case("sell") || t.eq_ignore_ascii_case("s") {
            Ok(TxnType::Sell)
        } else {
            Err(MarketError::UnknownTxnType(t.into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub user_id: String,
    pub isin: Isin,
    pub txn_type: TxnType,
    pub value: Decimal,
    pub timestamp: NaiveDate,
}

impl TransactionRecord {
    pub fn new(
        user_id: impl Into<String>,
        isin: Isin,
        txn_type: TxnType,
        value: Decimal,
        timestamp: NaiveDate,
    ) -> Result<Self, MarketError> {
        if value <= Decimal::ZERO {
            return Err(MarketError::NonPositiveValue);
        }
        Ok(Self {
            user_id: user_id.into(),
            isin,
            txn_type,
            value,
            timestamp,
        })
    }
}

/// One daily close.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBar {
    pub isin: Isin,
    pub date: NaiveDate,
    pub close: Decimal,
}

impl PriceBar {
    pub fn new(isin: Isin, date: NaiveDate, close: Decimal) -> Result<Self, MarketError> {
        if close <= Decimal::ZERO {
            return Err(MarketError::NonPositiveClose);
        }
        Ok(Self { isin, date, close })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetInfo {
    pub isin: Isin,
    pub category: String,
    pub sector: String,
    pub industry: String,
}
