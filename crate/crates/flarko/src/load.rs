//! CSV loaders for transactions, daily closes and asset metadata.
//!
//! Rows that fail validation go to a rejects list with their line number;
//! structural problems (unreadable input, a mapped column missing from the
//! header) are hard errors.

use std::collections::BTreeMap;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use flarko_core::market::{AssetInfo, Isin, PriceBar, TransactionRecord, TxnType};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },
    #[error("cannot read CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source, header is line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loaded<T> {
    pub data: T,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<String>,
}

/// Header names for the transaction file. Defaults follow the FAR-Trans export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransactionColumns {
    pub user_id: String,
    pub isin: String,
    pub txn_type: String,
    pub value: String,
    pub timestamp: String,
}

impl Default for TransactionColumns {
    fn default() -> Self {
        Self {
            user_id: "customerID".into(),
            isin: "ISIN".into(),
            txn_type: "transactionType".into(),
            value: "totalValue".into(),
            timestamp: "timestamp".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceColumns {
    pub isin: String,
    pub date: String,
    pub close: String,
}

impl Default for PriceColumns {
    fn default() -> Self {
        Self {
            isin: "ISIN".into(),
            date: "timestamp".into(),
            close: "closePrice".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetColumns {
    pub isin: String,
    pub category: String,
    pub sector: String,
    pub industry: String,
}

impl Default for AssetColumns {
    fn default() -> Self {
        Self {
            isin: "ISIN".into(),
            category: "assetCategory".into(),
            sector: "sector".into(),
            industry: "industry".into(),
        }
    }
}

/// Accepts `YYYY-M-D` with or without zero padding, optionally followed by
/// a time part (`2020-03-27 10:00:00`, `2020-03-27T10:00:00Z`).
pub fn parse_date(raw: &str) -> Result<NaiveDate, String> {
    let s = raw.trim();
    let day = s.split(|c: char| c == 'T' || c == ' ').next().unwrap_or("");
    NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|_| format!("unparseable date {raw:?}"))
}

/// Decimal with the unicode minus sign folded to ASCII.
pub fn parse_decimal(raw: &str) -> Result<Decimal, String> {
    let s = raw.trim().replace('\u{2212}', "-");
    Decimal::from_str(&s)
        .or_else(|_| Decimal::from_scientific(&s))
        .map_err(|_| format!("unparseable number {raw:?}"))
}

struct Table<R> {
    reader: csv::Reader<R>,
    index: Vec<usize>,
}

impl<R: Read> Table<R> {
    fn open(src: R, columns: &[&str]) -> Result<Self, LoadError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(src);
        let header = reader.headers()?.clone();
        let index = columns
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h.trim_start_matches('\u{feff}') == *c)
                    .ok_or_else(|| LoadError::MissingColumn { column: c.to_string() })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { reader, index })
    }

    /// Calls `row` with the mapped fields of every record; errors become rejects.
    fn each<F>(mut self, mut row: F) -> Vec<Reject>
    where
        F: FnMut(u64, &[&str]) -> Result<(), String>,
    {
        let mut rejects = Vec::new();
        let width = self.index.iter().max().map_or(0, |m| m + 1);
        for rec in self.reader.records() {
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    rejects.push(Reject { line, reason: e.to_string() });
                    continue;
                }
            };
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() < width {
                rejects.push(Reject {
                    line,
                    reason: format!("expected at least {width} fields, found {}", rec.len()),
                });
                continue;
            }
            let fields: Vec<&str> = self.index.iter().map(|&i| &rec[i]).collect();
            if let Err(reason) = row(line, &fields) {
                rejects.push(Reject { line, reason });
            }
        }
        rejects
    }
}

pub fn load_transactions<R: Read>(src: R, cols: &TransactionColumns) -> Result<Loaded<Vec<TransactionRecord>>, LoadError> {
    let table = Table::open(src, &[&cols.user_id, &cols.isin, &cols.txn_type, &cols.value, &cols.timestamp])?;
    let mut data = Vec::new();
    let rejects = table.each(|_, f| {
        if f[0].is_empty() {
            return Err("empty user id".into());
        }
        let isin = Isin::parse(f[1]).map_err(|e| e.to_string())?;
        let txn = TxnType::from_str(f[2]).map_err(|e| e.to_string())?;
        let value = parse_decimal(f[3])?;
        let ts = parse_date(f[4])?;
        data.push(TransactionRecord::new(f[0], isin, txn, value, ts).map_err(|e| e.to_string())?);
        Ok(())
    });
    Ok(Loaded {
        data,
        rejects,
        warnings: Vec::new(),
    })
}

/// Per-ISIN series sorted by date. A repeated `(isin, date)` keeps the row
/// that appears last and adds a warning.
pub fn load_prices<R: Read>(src: R, cols: &PriceColumns) -> Result<Loaded<BTreeMap<Isin, Vec<PriceBar>>>, LoadError> {
    let table = Table::open(src, &[&cols.isin, &cols.date, &cols.close])?;
    let mut series: BTreeMap<Isin, BTreeMap<NaiveDate, (u64, PriceBar)>> = BTreeMap::new();
    let mut warnings = Vec::new();
    let rejects = table.each(|line, f| {
        let isin = Isin::parse(f[0]).map_err(|e| e.to_string())?;
        let date = parse_date(f[1])?;
        let close = parse_decimal(f[2])?;
        let bar = PriceBar::new(isin.clone(), date, close).map_err(|e| e.to_string())?;
        if let Some((prev, _)) = series.entry(isin).or_default().insert(date, (line, bar)) {
            warnings.push(format!("line {line}: duplicate price for {} on {date}, replaces line {prev}", f[0]));
        }
        Ok(())
    });
    let data = series
        .into_iter()
        .map(|(isin, bars)| (isin, bars.into_values().map(|(_, b)| b).collect()))
        .collect();
    Ok(Loaded { data, rejects, warnings })
}

/// Asset metadata sorted by ISIN; a repeated ISIN keeps the last row.
pub fn load_assets<R: Read>(src: R, cols: &AssetColumns) -> Result<Loaded<Vec<AssetInfo>>, LoadError> {
    let table = Table::open(src, &[&cols.isin, &cols.category, &cols.sector, &cols.industry])?;
    let mut assets: BTreeMap<Isin, AssetInfo> = BTreeMap::new();
    let mut warnings = Vec::new();
    let rejects = table.each(|line, f| {
        let isin = Isin::parse(f[0]).map_err(|e| e.to_string())?;
        let info = AssetInfo {
            isin: isin.clone(),
            category: f[1].into(),
            sector: f[2].into(),
            industry: f[3].into(),
        };
        if assets.insert(isin, info).is_some() {
            warnings.push(format!("line {line}: duplicate asset {}, keeping this row", f[0]));
        }
        Ok(())
    });
    Ok(Loaded {
        data: assets.into_values().collect(),
        rejects,
        warnings,
    })
}
