//! Input records, ten-week price summaries, and construction of the
//! personal transaction graph (PKG) and market graph (MKG) at a cutoff.

mod build;
mod records;
mod summary;

pub use build::{build_mkg, build_pkg, known_assets, MkgBuild};
pub use records::{is_isin, AssetInfo, Isin, PriceBar, TransactionRecord, TxnType};
pub use summary::{summarize_prices, TenWeekPriceSummary, WINDOW_DAYS};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketError {
    #[error("invalid ISIN {0:?}")]
    InvalidIsin(String),
    #[error("non-positive value")]
    NonPositiveValue,
    #[error("non-positive close price")]
    NonPositiveClose,
    #[error("unknown transaction type {0:?}")]
    UnknownTxnType(String),
}
