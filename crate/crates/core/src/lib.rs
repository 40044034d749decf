//! Core of the multi-stage knowledge-graph retrieval recommender.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds with `#![no_std]` plus `alloc`. File formats, HTTP, the CLI and
//! anything that needs a clock or a thread live in the companion `flarko`
//! crate.
//!
//! Layout:
//!
//! - [`kg`]: terms, triples, the indexed [`kg::Graph`], subgraph extraction,
//!   CONSTRUCT query rendering and JSON-LD output.
//! - [`market`]: validated input records, ten-week price summaries and
//!   construction of the personal (PKG) and market (MKG) graphs.
//! - [`llm`]: chat messages, generation settings, token estimation and the
//!   [`llm::Generator`] trait implemented by concrete backends.
//! - [`selection`]: entity-selection prompts, response parsing and
//!   heuristic selectors.
//! - [`pipeline`]: the full-injection, parallel and multi-stage variants.
//! - [`eval`]: backtest instances, target sets, Hits@3 scoring and the
//!   temporal leakage audit.
#![no_std]

extern crate alloc;

pub mod eval;
pub mod kg;
pub mod llm;
pub mod market;
pub mod pipeline;
pub mod selection;

pub use chrono::NaiveDate;
pub use rust_decimal::Decimal;
