use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{Isin, PriceBar};

/// Ten calendar weeks.
pub const WINDOW_DAYS: u64 = 70;

/// Close statistics for one asset over one 70-day window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenWeekPriceSummary {
    pub isin: Isin,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub high: Decimal,
    pub low: Decimal,
    pub average: Decimal,
    pub end_price: Decimal,
}

struct Acc {
    high: Decimal,
    low: Decimal,
    sum: Decimal,
    count: u32,
    last_date: NaiveDate,
    last_close: Decimal,
}

/// Aggregates a price series into ten-week summaries visible at `cutoff`.
///
/// Windows are anchored backward from the cutoff: window 0 covers
/// `[cutoff - 70, cutoff - 1]`, window 1 the 70 days before that, and so on.
/// Bars on or after the cutoff are ignored; empty windows are omitted.
/// The result is ordered oldest window first.
pub fn summarize_prices(series: &[PriceBar], cutoff: NaiveDate) -> Vec<TenWeekPriceSummary> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let isin = first.isin.clone();
    let mut windows: BTreeMap<u64, Acc> = BTreeMap::new();
    for bar in series.iter().filter(|b| b.date < cutoff) {
        let back = (cutoff - bar.date).num_days() as u64 - 1;
        let idx = back / WINDOW_DAYS;
        windows
            .entry(idx)
            .and_modify(|a| {
                a.high = a.high.max(bar.close);
                a.low = a.low.min(bar.close);
                a.sum += bar.close;
                a.count += 1;
                if bar.date >= a.last_date {
                    a.last_date = bar.date;
                    a.last_close = bar.close;
                }
            })
            .or_insert(Acc {
                high: bar.close,
                low: bar.close,
                sum: bar.close,
                count: 1,
                last_date: bar.date,
                last_close: bar.close,
            });
    }
    windows
        .into_iter()
        .rev()
        .map(|(idx, a)| {
            let period_end = cutoff - Days::new(idx * WINDOW_DAYS + 1);
            TenWeekPriceSummary {
                isin: isin.clone(),
                period_start: period_end - Days::new(WINDOW_DAYS - 1),
                period_end,
                high: a.high,
                low: a.low,
                average: a.sum / Decimal::from(a.count),
                end_price: a.last_close,
            }
        })
        .collect()
}
