#![allow(dead_code)]

use std::collections::BTreeMap;

use flarko_core::kg::{Graph, Term, Triple, Vocabulary};
use flarko_core::market::{build_mkg, build_pkg, AssetInfo, Isin, TenWeekPriceSummary, TransactionRecord, TxnType};
use flarko_core::{Decimal, NaiveDate};
use proptest::prelude::*;

pub fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

pub fn dec(s: &str) -> Decimal {
    s.parse().unwrap()
}

pub fn isin(s: &str) -> Isin {
    Isin::parse(s).unwrap()
}

/// The sell transaction drawn in the retrieved-PKG figure.
pub fn fig3a_record() -> TransactionRecord {
    TransactionRecord::new("00017496858921195E5A", isin("GRS434003000"), TxnType::Sell, dec("11000"), d(2020, 3, 27)).unwrap()
}

pub fn fig3a_pkg(vocab: &Vocabulary) -> Graph {
    build_pkg(&[fig3a_record()], "00017496858921195E5A", d(2020, 3, 28), vocab)
}

pub fn fig3b_inputs() -> (BTreeMap<Isin, Vec<TenWeekPriceSummary>>, Vec<AssetInfo>) {
    let asset = AssetInfo {
        isin: isin("GRS495003006"),
        category: "Stock".into(),
        sector: "Industrials".into(),
        industry: "Airlines".into(),
    };
    let summary = TenWeekPriceSummary {
        isin: isin("GRS495003006"),
        period_start: d(2018, 3, 19),
        period_end: d(2018, 5, 27),
        high: dec("9.5"),
        low: dec("8.54"),
        average: dec("9.1679792"),
        end_price: dec("8.54"),
    };
    let mut m = BTreeMap::new();
    m.insert(isin("GRS495003006"), vec![summary]);
    (m, vec![asset])
}

pub fn fig3b_mkg(vocab: &Vocabulary) -> Graph {
    let (s, a) = fig3b_inputs();
    build_mkg(&s, &a, d(2018, 5, 28), vocab).graph
}

pub fn brute_force_extract(g: &Graph, nodes: &[Term]) -> Vec<Triple> {
    let mut out: Vec<Triple> = g
        .iter()
        .filter(|t| nodes.iter().any(|n| t.subject() == n || t.object() == n))
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn sorted(g: &Graph) -> Vec<Triple> {
    g.iter().cloned().collect()
}

/// IRIs from a small pool so random graphs share nodes.
pub fn arb_iri(pool: usize) -> impl Strategy<Value = Term> {
    (0..pool).prop_map(|i| Term::iri(format!("urn:t:n{i}")).unwrap())
}

pub fn arb_object(pool: usize) -> impl Strategy<Value = Term> {
    prop_oneof![
        3 => arb_iri(pool),
        // same text as an IRI, different term
        1 => (0..pool).prop_map(|i| Term::literal(format!("urn:t:n{i}"))),
        1 => "[a-z \"\\\\é]{0,6}".prop_map(Term::literal),
        1 => (0u32..1000).prop_map(|v| Term::decimal(Decimal::from(v) / Decimal::from(8))),
        1 => (0u32..400).prop_map(|k| Term::date(d(2020, 1, 1) + chrono::Days::new(k as u64))),
    ]
}

pub fn arb_predicate() -> impl Strategy<Value = Term> {
    prop_oneof![
        (0usize..4).prop_map(|i| Term::iri(format!("urn:t:p{i}")).unwrap()),
        (0usize..15).prop_map(|i| Vocabulary::default().predicate(flarko_core::kg::Predicate::ALL[i])),
    ]
}

pub fn arb_graph(max_triples: usize, pool: usize) -> impl Strategy<Value = Graph> {
    prop::collection::vec((arb_iri(pool), arb_predicate(), arb_object(pool)), 0..=max_triples)
        .prop_map(|ts| ts.into_iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()).collect())
}

pub fn arb_nodes(max: usize, pool: usize) -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec(arb_object(pool), 0..=max)
}

/// PKG and MKG for a synthetic user with `n_txn` transactions over
/// `n_assets` assets with daily prices for about a year before `cutoff`.
pub fn synthetic_graphs(seed: u64, n_txn: usize, n_assets: usize, cutoff: NaiveDate, vocab: &Vocabulary) -> (Graph, Graph) {
    let mut x = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        x >> 33
    };
    let isins: Vec<Isin> = (0..n_assets).map(|a| isin(&format!("GR{:09}{}", a, a % 10))).collect();
    let records: Vec<TransactionRecord> = (0..n_txn)
        .map(|_| {
            let i = isins[(next() as usize) % n_assets].clone();
            let t = if next() % 3 == 0 { TxnType::Sell } else { TxnType::Buy };
            let date = cutoff - chrono::Days::new(1 + next() % 360);
            TransactionRecord::new("user", i, t, Decimal::from(1 + next() % 9000), date).unwrap()
        })
        .collect();
    let pkg = build_pkg(&records, "user", cutoff, vocab);
    let mut summaries = BTreeMap::new();
    let mut assets = Vec::new();
    for i in &isins {
        let mut series = Vec::new();
        for back in (1..=300u64).rev() {
            if next() % 4 == 0 {
                continue;
            }
            let close = Decimal::new(100 + (next() % 900) as i64, 1);
            series.push(flarko_core::market::PriceBar::new(i.clone(), cutoff - chrono::Days::new(back), close).unwrap());
        }
        summaries.insert(i.clone(), flarko_core::market::summarize_prices(&series, cutoff));
        assets.push(AssetInfo {
            isin: i.clone(),
            category: "Stock".into(),
            sector: ["Industrials", "Financials", "Energy"][(next() % 3) as usize].into(),
            industry: "Misc".into(),
        });
    }
    let mkg = build_mkg(&summaries, &assets, cutoff, vocab).graph;
    (pkg, mkg)
}
