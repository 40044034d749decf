use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use super::{AssetInfo, Isin, TenWeekPriceSummary, TransactionRecord, TxnType};
use crate::kg::{Class, Graph, Predicate, Term, Triple, Vocabulary};

fn triple(s: &Term, p: Term, o: Term) -> Triple {
    Triple::new(s.clone(), p, o).expect("subject and predicate are vocabulary IRIs")
}

/// Personal transaction graph of `user` at `cutoff`.
///
/// Each of the user's records dated strictly before the cutoff becomes a
/// node `Transaction_k` (k = 1.. in chronological order, input order on
/// ties) with participant, security, value, timestamp and two `type` edges:
/// the buy/sell class and the base `Transaction` class.
pub fn build_pkg(records: &[TransactionRecord], user: &str, cutoff: NaiveDate, vocab: &Vocabulary) -> Graph {
    let mut own: Vec<&TransactionRecord> = records
        .iter()
        .filter(|r| r.user_id == user && r.timestamp < cutoff)
        .collect();
    own.sort_by_key(|r| r.timestamp);

    let mut g = Graph::new();
    let ty = vocab.predicate(Predicate::Type);
    let base = vocab.class(Class::Transaction);
    for (k, r) in own.into_iter().enumerate() {
        let node = vocab.entity(&format!("Transaction_{}", k + 1));
        let class = match r.txn_type {
            TxnType::Buy => Class::BuyTransaction,
            TxnType::Sell => Class::SellTransaction,
        };
        g.insert(triple(&node, vocab.predicate(Predicate::HasParticipant), Term::literal(r.user_id.as_str())));
        g.insert(triple(&node, vocab.predicate(Predicate::InvolvesSecurity), Term::literal(r.isin.as_str())));
        g.insert(triple(&node, vocab.predicate(Predicate::TransactionValue), Term::decimal(r.value)));
        g.insert(triple(&node, vocab.predicate(Predicate::TransactionTimestamp), Term::date(r.timestamp)));
        g.insert(triple(&node, ty.clone(), vocab.class(class)));
        g.insert(triple(&node, ty.clone(), base.clone()));
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkgBuild {
    pub graph: Graph,
    pub warnings: Vec<String>,
}

/// Market graph at `cutoff`.
///
/// Asset nodes `Asset_k` are numbered over the sorted ISINs of `assets` plus
/// any ISIN that only appears in `summaries`; each carries identifier,
/// category, sector and industry (identifier only when metadata is missing).
/// Summary nodes `TenWeekPriceSummary_k` are numbered over all summaries
/// sorted by `(isin, period_end)` and carry their class, the four prices, the
/// end date and a `priceOf` edge to their asset. Summaries whose window does
/// not end before the cutoff are skipped with a warning.
pub fn build_mkg(
    summaries: &BTreeMap<Isin, Vec<TenWeekPriceSummary>>,
    assets: &[AssetInfo],
    cutoff: NaiveDate,
    vocab: &Vocabulary,
) -> MkgBuild {
    let mut warnings = Vec::new();
    let mut info: BTreeMap<&Isin, &AssetInfo> = BTreeMap::new();
    for a in assets {
        if info.insert(&a.isin, a).is_some() {
            warnings.push(format!("duplicate asset metadata for {}; keeping the last row", a.isin));
        }
    }
    let all_isins: BTreeSet<&Isin> = info.keys().copied().chain(summaries.keys()).collect();

    let mut g = Graph::new();
    let mut asset_nodes: BTreeMap<&Isin, Term> = BTreeMap::new();
    for (k, isin) in all_isins.into_iter().enumerate() {
        let node = vocab.entity(&format!("Asset_{}", k + 1));
        g.insert(triple(&node, vocab.predicate(Predicate::Identifier), Term::literal(isin.as_str())));
        match info.get(isin) {
            Some(a) => {
                g.insert(triple(&node, vocab.predicate(Predicate::Category), Term::literal(a.category.as_str())));
                g.insert(triple(&node, vocab.predicate(Predicate::Sector), Term::literal(a.sector.as_str())));
                g.insert(triple(&node, vocab.predicate(Predicate::Industry), Term::literal(a.industry.as_str())));
            }
            None => warnings.push(format!("no asset metadata for {isin}; emitting identifier only")),
        }
        asset_nodes.insert(isin, node);
    }

    let mut ordered: Vec<&TenWeekPriceSummary> = Vec::new();
    for (isin, list) in summaries {
        for s in list {
            if &s.isin != isin {
                warnings.push(format!("summary for {} filed under {isin}; skipped", s.isin));
            } else if s.period_end >= cutoff {
                warnings.push(format!("summary for {isin} ending {} is not before the cutoff; skipped", s.period_end));
            } else {
                ordered.push(s);
            }
        }
    }
    ordered.sort_by(|a, b| (&a.isin, a.period_end).cmp(&(&b.isin, b.period_end)));

    let ty = vocab.predicate(Predicate::Type);
    let class = vocab.class(Class::TenWeekPriceSummary);
    for (k, s) in ordered.into_iter().enumerate() {
        let node = vocab.entity(&format!("TenWeekPriceSummary_{}", k + 1));
        g.insert(triple(&node, ty.clone(), class.clone()));
        g.insert(triple(&node, vocab.predicate(Predicate::PeriodHighPrice), Term::decimal(s.high)));
        g.insert(triple(&node, vocab.predicate(Predicate::PeriodLowPrice), Term::decimal(s.low)));
        g.insert(triple(&node, vocab.predicate(Predicate::PeriodAveragePrice), Term::decimal(s.average)));
        g.insert(triple(&node, vocab.predicate(Predicate::PeriodEndPrice), Term::decimal(s.end_price)));
        g.insert(triple(&node, vocab.predicate(Predicate::PeriodEndDate), Term::date(s.period_end)));
        g.insert(triple(&node, vocab.predicate(Predicate::PriceOf), asset_nodes[&s.isin].clone()));
    }
    MkgBuild { graph: g, warnings }
}

/// ISINs carried by `identifier` edges of a market graph.
pub fn known_assets(mkg: &Graph, vocab: &Vocabulary) -> BTreeSet<String> {
    let id = vocab.predicate(Predicate::Identifier);
    mkg.iter()
        .filter(|t| t.predicate() == &id && t.object().is_literal())
        .map(|t| String::from(t.object().value()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal::Decimal;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn pkg_unknown_user_or_early_cutoff_is_empty() {
        let r = TransactionRecord::new("u1", Isin::parse("GRS434003000").unwrap(), TxnType::Buy, Decimal::ONE, d(2020, 1, 1)).unwrap();
        let v = Vocabulary::default();
        assert!(build_pkg(&[r.clone()], "nobody", d(2021, 1, 1), &v).is_empty());
        assert!(build_pkg(&[r.clone()], "u1", d(2020, 1, 1), &v).is_empty());
        assert_eq!(build_pkg(&[r], "u1", d(2020, 1, 2), &v).len(), 6);
    }

    #[test]
    fn pkg_numbers_transactions_chronologically() {
        let v = Vocabulary::default();
        let isin = Isin::parse("GRS434003000").unwrap();
        let late = TransactionRecord::new("u", isin.clone(), TxnType::Buy, Decimal::from(2), d(2020, 5, 1)).unwrap();
        let early = TransactionRecord::new("u", isin, TxnType::Sell, Decimal::from(1), d(2020, 1, 1)).unwrap();
        let g = build_pkg(&[late, early], "u", d(2021, 1, 1), &v);
        let ts = v.predicate(Predicate::TransactionTimestamp);
        assert_eq!(g.object(&v.entity("Transaction_1"), &ts), Some(&Term::date(d(2020, 1, 1))));
        assert_eq!(g.object(&v.entity("Transaction_2"), &ts), Some(&Term::date(d(2020, 5, 1))));
    }

    #[test]
    fn mkg_asset_without_summaries_and_missing_metadata() {
        let v = Vocabulary::default();
        let a = AssetInfo {
            isin: Isin::parse("GRS495003006").unwrap(),
            category: "Stock".into(),
            sector: "Industrials".into(),
            industry: "Airlines".into(),
        };
        let out = build_mkg(&BTreeMap::new(), &[a], d(2022, 1, 1), &v);
        assert_eq!(out.graph.len(), 4);
        assert!(out.warnings.is_empty());

        let orphan = Isin::parse("US0378331005").unwrap();
        let s = TenWeekPriceSummary {
            isin: orphan.clone(),
            period_start: d(2021, 10, 23),
            period_end: d(2021, 12, 31),
            high: Decimal::ONE,
            low: Decimal::ONE,
            average: Decimal::ONE,
            end_price: Decimal::ONE,
        };
        let mut m = BTreeMap::new();
        m.insert(orphan, alloc::vec![s]);
        let out = build_mkg(&m, &[], d(2022, 1, 1), &v);
        assert_eq!(out.graph.len(), 1 + 7);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(known_assets(&out.graph, &v).into_iter().collect::<Vec<_>>(), ["US0378331005"]);
    }

    #[test]
    fn mkg_skips_summaries_reaching_cutoff() {
        let v = Vocabulary::default();
        let isin = Isin::parse("US0378331005").unwrap();
        let s = TenWeekPriceSummary {
            isin: isin.clone(),
            period_start: d(2021, 11, 1),
            period_end: d(2022, 1, 9),
            high: Decimal::ONE,
            low: Decimal::ONE,
            average: Decimal::ONE,
            end_price: Decimal::ONE,
        };
        let mut m = BTreeMap::new();
        m.insert(isin, alloc::vec![s]);
        let out = build_mkg(&m, &[], d(2022, 1, 1), &v);
        assert_eq!(out.graph.len(), 1);
        assert_eq!(out.warnings.len(), 2);
    }
}
