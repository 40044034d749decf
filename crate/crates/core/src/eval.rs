//! Backtest instances, forward-looking target sets, Hits@3 metrics and the
//! temporal leakage audit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::kg::{Graph, XSD_DATE};
use crate::market::{Isin, PriceBar, TransactionRecord, TxnType};
use crate::pipeline::{PipelineVariant, RecommendationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "default_step")]
    pub step_days: u32,
    #[serde(default = "default_horizon")]
    pub horizon_days: u32,
}

fn default_step() -> u32 {
    14
}

fn default_horizon() -> u32 {
    180
}

impl EvalWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            start,
            end,
            step_days: default_step(),
            horizon_days: default_horizon(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.start > self.end {
            return Err(EvalError::InvalidWindow(format!("start {} is after end {}", self.start, self.end)));
        }
        if self.step_days == 0 || self.horizon_days == 0 {
            return Err(EvalError::InvalidWindow(String::from("step_days and horizon_days must be positive")));
        }
        Ok(())
    }

    /// `start, start + step, ...` up to and including `end`.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut d = self.start;
        while d <= self.end {
            out.push(d);
            match d.checked_add_days(Days::new(self.step_days.max(1) as u64)) {
                Some(next) => d = next,
                None => break,
            }
        }
        out
    }
}

/// One backtest unit: a user at a recommendation date.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub user: String,
    pub cutoff: NaiveDate,
}

impl Instance {
    /// `user@YYYY-MM-DD`.
    pub fn id(&self) -> String {
        format!("{}@{}", self.user, self.cutoff.format("%Y-%m-%d"))
    }
}

/// Date-major, then users in the given order.
pub fn generate_instances(window: &EvalWindow, users: &[String]) -> Vec<Instance> {
    let mut out = Vec::new();
    if users.is_empty() {
        return out;
    }
    for cutoff in window.dates() {
        for user in users {
            out.push(Instance {
                user: user.clone(),
                cutoff,
            });
        }
    }
    out
}

fn horizon_end(cutoff: NaiveDate, horizon_days: u32) -> NaiveDate {
    cutoff.checked_add_days(Days::new(horizon_days as u64)).unwrap_or(NaiveDate::MAX)
}

/// ISINs `user` bought in `[cutoff, cutoff + horizon)`.
pub fn purchased_set(records: &[TransactionRecord], user: &str, cutoff: NaiveDate, horizon_days: u32) -> BTreeSet<String> {
    let end = horizon_end(cutoff, horizon_days);
    records
        .iter()
        .filter(|r| r.user_id == user && r.txn_type == TxnType::Buy && r.timestamp >= cutoff && r.timestamp < end)
        .map(|r| String::from(r.isin.as_str()))
        .collect()
}

/// ISINs whose last close in `[cutoff, cutoff + horizon]` is strictly above
/// their last close before the cutoff. Assets missing either price are out.
pub fn profitable_set(prices: &BTreeMap<Isin, Vec<PriceBar>>, cutoff: NaiveDate, horizon_days: u32) -> BTreeSet<String> {
    let end = horizon_end(cutoff, horizon_days);
    let mut out = BTreeSet::new();
    for (isin, series) in prices {
        let entry = series.iter().filter(|b| b.date < cutoff).max_by_key(|b| b.date);
        let exit = series.iter().filter(|b| b.date >= cutoff && b.date <= end).max_by_key(|b| b.date);
        if let (Some(p0), Some(p1)) = (entry, exit) {
            if p1.close > p0.close {
                out.insert(String::from(isin.as_str()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSets {
    pub purchased: BTreeSet<String>,
    pub profitable: BTreeSet<String>,
    pub combined: BTreeSet<String>,
}

impl TargetSets {
    pub fn new(purchased: BTreeSet<String>, profitable: BTreeSet<String>) -> Self {
        let combined = purchased.intersection(&profitable).cloned().collect();
        Self {
            purchased,
            profitable,
            combined,
        }
    }
}

/// 1 if any of the first three recommendations is in `target`.
pub fn hits_at_3(top3: &[String], target: &BTreeSet<String>) -> u32 {
    u32::from(top3.iter().take(3).any(|i| target.contains(i)))
}

/// Share of the three slots that hit `target`; empty slots count as misses.
pub fn precision_at_3(top3: &[String], target: &BTreeSet<String>) -> f64 {
    let mut seen = BTreeSet::new();
    let hits = top3.iter().take(3).filter(|i| seen.insert(*i) && target.contains(*i)).count();
    hits as f64 / 3.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitMode {
    #[default]
    Binary,
    Precision,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub hit_mode: HitMode,
    /// Only score instances whose user bought something in the horizon.
    pub active_only: bool,
}

/// The part of a recommendation result that scoring needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreInput {
    pub instance_id: String,
    pub variant: PipelineVariant,
    pub top3: Vec<String>,
}

impl From<&RecommendationResult> for ScoreInput {
    fn from(r: &RecommendationResult) -> Self {
        Self {
            instance_id: r.instance_id.clone(),
            variant: r.variant,
            top3: r.top3.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: PipelineVariant,
    pub model: String,
    pub n: usize,
    pub pref_at_3: f64,
    pub se_pref: f64,
    pub prof_at_3: f64,
    pub se_prof: f64,
    pub comb_at_3: f64,
    pub se_comb: f64,
}

/// `sqrt(p (1 - p) / n)`.
pub fn standard_error(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    libm::sqrt(p * (1.0 - p) / n as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no targets for instance(s): {}", .0.join(", "))]
    MissingTargets(Vec<String>),
    #[error("invalid evaluation window: {0}")]
    InvalidWindow(String),
}

/// One report per variant present in `results`, ordered by variant name.
pub fn score_run(
    results: &[ScoreInput],
    targets: &BTreeMap<String, TargetSets>,
    model: &str,
    opts: ScoringOptions,
) -> Result<Vec<MetricsReport>, EvalError> {
    let missing: BTreeSet<&str> = results
        .iter()
        .filter(|r| !targets.contains_key(&r.instance_id))
        .map(|r| r.instance_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingTargets(missing.into_iter().map(String::from).collect()));
    }

    let score = |top3: &[String], target: &BTreeSet<String>| match opts.hit_mode {
        HitMode::Binary => f64::from(hits_at_3(top3, target)),
        HitMode::Precision => precision_at_3(top3, target),
    };
    let mut sums: BTreeMap<&str, (PipelineVariant, usize, f64, f64, f64)> = BTreeMap::new();
    for r in results {
        let t = &targets[&r.instance_id];
        if opts.active_only && t.purchased.is_empty() {
            continue;
        }
        let e = sums.entry(r.variant.name()).or_insert((r.variant, 0, 0.0, 0.0, 0.0));
        e.1 += 1;
        e.2 += score(&r.top3, &t.purchased);
        e.3 += score(&r.top3, &t.profitable);
        e.4 += score(&r.top3, &t.combined);
    }
    Ok(sums
        .into_values()
        .map(|(variant, n, pref, prof, comb)| {
            let (pref, prof, comb) = (pref / n as f64, prof / n as f64, comb / n as f64);
            MetricsReport {
                variant,
                model: String::from(model),
                n,
                pref_at_3: pref,
                se_pref: standard_error(pref, n),
                prof_at_3: prof,
                se_prof: standard_error(prof, n),
                comb_at_3: comb,
                se_comb: standard_error(comb, n),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A date on or after the cutoff.
    PostCutoff,
    /// A date literal that does not parse.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub graph: String,
    pub kind: ViolationKind,
    pub subject: String,
    pub predicate: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub cutoff: NaiveDate,
    pub dates_checked: usize,
    pub violations: Vec<Violation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every `xsd:date` literal of both graphs against the cutoff.
pub fn leakage_audit(pkg: &Graph, mkg: &Graph, cutoff: NaiveDate) -> LeakageReport {
    let mut report = LeakageReport {
        cutoff,
        dates_checked: 0,
        violations: Vec::new(),
    };
    for (name, g) in [("pkg", pkg), ("mkg", mkg)] {
        for t in g.iter() {
            let o = t.object();
            if !o.is_literal() || o.datatype() != Some(XSD_DATE) {
                continue;
            }
            report.dates_checked += 1;
            let kind = match NaiveDate::parse_from_str(o.value(), "%Y-%m-%d") {
                Ok(d) if d < cutoff => continue,
                Ok(_) => ViolationKind::PostCutoff,
                Err(_) => ViolationKind::Malformed,
            };
            report.violations.push(Violation {
                graph: String::from(name),
                kind,
                subject: String::from(t.subject().value()),
                predicate: String::from(t.predicate().value()),
                value: String::from(o.value()),
            });
        }
    }
    report
}
