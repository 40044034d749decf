//! Entity selection for the two retrieval stages.
//!
//! An LLM sees the user request plus the candidate entity IRIs, one per
//! line, and answers with the IRIs it considers relevant. Whatever it
//! returns is matched back against the candidates, so nothing outside the
//! candidate list can ever reach subgraph extraction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::kg::Term;
use crate::llm::{estimate_tokens, CallContext, CallStage, ChatMessage, ContextBudget, GatewayError, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RetrievalStage {
    #[serde(rename = "PTR")]
    Ptr,
    #[serde(rename = "MR")]
    Mr,
}

impl RetrievalStage {
    pub fn call_stage(self) -> CallStage {
        match self {
            RetrievalStage::Ptr => CallStage::Ptr,
            RetrievalStage::Mr => CallStage::Mr,
        }
    }
}

/// A selectable entity plus the facts the heuristic policies need: its
/// date (transaction timestamp or summary end date) and, for summaries, the
/// asset it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub iri: Term,
    pub date: Option<NaiveDate>,
    pub group: Option<Term>,
}

impl Candidate {
    pub fn new(iri: Term) -> Self {
        Self {
            iri,
            date: None,
            group: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRequest {
    pub user_request: String,
    pub candidates: Vec<Candidate>,
    /// Serialized subgraph retrieved by an earlier stage.
    pub prior_context: Option<String>,
    pub stage: RetrievalStage,
}

impl SelectionRequest {
    pub fn candidate_terms(&self) -> Vec<Term> {
        self.candidates.iter().map(|c| c.iri.clone()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionResult {
    /// Candidates in first-mention order, without duplicates.
    pub selected: Vec<Term>,
    pub raw_response: String,
    pub dropped_hallucinations: Vec<String>,
    /// Set when the response selected nothing and the recency fallback was used.
    pub fallback: bool,
    /// Original candidate count when the list was cut to fit the prompt budget.
    pub truncated_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("selection needs at least one candidate")]
    EmptyCandidates,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// System message with task (and prior context), user message with the
/// request and one candidate IRI per line.
pub fn build_selection_prompt(req: &SelectionRequest) -> Result<Vec<ChatMessage>, SelectionError> {
    if req.candidates.is_empty() {
        return Err(SelectionError::EmptyCandidates);
    }
    let mut system = String::from("You are the retrieval step of a financial asset recommender.\n");
    match req.stage {
        RetrievalStage::Ptr => system.push_str(
            "Select the transaction entities from the investor's personal transaction knowledge graph that best reflect the investor's behavior and are most relevant to the request.\n",
        ),
        RetrievalStage::Mr => system.push_str(
            "Select the TenWeekPriceSummary entities from the market knowledge graph that are most relevant to the request.\n",
        ),
    }
    if let Some(prior) = &req.prior_context {
        system.push_str("\nContext retrieved from the investor's transaction knowledge graph (JSON-LD):\n");
        system.push_str(prior);
        system.push('\n');
    }
    system.push_str("\nAnswer with the chosen entity IRIs only, one per line, and nothing else.");

    let mut user = String::new();
    let _ = write!(user, "Request: {}\n\nCandidates:", req.user_request);
    for c in &req.candidates {
        user.push('\n');
        user.push_str(c.iri.value());
    }
    Ok(alloc::vec![ChatMessage::system(system), ChatMessage::user(user)])
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | ';' | '"' | '\'' | '`' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | '*' | '|')
}

// `Name_123`, the shape of every entity local name this system mints.
fn looks_like_entity(local: &str) -> bool {
    let Some((head, tail)) = local.rsplit_once('_') else {
        return false;
    };
    let mut head_chars = head.chars();
    matches!(head_chars.next(), Some(c) if c.is_ascii_alphabetic())
        && head_chars.all(|c| c.is_ascii_alphanumeric())
        && !tail.is_empty()
        && tail.bytes().all(|b| b.is_ascii_digit())
}

/// Matches a free-text response against the candidate IRIs.
///
/// Tokens equal to a candidate IRI, or whose trailing local name equals a
/// candidate's local name, select that candidate. Entity-shaped tokens that
/// match nothing are reported as hallucinations. Never fails.
pub fn parse_selection_response(raw: &str, candidates: &[Term]) -> SelectionResult {
    let mut by_iri: BTreeMap<&str, &Term> = BTreeMap::new();
    let mut by_local: BTreeMap<&str, &Term> = BTreeMap::new();
    for c in candidates {
        by_iri.entry(c.value()).or_insert(c);
        by_local.entry(c.local_name()).or_insert(c);
    }

    let mut seen: BTreeSet<&Term> = BTreeSet::new();
    let mut selected = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    for token in raw.split(is_separator) {
        let token = token.trim_matches(|c: char| matches!(c, '.' | ':' | '!' | '?' | '-' | '#' | '/'));
        if token.is_empty() {
            continue;
        }
        let local = crate::kg::term_local_name(token);
        let hit = by_iri.get(token).or_else(|| by_local.get(local)).copied();
        match hit {
            Some(term) => {
                if seen.insert(term) {
                    selected.push(term.clone());
                }
            }
            None if looks_like_entity(local) => {
                if !dropped.iter().any(|d| d == token) {
                    dropped.push(String::from(token));
                }
            }
            None => {}
        }
    }
    SelectionResult {
        selected,
        raw_response: String::from(raw),
        dropped_hallucinations: dropped,
        fallback: false,
        truncated_from: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeuristicPolicy {
    All,
    RecentK,
    RoundRobinK,
}

fn recent_order(candidates: &[Candidate]) -> Vec<&Candidate> {
    let mut v: Vec<&Candidate> = candidates.iter().collect();
    // latest first; undated last; ties by IRI
    v.sort_by(|a, b| b.date.cmp(&a.date).then_with(|| a.iri.cmp(&b.iri)));
    v
}

/// Deterministic selection without a model.
///
/// - `All`: every candidate.
/// - `RecentK`: the `k` latest candidates, ties broken by IRI.
/// - `RoundRobinK`: up to `k` candidates taken one per group in turn (most
///   recent first within a group), so summaries spread across assets.
pub fn heuristic_select(req: &SelectionRequest, policy: HeuristicPolicy, k: usize) -> SelectionResult {
    let selected: Vec<Term> = match policy {
        HeuristicPolicy::All => req.candidate_terms(),
        HeuristicPolicy::RecentK => recent_order(&req.candidates).into_iter().take(k).map(|c| c.iri.clone()).collect(),
        HeuristicPolicy::RoundRobinK => {
            let mut groups: BTreeMap<Option<&Term>, Vec<&Candidate>> = BTreeMap::new();
            for c in recent_order(&req.candidates) {
                groups.entry(c.group.as_ref()).or_default().push(c);
            }
            let mut queues: Vec<_> = groups.into_values().map(|v| v.into_iter()).collect();
            let mut out = Vec::new();
            while out.len() < k {
                let before = out.len();
                for q in queues.iter_mut() {
                    if out.len() == k {
                        break;
                    }
                    if let Some(c) = q.next() {
                        out.push(c.iri.clone());
                    }
                }
                if out.len() == before {
                    break;
                }
            }
            out
        }
    };
    SelectionResult {
        selected,
        ..SelectionResult::default()
    }
}

/// Strategy used by the pipeline to pick entities for a retrieval stage.
pub trait EntitySelector: Sync {
    fn select(&self, instance_id: &str, req: &SelectionRequest) -> Result<SelectionResult, SelectionError>;
}

impl<F> EntitySelector for F
where
    F: Fn(&str, &SelectionRequest) -> Result<SelectionResult, SelectionError> + Sync,
{
    fn select(&self, instance_id: &str, req: &SelectionRequest) -> Result<SelectionResult, SelectionError> {
        self(instance_id, req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicSelector {
    pub policy: HeuristicPolicy,
    pub k: usize,
}

impl EntitySelector for HeuristicSelector {
    fn select(&self, _instance_id: &str, req: &SelectionRequest) -> Result<SelectionResult, SelectionError> {
        Ok(heuristic_select(req, self.policy, self.k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LlmSelectionOptions {
    /// Budget the selection prompt must fit in.
    pub budget: ContextBudget,
    /// RecentK size used when the model selects nothing; `None` disables it.
    pub fallback_k: Option<usize>,
}

impl Default for LlmSelectionOptions {
    fn default() -> Self {
        Self {
            budget: ContextBudget::default(),
            fallback_k: Some(10),
        }
    }
}

/// Prompt, generate, parse. Candidate lists too long for the budget are cut
/// to their most recent entries first; an empty answer falls back to
/// RecentK when enabled.
pub fn select_entities<G: Generator + ?Sized>(
    instance_id: &str,
    req: &SelectionRequest,
    generator: &G,
    opts: &LlmSelectionOptions,
) -> Result<SelectionResult, SelectionError> {
    let mut messages = build_selection_prompt(req)?;
    let mut truncated: Option<SelectionRequest> = None;
    let limit = opts.budget.max_context_tokens;
    if estimate_tokens(&messages, &opts.budget) > limit {
        // largest k whose RecentK prefix still fits
        let order = recent_order(&req.candidates);
        let fits = |k: usize| {
            let r = SelectionRequest {
                candidates: order[..k].iter().map(|c| (*c).clone()).collect(),
                ..req.clone()
            };
            let m = build_selection_prompt(&r).expect("k >= 1");
            (estimate_tokens(&m, &opts.budget) <= limit).then_some((r, m))
        };
        let (mut lo, mut hi) = (0usize, order.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if fits(mid).is_some() {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let Some((r, m)) = (lo > 0).then(|| fits(lo)).flatten() else {
            return Err(GatewayError::Budget {
                estimated: estimate_tokens(&messages, &opts.budget),
                limit,
            }
            .into());
        };
        messages = m;
        truncated = Some(r);
    }
    let effective = truncated.as_ref().unwrap_or(req);

    let call = CallContext {
        instance_id,
        stage: req.stage.call_stage(),
    };
    let raw = generator.complete(&call, &messages)?;
    let mut result = parse_selection_response(&raw, &effective.candidate_terms());
    if truncated.is_some() {
        result.truncated_from = Some(req.candidates.len());
    }
    if result.selected.is_empty() {
        if let Some(k) = opts.fallback_k {
            let k = k.min(effective.candidates.len());
            result.selected = heuristic_select(effective, HeuristicPolicy::RecentK, k).selected;
            result.fallback = true;
        }
    }
    Ok(result)
}

/// [`select_entities`] bound to a generator.
pub struct LlmSelector<G> {
    pub generator: G,
    pub options: LlmSelectionOptions,
}

impl<G: Generator> EntitySelector for LlmSelector<G> {
    fn select(&self, instance_id: &str, req: &SelectionRequest) -> Result<SelectionResult, SelectionError> {
        select_entities(instance_id, req, &self.generator, &self.options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn iri(s: &str) -> Term {
        Term::iri(s).unwrap()
    }

    fn req(stage: RetrievalStage, names: &[&str]) -> SelectionRequest {
        SelectionRequest {
            user_request: "Recommend assets".into(),
            candidates: names.iter().map(|n| Candidate::new(iri(&alloc::format!("urn:flarko:{n}")))).collect(),
            prior_context: None,
            stage,
        }
    }

    #[test]
    fn prompt_lists_candidates_one_per_line() {
        let msgs = build_selection_prompt(&req(RetrievalStage::Ptr, &["Transaction_1", "Transaction_2", "Transaction_3"])).unwrap();
        assert_eq!(msgs.len(), 2);
        let lines: Vec<_> = msgs[1].content.lines().filter(|l| l.starts_with("urn:flarko:")).collect();
        assert_eq!(lines, ["urn:flarko:Transaction_1", "urn:flarko:Transaction_2", "urn:flarko:Transaction_3"]);
    }

    #[test]
    fn prompt_carries_prior_context_verbatim() {
        let mut r = req(RetrievalStage::Mr, &["TenWeekPriceSummary_1"]);
        r.prior_context = Some("X".into());
        let msgs = build_selection_prompt(&r).unwrap();
        assert!(msgs[0].content.contains("\nX\n"));
        assert!(build_selection_prompt(&req(RetrievalStage::Mr, &[])).is_err());
    }

    #[test]
    fn parse_direct_matches_and_hallucinations() {
        let cands = [iri("urn:flarko:Transaction_3"), iri("urn:flarko:Transaction_7")];
        let r = parse_selection_response("Transaction_3\nTransaction_7", &cands);
        assert_eq!(r.selected, cands.to_vec());
        let r = parse_selection_response("Transaction_99", &cands);
        assert!(r.selected.is_empty());
        assert_eq!(r.dropped_hallucinations, ["Transaction_99"]);
    }

    #[test]
    fn parse_handles_full_iris_markup_and_duplicates() {
        let cands = [iri("urn:flarko:Transaction_3"), iri("urn:flarko:Transaction_33")];
        let r = parse_selection_response("1. <urn:flarko:Transaction_33>\n2. **Transaction_3**, Transaction_33.", &cands);
        assert_eq!(r.selected, [cands[1].clone(), cands[0].clone()]);
        assert!(r.dropped_hallucinations.is_empty());
    }

    #[test]
    fn heuristic_policies() {
        let mut r = req(RetrievalStage::Ptr, &["T_1", "T_2", "T_3", "T_4", "T_5"]);
        for (i, c) in r.candidates.iter_mut().enumerate() {
            c.date = NaiveDate::from_ymd_opt(2020, 1, 1 + i as u32);
        }
        assert_eq!(heuristic_select(&r, HeuristicPolicy::All, 1).selected.len(), 5);
        let recent = heuristic_select(&r, HeuristicPolicy::RecentK, 2).selected;
        assert_eq!(recent, [iri("urn:flarko:T_5"), iri("urn:flarko:T_4")]);
    }

    #[test]
    fn round_robin_spreads_across_groups() {
        let mut r = req(RetrievalStage::Mr, &["S_1", "S_2", "S_3", "S_4", "S_5"]);
        let (a, b) = (iri("urn:flarko:Asset_1"), iri("urn:flarko:Asset_2"));
        for (i, c) in r.candidates.iter_mut().enumerate() {
            c.group = Some(if i < 4 { a.clone() } else { b.clone() });
            c.date = NaiveDate::from_ymd_opt(2020, 1, 1 + i as u32);
        }
        let sel = heuristic_select(&r, HeuristicPolicy::RoundRobinK, 3).selected;
        assert_eq!(sel, [iri("urn:flarko:S_4"), iri("urn:flarko:S_5"), iri("urn:flarko:S_3")]);
    }

    struct Fixed(&'static str);
    impl Generator for Fixed {
        fn complete(&self, _: &CallContext<'_>, _: &[ChatMessage]) -> Result<String, GatewayError> {
            Ok(self.0.into())
        }
    }

    #[test]
    fn select_falls_back_on_noise() {
        let r = req(RetrievalStage::Ptr, &["T_1", "T_2"]);
        let out = select_entities("i", &r, &Fixed("no idea"), &LlmSelectionOptions::default()).unwrap();
        assert!(out.fallback);
        assert_eq!(out.selected.len(), 2);
        let off = LlmSelectionOptions {
            fallback_k: None,
            ..Default::default()
        };
        let out = select_entities("i", &r, &Fixed("no idea"), &off).unwrap();
        assert!(!out.fallback && out.selected.is_empty());
    }

    #[test]
    fn select_truncates_candidates_to_budget() {
        let names: Vec<String> = (1..=200).map(|i| alloc::format!("Transaction_{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut r = req(RetrievalStage::Ptr, &refs);
        for (i, c) in r.candidates.iter_mut().enumerate() {
            c.date = NaiveDate::from_ymd_opt(2020, 1, 1).map(|d| d + chrono::Days::new(i as u64));
        }
        let opts = LlmSelectionOptions {
            budget: ContextBudget::new(300, 4),
            fallback_k: Some(10),
        };
        let out = select_entities("i", &r, &Fixed("Transaction_200 Transaction_1"), &opts).unwrap();
        assert_eq!(out.truncated_from, Some(200));
        // Transaction_1 is the oldest and cannot survive truncation
        assert_eq!(out.selected, vec![iri("urn:flarko:Transaction_200")]);
        assert_eq!(out.dropped_hallucinations, ["Transaction_1"]);
    }
}
