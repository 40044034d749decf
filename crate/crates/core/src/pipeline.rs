//! The three recommendation variants.
//!
//! ```text
//! FullInjection:  PKG, MKG ───────────────────────────────► generate
//! Parallel:       PKG ─► PTR ─┐
//!                 MKG ─► MR  ─┴──────────────────────────► generate
//! MultiStage:     PKG ─► PTR ─► (PTR subgraph) ─► MR ────► generate
//! ```
//!
//! Each retrieval stage lists the typed entities of its graph, lets an
//! [`EntitySelector`] pick some, extracts every triple touching the picks
//! and serializes that subgraph as JSON-LD.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::kg::{serialize_jsonld, Class, Graph, Predicate, Term, Vocabulary};
use crate::llm::{estimate_tokens, CallContext, CallStage, ChatMessage, ContextBudget, GatewayError, Generator};
use crate::market::{is_isin, known_assets};
use crate::selection::{build_selection_prompt, Candidate, EntitySelector, RetrievalStage, SelectionError, SelectionRequest, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PipelineVariant {
    FullInjection,
    Parallel,
    MultiStage,
}

impl PipelineVariant {
    pub const ALL: [PipelineVariant; 3] = [PipelineVariant::FullInjection, PipelineVariant::Parallel, PipelineVariant::MultiStage];

    pub fn name(self) -> &'static str {
        match self {
            PipelineVariant::FullInjection => "FullInjection",
            PipelineVariant::Parallel => "Parallel",
            PipelineVariant::MultiStage => "MultiStage",
        }
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_FORMAT_INSTRUCTION: &str =
    "List exactly three ISINs, one per line, most recommended first. Output only the ISINs.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineSettings {
    pub budget: ContextBudget,
    /// Output-format line appended to the request in the generation prompt.
    pub format_instruction: String,
    /// Also extract the asset node behind every selected summary, so its
    /// category, sector and industry reach the prompt.
    pub complete_assets: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            budget: ContextBudget::default(),
            format_instruction: String::from(DEFAULT_FORMAT_INSTRUCTION),
            complete_assets: true,
        }
    }
}

/// Everything one instance may look at: the request and the two graphs
/// built at its cutoff.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub instance_id: &'a str,
    pub request: &'a str,
    pub pkg: &'a Graph,
    pub mkg: &'a Graph,
    pub vocab: &'a Vocabulary,
    pub settings: &'a PipelineSettings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageResult {
    pub stage: RetrievalStage,
    /// Entities chosen by the selector, restricted to the candidates.
    pub selected: Vec<Term>,
    /// Nodes handed to extraction: `selected` plus any completed assets.
    pub extraction_nodes: Vec<Term>,
    pub subgraph: Graph,
    pub serialized: String,
    /// Estimated size of the selection prompt.
    pub prompt_tokens_estimate: usize,
    pub candidate_count: usize,
    /// `None` when there was nothing to select from.
    pub selection: Option<SelectionResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn parse_date(term: &Term) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(term.value(), "%Y-%m-%d").ok()
}

fn transaction_candidates(pkg: &Graph, vocab: &Vocabulary) -> Vec<Candidate> {
    let ts = vocab.predicate(Predicate::TransactionTimestamp);
    pkg.list_entities(vocab, &vocab.class(Class::Transaction))
        .into_iter()
        .map(|iri| Candidate {
            date: pkg.object(&iri, &ts).and_then(parse_date),
            group: None,
            iri,
        })
        .collect()
}

fn summary_candidates(mkg: &Graph, vocab: &Vocabulary) -> Vec<Candidate> {
    let end = vocab.predicate(Predicate::PeriodEndDate);
    let price_of = vocab.predicate(Predicate::PriceOf);
    mkg.list_entities(vocab, &vocab.class(Class::TenWeekPriceSummary))
        .into_iter()
        .map(|iri| Candidate {
            date: mkg.object(&iri, &end).and_then(parse_date),
            group: mkg.object(&iri, &price_of).filter(|t| t.is_iri()).cloned(),
            iri,
        })
        .collect()
}

fn run_stage(
    inputs: &PipelineInputs<'_>,
    stage: RetrievalStage,
    source: &Graph,
    candidates: Vec<Candidate>,
    prior_context: Option<String>,
    selector: &dyn EntitySelector,
) -> Result<StageResult, PipelineError> {
    let candidate_count = candidates.len();
    if candidates.is_empty() {
        let subgraph = Graph::new();
        return Ok(StageResult {
            stage,
            selected: Vec::new(),
            extraction_nodes: Vec::new(),
            serialized: serialize_jsonld(&subgraph, inputs.vocab),
            subgraph,
            prompt_tokens_estimate: 0,
            candidate_count,
            selection: None,
        });
    }
    let req = SelectionRequest {
        user_request: String::from(inputs.request),
        candidates,
        prior_context,
        stage,
    };
    let prompt_tokens_estimate = estimate_tokens(&build_selection_prompt(&req)?, &inputs.settings.budget);
    let selection = selector.select(inputs.instance_id, &req)?;

    let allowed: BTreeSet<&Term> = req.candidates.iter().map(|c| &c.iri).collect();
    let mut seen = BTreeSet::new();
    let selected: Vec<Term> = selection
        .selected
        .iter()
        .filter(|t| allowed.contains(t) && seen.insert(*t))
        .cloned()
        .collect();

    let mut extraction_nodes = selected.clone();
    if stage == RetrievalStage::Mr && inputs.settings.complete_assets {
        let group_of: BTreeMap<&Term, &Term> = req
            .candidates
            .iter()
            .filter_map(|c| c.group.as_ref().map(|g| (&c.iri, g)))
            .collect();
        for s in &selected {
            if let Some(asset) = group_of.get(s) {
                if !extraction_nodes.contains(asset) {
                    extraction_nodes.push((*asset).clone());
                }
            }
        }
    }
    let subgraph = source.extract_subgraph(&extraction_nodes);
    Ok(StageResult {
        stage,
        selected,
        extraction_nodes,
        serialized: serialize_jsonld(&subgraph, inputs.vocab),
        subgraph,
        prompt_tokens_estimate,
        candidate_count,
        selection: Some(selection),
    })
}

/// Personal transaction retrieval over every transaction entity of the PKG.
/// An empty PKG yields an empty stage result without calling the selector.
pub fn run_ptr(inputs: &PipelineInputs<'_>, selector: &dyn EntitySelector) -> Result<StageResult, PipelineError> {
    let candidates = transaction_candidates(inputs.pkg, inputs.vocab);
    run_stage(inputs, RetrievalStage::Ptr, inputs.pkg, candidates, None, selector)
}

/// Market retrieval over every summary entity of the MKG. With `prior`, the
/// PTR subgraph is shown to the selector (multi-stage); without it the
/// stage runs blind to PTR (parallel).
pub fn run_mr(
    inputs: &PipelineInputs<'_>,
    prior: Option<&StageResult>,
    selector: &dyn EntitySelector,
) -> Result<StageResult, PipelineError> {
    let candidates = summary_candidates(inputs.mkg, inputs.vocab);
    let prior_context = prior.map(|p| p.serialized.clone());
    run_stage(inputs, RetrievalStage::Mr, inputs.mkg, candidates, prior_context, selector)
}

/// Graph context for the final generation call.
#[derive(Debug, Clone, Copy)]
pub enum GenerationContext<'a> {
    Retrieved { ptr: &'a StageResult, mr: &'a StageResult },
    Full { pkg: &'a Graph, mkg: &'a Graph },
}

/// What full injection dropped to fit the budget, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub dropped_transactions: Vec<String>,
    pub dropped_summaries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPrompt {
    pub messages: Vec<ChatMessage>,
    pub tokens_estimate: usize,
    pub truncation: Option<Truncation>,
}

const PKG_HEADER: &str = "Investor transaction knowledge graph (JSON-LD):\n";
const MKG_HEADER: &str = "Market knowledge graph (JSON-LD):\n";

fn generation_messages(request: &str, pkg_json: &str, mkg_json: &str, settings: &PipelineSettings) -> Vec<ChatMessage> {
    let mut pkg = String::from(PKG_HEADER);
    pkg.push_str(pkg_json);
    let mut mkg = String::from(MKG_HEADER);
    mkg.push_str(mkg_json);
    let mut user = String::from(request);
    user.push_str("\n\n");
    user.push_str(&settings.format_instruction);
    alloc::vec![ChatMessage::system(pkg), ChatMessage::system(mkg), ChatMessage::user(user)]
}

fn oldest_first(cands: Vec<Candidate>) -> Vec<Term> {
    let mut v = cands;
    v.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.iri.cmp(&b.iri)));
    v.into_iter().map(|c| c.iri).collect()
}

/// System message with the PKG context, system message with the MKG
/// context, then the request with the output-format instruction.
///
/// Retrieved contexts that overflow the budget are an error. A full
/// injection that overflows is cut down by dropping the oldest transaction
/// and the oldest summary per round until it fits; what was dropped is
/// recorded.
pub fn assemble_generation_prompt(
    request: &str,
    context: GenerationContext<'_>,
    vocab: &Vocabulary,
    settings: &PipelineSettings,
) -> Result<GenerationPrompt, GatewayError> {
    let budget = &settings.budget;
    match context {
        GenerationContext::Retrieved { ptr, mr } => {
            let messages = generation_messages(request, &ptr.serialized, &mr.serialized, settings);
            let tokens = estimate_tokens(&messages, budget);
            if tokens > budget.max_context_tokens {
                return Err(GatewayError::Budget {
                    estimated: tokens,
                    limit: budget.max_context_tokens,
                });
            }
            Ok(GenerationPrompt {
                messages,
                tokens_estimate: tokens,
                truncation: None,
            })
        }
        GenerationContext::Full { pkg, mkg } => {
            let render = |rounds: usize, txns: &[Term], sums: &[Term]| {
                let drop_t: BTreeSet<Term> = txns.iter().take(rounds).cloned().collect();
                let drop_s: BTreeSet<Term> = sums.iter().take(rounds).cloned().collect();
                let messages = generation_messages(
                    request,
                    &serialize_jsonld(&pkg.without_subjects(&drop_t), vocab),
                    &serialize_jsonld(&mkg.without_subjects(&drop_s), vocab),
                    settings,
                );
                let tokens = estimate_tokens(&messages, budget);
                (messages, tokens)
            };
            let (messages, tokens) = render(0, &[], &[]);
            if tokens <= budget.max_context_tokens {
                return Ok(GenerationPrompt {
                    messages,
                    tokens_estimate: tokens,
                    truncation: None,
                });
            }
            let txns = oldest_first(transaction_candidates(pkg, vocab));
            let sums = oldest_first(summary_candidates(mkg, vocab));
            let max_rounds = txns.len().max(sums.len());
            let (_, floor) = render(max_rounds, &txns, &sums);
            if floor > budget.max_context_tokens {
                return Err(GatewayError::Budget {
                    estimated: floor,
                    limit: budget.max_context_tokens,
                });
            }
            // fewest rounds that fit; size is monotone in rounds
            let (mut lo, mut hi) = (1usize, max_rounds);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if render(mid, &txns, &sums).1 <= budget.max_context_tokens {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let (messages, tokens) = render(lo, &txns, &sums);
            Ok(GenerationPrompt {
                messages,
                tokens_estimate: tokens,
                truncation: Some(Truncation {
                    dropped_transactions: txns.iter().take(lo).map(|t| String::from(t.value())).collect(),
                    dropped_summaries: sums.iter().take(lo).map(|t| String::from(t.value())).collect(),
                }),
            })
        }
    }
}

/// ISIN-shaped words of `raw`, in order, limited to `known_assets`,
/// deduplicated, at most three.
///
/// A word is a maximal run of ASCII alphanumerics, so an ISIN glued to other
/// letters or digits is not picked up.
pub fn parse_recommendations(raw: &str, known_assets: &BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for word in raw.split(|c: char| !c.is_ascii_alphanumeric()) {
        if out.len() == 3 {
            break;
        }
        if is_isin(word) && known_assets.contains(word) && !out.iter().any(|o| o == word) {
            out.push(String::from(word));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationResult {
    pub instance_id: String,
    pub variant: PipelineVariant,
    pub top3: Vec<String>,
    pub raw_generation: String,
    pub ptr: Option<StageResult>,
    pub mr: Option<StageResult>,
    pub generation_prompt_tokens: usize,
    /// Selection prompts plus the generation prompt.
    pub total_prompt_tokens: usize,
    pub truncation: Option<Truncation>,
}

/// Why an instance could not be completed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{instance_id} [{variant}] failed at {stage}: {message}")]
pub struct PipelineFailure {
    pub instance_id: String,
    pub variant: PipelineVariant,
    pub stage: &'static str,
    pub message: String,
}

/// Runs one instance end to end with the given variant.
pub fn run_pipeline(
    variant: PipelineVariant,
    inputs: &PipelineInputs<'_>,
    selector: &dyn EntitySelector,
    generator: &dyn Generator,
) -> Result<RecommendationResult, PipelineFailure> {
    let fail = |stage: &'static str, e: &dyn fmt::Display| PipelineFailure {
        instance_id: String::from(inputs.instance_id),
        variant,
        stage,
        message: alloc::format!("{e}"),
    };

    let (ptr, mr) = match variant {
        PipelineVariant::FullInjection => (None, None),
        PipelineVariant::Parallel => {
            let ptr = run_ptr(inputs, selector).map_err(|e| fail("PTR", &e))?;
            let mr = run_mr(inputs, None, selector).map_err(|e| fail("MR", &e))?;
            (Some(ptr), Some(mr))
        }
        PipelineVariant::MultiStage => {
            let ptr = run_ptr(inputs, selector).map_err(|e| fail("PTR", &e))?;
            let mr = run_mr(inputs, Some(&ptr), selector).map_err(|e| fail("MR", &e))?;
            (Some(ptr), Some(mr))
        }
    };

    let context = match (&ptr, &mr) {
        (Some(ptr), Some(mr)) => GenerationContext::Retrieved { ptr, mr },
        _ => GenerationContext::Full {
            pkg: inputs.pkg,
            mkg: inputs.mkg,
        },
    };
    let prompt = assemble_generation_prompt(inputs.request, context, inputs.vocab, inputs.settings)
        .map_err(|e| fail("GEN", &e))?;
    let call = CallContext {
        instance_id: inputs.instance_id,
        stage: CallStage::Generation,
    };
    let raw = generator.complete(&call, &prompt.messages).map_err(|e| fail("GEN", &e))?;
    let top3 = parse_recommendations(&raw, &known_assets(inputs.mkg, inputs.vocab));

    let selection_tokens: usize = ptr.iter().chain(mr.iter()).map(|s| s.prompt_tokens_estimate).sum();
    Ok(RecommendationResult {
        instance_id: String::from(inputs.instance_id),
        variant,
        top3,
        raw_generation: raw,
        ptr,
        mr,
        generation_prompt_tokens: prompt.tokens_estimate,
        total_prompt_tokens: selection_tokens + prompt.tokens_estimate,
        truncation: prompt.truncation,
    })
}
