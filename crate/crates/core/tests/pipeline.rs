mod common;

use std::collections::BTreeSet;
use std::sync::Mutex;

use common::*;
use flarko_core::kg::{serialize_jsonld, Class, Graph, Term, Triple, Vocabulary};
use flarko_core::llm::{CallContext, CallStage, ChatMessage, ContextBudget, GatewayError, Generator};
use flarko_core::market::known_assets;
use flarko_core::pipeline::{
    assemble_generation_prompt, run_mr, run_pipeline, run_ptr, GenerationContext, PipelineInputs, PipelineSettings,
    PipelineVariant,
};
use flarko_core::selection::{
    heuristic_select, EntitySelector, HeuristicPolicy, HeuristicSelector, LlmSelectionOptions, LlmSelector, SelectionError,
    SelectionRequest, SelectionResult,
};

fn inputs<'a>(pkg: &'a Graph, mkg: &'a Graph, vocab: &'a Vocabulary, settings: &'a PipelineSettings) -> PipelineInputs<'a> {
    PipelineInputs {
        instance_id: "user@2022-01-01",
        request: "Recommend three assets for me.",
        pkg,
        mkg,
        vocab,
        settings,
    }
}

fn pick(names: &'static [&'static str]) -> impl Fn(&str, &SelectionRequest) -> Result<SelectionResult, SelectionError> + Sync {
    move |_: &str, req: &SelectionRequest| {
        Ok(SelectionResult {
            selected: req
                .candidates
                .iter()
                .filter(|c| names.contains(&c.iri.local_name()))
                .map(|c| c.iri.clone())
                .collect(),
            ..Default::default()
        })
    }
}

#[test]
fn ptr_on_fig3a_returns_the_transaction_node() {
    let v = Vocabulary::default();
    let pkg = fig3a_pkg(&v);
    let mkg = Graph::new();
    let settings = PipelineSettings::default();
    let r = run_ptr(&inputs(&pkg, &mkg, &v, &settings), &pick(&["Transaction_1"])).unwrap();
    assert_eq!(r.selected, vec![v.entity("Transaction_1")]);
    assert_eq!(r.subgraph, pkg);
    assert_eq!(r.serialized, serialize_jsonld(&pkg, &v));
}

#[test]
fn ptr_on_empty_pkg_is_empty_and_skips_selector() {
    let v = Vocabulary::default();
    let g = Graph::new();
    let settings = PipelineSettings::default();
    let never = |_: &str, _: &SelectionRequest| -> Result<SelectionResult, SelectionError> { panic!("selector called") };
    let r = run_ptr(&inputs(&g, &g, &v, &settings), &never).unwrap();
    assert!(r.subgraph.is_empty());
    assert!(r.serialized.ends_with("\"@graph\":[]}"));
    assert_eq!(r.selection, None);
}

#[test]
fn ptr_subgraph_equals_incident_edge_union() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(11, 30, 4, d(2022, 1, 1), &v);
    let settings = PipelineSettings::default();
    let r = run_ptr(
        &inputs(&pkg, &mkg, &v, &settings),
        &pick(&["Transaction_2", "Transaction_5", "Transaction_11", "Transaction_20", "Transaction_29"]),
    )
    .unwrap();
    assert_eq!(r.selected.len(), 5);
    let oracle = brute_force_extract(&pkg, &r.selected);
    assert_eq!(r.subgraph.len(), oracle.len());
    assert_eq!(sorted(&r.subgraph), oracle);
}

#[test]
fn mr_on_fig3b_with_and_without_asset_completion() {
    let v = Vocabulary::default();
    let mkg = fig3b_mkg(&v);
    let pkg = Graph::new();
    let mut settings = PipelineSettings {
        complete_assets: false,
        ..Default::default()
    };
    let r = run_mr(&inputs(&pkg, &mkg, &v, &settings), None, &pick(&["TenWeekPriceSummary_1"])).unwrap();
    // class, four prices, end date and the priceOf edge
    assert_eq!(r.subgraph.len(), 7);
    assert!(r.subgraph.iter().all(|t| t.subject() == &v.entity("TenWeekPriceSummary_1")));

    settings.complete_assets = true;
    let r = run_mr(&inputs(&pkg, &mkg, &v, &settings), None, &pick(&["TenWeekPriceSummary_1"])).unwrap();
    assert_eq!(r.subgraph, mkg);
    assert_eq!(r.extraction_nodes, vec![v.entity("TenWeekPriceSummary_1"), v.entity("Asset_1")]);
}

struct Noise;
impl Generator for Noise {
    fn complete(&self, _: &CallContext<'_>, _: &[ChatMessage]) -> Result<String, GatewayError> {
        Ok("I cannot decide.".into())
    }
}

#[test]
fn mr_empty_selection_without_fallback_is_empty() {
    let v = Vocabulary::default();
    let mkg = fig3b_mkg(&v);
    let pkg = Graph::new();
    let settings = PipelineSettings::default();
    let sel = LlmSelector {
        generator: Noise,
        options: LlmSelectionOptions {
            fallback_k: None,
            ..Default::default()
        },
    };
    let r = run_mr(&inputs(&pkg, &mkg, &v, &settings), None, &sel).unwrap();
    assert!(r.subgraph.is_empty());
    assert!(r.selected.is_empty());
}

/// Picks the most recent summary blind, the oldest one when it can see PTR context.
fn prior_sensitive(_: &str, req: &SelectionRequest) -> Result<SelectionResult, SelectionError> {
    let mut c = req.candidates.clone();
    c.sort_by_key(|c| c.date);
    let chosen = if req.prior_context.is_some() { c.first() } else { c.last() };
    Ok(SelectionResult {
        selected: chosen.map(|c| c.iri.clone()).into_iter().collect(),
        ..Default::default()
    })
}

#[test]
fn context_propagation_changes_mr_selection() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(5, 10, 3, d(2022, 6, 1), &v);
    let settings = PipelineSettings::default();
    let inp = inputs(&pkg, &mkg, &v, &settings);
    let ptr = run_ptr(&inp, &prior_sensitive).unwrap();
    let multi = run_mr(&inp, Some(&ptr), &prior_sensitive).unwrap();
    let parallel = run_mr(&inp, None, &prior_sensitive).unwrap();
    assert_ne!(multi.selected, parallel.selected);
}

/// Records every prompt and answers with a fixed ISIN list on generation.
struct Recorder {
    answer: String,
    calls: Mutex<Vec<(String, CallStage, Vec<ChatMessage>)>>,
}

impl Recorder {
    fn new(answer: &str) -> Self {
        Self {
            answer: answer.into(),
            calls: Mutex::new(Vec::new()),
        }
    }
}

impl Generator for Recorder {
    fn complete(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        self.calls.lock().unwrap().push((call.instance_id.into(), call.stage, messages.to_vec()));
        Ok(match call.stage {
            CallStage::Generation => self.answer.clone(),
            _ => messages[1].content.lines().filter(|l| l.starts_with("urn:")).take(2).collect::<Vec<_>>().join("\n"),
        })
    }
}

#[test]
fn multistage_end_to_end_follows_script() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(21, 12, 5, d(2022, 3, 1), &v);
    let known: Vec<String> = known_assets(&mkg, &v).into_iter().collect();
    let answer = format!("1. {}\n2. {}\n3. {}\n4. {}", known[3], known[0], "XS9999999999", known[1]);
    let settings = PipelineSettings::default();
    let gen = Recorder::new(&answer);
    let sel = LlmSelector {
        generator: &gen,
        options: LlmSelectionOptions::default(),
    };
    let r = run_pipeline(PipelineVariant::MultiStage, &inputs(&pkg, &mkg, &v, &settings), &sel, &gen).unwrap();
    assert_eq!(r.top3, vec![known[3].clone(), known[0].clone(), known[1].clone()]);

    let calls = gen.calls.lock().unwrap();
    let stages: Vec<CallStage> = calls.iter().map(|c| c.1).collect();
    assert_eq!(stages, [CallStage::Ptr, CallStage::Mr, CallStage::Generation]);
    let ptr = r.ptr.as_ref().unwrap();
    assert!(calls[1].2[0].content.contains(&ptr.serialized), "MR prompt must carry the PTR subgraph verbatim");
    let gen_prompt = &calls[2].2;
    assert_eq!(gen_prompt.len(), 3);
    assert!(gen_prompt[0].content.contains(&ptr.serialized));
    assert!(gen_prompt[1].content.contains(&r.mr.as_ref().unwrap().serialized));
    assert!(ptr.subgraph.is_subgraph_of(&pkg));
    assert!(r.mr.as_ref().unwrap().subgraph.is_subgraph_of(&mkg));
}

#[test]
fn parallel_mr_prompt_lacks_ptr_context() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(22, 12, 5, d(2022, 3, 1), &v);
    let settings = PipelineSettings::default();
    let gen = Recorder::new("");
    let sel = LlmSelector {
        generator: &gen,
        options: LlmSelectionOptions::default(),
    };
    let r = run_pipeline(PipelineVariant::Parallel, &inputs(&pkg, &mkg, &v, &settings), &sel, &gen).unwrap();
    let calls = gen.calls.lock().unwrap();
    assert!(!calls[1].2[0].content.contains(&r.ptr.as_ref().unwrap().serialized));
    assert!(!calls[1].2[0].content.contains("hasParticipant"));
    assert!(r.top3.is_empty());
}

#[test]
fn prior_insensitive_selector_gives_identical_top3() {
    let v = Vocabulary::default();
    let settings = PipelineSettings::default();
    let sel = HeuristicSelector {
        policy: HeuristicPolicy::RecentK,
        k: 3,
    };
    // generator echoes the first three ISINs it sees in the market context
    struct Echo;
    impl Generator for Echo {
        fn complete(&self, _: &CallContext<'_>, m: &[ChatMessage]) -> Result<String, GatewayError> {
            Ok(m.get(1).map(|m| m.content.clone()).unwrap_or_default())
        }
    }
    for seed in 0..20 {
        let (pkg, mkg) = synthetic_graphs(seed, 15, 6, d(2022, 3, 1), &v);
        let inp = inputs(&pkg, &mkg, &v, &settings);
        let p = run_pipeline(PipelineVariant::Parallel, &inp, &sel, &Echo).unwrap();
        let m = run_pipeline(PipelineVariant::MultiStage, &inp, &sel, &Echo).unwrap();
        assert_eq!(p.top3, m.top3);
        assert!(!p.top3.is_empty());
    }
}

#[test]
fn full_injection_embeds_complete_graphs() {
    let v = Vocabulary::default();
    let pkg = fig3a_pkg(&v);
    let mkg = fig3b_mkg(&v);
    let settings = PipelineSettings::default();
    let p = assemble_generation_prompt("req", GenerationContext::Full { pkg: &pkg, mkg: &mkg }, &v, &settings).unwrap();
    assert!(p.messages[0].content.ends_with(&serialize_jsonld(&pkg, &v)));
    assert!(p.messages[1].content.ends_with(&serialize_jsonld(&mkg, &v)));
    assert!(p.messages[2].content.contains("three ISINs"));
}

#[test]
fn full_injection_on_empty_graphs_filters_to_known_assets() {
    let v = Vocabulary::default();
    let g = Graph::new();
    let settings = PipelineSettings::default();
    let gen = Recorder::new("GRS434003000");
    let r = run_pipeline(PipelineVariant::FullInjection, &inputs(&g, &g, &v, &settings), &HeuristicSelector { policy: HeuristicPolicy::All, k: 1 }, &gen).unwrap();
    assert!(r.top3.is_empty());
    assert!(r.ptr.is_none() && r.mr.is_none());
    let calls = gen.calls.lock().unwrap();
    assert_eq!(calls.len(), 1);
    assert!(calls[0].2[0].content.ends_with("\"@graph\":[]}"));
}

#[test]
fn full_injection_truncates_oldest_first_to_fit() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(3, 40, 6, d(2022, 3, 1), &v);
    let full = assemble_generation_prompt("r", GenerationContext::Full { pkg: &pkg, mkg: &mkg }, &v, &PipelineSettings::default()).unwrap();
    let settings = PipelineSettings {
        budget: ContextBudget::new(full.tokens_estimate / 2, 4),
        ..Default::default()
    };
    let p = assemble_generation_prompt("r", GenerationContext::Full { pkg: &pkg, mkg: &mkg }, &v, &settings).unwrap();
    assert!(p.tokens_estimate <= settings.budget.max_context_tokens);
    let t = p.truncation.expect("truncated");
    assert!(!t.dropped_transactions.is_empty());
    // dropped transactions are the oldest ones
    let ts = v.predicate(flarko_core::kg::Predicate::TransactionTimestamp);
    let date_of = |iri: &str| pkg.object(&Term::iri(iri).unwrap(), &ts).unwrap().value().to_string();
    let newest_dropped = t.dropped_transactions.iter().map(|i| date_of(i)).max().unwrap();
    let kept: BTreeSet<String> = pkg
        .list_entities(&v, &v.class(Class::Transaction))
        .iter()
        .filter(|e| !t.dropped_transactions.contains(&e.value().to_string()))
        .map(|e| date_of(e.value()))
        .collect();
    assert!(kept.iter().all(|d| *d >= newest_dropped));

    // retrieved contexts never truncate; they fail instead
    let tiny = PipelineSettings {
        budget: ContextBudget::new(10, 4),
        ..Default::default()
    };
    let inp = inputs(&pkg, &mkg, &v, &tiny);
    let sel = HeuristicSelector { policy: HeuristicPolicy::RecentK, k: 2 };
    let err = run_pipeline(PipelineVariant::MultiStage, &inp, &sel, &Recorder::new("")).unwrap_err();
    assert_eq!(err.stage, "GEN");
}

#[test]
fn multistage_prompt_never_exceeds_full_injection() {
    let v = Vocabulary::default();
    let settings = PipelineSettings::default();
    for seed in 0..100u64 {
        let (pkg, mkg) = synthetic_graphs(seed, 1 + (seed as usize % 25), 1 + (seed as usize % 7), d(2022, 1, 1) + chrono::Days::new(seed * 3), &v);
        let inp = inputs(&pkg, &mkg, &v, &settings);
        let k = 1 + seed as usize % 6;
        let sel = move |_: &str, req: &SelectionRequest| Ok(heuristic_select(req, HeuristicPolicy::RoundRobinK, k));
        let gen = Recorder::new("");
        let full = run_pipeline(PipelineVariant::FullInjection, &inp, &sel, &gen).unwrap();
        let multi = run_pipeline(PipelineVariant::MultiStage, &inp, &sel, &gen).unwrap();
        assert!(
            multi.generation_prompt_tokens <= full.generation_prompt_tokens,
            "seed {seed}: {} > {}",
            multi.generation_prompt_tokens,
            full.generation_prompt_tokens
        );
    }
}

#[test]
fn selector_output_outside_candidates_never_reaches_extraction() {
    let v = Vocabulary::default();
    let (pkg, mkg) = synthetic_graphs(8, 5, 2, d(2022, 1, 1), &v);
    let settings = PipelineSettings::default();
    let rogue = |_: &str, _: &SelectionRequest| -> Result<SelectionResult, SelectionError> {
        Ok(SelectionResult {
            selected: vec![Term::iri("urn:flarko:Asset_1").unwrap(), Term::iri("urn:flarko:Transaction_1").unwrap()],
            ..Default::default()
        })
    };
    let r = run_ptr(&inputs(&pkg, &mkg, &v, &settings), &rogue).unwrap();
    assert_eq!(r.selected, vec![Term::iri("urn:flarko:Transaction_1").unwrap()]);
    let _: &dyn EntitySelector = &rogue;
    let _ = Triple::new(v.entity("x"), v.entity("y"), v.entity("z"));
}
