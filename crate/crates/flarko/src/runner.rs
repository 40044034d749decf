//! The `build-kg`, `run` and `evaluate` commands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use flarko_core::eval::{
    generate_instances, leakage_audit, profitable_set, purchased_set, score_run, EvalError, Instance, MetricsReport,
    ScoreInput, TargetSets, Violation,
};
use flarko_core::kg::{serialize_jsonld, Graph, Vocabulary};
use flarko_core::llm::{CallContext, ChatMessage, GatewayError, Generator};
use flarko_core::market::{build_mkg, build_pkg, summarize_prices, AssetInfo, Isin, MkgBuild, PriceBar, TransactionRecord};
use flarko_core::pipeline::{run_pipeline, PipelineInputs, PipelineVariant, RecommendationResult, StageResult, Truncation};
use flarko_core::selection::{EntitySelector, HeuristicSelector, LlmSelectionOptions, LlmSelector};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, GeneratorKind, RunConfig, SelectorConfig};
use crate::gateway::{AuditRecord, Gateway, HttpTransport, Transport};
use crate::load::{load_assets, load_prices, load_transactions, LoadError, Reject};
use crate::mock::MockTransport;
use crate::report::{emit_report, ReportError, ReportFormat};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const LEAKAGE_FILE: &str = "leakage_audit.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Load { path: PathBuf, source: LoadError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    BadResults { path: PathBuf, line: usize, message: String },
    #[error("no results in {0}")]
    NoResults(PathBuf),
    #[error("results do not match the configured instances; no targets for: {}", .0.join(", "))]
    Mismatch(Vec<String>),
    #[error("leakage audit found {0} violation(s)")]
    Leakage(usize),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    /// 1 for configuration problems, 2 for everything data related.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `lines` to `path` through a temporary file so readers never see
/// a half-written file.
fn replace_lines(path: &Path, lines: &[String]) -> Result<(), RunError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for l in lines {
            writeln!(w, "{l}").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// All input tables, validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub transactions: Vec<TransactionRecord>,
    pub prices: BTreeMap<Isin, Vec<PriceBar>>,
    pub assets: Vec<AssetInfo>,
    pub rejects: BTreeMap<String, Vec<Reject>>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self, RunError> {
        let open = |p: &Path| File::open(p).map(BufReader::new).map_err(io_err(p));
        let load_err = |p: &Path| {
            let path = p.to_path_buf();
            move |source| RunError::Load { path, source }
        };
        let d = &cfg.data;
        let tx = load_transactions(open(&d.transactions)?, &d.transaction_columns).map_err(load_err(&d.transactions))?;
        let px = load_prices(open(&d.prices)?, &d.price_columns).map_err(load_err(&d.prices))?;
        let assets = load_assets(open(&d.assets)?, &d.asset_columns).map_err(load_err(&d.assets))?;
        let mut rejects = BTreeMap::new();
        rejects.insert("transactions".to_string(), tx.rejects);
        rejects.insert("prices".to_string(), px.rejects);
        rejects.insert("assets".to_string(), assets.rejects);
        for (file, r) in &rejects {
            if !r.is_empty() {
                log::warn!("{file}: {} row(s) rejected", r.len());
            }
        }
        let mut warnings = tx.warnings;
        warnings.extend(px.warnings);
        warnings.extend(assets.warnings);
        Ok(Self {
            transactions: tx.data,
            prices: px.data,
            assets: assets.data,
            rejects,
            warnings,
        })
    }

    /// Distinct user ids in the transaction table, sorted.
    pub fn users(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.transactions.iter().map(|t| t.user_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn mkg_at(&self, cutoff: NaiveDate, vocab: &Vocabulary) -> MkgBuild {
        let summaries = self
            .prices
            .iter()
            .map(|(isin, series)| (isin.clone(), summarize_prices(series, cutoff)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        build_mkg(&summaries, &self.assets, cutoff, vocab)
    }

    pub fn pkg_at(&self, user: &str, cutoff: NaiveDate, vocab: &Vocabulary) -> Graph {
        build_pkg(&self.transactions, user, cutoff, vocab)
    }

    pub fn targets(&self, instance: &Instance, horizon_days: u32) -> TargetSets {
        TargetSets::new(
            purchased_set(&self.transactions, &instance.user, instance.cutoff, horizon_days),
            profitable_set(&self.prices, instance.cutoff, horizon_days),
        )
    }

    pub fn reject_counts(&self) -> BTreeMap<String, usize> {
        self.rejects.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

fn load_checked(cfg: &RunConfig) -> Result<(Dataset, Vocabulary), RunError> {
    cfg.validate()?;
    let vocab = cfg.vocabulary()?;
    Ok((Dataset::load(cfg)?, vocab))
}

fn users_for(cfg: &RunConfig, ds: &Dataset) -> Vec<String> {
    cfg.users.clone().unwrap_or_else(|| ds.users())
}

fn safe_file_name(user: &str) -> String {
    user.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PkgEntry {
    pub file: String,
    pub transactions: usize,
    pub triples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub cutoff: NaiveDate,
    pub mkg_file: String,
    pub mkg_triples: usize,
    pub mkg_summaries: usize,
    pub pkg: BTreeMap<String, PkgEntry>,
    pub warnings: Vec<String>,
    pub rejects: BTreeMap<String, Vec<Reject>>,
}

/// Dumps every user's PKG and the MKG at `cutoff` (default: the first
/// evaluation date) as JSON-LD under `<output_dir>/kg/<cutoff>/`.
pub fn cmd_build_kg(cfg: &RunConfig, cutoff: Option<NaiveDate>) -> Result<(PathBuf, BuildManifest), RunError> {
    let (ds, vocab) = load_checked(cfg)?;
    let cutoff = cutoff.unwrap_or(cfg.eval_window.start);
    let dir = cfg.output_dir.join("kg").join(cutoff.to_string());
    let pkg_dir = dir.join("pkg");
    fs::create_dir_all(&pkg_dir).map_err(io_err(&pkg_dir))?;

    let mkg = ds.mkg_at(cutoff, &vocab);
    let mkg_path = dir.join("mkg.jsonld");
    fs::write(&mkg_path, serialize_jsonld(&mkg.graph, &vocab)).map_err(io_err(&mkg_path))?;
    let summary_class = vocab.class(flarko_core::kg::Class::TenWeekPriceSummary);
    let transaction_class = vocab.class(flarko_core::kg::Class::Transaction);

    let mut pkg = BTreeMap::new();
    let mut used_names = BTreeSet::new();
    for user in users_for(cfg, &ds) {
        let g = ds.pkg_at(&user, cutoff, &vocab);
        let mut name = safe_file_name(&user);
        while !used_names.insert(name.clone()) {
            name.push('_');
        }
        let file = format!("pkg/{name}.jsonld");
        let path = dir.join(&file);
        fs::write(&path, serialize_jsonld(&g, &vocab)).map_err(io_err(&path))?;
        pkg.insert(
            user,
            PkgEntry {
                file,
                transactions: g.list_entities(&vocab, &transaction_class).len(),
                triples: g.len(),
            },
        );
    }
    let mut warnings = ds.warnings.clone();
    warnings.extend(mkg.warnings);
    let manifest = BuildManifest {
        cutoff,
        mkg_file: "mkg.jsonld".into(),
        mkg_triples: mkg.graph.len(),
        mkg_summaries: mkg.graph.list_entities(&vocab, &summary_class).len(),
        pkg,
        warnings,
        rejects: ds.rejects.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok((dir, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub candidates: usize,
    pub selected: Vec<String>,
    pub triples: usize,
    pub prompt_tokens: usize,
    pub fallback: bool,
    pub hallucinations: Vec<String>,
    pub truncated_from: Option<usize>,
}

impl From<&StageResult> for StageSummary {
    fn from(s: &StageResult) -> Self {
        let sel = s.selection.as_ref();
        Self {
            candidates: s.candidate_count,
            selected: s.selected.iter().map(|t| t.value().to_string()).collect(),
            triples: s.subgraph.len(),
            prompt_tokens: s.prompt_tokens_estimate,
            fallback: sel.is_some_and(|x| x.fallback),
            hallucinations: sel.map(|x| x.dropped_hallucinations.clone()).unwrap_or_default(),
            truncated_from: sel.and_then(|x| x.truncated_from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub stage: String,
    pub message: String,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance_id: String,
    pub user: String,
    pub cutoff: NaiveDate,
    pub variant: PipelineVariant,
    pub status: Status,
    pub top3: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptr: Option<StageSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mr: Option<StageSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_prompt_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_prompt_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Truncation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<FailureInfo>,
}

impl ResultRecord {
    fn ok(inst: &Instance, r: &RecommendationResult) -> Self {
        Self {
            instance_id: r.instance_id.clone(),
            user: inst.user.clone(),
            cutoff: inst.cutoff,
            variant: r.variant,
            status: Status::Ok,
            top3: r.top3.clone(),
            raw_generation: Some(r.raw_generation.clone()),
            ptr: r.ptr.as_ref().map(StageSummary::from),
            mr: r.mr.as_ref().map(StageSummary::from),
            generation_prompt_tokens: Some(r.generation_prompt_tokens),
            total_prompt_tokens: Some(r.total_prompt_tokens),
            truncation: r.truncation.clone(),
            error: None,
        }
    }

    fn failed(inst: &Instance, variant: PipelineVariant, stage: &str, message: String) -> Self {
        Self {
            instance_id: inst.id(),
            user: inst.user.clone(),
            cutoff: inst.cutoff,
            variant,
            status: Status::Failed,
            top3: Vec::new(),
            raw_generation: None,
            ptr: None,
            mr: None,
            generation_prompt_tokens: None,
            total_prompt_tokens: None,
            truncation: None,
            error: Some(FailureInfo {
                stage: stage.to_string(),
                message,
            }),
        }
    }

    pub fn score_input(&self) -> ScoreInput {
        ScoreInput {
            instance_id: self.instance_id.clone(),
            variant: self.variant,
            top3: self.top3.clone(),
        }
    }
}

/// Reads a results file; blank lines are ignored.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, RunError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::BadResults {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl Transport for Box<dyn Transport> {
    fn send(
        &self,
        call: &CallContext<'_>,
        config: &flarko_core::llm::GenerationConfig,
        messages: &[ChatMessage],
    ) -> Result<String, crate::gateway::TransportError> {
        (**self).send(call, config, messages)
    }
}

/// Routes one task's calls through the shared gateway and keeps their
/// audit records, tagged with the variant.
struct TaskGenerator<'a, T> {
    gateway: &'a Gateway<T>,
    variant: PipelineVariant,
    records: Mutex<Vec<AuditRecord>>,
}

impl<T: Transport> Generator for TaskGenerator<'_, T> {
    fn complete(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let (result, mut record) = self.gateway.call(call, messages);
        record.variant = Some(self.variant.name().to_string());
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        result
    }
}

pub fn make_transport(cfg: &RunConfig) -> Box<dyn Transport> {
    match cfg.generator {
        GeneratorKind::Mock => Box::new(MockTransport::new(cfg.seed)),
        GeneratorKind::Http => Box::new(HttpTransport::new(&cfg.generation)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: String,
    pub seed: u64,
    pub users: usize,
    pub dates: usize,
    pub variants: Vec<PipelineVariant>,
    pub tasks: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub mkg_triples: BTreeMap<NaiveDate, usize>,
    pub warnings: Vec<String>,
    pub rejects: BTreeMap<String, usize>,
}

type TaskKey = (usize, usize);

/// Runs every pending (instance, variant) pair and leaves `results.jsonl`,
/// `audit.jsonl`, `manifest.json` and a config snapshot in the output
/// directory. Pairs already recorded as successful are not rerun.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunManifest, RunError> {
    let (ds, vocab) = load_checked(cfg)?;
    cmd_run_with(cfg, &ds, &vocab, make_transport(cfg))
}

pub fn cmd_run_with<T: Transport>(cfg: &RunConfig, ds: &Dataset, vocab: &Vocabulary, transport: T) -> Result<RunManifest, RunError> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&out.join(CONFIG_SNAPSHOT), cfg)?;

    let users = users_for(cfg, ds);
    let instances = generate_instances(&cfg.eval_window, &users);
    let variants = &cfg.variants;
    let inst_index: HashMap<String, usize> = instances.iter().enumerate().map(|(i, x)| (x.id(), i)).collect();
    let variant_index = |v: PipelineVariant| variants.iter().position(|x| *x == v);
    let key_of = |id: &str, v: PipelineVariant| Some((*inst_index.get(id)?, variant_index(v)?));

    let results_path = out.join(RESULTS_FILE);
    let audit_path = out.join(AUDIT_FILE);

    // keep successful records from an earlier run
    let mut done: BTreeMap<TaskKey, ResultRecord> = BTreeMap::new();
    if results_path.exists() {
        let f = File::open(&results_path).map_err(io_err(&results_path))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io_err(&results_path))?;
            let Ok(rec) = serde_json::from_str::<ResultRecord>(&line) else {
                if !line.trim().is_empty() {
                    log::warn!("{}: dropping unreadable line", results_path.display());
                }
                continue;
            };
            if rec.status == Status::Ok {
                if let Some(k) = key_of(&rec.instance_id, rec.variant) {
                    done.insert(k, rec);
                }
            }
        }
    }
    let mut audit: Vec<(TaskKey, AuditRecord)> = Vec::new();
    if audit_path.exists() {
        let f = File::open(&audit_path).map_err(io_err(&audit_path))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io_err(&audit_path))?;
            let Ok(rec) = serde_json::from_str::<AuditRecord>(&line) else { continue };
            let variant = rec.variant.as_deref().and_then(|n| PipelineVariant::ALL.into_iter().find(|v| v.name() == n));
            if let Some(k) = variant.and_then(|v| key_of(&rec.instance_id, v)) {
                if done.contains_key(&k) {
                    audit.push((k, rec));
                }
            }
        }
    }
    let skipped = done.len();
    let to_line = |r: &ResultRecord| serde_json::to_string(r).expect("serializable");
    let audit_line = |r: &AuditRecord| serde_json::to_string(r).expect("serializable");
    replace_lines(&results_path, &done.values().map(to_line).collect::<Vec<_>>())?;
    replace_lines(&audit_path, &audit.iter().map(|(_, r)| audit_line(r)).collect::<Vec<_>>())?;

    let open_append = |p: &Path| OpenOptions::new().append(true).open(p).map(BufWriter::new).map_err(io_err(p));
    let sink = Mutex::new((open_append(&results_path)?, open_append(&audit_path)?, Vec::new(), Vec::new()));

    let gateway = Gateway::new(transport, cfg.generation.clone(), cfg.budget);
    let settings = cfg.pipeline_settings();
    let workers = cfg.workers();

    // pending work grouped by date; instances are date-major already
    let mut by_date: BTreeMap<NaiveDate, Vec<(usize, Vec<usize>)>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let pending: Vec<usize> = (0..variants.len()).filter(|v| !done.contains_key(&(i, *v))).collect();
        if !pending.is_empty() {
            by_date.entry(inst.cutoff).or_default().push((i, pending));
        }
    }
    let mut mkg_triples = BTreeMap::new();
    let mut warnings = ds.warnings.clone();
    let mut io_failure: Option<RunError> = None;

    for (date, work) in &by_date {
        let mkg = ds.mkg_at(*date, vocab);
        mkg_triples.insert(*date, mkg.graph.len());
        warnings.extend(mkg.warnings.iter().map(|w| format!("{date}: {w}")));
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..workers.min(work.len()) {
                s.spawn(|| loop {
                    let n = next.fetch_add(1, Ordering::SeqCst);
                    let Some((i, pending)) = work.get(n) else { break };
                    let inst = &instances[*i];
                    let id = inst.id();
                    let pkg = ds.pkg_at(&inst.user, inst.cutoff, vocab);
                    let inputs = PipelineInputs {
                        instance_id: &id,
                        request: &cfg.request,
                        pkg: &pkg,
                        mkg: &mkg.graph,
                        vocab,
                        settings: &settings,
                    };
                    for &v in pending {
                        let variant = variants[v];
                        let gen = TaskGenerator {
                            gateway: &gateway,
                            variant,
                            records: Mutex::new(Vec::new()),
                        };
                        let outcome = match cfg.selector {
                            SelectorConfig::Llm { fallback_k } => {
                                let sel = LlmSelector {
                                    generator: &gen,
                                    options: LlmSelectionOptions {
                                        budget: cfg.budget,
                                        fallback_k,
                                    },
                                };
                                run_pipeline(variant, &inputs, &sel as &dyn EntitySelector, &gen)
                            }
                            SelectorConfig::Heuristic { policy, k } => {
                                run_pipeline(variant, &inputs, &HeuristicSelector { policy, k }, &gen)
                            }
                        };
                        let record = match outcome {
                            Ok(r) => ResultRecord::ok(inst, &r),
                            Err(f) => {
                                log::warn!("{f}");
                                ResultRecord::failed(inst, variant, f.stage, f.message)
                            }
                        };
                        let calls = gen.records.into_inner().unwrap_or_else(|e| e.into_inner());
                        let mut guard = sink.lock().unwrap_or_else(|e| e.into_inner());
                        let (rw, aw, recs, auds) = &mut *guard;
                        let res = writeln!(rw, "{}", to_line(&record)).and_then(|_| rw.flush());
                        let res = res.and_then(|_| {
                            for c in &calls {
                                writeln!(aw, "{}", audit_line(c))?;
                            }
                            aw.flush()
                        });
                        if let Err(e) = res {
                            log::error!("cannot append results: {e}");
                        }
                        recs.push(((*i, v), record));
                        auds.extend(calls.into_iter().map(|c| ((*i, v), c)));
                    }
                });
            }
        });
        if let Err(e) = sink.lock().unwrap_or_else(|e| e.into_inner()).0.flush() {
            io_failure = Some(io_err(&results_path)(e));
            break;
        }
    }
    if let Some(e) = io_failure {
        return Err(e);
    }

    let (rw, aw, new_records, new_audit) = sink.into_inner().unwrap_or_else(|e| e.into_inner());
    drop((rw, aw));
    let executed = new_records.len();
    let mut all = done;
    all.extend(new_records);
    audit.extend(new_audit);
    // canonical order: instance, variant, then call order within the task
    audit.sort_by_key(|(k, _)| *k);
    replace_lines(&results_path, &all.values().map(to_line).collect::<Vec<_>>())?;
    replace_lines(&audit_path, &audit.iter().map(|(_, r)| audit_line(r)).collect::<Vec<_>>())?;

    let failed = all.values().filter(|r| r.status == Status::Failed).count();
    let manifest = RunManifest {
        model: cfg.model_label(),
        seed: cfg.seed,
        users: users.len(),
        dates: cfg.eval_window.dates().len(),
        variants: variants.clone(),
        tasks: instances.len() * variants.len(),
        executed,
        skipped,
        failed,
        mkg_triples,
        warnings,
        rejects: ds.reject_counts(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceViolation {
    pub instance_id: String,
    #[serde(flatten)]
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageSummary {
    pub instances_checked: usize,
    pub dates_checked: usize,
    pub violations: Vec<InstanceViolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reports: Vec<MetricsReport>,
    pub leakage: LeakageSummary,
    pub failed_results: usize,
    pub metrics_csv: PathBuf,
    pub metrics_json: PathBuf,
}

/// Scores a results file against targets recomputed from the raw data and
/// audits the graphs of every scored instance. Failed results count as
/// empty recommendations.
pub fn cmd_evaluate(cfg: &RunConfig, results: Option<&Path>) -> Result<Evaluation, RunError> {
    let (ds, vocab) = load_checked(cfg)?;
    let default_results = cfg.output_dir.join(RESULTS_FILE);
    let results_path = results.unwrap_or(&default_results);
    let records = read_results(results_path)?;
    if records.is_empty() {
        return Err(RunError::NoResults(results_path.to_path_buf()));
    }

    let users = users_for(cfg, &ds);
    let instances: BTreeMap<String, Instance> = generate_instances(&cfg.eval_window, &users).into_iter().map(|i| (i.id(), i)).collect();
    let wanted: BTreeSet<&str> = records.iter().map(|r| r.instance_id.as_str()).collect();
    let targets: BTreeMap<String, TargetSets> = wanted
        .iter()
        .filter_map(|id| instances.get(*id))
        .map(|inst| (inst.id(), ds.targets(inst, cfg.eval_window.horizon_days)))
        .collect();
    let inputs: Vec<ScoreInput> = records.iter().map(ResultRecord::score_input).collect();
    let reports = score_run(&inputs, &targets, &cfg.model_label(), cfg.scoring()).map_err(|e| match e {
        EvalError::MissingTargets(ids) => RunError::Mismatch(ids),
        other => RunError::Config(ConfigError::Invalid {
            field: "eval_window",
            message: other.to_string(),
        }),
    })?;

    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let metrics_csv = cfg.output_dir.join(METRICS_CSV);
    let metrics_json = cfg.output_dir.join(METRICS_JSON);
    emit_report(&reports, &metrics_csv, ReportFormat::Csv)?;
    emit_report(&reports, &metrics_json, ReportFormat::Json)?;

    let mut by_date: BTreeMap<NaiveDate, Vec<&Instance>> = BTreeMap::new();
    for id in &wanted {
        let inst = &instances[*id];
        by_date.entry(inst.cutoff).or_default().push(inst);
    }
    let mut leakage = LeakageSummary {
        instances_checked: 0,
        dates_checked: 0,
        violations: Vec::new(),
    };
    for (date, insts) in by_date {
        let mkg = ds.mkg_at(date, &vocab).graph;
        for (n, inst) in insts.iter().enumerate() {
            let pkg = ds.pkg_at(&inst.user, date, &vocab);
            // the MKG is shared by the date, audit it once
            let empty = Graph::new();
            let report = leakage_audit(&pkg, if n == 0 { &mkg } else { &empty }, date);
            leakage.instances_checked += 1;
            leakage.dates_checked += report.dates_checked;
            leakage.violations.extend(report.violations.into_iter().map(|violation| InstanceViolation {
                instance_id: inst.id(),
                violation,
            }));
        }
    }
    write_json(&cfg.output_dir.join(LEAKAGE_FILE), &leakage)?;
    if !leakage.violations.is_empty() {
        return Err(RunError::Leakage(leakage.violations.len()));
    }

    Ok(Evaluation {
        reports,
        leakage,
        failed_results: records.iter().filter(|r| r.status == Status::Failed).count(),
        metrics_csv,
        metrics_json,
    })
}
