//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when some
//! queries were aborted and skipped.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{Annotator, Defect};
use crate::corpus::{
    load_answers, load_corpus, load_evidence, load_qrels, load_queries, load_run, write_run, CandidateList,
    Corpus, CorpusFormat, QuerySet, Run,
};
use crate::costsim::{simulate_with, CarryMode, SelectionProfile};
use crate::judge::{
    EndpointJudge, Judge, JudgeEndpointConfig, OracleJudge, RecordingJudge, ReplayJudge,
};
use crate::metrics::{answer_scores, evidence_scores, ndcg_at_k, AnswerPrediction, MetricsReport};
use crate::prompting::{load_templates, PromptBudget, PromptTemplates};
use crate::windowing::{Engine, EngineError, WindowConfig, WindowTrace};
use crate::TaskKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "utilsel", version, about = "Sliding-window passage re-ranking and utility-based selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Re-rank a run with a listwise judge, back to front.
    Rerank(PipelineArgs),
    /// Select useful passages front to back with a preselected queue.
    Select(PipelineArgs),
    /// Score selections, answers and rankings against gold files.
    Evaluate(EvaluateArgs),
    /// Produce distillation records from a teacher judge.
    Annotate(AnnotateArgs),
    /// Simulate window counts under a selection profile.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Endpoint,
    Oracle,
    Replay,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    /// Candidates per query to process.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Window size.
    #[arg(long = "w", default_value_t = 20)]
    pub window: usize,
    /// Stride.
    #[arg(long = "s", default_value_t = 10)]
    pub stride: usize,
}

impl GeometryArgs {
    fn config(&self) -> Result<WindowConfig> {
        Ok(WindowConfig::new(self.depth, self.window, self.stride)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct JudgeArgs {
    #[arg(long, value_enum)]
    pub judge: JudgeKind,
    /// Base URL of an OpenAI-compatible API (endpoint judge).
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Transcript to replay (replay judge) or to record into (endpoint judge).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Relevance judgments for the oracle judge.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Minimum grade the oracle selects.
    #[arg(long, default_value_t = 1)]
    pub threshold: u32,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    /// Prompt template file; built-in templates when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Per-passage token budget in prompts.
    #[arg(long, default_value_t = 300)]
    pub passage_tokens: usize,
    /// Optional cap on total prompt characters.
    #[arg(long)]
    pub max_prompt_chars: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub judge: JudgeArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Queries processed concurrently.
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[arg(long)]
    pub kind: TaskKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Ranked run (TREC format) for nDCG or a top-k cut.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// nDCG cutoffs; 10 when a run and qrels are given without this flag.
    #[arg(long)]
    pub ndcg_k: Vec<usize>,
    /// Selection file produced by `select`.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Score the first k passages of `--run` as a selection.
    #[arg(long)]
    pub k: Option<usize>,
    /// Gold evidence JSONL.
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Predicted answers JSONL.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Gold answers JSONL.
    #[arg(long)]
    pub answers: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// `never`, `always`, `bernoulli:P`, or a histogram JSON file.
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reselect carried passages with this probability instead of uniformly.
    #[arg(long)]
    pub sticky: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
    /// Directory for report files; the table is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written next to every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: Vec<String>,
    pub aborted: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// One line of `selection.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLine {
    pub query_id: String,
    pub selected: Vec<String>,
    pub pseudo_answers: Vec<String>,
    pub windows: usize,
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLine {
    pub query_id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<WindowTrace>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Rerank(a) => cmd_pipeline(TaskKind::Ranking, &a),
        Command::Select(a) => cmd_pipeline(TaskKind::Selection, &a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Annotate(a) => cmd_annotate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(hasher.finalize()))
}

struct ManifestBuilder {
    command: &'static str,
    seed: Option<u64>,
    params: serde_json::Value,
    inputs: BTreeMap<String, InputDigest>,
    started_at: String,
}

impl ManifestBuilder {
    fn new<P: Serialize>(command: &'static str, seed: Option<u64>, params: &P) -> Result<Self> {
        Ok(ManifestBuilder {
            command,
            seed,
            params: serde_json::to_value(params)?,
            inputs: BTreeMap::new(),
            started_at: now(),
        })
    }

    fn input(&mut self, name: &str, path: Option<&Path>) -> Result<()> {
        if let Some(path) = path {
            self.inputs.insert(
                name.to_string(),
                InputDigest {
                    path: path.display().to_string(),
                    sha256: sha256_file(path)?,
                },
            );
        }
        Ok(())
    }

    fn write(self, out: &Path, outputs: &[&str], aborted: Vec<String>) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            params: self.params,
            inputs: self.inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            aborted,
            started_at: self.started_at,
            finished_at: now(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_file(&out.join("manifest.json"), text.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn thread_pool(parallel: usize) -> Result<rayon::ThreadPool> {
    if parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(parallel).build()?)
}

struct Inputs {
    corpus: Corpus,
    queries: QuerySet,
    run: Run,
    templates: PromptTemplates,
    budget: PromptBudget,
}

fn load_inputs(input: &InputArgs, depth: usize) -> Result<Inputs> {
    let corpus = load_corpus(&input.corpus, CorpusFormat::from_path(&input.corpus))
        .with_context(|| format!("loading corpus {}", input.corpus.display()))?;
    let queries = load_queries(&input.queries).with_context(|| format!("loading queries {}", input.queries.display()))?;
    let run = load_run(&input.run, depth).with_context(|| format!("loading run {}", input.run.display()))?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let unknown: Vec<&str> = run.lists.keys().filter(|q| queries.get(q).is_none()).map(String::as_str).collect();
    if !unknown.is_empty() {
        bail!("run references queries missing from {}: {}", input.queries.display(), unknown.join(", "));
    }
    corpus.ensure_resolves(&run)?;
    let templates = load_templates(input.templates.as_deref())?;
    if input.passage_tokens == 0 {
        bail!("--passage-tokens must be at least 1");
    }
    let budget = PromptBudget {
        per_passage_tokens: input.passage_tokens,
        max_prompt_chars: input.max_prompt_chars,
    };
    Ok(Inputs {
        corpus,
        queries,
        run,
        templates,
        budget,
    })
}

enum BuiltJudge {
    Oracle(OracleJudge),
    Replay(ReplayJudge),
    Endpoint(EndpointJudge),
    Recording(RecordingJudge<EndpointJudge>, PathBuf),
}

impl BuiltJudge {
    fn build(args: &JudgeArgs) -> Result<Self> {
        Ok(match args.judge {
            JudgeKind::Oracle => {
                let path = args.qrels.as_ref().ok_or_else(|| anyhow!("--judge oracle requires --qrels"))?;
                let qrels = load_qrels(path).with_context(|| format!("loading qrels {}", path.display()))?;
                BuiltJudge::Oracle(OracleJudge::with_threshold(Arc::new(qrels), args.threshold))
            }
            JudgeKind::Replay => {
                let path = args
                    .transcript
                    .as_ref()
                    .ok_or_else(|| anyhow!("--judge replay requires --transcript"))?;
                BuiltJudge::Replay(ReplayJudge::from_file(path)?)
            }
            JudgeKind::Endpoint => {
                let url = args
                    .endpoint_url
                    .as_ref()
                    .ok_or_else(|| anyhow!("--judge endpoint requires --endpoint-url"))?;
                let model = args.model.as_ref().ok_or_else(|| anyhow!("--judge endpoint requires --model"))?;
                let mut config = JudgeEndpointConfig::new(url.clone(), model.clone()).with_env_key();
                config.max_retries = args.max_retries;
                config.timeout = Duration::from_secs(args.timeout_secs);
                config.max_in_flight = args.max_in_flight;
                let judge = EndpointJudge::new(config)?;
                match &args.transcript {
                    Some(path) => BuiltJudge::Recording(RecordingJudge::new(judge), path.clone()),
                    None => BuiltJudge::Endpoint(judge),
                }
            }
        })
    }

    fn judge(&self) -> &dyn Judge {
        match self {
            BuiltJudge::Oracle(j) => j,
            BuiltJudge::Replay(j) => j,
            BuiltJudge::Endpoint(j) => j,
            BuiltJudge::Recording(j, _) => j,
        }
    }

    fn finish(&self) -> Result<()> {
        if let BuiltJudge::Recording(j, path) = self {
            j.write_transcript(path)
                .with_context(|| format!("writing transcript {}", path.display()))?;
        }
        Ok(())
    }

    /// Transcript files read as inputs.
    fn input_transcript<'a>(&self, args: &'a JudgeArgs) -> Option<&'a Path> {
        match self {
            BuiltJudge::Replay(_) => args.transcript.as_deref(),
            _ => None,
        }
    }
}

enum QueryResult {
    Ranked(Vec<String>, WindowTrace),
    Selected(SelectionLine, WindowTrace),
    Aborted(String, EngineError),
}

fn report_aborted(aborted: &[String]) {
    if !aborted.is_empty() {
        eprintln!("aborted {} quer{}: {}", aborted.len(), if aborted.len() == 1 { "y" } else { "ies" }, aborted.join(", "));
    }
}

fn cmd_pipeline(kind: TaskKind, args: &PipelineArgs) -> Result<i32> {
    let cfg = args.geometry.config()?;
    let pool = thread_pool(args.parallel)?;
    let command = match kind {
        TaskKind::Ranking => "rerank",
        TaskKind::Selection => "select",
    };
    let mut manifest = ManifestBuilder::new(command, Some(args.seed), args)?;
    let inputs = load_inputs(&args.input, cfg.depth)?;
    let judge = BuiltJudge::build(&args.judge)?;
    manifest.input("corpus", Some(&args.input.corpus))?;
    manifest.input("queries", Some(&args.input.queries))?;
    manifest.input("run", Some(&args.input.run))?;
    manifest.input("templates", args.input.templates.as_deref())?;
    if args.judge.judge == JudgeKind::Oracle {
        manifest.input("qrels", args.judge.qrels.as_deref())?;
    }
    manifest.input("transcript", judge.input_transcript(&args.judge))?;
    create_out(&args.out)?;

    let mut engine = Engine::new(&inputs.corpus, &inputs.templates, judge.judge(), cfg);
    engine.budget = inputs.budget;
    let lists: Vec<&CandidateList> = inputs.run.lists.values().collect();
    let results: Vec<QueryResult> = pool.install(|| {
        lists
            .par_iter()
            .map(|list| {
                let query = inputs.queries.get(&list.query_id).expect("checked on load");
                let outcome = match kind {
                    TaskKind::Ranking => engine.rerank(query, list).map(|o| QueryResult::Ranked(o.ranked, o.trace)),
                    TaskKind::Selection => engine.select(query, list).map(|o| {
                        let line = SelectionLine {
                            query_id: list.query_id.clone(),
                            selected: o.queue.into_vec(),
                            pseudo_answers: o.pseudo_answers,
                            windows: o.trace.window_count(),
                        };
                        QueryResult::Selected(line, o.trace)
                    }),
                };
                outcome.unwrap_or_else(|e| QueryResult::Aborted(list.query_id.clone(), e))
            })
            .collect()
    });
    judge.finish()?;

    let mut aborted = Vec::new();
    let mut traces = Vec::new();
    let mut ranked = Vec::new();
    let mut selections = Vec::new();
    for r in results {
        match r {
            QueryResult::Ranked(ids, trace) => {
                traces.push(ok_trace(trace));
                ranked.push(CandidateList::from_ranked_ids(traces.last().unwrap().query_id.clone(), ids));
            }
            QueryResult::Selected(line, trace) => {
                traces.push(ok_trace(trace));
                selections.push(line);
            }
            QueryResult::Aborted(qid, e) => {
                eprintln!("error: {e}");
                traces.push(TraceLine {
                    query_id: qid.clone(),
                    status: "aborted".into(),
                    error: Some(e.to_string()),
                    trace: e.partial_trace().cloned(),
                });
                aborted.push(qid);
            }
        }
    }

    let primary = match kind {
        TaskKind::Ranking => {
            let mut buf = Vec::new();
            write_run(&mut buf, &ranked, "utilsel")?;
            write_file(&args.out.join("run.trec"), &buf)?;
            "run.trec"
        }
        TaskKind::Selection => {
            write_file(&args.out.join("selection.jsonl"), &jsonl(&selections)?)?;
            "selection.jsonl"
        }
    };
    write_file(&args.out.join("trace.jsonl"), &jsonl(&traces)?)?;
    report_aborted(&aborted);
    let code = if aborted.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
    manifest.write(&args.out, &[primary, "trace.jsonl"], aborted)?;
    Ok(code)
}

fn ok_trace(trace: WindowTrace) -> TraceLine {
    TraceLine {
        query_id: trace.query_id.clone(),
        status: "ok".into(),
        error: None,
        trace: Some(trace),
    }
}

fn cmd_annotate(args: &AnnotateArgs) -> Result<i32> {
    let cfg = args.geometry.config()?;
    let pool = thread_pool(args.parallel)?;
    let mut manifest = ManifestBuilder::new("annotate", Some(args.seed), args)?;
    let inputs = load_inputs(&args.input, cfg.depth)?;
    let judge = BuiltJudge::build(&args.judge)?;
    manifest.input("corpus", Some(&args.input.corpus))?;
    manifest.input("queries", Some(&args.input.queries))?;
    manifest.input("run", Some(&args.input.run))?;
    manifest.input("templates", args.input.templates.as_deref())?;
    if args.judge.judge == JudgeKind::Oracle {
        manifest.input("qrels", args.judge.qrels.as_deref())?;
    }
    manifest.input("transcript", judge.input_transcript(&args.judge))?;
    create_out(&args.out)?;

    let annotator = Annotator {
        corpus: &inputs.corpus,
        templates: &inputs.templates,
        budget: inputs.budget,
        judge: judge.judge(),
        config: cfg,
    };
    let records = pool.install(|| annotator.annotate(&inputs.queries, &inputs.run, args.kind));
    judge.finish()?;

    let (mut train, mut rejected) = (Vec::new(), Vec::new());
    let mut aborted = Vec::new();
    for r in &records {
        if r.validation.passed {
            r.write_conversation(&mut train)?;
        } else {
            r.write_rejection(&mut rejected)?;
            if r.validation.defects.contains(&Defect::Transport) {
                aborted.push(r.query_id.clone());
            }
        }
    }
    write_file(&args.out.join("train.jsonl"), &train)?;
    write_file(&args.out.join("rejected.jsonl"), &rejected)?;
    let passed = records.iter().filter(|r| r.validation.passed).count();
    eprintln!("annotated {} quer(ies): {passed} passed, {} rejected", records.len(), records.len() - passed);
    report_aborted(&aborted);
    let code = if aborted.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
    manifest.write(&args.out, &["train.jsonl", "rejected.jsonl"], aborted)?;
    Ok(code)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Reads a `selection.jsonl` file into doc ids per query.
pub fn load_selection(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut map = BTreeMap::new();
    for line in read_jsonl::<SelectionLine>(path)? {
        if map.insert(line.query_id.clone(), line.selected).is_some() {
            bail!("{}: duplicate query {}", path.display(), line.query_id);
        }
    }
    Ok(map)
}

fn ranked_ids(run: &Run, k: Option<usize>) -> BTreeMap<String, Vec<String>> {
    run.lists
        .iter()
        .map(|(q, l)| (q.clone(), l.doc_ids().take(k.unwrap_or(usize::MAX)).map(str::to_string).collect()))
        .collect()
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let mut manifest = ManifestBuilder::new("evaluate", None, args)?;
    let ndcg_requested = !args.ndcg_k.is_empty() || (args.run.is_some() && args.qrels.is_some());
    let evidence_requested = args.selection.is_some() || args.k.is_some();
    if !ndcg_requested && !evidence_requested && args.predictions.is_none() {
        bail!("nothing to evaluate: give --selection or --k (evidence), --predictions (answers), or --run with --qrels (nDCG)");
    }
    if args.selection.is_some() && args.k.is_some() {
        bail!("--selection and --k both define the evidence selection; give one");
    }
    if args.k == Some(0) || args.ndcg_k.contains(&0) {
        bail!("cutoffs must be at least 1");
    }
    if ndcg_requested && args.qrels.is_none() {
        bail!("nDCG requested but no --qrels given");
    }
    if (ndcg_requested || args.k.is_some()) && args.run.is_none() {
        bail!("{} requires --run", if args.k.is_some() { "--k" } else { "nDCG" });
    }
    if evidence_requested && args.evidence.is_none() {
        bail!("evidence metrics requested but no --evidence gold file given");
    }
    if args.predictions.is_some() && args.answers.is_none() {
        bail!("answer metrics requested but no --answers gold file given");
    }

    let run = args
        .run
        .as_ref()
        .map(|p| load_run(p, usize::MAX).with_context(|| format!("loading run {}", p.display())))
        .transpose()?;
    let mut report = MetricsReport::default();

    if evidence_requested {
        let gold_path = args.evidence.as_ref().expect("checked");
        let gold = load_evidence(gold_path).with_context(|| format!("loading evidence {}", gold_path.display()))?;
        let selected = match (&args.selection, &run) {
            (Some(p), _) => load_selection(p)?,
            (None, Some(run)) => ranked_ids(run, args.k),
            (None, None) => unreachable!("checked above"),
        };
        report.evidence = Some(evidence_scores(&selected, &gold));
    }
    if let Some(pred_path) = &args.predictions {
        let gold_path = args.answers.as_ref().expect("checked");
        let gold = load_answers(gold_path).with_context(|| format!("loading answers {}", gold_path.display()))?;
        let predictions: Vec<AnswerPrediction> = read_jsonl(pred_path)?;
        report.answers = Some(answer_scores(&predictions, &gold));
    }
    if ndcg_requested {
        let qrels_path = args.qrels.as_ref().expect("checked");
        let qrels = load_qrels(qrels_path).with_context(|| format!("loading qrels {}", qrels_path.display()))?;
        let ranked = ranked_ids(run.as_ref().expect("checked"), None);
        let mut ks = if args.ndcg_k.is_empty() { vec![10] } else { args.ndcg_k.clone() };
        ks.sort_unstable();
        ks.dedup();
        report.ndcg = ks.into_iter().map(|k| ndcg_at_k(&ranked, &qrels, k)).collect();
    }

    for (name, path) in [
        ("run", &args.run),
        ("qrels", &args.qrels),
        ("selection", &args.selection),
        ("evidence", &args.evidence),
        ("predictions", &args.predictions),
        ("answers", &args.answers),
    ] {
        manifest.input(name, path.as_deref())?;
    }
    create_out(&args.out)?;
    write_file(&args.out.join("report.json"), report.to_json().as_bytes())?;
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv)?;
    write_file(&args.out.join("report.tsv"), &tsv)?;
    manifest.write(&args.out, &["report.json", "report.tsv"], Vec::new())?;
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let cfg = args.geometry.config()?;
    let pool = thread_pool(args.parallel)?;
    let mut manifest = ManifestBuilder::new("simulate", Some(args.seed), args)?;
    let profile = SelectionProfile::from_spec(&args.profile)?;
    let mode = args.sticky.map_or(CarryMode::Independent, |p| CarryMode::Sticky { p });
    let report = pool.install(|| simulate_with(&cfg, &profile, args.trials, args.seed, mode))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        if Path::new(&args.profile).is_file() {
            manifest.input("profile", Some(Path::new(&args.profile)))?;
        }
        create_out(out)?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        write_file(&out.join("report.json"), json.as_bytes())?;
        write_file(&out.join("report.txt"), table.as_bytes())?;
        manifest.write(out, &["report.json", "report.txt"], Vec::new())?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pipeline_flags() {
        let cli = Cli::try_parse_from([
            "utilsel", "rerank", "--corpus", "c.jsonl", "--queries", "q.jsonl", "--run", "r.trec", "--judge",
            "oracle", "--qrels", "qrels.txt", "--w", "4", "--s", "2", "--depth", "8", "--out", "o",
        ])
        .unwrap();
        let Command::Rerank(a) = cli.command else { panic!("wrong command") };
        assert_eq!(a.geometry.config().unwrap(), WindowConfig::new(8, 4, 2).unwrap());
        assert_eq!(a.judge.judge, JudgeKind::Oracle);
        assert_eq!(a.parallel, 4);
    }

    #[test]
    fn no_key_flag_exists() {
        let err = Cli::try_parse_from([
            "utilsel", "rerank", "--corpus", "c", "--queries", "q", "--run", "r", "--judge", "endpoint",
            "--api-key", "k", "--out", "o",
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn kind_parses() {
        let cli = Cli::try_parse_from([
            "utilsel", "annotate", "--corpus", "c", "--queries", "q", "--run", "r", "--judge", "replay",
            "--transcript", "t", "--kind", "selection", "--out", "o",
        ])
        .unwrap();
        let Command::Annotate(a) = cli.command else { panic!("wrong command") };
        assert_eq!(a.kind, TaskKind::Selection);
    }

    #[test]
    fn evaluate_needs_gold() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let code = main_from(["utilsel", "evaluate", "--selection", "s.jsonl", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT);
        assert!(!out.exists());
    }
}
