//! C ABI over the `utilsel` library.
//!
//! Conventions:
//! * Every fallible function returns a [`UtilselStatus`]; on failure a
//!   message is available from [`utilsel_last_error`] on the same thread.
//! * Handles are opaque pointers created by `*_new` functions and released by
//!   the matching `*_free`. Passing NULL to a `*_free` function is a no-op.
//! * Strings returned as `char *` are owned by the caller and must be
//!   released with [`utilsel_string_free`].
//! * Judge callbacks run on the calling thread, one window at a time.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use utilsel::annotate::{validate_generation, Defect};
use utilsel::corpus::{CandidateList, Corpus, Passage, Query};
use utilsel::costsim::{simulate, SelectionProfile};
use utilsel::judge::{parse_ranking, parse_selection, Judge, JudgeError, JudgeVerdict, Repair, WindowRequest};
use utilsel::metrics::answer_em_f1;
use utilsel::prompting::PromptTemplates;
use utilsel::windowing::{plan_ranking_windows, window_count_bounds, Engine, WindowConfig};
use utilsel::TaskKind;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Judge = 4,
    Engine = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilselTaskKind {
    Ranking = 0,
    Selection = 1,
}

impl From<UtilselTaskKind> for TaskKind {
    fn from(k: UtilselTaskKind) -> Self {
        match k {
            UtilselTaskKind::Ranking => TaskKind::Ranking,
            UtilselTaskKind::Selection => TaskKind::Selection,
        }
    }
}

pub const UTILSEL_REPAIR_DEDUP: u32 = 1;
pub const UTILSEL_REPAIR_OUT_OF_RANGE_DROPPED: u32 = 1 << 1;
pub const UTILSEL_REPAIR_MISSING_APPENDED: u32 = 1 << 2;
pub const UTILSEL_REPAIR_FREE_TEXT_STRIPPED: u32 = 1 << 3;
pub const UTILSEL_REPAIR_UNPARSEABLE: u32 = 1 << 4;

pub const UTILSEL_DEFECT_IMPROPER_FORMAT: u32 = 1;
pub const UTILSEL_DEFECT_MISSING_IDENTIFIERS: u32 = 1 << 1;
pub const UTILSEL_DEFECT_REPETITIVE: u32 = 1 << 2;
pub const UTILSEL_DEFECT_TRANSPORT: u32 = 1 << 3;

fn repair_bits(repairs: &[Repair]) -> u32 {
    repairs.iter().fold(0, |acc, r| {
        acc | match r {
            Repair::Dedup => UTILSEL_REPAIR_DEDUP,
            Repair::OutOfRangeDropped => UTILSEL_REPAIR_OUT_OF_RANGE_DROPPED,
            Repair::MissingAppended => UTILSEL_REPAIR_MISSING_APPENDED,
            Repair::FreeTextStripped => UTILSEL_REPAIR_FREE_TEXT_STRIPPED,
            Repair::Unparseable => UTILSEL_REPAIR_UNPARSEABLE,
        }
    })
}

fn defect_bits(defects: &[Defect]) -> u32 {
    defects.iter().fold(0, |acc, d| {
        acc | match d {
            Defect::ImproperFormat => UTILSEL_DEFECT_IMPROPER_FORMAT,
            Defect::MissingIdentifiers => UTILSEL_DEFECT_MISSING_IDENTIFIERS,
            Defect::Repetitive => UTILSEL_DEFECT_REPETITIVE,
            Defect::Transport => UTILSEL_DEFECT_TRANSPORT,
        }
    })
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(UtilselStatus, String);

impl Failure {
    fn new(status: UtilselStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> UtilselStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => UtilselStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UtilselStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(UtilselStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(UtilselStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(UtilselStatus::NullPointer, format!("{name} is NULL")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(UtilselStatus::NullPointer, format!("{name} is NULL")))
}

fn owned_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn utilsel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Window geometry handle.
pub struct UtilselWindowConfig(WindowConfig);

#[no_mangle]
pub unsafe extern "C" fn utilsel_window_config_new(
    depth: usize,
    window: usize,
    stride: usize,
    out: *mut *mut UtilselWindowConfig,
) -> UtilselStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = WindowConfig::new(depth, window, stride)
            .map_err(|e| Failure::new(UtilselStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(UtilselWindowConfig(cfg)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_window_config_free(cfg: *mut UtilselWindowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Minimum and maximum window counts of the selection engine.
#[no_mangle]
pub unsafe extern "C" fn utilsel_window_count_bounds(
    cfg: *const UtilselWindowConfig,
    out_min: *mut usize,
    out_max: *mut usize,
) -> UtilselStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let (min_out, max_out) = (out_arg(out_min, "out_min")?, out_arg(out_max, "out_max")?);
        (*min_out, *max_out) = window_count_bounds(&cfg.0);
        Ok(())
    })
}

/// Writes the ranking plan as `[start, end)` pairs. With `out_ranges` NULL
/// only the window count is reported; otherwise `capacity` is the number of
/// pairs the buffer holds (two `size_t` each).
#[no_mangle]
pub unsafe extern "C" fn utilsel_ranking_plan(
    cfg: *const UtilselWindowConfig,
    out_ranges: *mut usize,
    capacity: usize,
    out_count: *mut usize,
) -> UtilselStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let count = out_arg(out_count, "out_count")?;
        let plan = plan_ranking_windows(&cfg.0);
        *count = plan.len();
        if out_ranges.is_null() {
            return Ok(());
        }
        if capacity < plan.len() {
            return Err(Failure::new(
                UtilselStatus::InvalidArgument,
                format!("buffer holds {capacity} windows, plan has {}", plan.len()),
            ));
        }
        let buf = std::slice::from_raw_parts_mut(out_ranges, plan.len() * 2);
        for (i, (s, e)) in plan.into_iter().enumerate() {
            buf[2 * i] = s;
            buf[2 * i + 1] = e;
        }
        Ok(())
    })
}

/// Parses a ranking into `out_perm`, which must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn utilsel_parse_ranking(
    text: *const c_char,
    n: usize,
    out_perm: *mut usize,
    out_repairs: *mut u32,
) -> UtilselStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if n == 0 {
            return Err(Failure::new(UtilselStatus::InvalidArgument, "n must be at least 1"));
        }
        if out_perm.is_null() {
            return Err(Failure::new(UtilselStatus::NullPointer, "out_perm is NULL"));
        }
        let repairs = out_arg(out_repairs, "out_repairs")?;
        let (perm, tags) = parse_ranking(text, n);
        std::slice::from_raw_parts_mut(out_perm, n).copy_from_slice(&perm);
        *repairs = repair_bits(&tags);
        Ok(())
    })
}

/// Parses a selection into `out_selected` (room for `n` entries). The
/// pseudo-answer, when present, is returned as an owned string; otherwise
/// `*out_pseudo_answer` is set to NULL. `out_pseudo_answer` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn utilsel_parse_selection(
    text: *const c_char,
    n: usize,
    out_selected: *mut usize,
    out_len: *mut usize,
    out_pseudo_answer: *mut *mut c_char,
    out_repairs: *mut u32,
) -> UtilselStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if n == 0 {
            return Err(Failure::new(UtilselStatus::InvalidArgument, "n must be at least 1"));
        }
        if out_selected.is_null() {
            return Err(Failure::new(UtilselStatus::NullPointer, "out_selected is NULL"));
        }
        let len = out_arg(out_len, "out_len")?;
        let repairs = out_arg(out_repairs, "out_repairs")?;
        let (selected, pseudo, tags) = parse_selection(text, n);
        std::slice::from_raw_parts_mut(out_selected, selected.len()).copy_from_slice(&selected);
        *len = selected.len();
        *repairs = repair_bits(&tags);
        if let Some(slot) = out_pseudo_answer.as_mut() {
            *slot = pseudo.as_deref().map_or(ptr::null_mut(), owned_string);
        }
        Ok(())
    })
}

/// Strict training-data validation; `*out_defects` is a bitmask of
/// `UTILSEL_DEFECT_*`.
#[no_mangle]
pub unsafe extern "C" fn utilsel_validate_generation(
    text: *const c_char,
    kind: UtilselTaskKind,
    n: usize,
    out_passed: *mut bool,
    out_defects: *mut u32,
) -> UtilselStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if n == 0 {
            return Err(Failure::new(UtilselStatus::InvalidArgument, "n must be at least 1"));
        }
        let passed = out_arg(out_passed, "out_passed")?;
        let defects = out_arg(out_defects, "out_defects")?;
        let v = validate_generation(text, kind.into(), n);
        *passed = v.passed;
        *defects = defect_bits(&v.defects);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_answer_em_f1(
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    out_em: *mut u8,
    out_f1: *mut f64,
) -> UtilselStatus {
    guard(|| {
        let prediction = str_arg(prediction, "prediction")?;
        if n_golds == 0 || golds.is_null() {
            return Err(Failure::new(UtilselStatus::InvalidArgument, "at least one gold answer is required"));
        }
        let golds = std::slice::from_raw_parts(golds, n_golds)
            .iter()
            .map(|&g| str_arg(g, "gold answer").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let (em_out, f1_out) = (out_arg(out_em, "out_em")?, out_arg(out_f1, "out_f1")?);
        (*em_out, *f1_out) = answer_em_f1(prediction, &golds);
        Ok(())
    })
}

/// Monte Carlo mean window count for a profile spec (`never`, `always`,
/// `bernoulli:P`, or a histogram JSON path).
#[no_mangle]
pub unsafe extern "C" fn utilsel_simulate(
    cfg: *const UtilselWindowConfig,
    profile: *const c_char,
    trials: usize,
    seed: u64,
    out_mean: *mut f64,
    out_ci_low: *mut f64,
    out_ci_high: *mut f64,
) -> UtilselStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let spec = str_arg(profile, "profile")?;
        let (mean, lo, hi) = (
            out_arg(out_mean, "out_mean")?,
            out_arg(out_ci_low, "out_ci_low")?,
            out_arg(out_ci_high, "out_ci_high")?,
        );
        let invalid = |e: utilsel::costsim::SimError| Failure::new(UtilselStatus::InvalidArgument, e.to_string());
        let profile = SelectionProfile::from_spec(spec).map_err(invalid)?;
        let report = simulate(&cfg.0, &profile, trials, seed).map_err(invalid)?;
        *mean = report.mean_windows;
        (*lo, *hi) = report.ci95;
        Ok(())
    })
}

/// Passage collection handle.
pub struct UtilselCorpus(Corpus);

#[no_mangle]
pub extern "C" fn utilsel_corpus_new() -> *mut UtilselCorpus {
    Box::into_raw(Box::new(UtilselCorpus(Corpus::default())))
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_corpus_free(corpus: *mut UtilselCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Adds a passage. `title` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn utilsel_corpus_add(
    corpus: *mut UtilselCorpus,
    doc_id: *const c_char,
    title: *const c_char,
    text: *const c_char,
) -> UtilselStatus {
    guard(|| {
        let corpus = out_arg(corpus, "corpus")?;
        let passage = Passage {
            doc_id: str_arg(doc_id, "doc_id")?.to_string(),
            text: str_arg(text, "text")?.to_string(),
            title: if title.is_null() { None } else { Some(str_arg(title, "title")?.to_string()) },
        };
        corpus
            .0
            .push(passage)
            .map_err(|e| Failure::new(UtilselStatus::InvalidArgument, e.to_string()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_corpus_len(corpus: *const UtilselCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Produces the raw response for one window. Returns NULL to signal a
/// transport failure. The returned string must stay valid until the next
/// callback invocation or until the engine call returns.
pub type UtilselJudgeFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        kind: UtilselTaskKind,
        system: *const c_char,
        user: *const c_char,
        n_passages: usize,
        window_index: usize,
    ) -> *const c_char,
>;

struct CallbackJudge {
    callback: unsafe extern "C" fn(*mut c_void, UtilselTaskKind, *const c_char, *const c_char, usize, usize) -> *const c_char,
    user_data: *mut c_void,
}

// The engine is only ever driven from the thread that called into the
// library, so the callback and its user data never cross threads.
unsafe impl Send for CallbackJudge {}
unsafe impl Sync for CallbackJudge {}

impl Judge for CallbackJudge {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let transport = |message: &str| JudgeError::Transport {
            query_id: request.query.query_id.clone(),
            window_index: request.window_index,
            attempts: 1,
            message: message.to_string(),
        };
        let system = CString::new(request.prompt.system.as_str()).map_err(|_| transport("prompt contains NUL"))?;
        let user = CString::new(request.prompt.user.as_str()).map_err(|_| transport("prompt contains NUL"))?;
        let kind = match request.kind {
            TaskKind::Ranking => UtilselTaskKind::Ranking,
            TaskKind::Selection => UtilselTaskKind::Selection,
        };
        let raw = unsafe {
            (self.callback)(self.user_data, kind, system.as_ptr(), user.as_ptr(), request.len(), request.window_index)
        };
        if raw.is_null() {
            return Err(transport("judge callback returned NULL"));
        }
        let text = unsafe { CStr::from_ptr(raw) }.to_string_lossy().into_owned();
        Ok(JudgeVerdict::from_text(request.kind, text, request.len()))
    }
}

/// Output of one engine call.
pub struct UtilselResult {
    doc_ids: Vec<CString>,
    window_count: usize,
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_result_free(result: *mut UtilselResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Ranked ids (rerank) or the final queue (select).
#[no_mangle]
pub unsafe extern "C" fn utilsel_result_len(result: *const UtilselResult) -> usize {
    result.as_ref().map_or(0, |r| r.doc_ids.len())
}

/// Borrowed id at position `i`, valid while the result lives; NULL when out
/// of range.
#[no_mangle]
pub unsafe extern "C" fn utilsel_result_doc_id(result: *const UtilselResult, i: usize) -> *const c_char {
    result
        .as_ref()
        .and_then(|r| r.doc_ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn utilsel_result_window_count(result: *const UtilselResult) -> usize {
    result.as_ref().map_or(0, |r| r.window_count)
}

#[allow(clippy::too_many_arguments)]
unsafe fn run_engine(
    kind: TaskKind,
    corpus: *const UtilselCorpus,
    cfg: *const UtilselWindowConfig,
    query: *const c_char,
    doc_ids: *const *const c_char,
    n_docs: usize,
    judge: UtilselJudgeFn,
    user_data: *mut c_void,
    out: *mut *mut UtilselResult,
) -> UtilselStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let cfg = ref_arg(cfg, "cfg")?;
        let query = Query {
            query_id: "query".into(),
            text: str_arg(query, "query")?.to_string(),
        };
        let callback = judge.ok_or_else(|| Failure::new(UtilselStatus::NullPointer, "judge is NULL"))?;
        let out = out_arg(out, "out")?;
        if n_docs > 0 && doc_ids.is_null() {
            return Err(Failure::new(UtilselStatus::NullPointer, "doc_ids is NULL"));
        }
        let ids = if n_docs == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(doc_ids, n_docs)
                .iter()
                .map(|&p| str_arg(p, "doc id").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|d| !seen.insert(d.as_str())) {
            return Err(Failure::new(UtilselStatus::InvalidArgument, format!("duplicate candidate {dup}")));
        }
        let candidates = CandidateList::from_ranked_ids("query", ids);
        let judge = CallbackJudge { callback, user_data };
        let templates = PromptTemplates::default();
        let engine = Engine::new(&corpus.0, &templates, &judge, cfg.0);
        let engine_err = |e: utilsel::windowing::EngineError| {
            let status = match e {
                utilsel::windowing::EngineError::Judge { .. } => UtilselStatus::Judge,
                _ => UtilselStatus::Engine,
            };
            Failure::new(status, e.to_string())
        };
        let (ids, window_count) = match kind {
            TaskKind::Ranking => {
                let o = engine.rerank(&query, &candidates).map_err(engine_err)?;
                (o.ranked, o.trace.window_count())
            }
            TaskKind::Selection => {
                let o = engine.select(&query, &candidates).map_err(engine_err)?;
                let n = o.trace.window_count();
                (o.queue.into_vec(), n)
            }
        };
        let doc_ids = ids
            .into_iter()
            .map(|s| CString::new(s).map_err(|_| Failure::new(UtilselStatus::InvalidArgument, "doc id contains NUL")))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(UtilselResult { doc_ids, window_count }));
        Ok(())
    })
}

/// Back-to-front listwise re-ranking of `doc_ids` (first-stage order).
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn utilsel_rerank(
    corpus: *const UtilselCorpus,
    cfg: *const UtilselWindowConfig,
    query: *const c_char,
    doc_ids: *const *const c_char,
    n_docs: usize,
    judge: UtilselJudgeFn,
    user_data: *mut c_void,
    out: *mut *mut UtilselResult,
) -> UtilselStatus {
    run_engine(TaskKind::Ranking, corpus, cfg, query, doc_ids, n_docs, judge, user_data, out)
}

/// Front-to-back utility selection of `doc_ids` (first-stage order).
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn utilsel_select(
    corpus: *const UtilselCorpus,
    cfg: *const UtilselWindowConfig,
    query: *const c_char,
    doc_ids: *const *const c_char,
    n_docs: usize,
    judge: UtilselJudgeFn,
    user_data: *mut c_void,
    out: *mut *mut UtilselResult,
) -> UtilselStatus {
    run_engine(TaskKind::Selection, corpus, cfg, query, doc_ids, n_docs, judge, user_data, out)
}
