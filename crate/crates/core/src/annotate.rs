//! Teacher annotation: judge one window per training query, reject malformed
//! generations, and emit conversation-style distillation records.
//!
//! Validation here is strict. Nothing is repaired; a generation passes only
//! if its raw text is already well formed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Passage, QuerySet, Run};
use crate::judge::parse::{bracketed_ids, selected_payload};
use crate::judge::{Judge, WindowRequest};
use crate::prompting::{render, PromptBudget, PromptTemplates};
use crate::windowing::WindowConfig;
use crate::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    /// No parsable identifier sequence, or the list is not in the expected layout.
    ImproperFormat,
    /// Ranking only: the emitted identifiers are not exactly `1..=n`.
    MissingIdentifiers,
    /// Some identifier is emitted more than once.
    Repetitive,
    /// The judge could not be reached.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub passed: bool,
    pub defects: Vec<Defect>,
}

impl Validation {
    fn from_defects(mut defects: Vec<Defect>) -> Self {
        defects.sort();
        defects.dedup();
        Validation {
            passed: defects.is_empty(),
            defects,
        }
    }
}

/// `[k]` with nothing else around it.
fn strict_id(token: &str) -> Option<usize> {
    let inner = token.strip_prefix('[')?.strip_suffix(']')?;
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(inner.parse().unwrap_or(usize::MAX))
}

fn has_repeat(ids: &[Option<usize>]) -> bool {
    let mut seen = std::collections::HashSet::new();
    ids.iter().any(|id| !seen.insert(*id))
}

fn validate_ranking(text: &str, n: usize) -> Vec<Defect> {
    let ids = bracketed_ids(text);
    if ids.is_empty() {
        return vec![Defect::ImproperFormat];
    }
    let mut defects = Vec::new();
    let well_laid_out = text.trim().split('>').all(|t| strict_id(t.trim()).is_some());
    if !well_laid_out {
        defects.push(Defect::ImproperFormat);
    }
    if has_repeat(&ids) {
        defects.push(Defect::Repetitive);
    }
    let mut emitted: Vec<usize> = ids.iter().map(|i| i.unwrap_or(usize::MAX)).collect();
    emitted.sort_unstable();
    emitted.dedup();
    if emitted != (1..=n).collect::<Vec<_>>() {
        defects.push(Defect::MissingIdentifiers);
    }
    defects
}

fn validate_selection(text: &str, n: usize) -> Vec<Defect> {
    let lines: Vec<&str> = text.trim_end().lines().collect();
    let Some(last) = lines.last() else {
        return vec![Defect::ImproperFormat];
    };
    let Some(payload) = selected_payload(last) else {
        return vec![Defect::ImproperFormat];
    };
    let mut defects = Vec::new();
    if lines[..lines.len() - 1].join("\n").trim().is_empty() {
        // no pseudo-answer before the identifier line
        defects.push(Defect::ImproperFormat);
    }
    let payload = payload.trim();
    if payload == "none" {
        return defects;
    }
    let ids: Vec<Option<usize>> = payload
        .split(',')
        .map(|t| strict_id(t.trim()).filter(|i| (1..=n).contains(i)))
        .collect();
    if ids.iter().any(Option::is_none) {
        defects.push(Defect::ImproperFormat);
    }
    let written: Vec<Option<usize>> = payload
        .split(',')
        .map(|t| strict_id(t.trim()))
        .filter(Option::is_some)
        .collect();
    if has_repeat(&written) {
        defects.push(Defect::Repetitive);
    }
    defects
}

/// Classifies a raw generation for a window of `n` passages.
pub fn validate_generation(text: &str, kind: TaskKind, n: usize) -> Validation {
    Validation::from_defects(match kind {
        TaskKind::Ranking => validate_ranking(text, n),
        TaskKind::Selection => validate_selection(text, n),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub query_id: String,
    pub kind: TaskKind,
    pub system_text: String,
    pub prompt_text: String,
    /// Canonical teacher output (pass) or the raw generation (fail).
    pub target_text: String,
    pub window_size: usize,
    pub validation: Validation,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Conversation<'a> {
    messages: [Message<'a>; 3],
}

#[derive(Serialize)]
struct Rejected<'a> {
    query_id: &'a str,
    kind: TaskKind,
    defects: &'a [Defect],
    raw_text: &'a str,
}

impl TrainingRecord {
    pub fn write_conversation<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let conv = Conversation {
            messages: [
                Message {
                    role: "system",
                    content: &self.system_text,
                },
                Message {
                    role: "user",
                    content: &self.prompt_text,
                },
                Message {
                    role: "assistant",
                    content: &self.target_text,
                },
            ],
        };
        serde_json::to_writer(&mut out, &conv)?;
        out.write_all(b"\n")
    }

    pub fn write_rejection<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(
            &mut out,
            &Rejected {
                query_id: &self.query_id,
                kind: self.kind,
                defects: &self.validation.defects,
                raw_text: &self.target_text,
            },
        )?;
        out.write_all(b"\n")
    }
}

/// Runs a teacher judge over one window per query.
pub struct Annotator<'a> {
    pub corpus: &'a Corpus,
    pub templates: &'a PromptTemplates,
    pub budget: PromptBudget,
    pub judge: &'a dyn Judge,
    pub config: WindowConfig,
}

impl Annotator<'_> {
    /// One record per query that has candidates, ordered by query id.
    /// Only the first `min(depth, window)` candidates are judged.
    pub fn annotate(&self, queries: &QuerySet, run: &Run, kind: TaskKind) -> Vec<TrainingRecord> {
        let jobs: Vec<_> = run
            .lists
            .values()
            .filter_map(|list| queries.get(&list.query_id).map(|q| (q, list)))
            .filter(|(_, list)| !list.is_empty())
            .collect();
        let mut records: Vec<TrainingRecord> = jobs
            .par_iter()
            .filter_map(|(query, list)| {
                let m = list.len().min(self.config.depth).min(self.config.window);
                let passages: Vec<&Passage> = list.entries[..m]
                    .iter()
                    .map(|e| self.corpus.get(&e.doc_id))
                    .collect::<Option<_>>()?;
                let prompt = render(self.templates.get(kind), query, &passages, &self.budget).ok()?;
                let request = WindowRequest {
                    query,
                    passages: &passages,
                    prompt: &prompt,
                    kind,
                    window_index: 0,
                };
                let (target_text, validation) = match self.judge.judge_window(&request) {
                    Ok(verdict) => {
                        let validation = validate_generation(&verdict.raw_text, kind, m);
                        let text = if validation.passed {
                            verdict.canonical_text()
                        } else {
                            verdict.raw_text
                        };
                        (text, validation)
                    }
                    Err(e) => (e.to_string(), Validation::from_defects(vec![Defect::Transport])),
                };
                Some(TrainingRecord {
                    query_id: query.query_id.clone(),
                    kind,
                    system_text: prompt.system,
                    prompt_text: prompt.user,
                    target_text,
                    window_size: m,
                    validation,
                })
            })
            .collect();
        records.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        records
    }
}
