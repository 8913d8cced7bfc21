//! Judges turn a rendered window prompt into a verdict.
//!
//! Three backends share the [`Judge`] trait: a qrels-backed [`OracleJudge`],
//! a transcript [`ReplayJudge`], and an OpenAI-compatible [`EndpointJudge`].
//! Text-producing judges go through the repairing parsers in [`parse`], so
//! every verdict they return is valid for its window size.

mod endpoint;
mod oracle;
pub mod parse;
mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Passage, Query};
use crate::prompting::RenderedPrompt;
use crate::TaskKind;

pub use endpoint::{EndpointJudge, JudgeEndpointConfig, API_KEY_ENV};
pub use oracle::OracleJudge;
pub use parse::{canonical_ranking, canonical_selection, parse_ranking, parse_selection};
pub use replay::{load_transcript, RecordingJudge, ReplayJudge, TranscriptEntry};

/// A fix applied while parsing judge output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    Dedup,
    OutOfRangeDropped,
    MissingAppended,
    FreeTextStripped,
    Unparseable,
}

impl Repair {
    pub fn as_str(self) -> &'static str {
        match self {
            Repair::Dedup => "dedup",
            Repair::OutOfRangeDropped => "out_of_range_dropped",
            Repair::MissingAppended => "missing_appended",
            Repair::FreeTextStripped => "free_text_stripped",
            Repair::Unparseable => "unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub kind: TaskKind,
    /// Window-local 1-based indices, most relevant first (ranking only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub permutation: Vec<usize>,
    /// Window-local 1-based indices in emission order (selection only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_answer: Option<String>,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<Repair>,
}

impl JudgeVerdict {
    /// Parses raw judge output for a window of `n` passages.
    pub fn from_text(kind: TaskKind, raw_text: impl Into<String>, n: usize) -> Self {
        let raw_text = raw_text.into();
        match kind {
            TaskKind::Ranking => {
                let (permutation, repairs) = parse_ranking(&raw_text, n);
                JudgeVerdict {
                    kind,
                    permutation,
                    selected: Vec::new(),
                    pseudo_answer: None,
                    raw_text,
                    repairs,
                }
            }
            TaskKind::Selection => {
                let (selected, pseudo_answer, repairs) = parse_selection(&raw_text, n);
                JudgeVerdict {
                    kind,
                    permutation: Vec::new(),
                    selected,
                    pseudo_answer,
                    raw_text,
                    repairs,
                }
            }
        }
    }

    pub fn ranking(permutation: Vec<usize>) -> Self {
        JudgeVerdict {
            kind: TaskKind::Ranking,
            raw_text: canonical_ranking(&permutation),
            permutation,
            selected: Vec::new(),
            pseudo_answer: None,
            repairs: Vec::new(),
        }
    }

    pub fn selection(selected: Vec<usize>, pseudo_answer: Option<String>) -> Self {
        JudgeVerdict {
            kind: TaskKind::Selection,
            raw_text: canonical_selection(&selected, pseudo_answer.as_deref()),
            permutation: Vec::new(),
            selected,
            pseudo_answer,
            repairs: Vec::new(),
        }
    }

    /// Re-serializes the verdict in the form the parsers accept without repair.
    pub fn canonical_text(&self) -> String {
        match self.kind {
            TaskKind::Ranking => canonical_ranking(&self.permutation),
            TaskKind::Selection => canonical_selection(&self.selected, self.pseudo_answer.as_deref()),
        }
    }

    pub fn is_unparseable(&self) -> bool {
        self.repairs.contains(&Repair::Unparseable)
    }

    /// Checks the structural invariants for a window of `n` passages.
    pub fn is_valid_for(&self, n: usize) -> bool {
        match self.kind {
            TaskKind::Ranking => {
                let mut seen = vec![false; n + 1];
                self.permutation.len() == n
                    && self
                        .permutation
                        .iter()
                        .all(|&i| (1..=n).contains(&i) && !std::mem::replace(&mut seen[i], true))
            }
            TaskKind::Selection => {
                let mut seen = vec![false; n + 1];
                self.selected
                    .iter()
                    .all(|&i| (1..=n).contains(&i) && !std::mem::replace(&mut seen[i], true))
            }
        }
    }
}

/// Everything a judge may need about one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowRequest<'a> {
    pub query: &'a Query,
    pub passages: &'a [&'a Passage],
    pub prompt: &'a RenderedPrompt,
    pub kind: TaskKind,
    pub window_index: usize,
}

impl WindowRequest<'_> {
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum JudgeError {
    #[error("query {query_id} window {window_index}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        query_id: String,
        window_index: usize,
        attempts: u32,
        message: String,
    },
    #[error("query {query_id} window {window_index}: no transcript entry for prompt {fingerprint}")]
    ReplayMiss {
        query_id: String,
        window_index: usize,
        fingerprint: String,
    },
    #[error("judge configuration: {0}")]
    Config(String),
}

/// A source of window verdicts. Implementations must be shareable across
/// concurrently running query pipelines.
pub trait Judge: Send + Sync {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for &J {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge_window(request)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge_window(request)
    }
}

/// A judge driven by a closure that returns raw response text.
pub struct ScriptedJudge<F> {
    respond: F,
}

impl<F> ScriptedJudge<F>
where
    F: Fn(&WindowRequest<'_>) -> Result<String, JudgeError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        ScriptedJudge { respond }
    }
}

impl<F> Judge for ScriptedJudge<F>
where
    F: Fn(&WindowRequest<'_>) -> Result<String, JudgeError> + Send + Sync,
{
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let text = (self.respond)(request)?;
        Ok(JudgeVerdict::from_text(request.kind, text, request.len()))
    }
}
