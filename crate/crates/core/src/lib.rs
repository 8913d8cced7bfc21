//! Listwise re-ranking and utility-based passage selection with LLM judges.
//!
//! Candidate lists are processed in overlapping windows. Ranking walks back to
//! front and emits a permutation; selection walks front to back, carrying
//! already-selected passages forward in a deduplicated queue.

use serde::{Deserialize, Serialize};

pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod costsim;
pub mod judge;
pub mod metrics;
pub mod prompting;
pub mod windowing;

/// What a judge is asked to do with a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Ranking,
    Selection,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ranking => "ranking",
            TaskKind::Selection => "selection",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ranking" => Ok(TaskKind::Ranking),
            "selection" => Ok(TaskKind::Selection),
            other => Err(format!("unknown task kind {other:?} (expected ranking or selection)")),
        }
    }
}
