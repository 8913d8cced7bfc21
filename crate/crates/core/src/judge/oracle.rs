use std::sync::Arc;

use super::{Judge, JudgeError, JudgeVerdict, WindowRequest};
use crate::corpus::Qrels;
use crate::TaskKind;

/// Judges windows from qrels grades.
///
/// Ranking sorts the window by grade, descending, with ties kept in window
/// order. Selection keeps passages with `grade >= threshold`, in the same
/// order. Verdicts are canonical and carry no repairs.
#[derive(Debug, Clone)]
pub struct OracleJudge {
    qrels: Arc<Qrels>,
    threshold: u32,
}

impl OracleJudge {
    pub const DEFAULT_THRESHOLD: u32 = 1;

    pub fn new(qrels: Arc<Qrels>) -> Self {
        Self::with_threshold(qrels, Self::DEFAULT_THRESHOLD)
    }

    pub fn with_threshold(qrels: Arc<Qrels>, threshold: u32) -> Self {
        OracleJudge { qrels, threshold }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    fn by_grade(&self, request: &WindowRequest<'_>) -> Vec<(usize, u32)> {
        let qid = &request.query.query_id;
        let mut graded: Vec<(usize, u32)> = request
            .passages
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1, self.qrels.grade(qid, &p.doc_id)))
            .collect();
        graded.sort_by_key(|g| std::cmp::Reverse(g.1));
        graded
    }
}

/// First sentence of a passage, capped at 200 characters.
fn lead_sentence(text: &str) -> String {
    let end = text.find(['.', '\n']).map(|i| i + 1).unwrap_or(text.len());
    text[..end].chars().take(200).collect::<String>().trim().to_string()
}

impl Judge for OracleJudge {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let graded = self.by_grade(request);
        match request.kind {
            TaskKind::Ranking => Ok(JudgeVerdict::ranking(
                graded.into_iter().map(|(i, _)| i).collect(),
            )),
            TaskKind::Selection => {
                let selected: Vec<usize> = graded
                    .into_iter()
                    .filter(|&(_, g)| g >= self.threshold)
                    .map(|(i, _)| i)
                    .collect();
                let pseudo = match selected.first() {
                    Some(&i) => lead_sentence(&request.passages[i - 1].text),
                    None => "The passages do not answer the query.".to_string(),
                };
                Ok(JudgeVerdict::selection(selected, Some(pseudo).filter(|p| !p.is_empty())))
            }
        }
    }
}
