//! Sliding-window engines over a candidate list.
//!
//! * [`Engine::rerank`] walks back to front: the last `w` candidates are
//!   judged first, then the window moves toward the head by `s`, so strong
//!   passages are carried forward through every overlap.
//! * [`Engine::select`] walks front to back, keeping a [`PreselectedQueue`].
//!   Each window after the first starts with up to `s` passages from the queue
//!   head, followed by unprocessed candidates in original order. Passages the
//!   judge selects are prepended to the queue as a block (in emission order)
//!   and later duplicates are dropped.
//!
//! Windows within a query are strictly sequential; engines hold no per-query
//! state, so one engine can serve many queries concurrently.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateList, Corpus, Passage, Query};
use crate::judge::{Judge, JudgeError, JudgeVerdict, WindowRequest};
use crate::prompting::{render_with, CharApprox, PromptBudget, PromptError, PromptTemplates, TokenCounter};
use crate::TaskKind;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("depth, window and stride must all be positive (got M={depth}, w={window}, s={stride})")]
    NonPositive {
        depth: usize,
        window: usize,
        stride: usize,
    },
    #[error("stride must be smaller than the window when M > w (got w={window}, s={stride})")]
    StrideTooLarge { window: usize, stride: usize },
}

/// Window geometry: candidate depth `M`, window size `w`, stride `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub depth: usize,
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            depth: 100,
            window: 20,
            stride: 10,
        }
    }
}

impl WindowConfig {
    pub fn new(depth: usize, window: usize, stride: usize) -> Result<Self, ConfigError> {
        let cfg = WindowConfig {
            depth,
            window,
            stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.depth == 0 || self.window == 0 || self.stride == 0 {
            return Err(ConfigError::NonPositive {
                depth: self.depth,
                window: self.window,
                stride: self.stride,
            });
        }
        if self.depth > self.window && self.stride >= self.window {
            return Err(ConfigError::StrideTooLarge {
                window: self.window,
                stride: self.stride,
            });
        }
        Ok(())
    }

    /// The same geometry applied to a list of `m` candidates.
    pub fn with_depth(self, m: usize) -> Self {
        WindowConfig { depth: m, ..self }
    }
}

/// Half-open candidate ranges judged by the ranking engine, in order.
pub fn plan_ranking_windows(cfg: &WindowConfig) -> Vec<(usize, usize)> {
    let (m, w, s) = (cfg.depth, cfg.window, cfg.stride);
    if m <= w {
        return vec![(0, m)];
    }
    let mut plan = Vec::with_capacity(1 + (m - w).div_ceil(s));
    let (mut start, mut end) = (m - w, m);
    loop {
        plan.push((start, end));
        if start == 0 {
            break;
        }
        end -= s;
        start = start.saturating_sub(s);
    }
    plan
}

/// `(min, max)` window counts for the selection engine.
///
/// The minimum is reached when nothing is ever selected (every window is all
/// fresh); the maximum when the queue always supplies `s` carried passages.
pub fn window_count_bounds(cfg: &WindowConfig) -> (usize, usize) {
    let (m, w, s) = (cfg.depth, cfg.window, cfg.stride);
    if m <= w {
        return (1, 1);
    }
    (m.div_ceil(w), 1 + (m - w).div_ceil(w - s))
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("cut size {k} outside 1..={len}")]
pub struct CutError {
    pub k: usize,
    pub len: usize,
}

/// The first `k` ids of a ranking.
pub fn cut(ranked: &[String], k: usize) -> Result<Vec<String>, CutError> {
    if k == 0 || k > ranked.len() {
        return Err(CutError {
            k,
            len: ranked.len(),
        });
    }
    Ok(ranked[..k].to_vec())
}

/// Ordered, duplicate-free pool of selected passages. Members are never
/// removed once added.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreselectedQueue {
    ids: Vec<String>,
}

impl PreselectedQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prepends `selected` as a block, keeping the first occurrence of each id.
    pub fn prepend(&mut self, selected: impl IntoIterator<Item = String>) {
        let mut seen = HashSet::new();
        let merged: Vec<String> = selected
            .into_iter()
            .chain(std::mem::take(&mut self.ids))
            .filter(|id| seen.insert(id.clone()))
            .collect();
        self.ids = merged;
    }

    pub fn head(&self, n: usize) -> &[String] {
        &self.ids[..n.min(self.ids.len())]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.iter().any(|x| x == id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.ids
    }

    pub fn into_vec(self) -> Vec<String> {
        self.ids
    }
}

/// One judged window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_index: usize,
    /// Window members already seen in an earlier window.
    pub carried: Vec<String>,
    /// Window members judged here for the first time.
    pub fresh: Vec<String>,
    pub verdict: JudgeVerdict,
    /// Selection: the queue after this window. Ranking: the window slice
    /// after applying the verdict.
    pub state_after: Vec<String>,
    pub prompt_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTrace {
    pub query_id: String,
    pub engine: TaskKind,
    pub windows: Vec<WindowRecord>,
    pub judged_passage_count: usize,
    pub prompt_char_count: usize,
}

impl WindowTrace {
    fn new(query_id: &str, engine: TaskKind) -> Self {
        WindowTrace {
            query_id: query_id.to_string(),
            engine,
            windows: Vec::new(),
            judged_passage_count: 0,
            prompt_char_count: 0,
        }
    }

    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    fn push(&mut self, record: WindowRecord) {
        self.judged_passage_count += record.carried.len() + record.fresh.len();
        self.prompt_char_count += record.prompt_chars;
        self.windows.push(record);
    }
}

#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("query {query_id} aborted: {source}")]
    Judge {
        query_id: String,
        #[source]
        source: JudgeError,
        trace: Box<WindowTrace>,
    },
    #[error("query {query_id}: judge returned an invalid verdict for window {window_index}")]
    InvalidVerdict {
        query_id: String,
        window_index: usize,
        trace: Box<WindowTrace>,
    },
    #[error("query {query_id}: {source}")]
    Prompt {
        query_id: String,
        #[source]
        source: PromptError,
        trace: Box<WindowTrace>,
    },
    #[error("query {query_id}: doc_id {doc_id} not in corpus")]
    UnknownDoc { query_id: String, doc_id: String },
}

impl EngineError {
    /// The windows completed before the failure, when any were attempted.
    pub fn partial_trace(&self) -> Option<&WindowTrace> {
        match self {
            EngineError::Judge { trace, .. }
            | EngineError::InvalidVerdict { trace, .. }
            | EngineError::Prompt { trace, .. } => Some(trace),
            EngineError::UnknownDoc { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingOutcome {
    pub ranked: Vec<String>,
    pub trace: WindowTrace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionOutcome {
    pub queue: PreselectedQueue,
    /// Pseudo-answer per window (empty when the judge gave none).
    pub pseudo_answers: Vec<String>,
    pub trace: WindowTrace,
}

/// Both engines, bound to a corpus, prompt templates and a judge.
pub struct Engine<'a> {
    pub corpus: &'a Corpus,
    pub templates: &'a PromptTemplates,
    pub budget: PromptBudget,
    pub counter: &'a dyn TokenCounter,
    pub judge: &'a dyn Judge,
    pub config: WindowConfig,
}

impl<'a> Engine<'a> {
    pub fn new(
        corpus: &'a Corpus,
        templates: &'a PromptTemplates,
        judge: &'a dyn Judge,
        config: WindowConfig,
    ) -> Self {
        Engine {
            corpus,
            templates,
            budget: PromptBudget::default(),
            counter: &CharApprox,
            judge,
            config,
        }
    }

    fn passages(&self, query_id: &str, candidates: &CandidateList) -> Result<Vec<&'a Passage>, EngineError> {
        let m = candidates.len().min(self.config.depth);
        candidates.entries[..m]
            .iter()
            .map(|e| {
                self.corpus.get(&e.doc_id).ok_or_else(|| EngineError::UnknownDoc {
                    query_id: query_id.to_string(),
                    doc_id: e.doc_id.clone(),
                })
            })
            .collect()
    }

    fn judge(
        &self,
        query: &Query,
        kind: TaskKind,
        window_index: usize,
        window: &[&Passage],
        trace: &WindowTrace,
    ) -> Result<(JudgeVerdict, usize), EngineError> {
        let prompt = render_with(self.templates.get(kind), query, window, &self.budget, self.counter)
            .map_err(|source| EngineError::Prompt {
                query_id: query.query_id.clone(),
                source,
                trace: Box::new(trace.clone()),
            })?;
        let verdict = self
            .judge
            .judge_window(&WindowRequest {
                query,
                passages: window,
                prompt: &prompt,
                kind,
                window_index,
            })
            .map_err(|source| EngineError::Judge {
                query_id: query.query_id.clone(),
                source,
                trace: Box::new(trace.clone()),
            })?;
        if verdict.kind != kind || !verdict.is_valid_for(window.len()) {
            return Err(EngineError::InvalidVerdict {
                query_id: query.query_id.clone(),
                window_index,
                trace: Box::new(trace.clone()),
            });
        }
        Ok((verdict, prompt.char_count()))
    }

    /// Back-to-front listwise re-ranking. Candidates beyond the configured
    /// depth keep their positions after the re-ranked head.
    pub fn rerank(&self, query: &Query, candidates: &CandidateList) -> Result<RankingOutcome, EngineError> {
        let mut order = self.passages(&query.query_id, candidates)?;
        let mut trace = WindowTrace::new(&query.query_id, TaskKind::Ranking);
        let m = order.len();
        if m > 0 {
            let mut seen: HashSet<&str> = HashSet::new();
            for (wi, (start, end)) in plan_ranking_windows(&self.config.with_depth(m)).into_iter().enumerate() {
                let window: Vec<&Passage> = order[start..end].to_vec();
                let (carried, fresh): (Vec<&Passage>, Vec<&Passage>) =
                    window.iter().partition(|p| seen.contains(p.doc_id.as_str()));
                let (verdict, chars) = self.judge(query, TaskKind::Ranking, wi, &window, &trace)?;
                for (slot, &i) in verdict.permutation.iter().enumerate() {
                    order[start + slot] = window[i - 1];
                }
                seen.extend(window.iter().map(|p| p.doc_id.as_str()));
                trace.push(WindowRecord {
                    window_index: wi,
                    carried: ids(&carried),
                    fresh: ids(&fresh),
                    verdict,
                    state_after: ids(&order[start..end]),
                    prompt_chars: chars,
                });
            }
        }
        let mut ranked = ids(&order);
        ranked.extend(candidates.entries[m..].iter().map(|e| e.doc_id.clone()));
        Ok(RankingOutcome { ranked, trace })
    }

    /// Front-to-back utility-based selection with a preselected queue.
    pub fn select(&self, query: &Query, candidates: &CandidateList) -> Result<SelectionOutcome, EngineError> {
        let pool = self.passages(&query.query_id, candidates)?;
        let mut trace = WindowTrace::new(&query.query_id, TaskKind::Selection);
        let mut queue = PreselectedQueue::new();
        let mut pseudo_answers = Vec::new();
        let (w, s) = (self.config.window, self.config.stride);
        let mut next = 0;
        let mut wi = 0;
        while next < pool.len() {
            let carry = if wi == 0 { 0 } else { s.min(queue.len()) };
            let carried: Vec<&Passage> = queue
                .head(carry)
                .iter()
                .map(|id| {
                    self.corpus.get(id).ok_or_else(|| EngineError::UnknownDoc {
                        query_id: query.query_id.clone(),
                        doc_id: id.clone(),
                    })
                })
                .collect::<Result<_, _>>()?;
            let take = (w - carried.len()).min(pool.len() - next);
            let fresh = &pool[next..next + take];
            next += take;
            let window: Vec<&Passage> = carried.iter().chain(fresh).copied().collect();

            let (verdict, chars) = self.judge(query, TaskKind::Selection, wi, &window, &trace)?;
            queue.prepend(verdict.selected.iter().map(|&i| window[i - 1].doc_id.clone()));
            pseudo_answers.push(verdict.pseudo_answer.clone().unwrap_or_default());
            trace.push(WindowRecord {
                window_index: wi,
                carried: ids(&carried),
                fresh: ids(fresh),
                verdict,
                state_after: queue.as_slice().to_vec(),
                prompt_chars: chars,
            });
            wi += 1;
        }
        Ok(SelectionOutcome {
            queue,
            pseudo_answers,
            trace,
        })
    }
}

fn ids(ps: &[&Passage]) -> Vec<String> {
    ps.iter().map(|p| p.doc_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Qrels;
    use crate::judge::{OracleJudge, ScriptedJudge};
    use std::sync::Arc;

    fn cfg(m: usize, w: usize, s: usize) -> WindowConfig {
        WindowConfig::new(m, w, s).unwrap()
    }

    struct Fixture {
        corpus: Corpus,
        candidates: CandidateList,
        query: Query,
        templates: PromptTemplates,
    }

    fn fixture(m: usize) -> Fixture {
        let passages: Vec<Passage> = (1..=m)
            .map(|i| Passage {
                doc_id: format!("d{i}"),
                text: format!("passage number {i}"),
                title: None,
            })
            .collect();
        Fixture {
            candidates: CandidateList::from_ranked_ids("q", passages.iter().map(|p| p.doc_id.clone())),
            corpus: Corpus::from_passages(passages).unwrap(),
            query: Query {
                query_id: "q".into(),
                text: "question".into(),
            },
            templates: PromptTemplates::default(),
        }
    }

    fn oracle(grades: &[u32], threshold: u32) -> OracleJudge {
        let mut qrels = Qrels::default();
        for (i, &g) in grades.iter().enumerate() {
            qrels.insert("q", format!("d{}", i + 1), g);
        }
        OracleJudge::with_threshold(Arc::new(qrels), threshold)
    }

    #[test]
    fn ranking_plan_matches_figure_geometry() {
        assert_eq!(plan_ranking_windows(&cfg(8, 4, 2)), vec![(4, 8), (2, 6), (0, 4)]);
    }

    #[test]
    fn ranking_plan_top_100() {
        let plan = plan_ranking_windows(&cfg(100, 20, 10));
        assert_eq!(plan.len(), 9);
        let starts: Vec<usize> = plan.iter().map(|r| r.0).collect();
        assert_eq!(starts, (0..=8).rev().map(|i| i * 10).collect::<Vec<_>>());
    }

    #[test]
    fn ranking_plan_single_window_and_clamp() {
        assert_eq!(plan_ranking_windows(&cfg(10, 20, 10)), vec![(0, 10)]);
        assert_eq!(
            plan_ranking_windows(&cfg(9, 4, 2)),
            vec![(5, 9), (3, 7), (1, 5), (0, 3)]
        );
    }

    #[test]
    fn config_validation() {
        assert!(WindowConfig::new(0, 4, 2).is_err());
        assert!(WindowConfig::new(8, 4, 4).is_err());
        assert!(WindowConfig::new(4, 4, 9).is_ok());
    }

    #[test]
    fn bounds() {
        assert_eq!(window_count_bounds(&cfg(100, 20, 10)), (5, 9));
        assert_eq!(window_count_bounds(&cfg(8, 4, 2)), (2, 3));
        assert_eq!(window_count_bounds(&cfg(10, 20, 10)), (1, 1));
    }

    #[test]
    fn cut_prefix_and_errors() {
        let ids: Vec<String> = (0..100).map(|i| i.to_string()).collect();
        assert_eq!(cut(&ids, 5).unwrap(), ids[..5]);
        assert_eq!(cut(&ids, 100).unwrap(), ids);
        assert_eq!(cut(&ids, 0), Err(CutError { k: 0, len: 100 }));
        assert!(cut(&ids, 101).is_err());
    }

    #[test]
    fn queue_prepend_dedups_first_occurrence() {
        let mut q = PreselectedQueue::new();
        q.prepend(["C".to_string(), "A".to_string()]);
        q.prepend(["B".to_string(), "C".to_string()]);
        assert_eq!(q.as_slice(), ["B", "C", "A"]);
    }

    #[test]
    fn sorted_input_is_unchanged() {
        let f = fixture(8);
        let judge = oracle(&[8, 7, 6, 5, 4, 3, 2, 1], 1);
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(8, 4, 2));
        let out = engine.rerank(&f.query, &f.candidates).unwrap();
        let input: Vec<String> = f.candidates.doc_ids().map(String::from).collect();
        assert_eq!(out.ranked, input);
        assert_eq!(out.trace.window_count(), 3);
    }

    #[test]
    fn last_place_max_bubbles_to_top() {
        let f = fixture(8);
        let judge = oracle(&[0, 0, 0, 0, 0, 0, 0, 3], 1);
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(8, 4, 2));
        let out = engine.rerank(&f.query, &f.candidates).unwrap();
        assert_eq!(out.ranked[0], "d8");
        let mut sorted = out.ranked.clone();
        sorted.sort();
        let mut input: Vec<String> = f.candidates.doc_ids().map(String::from).collect();
        input.sort();
        assert_eq!(sorted, input);
    }

    #[test]
    fn never_selecting_consumes_full_windows() {
        let f = fixture(8);
        let judge = ScriptedJudge::new(|_: &WindowRequest<'_>| Ok("Selected: none".to_string()));
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(8, 4, 2));
        let out = engine.select(&f.query, &f.candidates).unwrap();
        assert!(out.queue.is_empty());
        let fresh: Vec<Vec<String>> = out.trace.windows.iter().map(|w| w.fresh.clone()).collect();
        assert_eq!(fresh, vec![vec!["d1", "d2", "d3", "d4"], vec!["d5", "d6", "d7", "d8"]]);
    }

    #[test]
    fn selecting_everything_carries_stride() {
        let f = fixture(8);
        let judge = ScriptedJudge::new(|r: &WindowRequest<'_>| {
            let ids: Vec<String> = (1..=r.len()).map(|i| format!("[{i}]")).collect();
            Ok(format!("ans\nSelected: {}", ids.join(", ")))
        });
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(8, 4, 2));
        let out = engine.select(&f.query, &f.candidates).unwrap();
        let w = &out.trace.windows;
        assert_eq!(w.len(), 3);
        assert_eq!(w[1].carried, ["d1", "d2"]);
        assert_eq!(w[1].fresh, ["d5", "d6"]);
        assert_eq!(w[2].carried, ["d1", "d2"]);
        assert_eq!(w[2].fresh, ["d7", "d8"]);
        let mut members = out.queue.clone().into_vec();
        members.sort();
        assert_eq!(members.len(), 8);
        assert_eq!(out.pseudo_answers, vec!["ans"; 3]);
    }

    #[test]
    fn short_queue_is_topped_up_with_fresh_passages() {
        let f = fixture(10);
        // Select only the first passage of each window.
        let judge = ScriptedJudge::new(|_: &WindowRequest<'_>| Ok("a\nSelected: [1]".to_string()));
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(10, 4, 2));
        let out = engine.select(&f.query, &f.candidates).unwrap();
        let w = &out.trace.windows;
        assert_eq!(w[0].fresh.len(), 4);
        assert_eq!(w[1].carried, ["d1"]);
        assert_eq!(w[1].fresh, ["d5", "d6", "d7"]);
        // Re-selecting the carried head leaves the queue unchanged.
        assert_eq!(out.queue.as_slice(), ["d1"]);
        let (lo, hi) = window_count_bounds(&cfg(10, 4, 2));
        assert!((lo..=hi).contains(&out.trace.window_count()));
    }

    #[test]
    fn judge_failure_keeps_partial_trace() {
        let f = fixture(8);
        let judge = ScriptedJudge::new(|r: &WindowRequest<'_>| {
            if r.window_index == 1 {
                Err(JudgeError::Config("down".into()))
            } else {
                Ok("Selected: none".into())
            }
        });
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(8, 4, 2));
        let err = engine.select(&f.query, &f.candidates).unwrap_err();
        assert_eq!(err.partial_trace().unwrap().window_count(), 1);
    }

    #[test]
    fn unknown_doc_fails_fast() {
        let f = fixture(3);
        let judge = oracle(&[], 1);
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(4, 4, 2));
        let bad = CandidateList::from_ranked_ids("q", ["d1", "zz"]);
        assert!(matches!(
            engine.rerank(&f.query, &bad),
            Err(EngineError::UnknownDoc { .. })
        ));
    }

    #[test]
    fn tail_beyond_depth_is_kept() {
        let f = fixture(6);
        let judge = oracle(&[0, 0, 0, 5, 9, 9], 1);
        let engine = Engine::new(&f.corpus, &f.templates, &judge, cfg(4, 4, 2));
        let out = engine.rerank(&f.query, &f.candidates).unwrap();
        assert_eq!(out.ranked, ["d4", "d1", "d2", "d3", "d5", "d6"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn geometry() -> impl Strategy<Value = WindowConfig> {
            (1usize..40, 2usize..10)
                .prop_flat_map(|(m, w)| (Just(m), Just(w), 1..w))
                .prop_map(|(m, w, s)| WindowConfig::new(m, w, s).unwrap())
        }

        proptest! {
            #[test]
            fn coverage_and_counts(c in geometry(), picks in prop::collection::vec(any::<u64>(), 64)) {
                let f = fixture(c.depth);
                let picks = Arc::new(picks);
                let judge = ScriptedJudge::new(move |r: &WindowRequest<'_>| {
                    let bits = picks[r.window_index % picks.len()];
                    let ids: Vec<String> = (1..=r.len())
                        .filter(|i| bits >> (i % 64) & 1 == 1)
                        .map(|i| format!("[{i}]"))
                        .collect();
                    Ok(format!("x\nSelected: {}", if ids.is_empty() { "none".into() } else { ids.join(", ") }))
                });
                let engine = Engine::new(&f.corpus, &f.templates, &judge, c);

                let sel = engine.select(&f.query, &f.candidates).unwrap();
                let fresh: Vec<String> = sel.trace.windows.iter().flat_map(|w| w.fresh.clone()).collect();
                let all: Vec<String> = f.candidates.doc_ids().map(String::from).collect();
                prop_assert_eq!(&fresh, &all);
                let (lo, hi) = window_count_bounds(&c);
                prop_assert!((lo..=hi).contains(&sel.trace.window_count()));
                for pair in sel.trace.windows.windows(2) {
                    prop_assert!(pair[0].state_after.iter().all(|d| pair[1].state_after.contains(d)));
                }

                let rank = engine.rerank(&f.query, &f.candidates).unwrap();
                prop_assert_eq!(rank.trace.window_count(), plan_ranking_windows(&c).len());
                let mut fresh: Vec<String> = rank.trace.windows.iter().flat_map(|w| w.fresh.clone()).collect();
                fresh.sort();
                let mut all = all;
                all.sort();
                prop_assert_eq!(fresh, all);
            }
        }
    }
}
