//! Answer EM/F1, evidence recall/precision/micro-F1, and nDCG@k.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{GoldAnswers, GoldEvidence, Qrels};

/// SQuAD-style normalization: lowercase, drop punctuation and the articles
/// `a`/`an`/`the`, split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .collect();
    stripped
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
            | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
    )
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0i64;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// `(em, f1)` of a prediction against its best-matching reference.
pub fn answer_em_f1(prediction: &str, golds: &[String]) -> (u8, f64) {
    let pred = normalize_answer(prediction);
    let mut em = 0;
    let mut f1: f64 = 0.0;
    for g in golds {
        let gold = normalize_answer(g);
        if gold == pred {
            em = 1;
        }
        f1 = f1.max(token_f1(&pred, &gold));
    }
    (em, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrediction {
    #[serde(alias = "qid")]
    pub query_id: String,
    #[serde(alias = "answer_text")]
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub query_id: String,
    pub em: u8,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerScores {
    pub rows: Vec<AnswerRow>,
    pub mean_em: f64,
    pub mean_f1: f64,
    /// Predictions with no gold answers; not scored.
    pub unscored: Vec<String>,
    /// Gold queries with no prediction; scored 0.
    pub missing_predictions: Vec<String>,
}

/// Scores every gold query. A missing prediction counts as an empty answer.
pub fn answer_scores(predictions: &[AnswerPrediction], gold: &GoldAnswers) -> AnswerScores {
    let by_query: BTreeMap<&str, &str> = predictions
        .iter()
        .map(|p| (p.query_id.as_str(), p.answer.as_str()))
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (qid, answers) in &gold.0 {
        let pred = by_query.get(qid.as_str()).copied().unwrap_or_else(|| {
            missing.push(qid.clone());
            ""
        });
        let (em, f1) = answer_em_f1(pred, answers);
        rows.push(AnswerRow {
            query_id: qid.clone(),
            em,
            f1,
        });
    }
    let unscored = by_query
        .keys()
        .filter(|q| !gold.0.contains_key(**q))
        .map(|q| q.to_string())
        .collect();
    AnswerScores {
        mean_em: mean(rows.iter().map(|r| r.em as f64)),
        mean_f1: mean(rows.iter().map(|r| r.f1)),
        rows,
        unscored,
        missing_predictions: missing,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub query_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceScores {
    pub rows: Vec<EvidenceRow>,
    /// Per-query means.
    pub recall: f64,
    pub precision: f64,
    /// Pooled over queries: 2·ΣTP / (2·ΣTP + ΣFP + ΣFN).
    pub micro_f1: f64,
    pub micro_recall: f64,
    pub micro_precision: f64,
}

/// Scores a selection per gold-covered query. Queries absent from `selected`
/// count as empty selections; precision of an empty selection is 0.
pub fn evidence_scores(selected: &BTreeMap<String, Vec<String>>, gold: &GoldEvidence) -> EvidenceScores {
    let mut rows = Vec::new();
    for (qid, gold_set) in &gold.0 {
        let sel: BTreeSet<&str> = selected
            .get(qid)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let tp = sel.iter().filter(|d| gold_set.contains(**d)).count();
        let fp = sel.len() - tp;
        let fn_ = gold_set.len() - tp;
        rows.push(EvidenceRow {
            query_id: qid.clone(),
            tp,
            fp,
            fn_,
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
        });
    }
    let (tp, fp, fn_) = rows
        .iter()
        .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
    EvidenceScores {
        recall: mean(rows.iter().map(|r| r.recall)),
        precision: mean(rows.iter().map(|r| r.precision)),
        micro_f1: ratio(2 * tp, 2 * tp + fp + fn_),
        micro_recall: ratio(tp, tp + fn_),
        micro_precision: ratio(tp, tp + fp),
        rows,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(position: usize) -> f64 {
    // position is 0-based; rank i = position + 1 is discounted by log2(i + 1)
    ((position + 2) as f64).log2()
}

/// DCG of `grades` (in ranked order) at cutoff `k`.
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i))
        .sum()
}

/// nDCG@k of one ranking; the ideal ordering comes from every judged doc
/// for the query. Zero when the query has no relevant documents.
pub fn ndcg_query(ranked: &[&str], judged: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    let Some(judged) = judged else { return 0.0 };
    let grades: Vec<u32> = ranked
        .iter()
        .map(|d| judged.get(*d).copied().unwrap_or(0))
        .collect();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg_at_k(&grades, k) / idcg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgScores {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries with no qrels entry (scored 0).
    pub unjudged: Vec<String>,
}

/// Mean nDCG@k over every query in `run`.
pub fn ndcg_at_k(run: &BTreeMap<String, Vec<String>>, qrels: &Qrels, k: usize) -> NdcgScores {
    let k = k.max(1);
    let mut per_query = BTreeMap::new();
    let mut unjudged = Vec::new();
    for (qid, ranked) in run {
        let judged = qrels.query(qid);
        if judged.is_none() {
            unjudged.push(qid.clone());
        }
        let ids: Vec<&str> = ranked.iter().map(String::as_str).collect();
        per_query.insert(qid.clone(), ndcg_query(&ids, judged, k));
    }
    NdcgScores {
        k,
        mean: mean(per_query.values().copied()),
        per_query,
        unjudged,
    }
}

/// All requested metric families. Values are fractions in [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answers: Option<AnswerScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceScores>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ndcg: Vec<NdcgScores>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per query with every available metric, as percentages to two
    /// decimals, followed by an `all` row of aggregates (mean EM/F1, summed
    /// counts, mean recall/precision, micro-F1, mean nDCG).
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["query_id".to_string()];
        if self.answers.is_some() {
            header.extend(["em".into(), "f1".into()]);
        }
        if self.evidence.is_some() {
            header.extend(
                ["tp", "fp", "fn", "recall", "precision", "evidence_f1"].map(String::from),
            );
        }
        for n in &self.ndcg {
            header.push(format!("ndcg@{}", n.k));
        }
        writeln!(out, "{}", header.join("\t"))?;

        let mut queries: BTreeSet<&str> = BTreeSet::new();
        if let Some(a) = &self.answers {
            queries.extend(a.rows.iter().map(|r| r.query_id.as_str()));
        }
        if let Some(e) = &self.evidence {
            queries.extend(e.rows.iter().map(|r| r.query_id.as_str()));
        }
        for n in &self.ndcg {
            queries.extend(n.per_query.keys().map(String::as_str));
        }
        let answers: HashMap<&str, &AnswerRow> = self
            .answers
            .iter()
            .flat_map(|a| a.rows.iter().map(|r| (r.query_id.as_str(), r)))
            .collect();
        let evidence: HashMap<&str, &EvidenceRow> = self
            .evidence
            .iter()
            .flat_map(|e| e.rows.iter().map(|r| (r.query_id.as_str(), r)))
            .collect();

        for q in queries {
            let mut row = vec![q.to_string()];
            if self.answers.is_some() {
                match answers.get(q) {
                    Some(r) => row.extend([pct(r.em as f64), pct(r.f1)]),
                    None => row.extend(["".into(), "".into()]),
                }
            }
            if self.evidence.is_some() {
                match evidence.get(q) {
                    Some(r) => row.extend([
                        r.tp.to_string(),
                        r.fp.to_string(),
                        r.fn_.to_string(),
                        pct(r.recall),
                        pct(r.precision),
                        pct(ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn_)),
                    ]),
                    None => row.extend(std::iter::repeat_n(String::new(), 6)),
                }
            }
            for n in &self.ndcg {
                row.push(n.per_query.get(q).map(|v| pct(*v)).unwrap_or_default());
            }
            writeln!(out, "{}", row.join("\t"))?;
        }

        let mut all = vec!["all".to_string()];
        if let Some(a) = &self.answers {
            all.extend([pct(a.mean_em), pct(a.mean_f1)]);
        }
        if let Some(e) = &self.evidence {
            let (tp, fp, fn_) = e
                .rows
                .iter()
                .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
            all.extend([
                tp.to_string(),
                fp.to_string(),
                fn_.to_string(),
                pct(e.recall),
                pct(e.precision),
                pct(e.micro_f1),
            ]);
        }
        for n in &self.ndcg {
            all.push(pct(n.mean));
        }
        writeln!(out, "{}", all.join("\t"))
    }
}
