//! On-disk inputs: corpora, queries, TREC run and qrels files, gold answers and
//! gold evidence.
//!
//! Everything here is loaded once and is immutable afterwards, so loaded
//! structures can be shared freely across query pipelines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default candidate depth (top-100 first-stage results).
pub const DEFAULT_MAX_DEPTH: usize = 100;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate doc_id {doc_id} at line {line}")]
    DuplicateDoc { doc_id: String, line: usize },
    #[error("duplicate query_id {query_id} at line {line}")]
    DuplicateQuery { query_id: String, line: usize },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("query {query_id}: non-contiguous rank (expected {expected}, found {found})")]
    NonContiguousRank {
        query_id: String,
        expected: u32,
        found: u32,
    },
    #[error("line {line}: duplicate entry ({query_id}, {doc_id})")]
    DuplicatePair {
        query_id: String,
        doc_id: String,
        line: usize,
    },
    #[error("line {line}: negative grade {grade}")]
    NegativeGrade { line: usize, grade: i64 },
    #[error("{} candidate doc_id(s) missing from the corpus: {}", .0.len(), format_pairs(.0))]
    Unresolved(Vec<(String, String)>),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(q, d)| format!("{q}/{d}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn open(path: &Path) -> Result<BufReader<File>, LoadError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, Result<String, std::io::Error>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn io_at(line: usize, err: std::io::Error) -> LoadError {
    LoadError::Malformed {
        line,
        message: err.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Picks a format from the file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// A passage collection indexed by doc_id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self, LoadError> {
        let mut corpus = Corpus::default();
        for (i, p) in passages.into_iter().enumerate() {
            corpus.insert(p, i + 1)?;
        }
        Ok(corpus)
    }

    /// Adds one passage, rejecting empty ids or text and duplicate ids.
    pub fn push(&mut self, passage: Passage) -> Result<(), LoadError> {
        let line = self.passages.len() + 1;
        self.insert(passage, line)
    }

    fn insert(&mut self, passage: Passage, line: usize) -> Result<(), LoadError> {
        if passage.doc_id.is_empty() {
            return Err(LoadError::MissingField {
                line,
                field: "doc_id",
            });
        }
        if passage.text.trim().is_empty() {
            return Err(LoadError::MissingField { line, field: "text" });
        }
        if self.index.contains_key(&passage.doc_id) {
            return Err(LoadError::DuplicateDoc {
                doc_id: passage.doc_id,
                line,
            });
        }
        self.index.insert(passage.doc_id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&Passage> {
        self.index.get(doc_id).map(|&i| &self.passages[i])
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.passages.iter()
    }

    /// Fails listing every (query_id, doc_id) in `run` that does not resolve.
    pub fn ensure_resolves(&self, run: &Run) -> Result<(), LoadError> {
        let missing: Vec<(String, String)> = run
            .lists
            .values()
            .flat_map(|list| {
                list.entries
                    .iter()
                    .filter(|e| !self.index.contains_key(&e.doc_id))
                    .map(|e| (list.query_id.clone(), e.doc_id.clone()))
            })
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(LoadError::Unresolved(missing))
        }
    }
}

#[derive(Deserialize)]
struct PassageRecord {
    #[serde(alias = "_id", alias = "docid", alias = "id")]
    doc_id: Option<String>,
    #[serde(alias = "contents")]
    text: Option<String>,
    title: Option<String>,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, LoadError> {
    read_corpus(open(path)?, format)
}

pub fn read_corpus<R: BufRead>(reader: R, format: CorpusFormat) -> Result<Corpus, LoadError> {
    let mut corpus = Corpus::default();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let passage = match format {
            CorpusFormat::Jsonl => {
                let rec: PassageRecord =
                    serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                Passage {
                    doc_id: rec.doc_id.ok_or(LoadError::MissingField {
                        line: line_no,
                        field: "doc_id",
                    })?,
                    text: rec.text.ok_or(LoadError::MissingField {
                        line: line_no,
                        field: "text",
                    })?,
                    title: rec.title.filter(|t| !t.is_empty()),
                }
            }
            CorpusFormat::Tsv => {
                let (id, text) = line.split_once('\t').ok_or(LoadError::MissingField {
                    line: line_no,
                    field: "text",
                })?;
                Passage {
                    doc_id: id.trim().to_string(),
                    text: text.to_string(),
                    title: None,
                }
            }
        };
        corpus.insert(passage, line_no)?;
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    index: HashMap<String, usize>,
}

impl QuerySet {
    pub fn from_queries(queries: Vec<Query>) -> Result<Self, LoadError> {
        let mut set = QuerySet::default();
        for (i, q) in queries.into_iter().enumerate() {
            set.insert(q, i + 1)?;
        }
        Ok(set)
    }

    fn insert(&mut self, query: Query, line: usize) -> Result<(), LoadError> {
        if query.query_id.is_empty() {
            return Err(LoadError::MissingField {
                line,
                field: "query_id",
            });
        }
        if self.index.contains_key(&query.query_id) {
            return Err(LoadError::DuplicateQuery {
                query_id: query.query_id,
                line,
            });
        }
        self.index.insert(query.query_id.clone(), self.queries.len());
        self.queries.push(query);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&Query> {
        self.index.get(query_id).map(|&i| &self.queries[i])
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Query> {
        self.queries.iter()
    }
}

#[derive(Deserialize)]
struct QueryRecord {
    #[serde(alias = "_id", alias = "qid", alias = "id")]
    query_id: Option<String>,
    #[serde(alias = "query")]
    text: Option<String>,
}

/// Loads queries from JSONL (`query_id`/`_id`, `text`) or TSV (`qid<TAB>text`).
pub fn load_queries(path: &Path) -> Result<QuerySet, LoadError> {
    read_queries(open(path)?, CorpusFormat::from_path(path))
}

pub fn read_queries<R: BufRead>(reader: R, format: CorpusFormat) -> Result<QuerySet, LoadError> {
    let mut set = QuerySet::default();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let query = match format {
            CorpusFormat::Jsonl => {
                let rec: QueryRecord =
                    serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                Query {
                    query_id: rec.query_id.ok_or(LoadError::MissingField {
                        line: line_no,
                        field: "query_id",
                    })?,
                    text: rec.text.ok_or(LoadError::MissingField {
                        line: line_no,
                        field: "text",
                    })?,
                }
            }
            CorpusFormat::Tsv => {
                let (id, text) = line.split_once('\t').ok_or(LoadError::MissingField {
                    line: line_no,
                    field: "text",
                })?;
                Query {
                    query_id: id.trim().to_string(),
                    text: text.to_string(),
                }
            }
        };
        set.insert(query, line_no)?;
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: u32,
}

/// The ordered top-M candidates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub query_id: String,
    pub entries: Vec<RunEntry>,
}

impl CandidateList {
    /// Builds a list from doc ids in rank order, scoring each `1/rank`.
    pub fn from_ranked_ids<I, S>(query_id: impl Into<String>, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| RunEntry {
                doc_id: id.into(),
                score: 1.0 / (i + 1) as f64,
                rank: (i + 1) as u32,
            })
            .collect();
        CandidateList {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunWarning {
    /// Lines for this query appear in a different order than their ranks.
    LineOrder { query_id: String },
    /// Score rises with rank; file rank order is kept.
    ScoreOrder { query_id: String, rank: u32 },
}

impl std::fmt::Display for RunWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunWarning::LineOrder { query_id } => {
                write!(f, "query {query_id}: line order disagrees with rank column")
            }
            RunWarning::ScoreOrder { query_id, rank } => {
                write!(f, "query {query_id}: score increases at rank {rank}")
            }
        }
    }
}

/// Candidate lists keyed by query id, with any non-fatal findings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub lists: BTreeMap<String, CandidateList>,
    pub warnings: Vec<RunWarning>,
}

impl Run {
    pub fn from_lists(lists: impl IntoIterator<Item = CandidateList>) -> Self {
        Run {
            lists: lists
                .into_iter()
                .map(|l| (l.query_id.clone(), l))
                .collect(),
            warnings: Vec::new(),
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&CandidateList> {
        self.lists.get(query_id)
    }
}

pub fn load_run(path: &Path, max_depth: usize) -> Result<Run, LoadError> {
    read_run(open(path)?, max_depth)
}

/// Parses a TREC six-column run (`qid Q0 docid rank score tag`).
pub fn read_run<R: BufRead>(reader: R, max_depth: usize) -> Result<Run, LoadError> {
    let mut raw: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(LoadError::Malformed {
                line: line_no,
                message: format!("expected 6 columns, found {}", cols.len()),
            });
        }
        let rank: u32 = cols[3].parse().map_err(|_| LoadError::Malformed {
            line: line_no,
            message: format!("rank `{}` is not a positive integer", cols[3]),
        })?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| LoadError::Malformed {
                line: line_no,
                message: format!("score `{}` is not a finite number", cols[4]),
            })?;
        let (qid, doc) = (cols[0].to_string(), cols[2].to_string());
        if seen.insert((qid.clone(), doc.clone()), line_no).is_some() {
            return Err(LoadError::DuplicatePair {
                query_id: qid,
                doc_id: doc,
                line: line_no,
            });
        }
        raw.entry(qid).or_default().push(RunEntry {
            doc_id: doc,
            score,
            rank,
        });
    }

    let mut run = Run::default();
    for (qid, mut entries) in raw {
        if entries.windows(2).any(|p| p[0].rank > p[1].rank) {
            run.warnings.push(RunWarning::LineOrder {
                query_id: qid.clone(),
            });
        }
        entries.sort_by_key(|e| e.rank);
        for (i, e) in entries.iter().enumerate() {
            let expected = (i + 1) as u32;
            if e.rank != expected {
                return Err(LoadError::NonContiguousRank {
                    query_id: qid,
                    expected,
                    found: e.rank,
                });
            }
        }
        for pair in entries.windows(2) {
            if pair[1].score > pair[0].score {
                run.warnings.push(RunWarning::ScoreOrder {
                    query_id: qid.clone(),
                    rank: pair[1].rank,
                });
            }
        }
        entries.truncate(max_depth);
        run.lists.insert(
            qid.clone(),
            CandidateList {
                query_id: qid,
                entries,
            },
        );
    }
    Ok(run)
}

/// Writes lists in TREC run format, in query-id order.
pub fn write_run<'a, W, I>(mut out: W, lists: I, tag: &str) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CandidateList>,
{
    for list in lists {
        for e in &list.entries {
            writeln!(
                out,
                "{} Q0 {} {} {} {}",
                list.query_id, e.doc_id, e.rank, e.score, tag
            )?;
        }
    }
    Ok(())
}

/// Graded relevance judgments. Absent pairs have grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.grades
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    /// Gold evidence derived from qrels: every pair with grade >= 1.
    pub fn positive_evidence(&self) -> GoldEvidence {
        let mut gold = GoldEvidence::default();
        for (qid, docs) in &self.grades {
            let set: BTreeSet<String> = docs
                .iter()
                .filter(|(_, &g)| g >= 1)
                .map(|(d, _)| d.clone())
                .collect();
            if !set.is_empty() {
                gold.0.insert(qid.clone(), set);
            }
        }
        gold
    }
}

pub fn load_qrels(path: &Path) -> Result<Qrels, LoadError> {
    read_qrels(open(path)?)
}

/// Parses TREC qrels (`qid iter docid grade`). Grade-0 lines are kept.
pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels, LoadError> {
    let mut qrels = Qrels::default();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(LoadError::Malformed {
                line: line_no,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let grade: i64 = cols[3].parse().map_err(|_| LoadError::Malformed {
            line: line_no,
            message: format!("grade `{}` is not an integer", cols[3]),
        })?;
        if grade < 0 {
            return Err(LoadError::NegativeGrade {
                line: line_no,
                grade,
            });
        }
        let grade = u32::try_from(grade).map_err(|_| LoadError::Malformed {
            line: line_no,
            message: format!("grade {grade} out of range"),
        })?;
        qrels.insert(cols[0], cols[2], grade);
    }
    Ok(qrels)
}

/// Reference answers per query; every listed query has at least one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldAnswers(pub BTreeMap<String, Vec<String>>);

impl GoldAnswers {
    pub fn get(&self, query_id: &str) -> Option<&[String]> {
        self.0.get(query_id).map(Vec::as_slice)
    }
}

#[derive(Deserialize)]
struct AnswerRecord {
    #[serde(alias = "qid", alias = "_id")]
    query_id: String,
    answers: Vec<String>,
}

pub fn load_answers(path: &Path) -> Result<GoldAnswers, LoadError> {
    read_answers(open(path)?)
}

pub fn read_answers<R: BufRead>(reader: R) -> Result<GoldAnswers, LoadError> {
    let mut gold = GoldAnswers::default();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnswerRecord = serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.answers.is_empty() {
            return Err(LoadError::MissingField {
                line: line_no,
                field: "answers",
            });
        }
        if gold.0.insert(rec.query_id.clone(), rec.answers).is_some() {
            return Err(LoadError::DuplicateQuery {
                query_id: rec.query_id,
                line: line_no,
            });
        }
    }
    Ok(gold)
}

/// Gold evidence doc ids per query; covered queries have non-empty sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldEvidence(pub BTreeMap<String, BTreeSet<String>>);

impl GoldEvidence {
    pub fn get(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.0.get(query_id)
    }
}

#[derive(Deserialize)]
struct EvidenceRecord {
    #[serde(alias = "qid", alias = "_id")]
    query_id: String,
    evidence: Vec<String>,
}

pub fn load_evidence(path: &Path) -> Result<GoldEvidence, LoadError> {
    read_evidence(open(path)?)
}

pub fn read_evidence<R: BufRead>(reader: R) -> Result<GoldEvidence, LoadError> {
    let mut gold = GoldEvidence::default();
    for (line_no, line) in lines(reader) {
        let line = line.map_err(|e| io_at(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EvidenceRecord =
            serde_json::from_str(&line).map_err(|e| LoadError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if rec.evidence.is_empty() {
            return Err(LoadError::MissingField {
                line: line_no,
                field: "evidence",
            });
        }
        if gold
            .0
            .insert(rec.query_id.clone(), rec.evidence.into_iter().collect())
            .is_some()
        {
            return Err(LoadError::DuplicateQuery {
                query_id: rec.query_id,
                line: line_no,
            });
        }
    }
    Ok(gold)
}
