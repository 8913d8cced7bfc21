//! Prompt-fingerprint transcripts: replay recorded responses, or record a
//! live judge's responses for later replay.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{Judge, JudgeError, JudgeVerdict, WindowRequest};

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_sha256: String,
    pub response_text: String,
}

pub fn load_transcript(path: &Path) -> Result<HashMap<String, String>, JudgeError> {
    let file = File::open(path)
        .map_err(|e| JudgeError::Config(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JudgeError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
            JudgeError::Config(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        map.insert(entry.prompt_sha256, entry.response_text);
    }
    Ok(map)
}

/// Answers each window with the transcript response recorded for its prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayJudge {
    responses: HashMap<String, String>,
}

impl ReplayJudge {
    pub fn new(responses: HashMap<String, String>) -> Self {
        ReplayJudge { responses }
    }

    pub fn from_file(path: &Path) -> Result<Self, JudgeError> {
        load_transcript(path).map(Self::new)
    }
}

impl Judge for ReplayJudge {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let fingerprint = request.prompt.fingerprint();
        match self.responses.get(&fingerprint) {
            Some(text) => Ok(JudgeVerdict::from_text(request.kind, text.clone(), request.len())),
            None => Err(JudgeError::ReplayMiss {
                query_id: request.query.query_id.clone(),
                window_index: request.window_index,
                fingerprint,
            }),
        }
    }
}

/// Wraps a judge and remembers each raw response by prompt fingerprint.
pub struct RecordingJudge<J> {
    inner: J,
    seen: Mutex<BTreeMap<String, String>>,
}

impl<J: Judge> RecordingJudge<J> {
    pub fn new(inner: J) -> Self {
        RecordingJudge {
            inner,
            seen: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.seen
            .lock()
            .iter()
            .map(|(k, v)| TranscriptEntry {
                prompt_sha256: k.clone(),
                response_text: v.clone(),
            })
            .collect()
    }

    /// Writes the transcript sorted by fingerprint.
    pub fn write_transcript(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for entry in self.entries() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl<J: Judge> Judge for RecordingJudge<J> {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let verdict = self.inner.judge_window(request)?;
        self.seen
            .lock()
            .insert(request.prompt.fingerprint(), verdict.raw_text.clone());
        Ok(verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Passage, Query};
    use crate::judge::ScriptedJudge;
    use crate::prompting::{render, PromptBudget, PromptTemplates};
    use crate::TaskKind;

    #[test]
    fn record_then_replay_reproduces_verdicts() {
        let q = Query {
            query_id: "q".into(),
            text: "who".into(),
        };
        let ps: Vec<Passage> = (0..4)
            .map(|i| Passage {
                doc_id: format!("d{i}"),
                text: format!("text {i}"),
                title: None,
            })
            .collect();
        let refs: Vec<&Passage> = ps.iter().collect();
        let t = PromptTemplates::default();
        let prompt = render(&t.selection, &q, &refs, &PromptBudget::default()).unwrap();
        let req = WindowRequest {
            query: &q,
            passages: &refs,
            prompt: &prompt,
            kind: TaskKind::Selection,
            window_index: 0,
        };

        let live = RecordingJudge::new(ScriptedJudge::new(|_: &WindowRequest<'_>| {
            Ok("Someone.\nSelected: [3], [3]".to_string())
        }));
        let first = live.judge_window(&req).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        live.write_transcript(&path).unwrap();
        let replay = ReplayJudge::from_file(&path).unwrap();
        assert_eq!(replay.judge_window(&req).unwrap(), first);

        let other = render(&t.ranking, &q, &refs, &PromptBudget::default()).unwrap();
        let miss = replay.judge_window(&WindowRequest {
            prompt: &other,
            kind: TaskKind::Ranking,
            ..req
        });
        assert!(matches!(miss, Err(JudgeError::ReplayMiss { .. })));
    }
}
