//! Prompt rendering for listwise ranking and utility-based selection windows.
//!
//! A window of `n` passages is rendered with identifiers `[1]..[n]` in window
//! order. Passage text is truncated at whitespace boundaries to a per-passage
//! token budget; the query text is never truncated.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Passage, Query};
use crate::TaskKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("cannot read template file: {0}")]
    Io(String),
    #[error("template section [{0}] is missing")]
    MissingSection(&'static str),
    #[error("section [{section}]: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { section: &'static str, name: String },
    #[error("section [{section}]: required placeholder {{{name}}} is missing")]
    MissingPlaceholder {
        section: &'static str,
        name: &'static str,
    },
    #[error("section [{section}]: unbalanced brace")]
    UnbalancedBrace { section: &'static str },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("cannot render an empty window")]
    EmptyWindow,
    #[error("per-passage token budget must be at least 1")]
    ZeroBudget,
    #[error("prompt needs {needed} characters even with empty passages; budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
}

/// Counts tokens for truncation. Counts must be monotone under prefixing.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Approximates one token per four characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharApprox;

impl TokenCounter for CharApprox {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokens;

impl TokenCounter for WhitespaceTokens {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBudget {
    pub per_passage_tokens: usize,
    /// Upper bound on `system + user` characters, if any.
    pub max_prompt_chars: Option<usize>,
}

impl Default for PromptBudget {
    fn default() -> Self {
        PromptBudget {
            per_passage_tokens: 300,
            max_prompt_chars: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TaskKind,
    pub system_text: String,
    /// Rendered once per passage; `{index}`, `{title}` and `{text}`.
    pub per_passage_text: String,
    /// Follows the passages; `{query}` and `{count}`.
    pub instruction_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub ranking: PromptTemplate,
    pub selection: PromptTemplate,
}

impl PromptTemplates {
    pub fn get(&self, kind: TaskKind) -> &PromptTemplate {
        match kind {
            TaskKind::Ranking => &self.ranking,
            TaskKind::Selection => &self.selection,
        }
    }
}

const DEFAULT_SYSTEM: &str = "You are an intelligent assistant that judges passages against a search query. \
I will provide you with {count} passages, each indicated by a numerical identifier in square brackets. \
The query is: {query}";

const DEFAULT_PASSAGE: &str = "[{index}] {title}{text}";

const DEFAULT_RANKING: &str = "Search Query: {query}\n\
Rank the {count} passages above based on their relevance to the search query. \
List them in descending order of relevance using their identifiers, in the form [i] > [j] > ... \
Only respond with the ranking; do not explain.";

const DEFAULT_SELECTION: &str = "Search Query: {query}\n\
Judge which of the {count} passages above have utility for answering the query. \
First, write a short answer to the query using the passages. \
Then, on the final line, list the identifiers of all passages with utility \
in the form Selected: [i], [j], ... or write Selected: none if no passage has utility.";

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            ranking: PromptTemplate {
                kind: TaskKind::Ranking,
                system_text: DEFAULT_SYSTEM.into(),
                per_passage_text: DEFAULT_PASSAGE.into(),
                instruction_text: DEFAULT_RANKING.into(),
            },
            selection: PromptTemplate {
                kind: TaskKind::Selection,
                system_text: DEFAULT_SYSTEM.into(),
                per_passage_text: DEFAULT_PASSAGE.into(),
                instruction_text: DEFAULT_SELECTION.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Literal(&'a str),
    Escaped(char),
    Slot(&'a str),
}

fn segments(text: &str) -> Result<Vec<Segment<'_>>, ()> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let Some(pos) = rest.find(['{', '}']) else {
            out.push(Segment::Literal(rest));
            break;
        };
        if pos > 0 {
            out.push(Segment::Literal(&rest[..pos]));
        }
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push(Segment::Escaped('{'));
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push(Segment::Escaped('}'));
            rest = after;
        } else if tail.starts_with('{') {
            let close = tail.find('}').ok_or(())?;
            out.push(Segment::Slot(&tail[1..close]));
            rest = &tail[close + 1..];
        } else {
            return Err(());
        }
    }
    Ok(out)
}

fn check_section(
    section: &'static str,
    text: &str,
    allowed: &[&str],
    required: &[&'static str],
) -> Result<(), TemplateError> {
    let segs = segments(text).map_err(|_| TemplateError::UnbalancedBrace { section })?;
    for seg in &segs {
        if let Segment::Slot(name) = seg {
            if !allowed.contains(name) {
                return Err(TemplateError::UnknownPlaceholder {
                    section,
                    name: (*name).to_string(),
                });
            }
        }
    }
    for &name in required {
        if !segs.contains(&Segment::Slot(name)) {
            return Err(TemplateError::MissingPlaceholder { section, name });
        }
    }
    Ok(())
}

fn instruction_section(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Ranking => "instruction:ranking",
        TaskKind::Selection => "instruction:selection",
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), TemplateError> {
        check_section("system", &self.system_text, &["query", "count"], &[])?;
        check_section(
            "passage",
            &self.per_passage_text,
            &["index", "title", "text"],
            &["index", "text"],
        )?;
        check_section(
            instruction_section(self.kind),
            &self.instruction_text,
            &["query", "count"],
            &["query"],
        )
    }
}

fn fill(text: &str, lookup: impl Fn(&str) -> String) -> String {
    // Templates are validated before rendering, so parsing cannot fail here.
    let segs = segments(text).unwrap_or_else(|_| vec![Segment::Literal(text)]);
    let mut out = String::with_capacity(text.len());
    for seg in segs {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Escaped(c) => out.push(c),
            Segment::Slot(name) => out.push_str(&lookup(name)),
        }
    }
    out
}

/// Loads templates from a sectioned text file, or the built-in defaults.
pub fn load_templates(path: Option<&Path>) -> Result<PromptTemplates, TemplateError> {
    let templates = match path {
        None => PromptTemplates::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| TemplateError::Io(e.to_string()))?;
            parse_templates(&text)?
        }
    };
    templates.ranking.validate()?;
    templates.selection.validate()?;
    Ok(templates)
}

const SECTIONS: [&str; 4] = [
    "system",
    "passage",
    "instruction:ranking",
    "instruction:selection",
];

/// Parses a template document with `[system]`, `[passage]`,
/// `[instruction:ranking]` and `[instruction:selection]` sections.
pub fn parse_templates(text: &str) -> Result<PromptTemplates, TemplateError> {
    let mut bodies: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let header = line
            .trim()
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .and_then(|name| SECTIONS.iter().position(|s| *s == name));
        if let Some(idx) = header {
            bodies[idx] = Some(String::new());
            current = Some(idx);
            continue;
        }
        if let Some(body) = current.and_then(|idx| bodies[idx].as_mut()) {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut take = |idx: usize| -> Result<String, TemplateError> {
        bodies[idx]
            .take()
            .map(|b| b.trim_matches('\n').to_string())
            .ok_or(TemplateError::MissingSection(SECTIONS[idx]))
    };
    let system = take(0)?;
    let passage = take(1)?;
    let ranking = take(2)?;
    let selection = take(3)?;
    let templates = PromptTemplates {
        ranking: PromptTemplate {
            kind: TaskKind::Ranking,
            system_text: system.clone(),
            per_passage_text: passage.clone(),
            instruction_text: ranking,
        },
        selection: PromptTemplate {
            kind: TaskKind::Selection,
            system_text: system,
            per_passage_text: passage,
            instruction_text: selection,
        },
    };
    templates.ranking.validate()?;
    templates.selection.validate()?;
    Ok(templates)
}

/// A rendered two-message prompt for one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: TaskKind,
    pub system: String,
    pub user: String,
    pub passage_count: usize,
}

impl RenderedPrompt {
    pub fn char_count(&self) -> usize {
        self.system.chars().count() + self.user.chars().count()
    }

    /// Hex SHA-256 over both messages; keys replay transcripts.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Longest prefix of `text` within `budget` tokens that ends at a word end.
/// Falls back to a character cut when not even the first word fits.
pub fn truncate_to_budget<'a>(text: &'a str, budget: usize, counter: &dyn TokenCounter) -> &'a str {
    if counter.count(text) <= budget {
        return text;
    }
    let word_ends: Vec<usize> = text
        .char_indices()
        .zip(text.chars().skip(1))
        .filter(|((_, c), next)| !c.is_whitespace() && next.is_whitespace())
        .map(|((i, c), _)| i + c.len_utf8())
        .collect();
    // `count` is monotone in the prefix, so the fitting word ends form a prefix
    // of `word_ends`.
    let fits = word_ends.partition_point(|&end| counter.count(&text[..end]) <= budget);
    if fits > 0 {
        return &text[..word_ends[fits - 1]];
    }
    let char_ends: Vec<usize> = text
        .char_indices()
        .map(|(i, c)| i + c.len_utf8())
        .collect();
    let fits = char_ends.partition_point(|&end| counter.count(&text[..end]) <= budget);
    if fits > 0 {
        &text[..char_ends[fits - 1]]
    } else {
        ""
    }
}

fn render_at(
    template: &PromptTemplate,
    query: &Query,
    window: &[&Passage],
    per_passage_tokens: usize,
    counter: &dyn TokenCounter,
) -> RenderedPrompt {
    let count = window.len().to_string();
    let top = |name: &str| match name {
        "query" => query.text.clone(),
        "count" => count.clone(),
        _ => String::new(),
    };
    let system = fill(&template.system_text, top);
    let mut user = String::new();
    for (i, p) in window.iter().enumerate() {
        let text = truncate_to_budget(&p.text, per_passage_tokens, counter);
        let rendered = fill(&template.per_passage_text, |name| match name {
            "index" => (i + 1).to_string(),
            "title" => p
                .title
                .as_deref()
                .map(|t| format!("{t}\n"))
                .unwrap_or_default(),
            "text" => text.to_string(),
            _ => String::new(),
        });
        user.push_str(&rendered);
        user.push_str("\n\n");
    }
    user.push_str(&fill(&template.instruction_text, top));
    RenderedPrompt {
        kind: template.kind,
        system,
        user,
        passage_count: window.len(),
    }
}

/// Renders with the default character-based token approximation.
pub fn render(
    template: &PromptTemplate,
    query: &Query,
    window: &[&Passage],
    budget: &PromptBudget,
) -> Result<RenderedPrompt, PromptError> {
    render_with(template, query, window, budget, &CharApprox)
}

pub fn render_with(
    template: &PromptTemplate,
    query: &Query,
    window: &[&Passage],
    budget: &PromptBudget,
    counter: &dyn TokenCounter,
) -> Result<RenderedPrompt, PromptError> {
    if window.is_empty() {
        return Err(PromptError::EmptyWindow);
    }
    if budget.per_passage_tokens == 0 {
        return Err(PromptError::ZeroBudget);
    }
    let full = render_at(template, query, window, budget.per_passage_tokens, counter);
    let Some(limit) = budget.max_prompt_chars else {
        return Ok(full);
    };
    if full.char_count() <= limit {
        return Ok(full);
    }
    let floor = render_at(template, query, window, 0, counter);
    if floor.char_count() > limit {
        return Err(PromptError::BudgetTooSmall {
            needed: floor.char_count(),
            budget: limit,
        });
    }
    // Largest per-passage budget in [0, per_passage_tokens) that fits.
    let (mut lo, mut hi) = (0usize, budget.per_passage_tokens);
    let mut best = floor;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let candidate = render_at(template, query, window, mid, counter);
        if candidate.char_count() <= limit {
            lo = mid;
            best = candidate;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
