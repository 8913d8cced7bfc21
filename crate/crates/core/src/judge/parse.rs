//! Strict-and-repairing parsers for judge output.
//!
//! Repairs are applied in a fixed order (fallback grammar, first-occurrence
//! dedup, out-of-range drop, missing append) and reported sorted by
//! [`Repair`]'s declaration order.

use super::Repair;

/// An identifier as written; `None` when the digit run overflows.
type RawId = Option<usize>;

fn digits_value(digits: &str) -> RawId {
    digits.parse::<usize>().ok()
}

/// Identifiers written as `[k]`, allowing spaces inside the brackets.
pub(crate) fn bracketed_ids(text: &str) -> Vec<RawId> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < bytes.len() && bytes[j] == b' ' {
            j += 1;
        }
        let start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        let end = j;
        while j < bytes.len() && bytes[j] == b' ' {
            j += 1;
        }
        if end > start && j < bytes.len() && bytes[j] == b']' {
            out.push(digits_value(&text[start..end]));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Every maximal run of ASCII digits.
pub(crate) fn bare_ids(text: &str) -> Vec<RawId> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(digits_value)
        .collect()
}

/// Applies dedup and range filtering, recording what changed.
fn clean(ids: Vec<RawId>, n: usize, repairs: &mut Vec<Repair>) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    let mut deduped = Vec::with_capacity(ids.len());
    for id in ids {
        if seen.insert(id) {
            deduped.push(id);
        } else if !repairs.contains(&Repair::Dedup) {
            repairs.push(Repair::Dedup);
        }
    }
    let kept: Vec<usize> = deduped
        .iter()
        .filter_map(|id| id.filter(|&v| (1..=n).contains(&v)))
        .collect();
    if kept.len() != deduped.len() {
        repairs.push(Repair::OutOfRangeDropped);
    }
    kept
}

fn finish(mut repairs: Vec<Repair>) -> Vec<Repair> {
    repairs.sort();
    repairs.dedup();
    repairs
}

/// Parses a listwise ranking into a permutation of `1..=n`.
///
/// Bracketed identifiers anywhere in the text are the primary grammar; bare
/// integers are the fallback. With no identifiers at all the identity
/// permutation is returned, tagged [`Repair::Unparseable`].
pub fn parse_ranking(text: &str, n: usize) -> (Vec<usize>, Vec<Repair>) {
    let mut repairs = Vec::new();
    let mut ids = bracketed_ids(text);
    if ids.is_empty() {
        ids = bare_ids(text);
        if ids.is_empty() {
            return ((1..=n).collect(), vec![Repair::Unparseable]);
        }
        repairs.push(Repair::FreeTextStripped);
    }
    let mut perm = clean(ids, n, &mut repairs);
    if perm.len() < n {
        let mut present = vec![false; n + 1];
        for &i in &perm {
            present[i] = true;
        }
        perm.extend((1..=n).filter(|&i| !present[i]));
        repairs.push(Repair::MissingAppended);
    }
    (perm, finish(repairs))
}

/// Strips a leading `Selected:` label (case-insensitive, markdown-tolerant),
/// returning what follows the colon.
pub(crate) fn selected_payload(line: &str) -> Option<&str> {
    let t = line.trim_start().trim_start_matches(['*', '#', '-', ' ']);
    let head = t.get(..8)?;
    if !head.eq_ignore_ascii_case("selected") {
        return None;
    }
    let rest = t[8..].trim_start_matches(['*', ' ']);
    rest.strip_prefix(':')
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

/// Parses a selection response: a pseudo-answer plus a final
/// `Selected: [i], [j]` line (or `Selected: none`).
///
/// The pseudo-answer is the text before the last `Selected:` line, or the text
/// after it when nothing precedes it. Without such a line, bracketed
/// identifiers anywhere in the text are used and no pseudo-answer is kept.
pub fn parse_selection(text: &str, n: usize) -> (Vec<usize>, Option<String>, Vec<Repair>) {
    let mut repairs = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let label = lines
        .iter()
        .rposition(|l| selected_payload(l).is_some());

    let Some(at) = label else {
        let ids = bracketed_ids(text);
        if ids.is_empty() {
            return (Vec::new(), None, vec![Repair::Unparseable]);
        }
        repairs.push(Repair::FreeTextStripped);
        let selected = clean(ids, n, &mut repairs);
        return (selected, None, finish(repairs));
    };

    let before = lines[..at].join("\n");
    let after = lines[at + 1..].join("\n");
    let pseudo = non_empty(&before).or_else(|| non_empty(&after));

    let payload = selected_payload(lines[at]).unwrap_or_default();
    let word = payload
        .trim()
        .trim_matches(|c: char| c == '.' || c == '*' || c == '"' || c == '`')
        .trim();
    if word.is_empty() || word.eq_ignore_ascii_case("none") {
        return (Vec::new(), pseudo, Vec::new());
    }
    let mut ids = bracketed_ids(payload);
    if ids.is_empty() {
        ids = bare_ids(payload);
        if ids.is_empty() {
            return (Vec::new(), pseudo, vec![Repair::Unparseable]);
        }
        repairs.push(Repair::FreeTextStripped);
    }
    let selected = clean(ids, n, &mut repairs);
    (selected, pseudo, finish(repairs))
}

/// `[a] > [b] > ...`
pub fn canonical_ranking(permutation: &[usize]) -> String {
    permutation
        .iter()
        .map(|i| format!("[{i}]"))
        .collect::<Vec<_>>()
        .join(" > ")
}

/// `Selected: [i], [j]` (or `Selected: none`) preceded by the pseudo-answer.
pub fn canonical_selection(selected: &[usize], pseudo_answer: Option<&str>) -> String {
    let ids = if selected.is_empty() {
        "none".to_string()
    } else {
        selected
            .iter()
            .map(|i| format!("[{i}]"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    match pseudo_answer.map(str::trim).filter(|p| !p.is_empty()) {
        Some(p) => format!("{p}\nSelected: {ids}"),
        None => format!("Selected: {ids}"),
    }
}
