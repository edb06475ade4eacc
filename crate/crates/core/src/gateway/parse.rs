//! Extracts the predicted category from a free-text backend response.

use crate::retrieval::CandidateSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedPrediction {
    Category(String),
    NoMatch,
}

/// Lowercases, turns punctuation into separators, and collapses whitespace.
pub fn normalize_label(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// The text after the last `Prediction:` line, or the last nonblank line
/// when the response has no such line.
fn answer_text(response: &str) -> Option<&str> {
    let mut last_pred = None;
    let mut last_nonblank = None;
    for line in response.lines() {
        let trimmed = line.trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, '*' | '#' | '>' | '-' | '_' | '`')
        });
        if !trimmed.trim().is_empty() {
            last_nonblank = Some(trimmed);
        }
        let Some(head) = trimmed.get(..10) else {
            continue;
        };
        if !head.eq_ignore_ascii_case("prediction") {
            continue;
        }
        let tail = trimmed[10..].trim_start_matches(|c: char| c.is_whitespace() || c == '*');
        if let Some(value) = tail.strip_prefix(':') {
            last_pred = Some(value);
        }
    }
    last_pred.or(last_nonblank)
}

/// Matches the answer against the candidates' display names: exact match on
/// the normalized form first, then ignoring spaces, then the longest
/// candidate whose name contains (or is contained in) the answer on word
/// boundaries.
pub fn parse_prediction(response: &str, candidates: &CandidateSet) -> ParsedPrediction {
    let Some(answer) = answer_text(response) else {
        return ParsedPrediction::NoMatch;
    };
    let answer = normalize_label(answer);
    if answer.is_empty() {
        return ParsedPrediction::NoMatch;
    }
    let names: Vec<(String, &str)> = candidates
        .entries
        .iter()
        .map(|e| (normalize_label(&e.display_name), e.category_id.as_str()))
        .filter(|(n, _)| !n.is_empty())
        .collect();

    if let Some((_, id)) = names.iter().find(|(n, _)| *n == answer) {
        return ParsedPrediction::Category(id.to_string());
    }
    let answer_compact = compact(&answer);
    if let Some((_, id)) = names.iter().find(|(n, _)| compact(n) == answer_compact) {
        return ParsedPrediction::Category(id.to_string());
    }

    let padded_answer = format!(" {answer} ");
    let mut best: Option<(usize, &str)> = None;
    for (name, id) in &names {
        let padded_name = format!(" {name} ");
        if padded_answer.contains(&padded_name) || padded_name.contains(&padded_answer) {
            if best.is_none_or(|(len, _)| name.len() > len) {
                best = Some((name.len(), id));
            }
        }
    }
    match best {
        Some((_, id)) => ParsedPrediction::Category(id.to_string()),
        None => ParsedPrediction::NoMatch,
    }
}
