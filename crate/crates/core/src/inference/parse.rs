//! Extraction of the predicted volume list from free-form model output.

use serde_json::Value;
use thiserror::Error;

use crate::prompt::ANSWER_KEY_PREFIX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("model output is empty")]
    Empty,
    #[error("no bracketed list of numbers found")]
    NoList,
    #[error("found {found} numbers, need {horizon}")]
    TooShort { found: usize, horizon: usize },
}

impl ParseError {
    /// Every parse failure may succeed on a fresh generation.
    pub fn retryable(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrediction {
    pub values: Vec<u32>,
    pub explanation: Option<String>,
    pub warnings: Vec<String>,
}

/// A `[...]` span; `numbers` is set when every element is a finite number.
#[derive(Debug)]
struct BracketSpan {
    start: usize,
    end: usize,
    numbers: Option<Vec<f64>>,
}

/// Innermost bracket spans in text order.
fn bracketed_lists(raw: &str) -> Vec<BracketSpan> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        while j < bytes.len() && bytes[j] != b']' && bytes[j] != b'[' {
            j += 1;
        }
        if j >= bytes.len() {
            break;
        }
        if bytes[j] == b'[' {
            i = j;
            continue;
        }
        out.push(BracketSpan {
            start,
            end: j,
            numbers: parse_numbers(&raw[start + 1..j]),
        });
        i = j + 1;
    }
    out
}

fn parse_numbers(inner: &str) -> Option<Vec<f64>> {
    if inner.trim().is_empty() {
        return None;
    }
    inner
        .split(',')
        .map(|tok| {
            let tok = tok.trim().trim_matches(|c| c == '"' || c == '\'');
            let is_numeric = !tok.is_empty()
                && tok
                    .chars()
                    .all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'));
            if !is_numeric {
                return None;
            }
            tok.parse::<f64>().ok().filter(|v| v.is_finite())
        })
        .collect()
}

fn strip_code_fences(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("```json").or_else(|| s.strip_prefix("```")).unwrap_or(s);
    s.strip_suffix("```").unwrap_or(s).trim()
}

/// Explanation string from a well-formed JSON answer, if there is one.
fn json_explanation(raw: &str) -> Option<String> {
    let body = strip_code_fences(raw);
    let start = body.find('{')?;
    let end = body.rfind('}')?;
    if end <= start {
        return None;
    }
    let value: Value = serde_json::from_str(&body[start..=end]).ok()?;
    value.as_object()?.iter().find_map(|(k, v)| {
        if k.to_ascii_lowercase().contains("explanation") {
            v.as_str().map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
        } else {
            None
        }
    })
}

fn trim_wrapping(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '}' | '{' | '"' | ',' | '.' | ':'))
}

fn textual_explanation(raw: &str, list_end: usize) -> Option<String> {
    let rest = &raw[list_end + 1..];
    let lower = rest.to_ascii_lowercase();
    let text = match lower.find("explanation") {
        Some(pos) => {
            let after = &rest[pos + "explanation".len()..];
            match after.find(':') {
                Some(colon) => &after[colon + 1..],
                None => after,
            }
        }
        None => rest,
    };
    let text = trim_wrapping(text);
    (!text.is_empty()).then(|| text.to_string())
}

fn to_volume(v: f64, warnings: &mut Vec<String>) -> u32 {
    if v < 0.0 {
        warnings.push(format!("clamped negative value {v} to 0"));
        return 0;
    }
    let floored = v.floor();
    if floored != v {
        warnings.push(format!("floored fractional value {v}"));
    }
    if floored > u32::MAX as f64 {
        warnings.push(format!("clamped oversized value {v}"));
        return u32::MAX;
    }
    floored as u32
}

/// Extracts `horizon` volumes and an optional explanation from `raw`.
///
/// The list after the answer key phrase wins; otherwise the first numeric
/// list with at least `horizon` entries. Extra values are truncated, short
/// lists are rejected, negative values clamp to zero and fractional values
/// are floored, each with a warning.
pub fn parse_prediction(raw: &str, horizon: usize) -> Result<ParsedPrediction, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let spans = bracketed_lists(raw);
    let numeric = || spans.iter().filter_map(|s| s.numbers.as_ref().map(|n| (s, n)));
    let mut chosen = None;

    if let Some(key) = raw.find(ANSWER_KEY_PREFIX) {
        if let Some(span) = spans.iter().find(|s| s.start > key) {
            if let Some(numbers) = &span.numbers {
                if numbers.len() < horizon {
                    return Err(ParseError::TooShort {
                        found: numbers.len(),
                        horizon,
                    });
                }
                chosen = Some((span, numbers));
            }
        }
    }

    let (span, numbers) = match chosen.or_else(|| numeric().find(|(_, n)| n.len() >= horizon)) {
        Some(found) => found,
        None => {
            return Err(match numeric().map(|(_, n)| n.len()).max() {
                Some(found) => ParseError::TooShort { found, horizon },
                None => ParseError::NoList,
            })
        }
    };

    let mut warnings = Vec::new();
    if numbers.len() > horizon {
        warnings.push(format!("truncated {} extra values", numbers.len() - horizon));
    }
    let values = numbers[..horizon]
        .iter()
        .map(|&v| to_volume(v, &mut warnings))
        .collect();
    let explanation = json_explanation(raw).or_else(|| textual_explanation(raw, span.end));
    Ok(ParsedPrediction {
        values,
        explanation,
        warnings,
    })
}
