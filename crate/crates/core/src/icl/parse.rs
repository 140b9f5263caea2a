//! Mapping free-text completions back onto the label set.

use serde::{Deserialize, Serialize};

/// Outcome of [`parse_label`]: an index into the label list, or a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedLabel {
    Label(usize),
    Failure,
}

impl ParsedLabel {
    pub fn index(self) -> Option<usize> {
        match self {
            ParsedLabel::Label(i) => Some(i),
            ParsedLabel::Failure => None,
        }
    }
}

const MARKER: &str = "label:";

fn normalize(s: &str) -> Vec<char> {
    s.chars()
        .map(|c| if c == '\u{2212}' { '-' } else { c })
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

fn parse_int(s: &str) -> Option<i64> {
    let s: String = normalize(s).into_iter().collect();
    let s = s.trim();
    let s = s.strip_prefix('+').unwrap_or(s);
    s.parse().ok()
}

/// Reads an optionally signed integer token starting at `i`.
fn int_token(text: &[char], i: usize) -> Option<(i64, usize)> {
    let mut j = i;
    let negative = match text.get(j) {
        Some('-') => {
            j += 1;
            true
        }
        Some('+') => {
            j += 1;
            false
        }
        _ => false,
    };
    let start = j;
    while j < text.len() && text[j].is_ascii_digit() {
        j += 1;
    }
    if j == start || text.get(j).is_some_and(|c| is_word(*c)) {
        return None;
    }
    let digits: String = text[start..j].iter().collect();
    let v: i64 = digits.parse().ok()?;
    Some((if negative { -v } else { v }, j))
}

/// Finds the first label mentioned in `completion`.
///
/// Matching is case-insensitive and anchored at word boundaries. When the
/// completion contains `Label:` only the text after the last occurrence is
/// searched. At each position the longest surface form wins, so "very
/// positive" beats "positive". Labels whose surface form is an integer also
/// match integer tokens of equal value ("+2" matches "2").
pub fn parse_label(completion: &str, label_list: &[String]) -> ParsedLabel {
    let text = normalize(completion);
    let marker: Vec<char> = MARKER.chars().collect();
    let start = (0..text.len().saturating_sub(marker.len() - 1))
        .rev()
        .find(|&i| text[i..].starts_with(&marker))
        .map_or(0, |i| i + marker.len());
    let text = &text[start..];

    let mut forms: Vec<(Vec<char>, usize)> = label_list
        .iter()
        .enumerate()
        .map(|(i, l)| (normalize(l.trim()), i))
        .filter(|(f, _)| !f.is_empty())
        .collect();
    forms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
    let numeric: Vec<(i64, usize)> = label_list
        .iter()
        .enumerate()
        .filter_map(|(i, l)| parse_int(l).map(|v| (v, i)))
        .collect();

    for i in 0..text.len() {
        if i > 0 && is_word(text[i - 1]) {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for (form, idx) in &forms {
            let end = i + form.len();
            if text[i..].starts_with(form) && !(is_word(form[form.len() - 1]) && text.get(end).is_some_and(|c| is_word(*c))) {
                best = Some((form.len(), *idx));
                break;
            }
        }
        if let Some((v, end)) = int_token(text, i) {
            if let Some(&(_, idx)) = numeric.iter().find(|(n, _)| *n == v) {
                if best.is_none_or(|(len, _)| end - i > len) {
                    best = Some((end - i, idx));
                }
            }
        }
        if let Some((_, idx)) = best {
            return ParsedLabel::Label(idx);
        }
    }
    ParsedLabel::Failure
}
