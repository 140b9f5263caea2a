//! Prompt templates for rationale generation and in-context classification.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEMONSTRATIONS_HEADER: &str = "\nDemonstrations:\n";
pub const DEMO_LABEL_PREFIX: &str = "Label: ";
const LABELS_HEADER: &str = "Sentiment Labels: ";

/// Target phrase used when the dataset does not name one.
pub const DEFAULT_TARGET: &str = "the text as a whole";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    RationaleGeneration,
    Icl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub text: String,
    /// Coreset ids for rationale prompts, demonstration ids for ICL prompts.
    pub source_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<u64>,
}

/// A labelled text shown to the model.
#[derive(Debug, Clone, Copy)]
pub struct Shot<'a> {
    pub id: u64,
    pub text: &'a str,
    pub label: &'a str,
}

/// Label descriptions produced by the rationale model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationales {
    pub text: String,
}

impl Rationales {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(Error::Schema("rationale text is empty".into()));
        }
        Ok(Rationales { text })
    }

    /// Labels that never appear at the start of a line of the description.
    pub fn missing_labels<'a>(&self, label_list: &'a [String]) -> Vec<&'a str> {
        let heads: Vec<String> = self
            .text
            .lines()
            .map(|l| strip_markup(l).to_lowercase())
            .collect();
        label_list
            .iter()
            .filter(|label| {
                let l = label.to_lowercase();
                !heads.iter().any(|h| h.starts_with(&l))
            })
            .map(String::as_str)
            .collect()
    }
}

/// Drops leading bullets and emphasis, keeping a sign that starts a number.
fn strip_markup(line: &str) -> &str {
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        let signed_number = (c == '-' || c == '+') && rest[1..].starts_with(|d: char| d.is_ascii_digit());
        if c.is_alphanumeric() || signed_number {
            break;
        }
        rest = &rest[c.len_utf8()..];
    }
    rest
}

/// Renders a list the way Python's `str(list_of_str)` does.
pub fn python_list_repr(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| python_str_repr(s)).collect();
    format!("[{}]", quoted.join(", "))
}

fn python_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Inverse of [`python_list_repr`] for the label block of a rationale prompt.
pub fn labels_from_rationale_prompt(prompt: &str) -> Option<Vec<String>> {
    let line = prompt.lines().find_map(|l| l.strip_prefix(LABELS_HEADER))?;
    parse_python_list(line.trim())
}

fn parse_python_list(s: &str) -> Option<Vec<String>> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let mut out = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        let Some(quote) = chars.next() else { break };
        if quote != '\'' && quote != '"' {
            return None;
        }
        let mut item = String::new();
        loop {
            match chars.next()? {
                '\\' => match chars.next()? {
                    'n' => item.push('\n'),
                    'r' => item.push('\r'),
                    't' => item.push('\t'),
                    c => item.push(c),
                },
                c if c == quote => break,
                c => item.push(c),
            }
        }
        out.push(item);
    }
    Some(out)
}

/// Collapses internal line breaks so a text occupies a single prompt line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn write_shots(out: &mut String, shots: &[Shot<'_>]) {
    for (i, shot) in shots.iter().enumerate() {
        let _ = writeln!(out, "({}) Text: {}", i + 1, one_line(shot.text));
        let _ = writeln!(out, "    {DEMO_LABEL_PREFIX}{}", shot.label);
    }
}

pub fn render_rationale_prompt(coreset: &[Shot<'_>], label_list: &[String]) -> Result<Prompt> {
    if coreset.is_empty() {
        return Err(Error::InvalidParameter("rationale prompt needs a non-empty coreset".into()));
    }
    let mut text = String::new();
    text.push_str(
        "Based on the representative examples provided below, generate detailed descriptions for each sentiment label.\n\n",
    );
    text.push_str("Examples:\n");
    write_shots(&mut text, coreset);
    let _ = writeln!(text, "{LABELS_HEADER}{}", python_list_repr(label_list));
    text.push('\n');
    text.push_str("For each sentiment label, provide a comprehensive description covering:\n");
    text.push_str("- Lexical Patterns\n");
    text.push_str("- Semantic-Pragmatic Features\n");
    text.push_str("- Domain-Attribute Associations\n");
    Ok(Prompt {
        kind: PromptKind::RationaleGeneration,
        text,
        source_ids: coreset.iter().map(|s| s.id).collect(),
        query_id: None,
    })
}

pub struct IclInputs<'a> {
    pub query_id: u64,
    pub query_text: &'a str,
    pub rationales: &'a Rationales,
    /// In retrieval order, most similar first.
    pub demonstrations: &'a [Shot<'a>],
    pub label_list: &'a [String],
    pub target: &'a str,
    pub expected_shots: usize,
}

pub fn render_icl_prompt(inputs: &IclInputs<'_>) -> Result<Prompt> {
    if inputs.demonstrations.len() != inputs.expected_shots {
        return Err(Error::InvalidParameter(format!(
            "expected {} demonstrations, got {}",
            inputs.expected_shots,
            inputs.demonstrations.len()
        )));
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "Analyze the sentiment expressed in the given Query Text toward the specified target {}.",
        inputs.target
    );
    let _ = writeln!(
        text,
        "The sentiment label must be selected from the following set: {}.",
        python_list_repr(inputs.label_list)
    );
    text.push_str("Refer to the provided label descriptions and example demonstrations to guide your classification.\n\n");
    text.push_str("Label Descriptions:\n");
    text.push_str(&inputs.rationales.text);
    text.push('\n');
    text.push_str(DEMONSTRATIONS_HEADER);
    write_shots(&mut text, inputs.demonstrations);
    text.push('\n');
    let _ = writeln!(text, "Query Text: {}", one_line(inputs.query_text));
    Ok(Prompt {
        kind: PromptKind::Icl,
        text,
        source_ids: inputs.demonstrations.iter().map(|s| s.id).collect(),
        query_id: Some(inputs.query_id),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn python_repr_matches_str_of_list() {
        assert_eq!(python_list_repr(&labels(&["negative", "positive"])), "['negative', 'positive']");
        assert_eq!(python_list_repr(&labels(&["it's"])), "[\"it's\"]");
        assert_eq!(python_list_repr(&labels(&["a'b\"c"])), "['a\\'b\"c']");
        assert_eq!(python_list_repr(&[]), "[]");
    }

    #[test]
    fn label_block_round_trips() {
        let ls = labels(&["very negative", "it's fine", "a'b\"c", "-3"]);
        let shots = [Shot {
            id: 1,
            text: "x",
            label: "-3",
        }];
        let p = render_rationale_prompt(&shots, &ls).unwrap();
        assert_eq!(labels_from_rationale_prompt(&p.text).unwrap(), ls);
    }

    #[test]
    fn rationale_prompt_lists_every_example_and_label_once() {
        let ls = labels(&["neg", "pos"]);
        let shots = [
            Shot {
                id: 4,
                text: "awful service",
                label: "neg",
            },
            Shot {
                id: 9,
                text: "lovely\nfood",
                label: "pos",
            },
        ];
        let p = render_rationale_prompt(&shots, &ls).unwrap();
        assert_eq!(p.kind, PromptKind::RationaleGeneration);
        assert_eq!(p.source_ids, vec![4, 9]);
        assert_eq!(p.text.matches("awful service").count(), 1);
        assert_eq!(p.text.matches("lovely food").count(), 1);
        assert_eq!(p.text.matches("['neg', 'pos']").count(), 1);
        assert!(render_rationale_prompt(&[], &ls).is_err());
    }

    #[test]
    fn icl_prompt_orders_demonstrations_and_puts_query_last() {
        let ls = labels(&["neg", "pos"]);
        let r = Rationales::new("neg: bad things\npos: good things").unwrap();
        let texts: Vec<String> = (0..10).map(|i| format!("demo text {i}")).collect();
        let shots: Vec<Shot> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Shot {
                id: 100 + i as u64,
                text: t,
                label: &ls[i % 2],
            })
            .collect();
        let inputs = IclInputs {
            query_id: 7,
            query_text: "the query",
            rationales: &r,
            demonstrations: &shots,
            label_list: &ls,
            target: DEFAULT_TARGET,
            expected_shots: 10,
        };
        let p = render_icl_prompt(&inputs).unwrap();
        let mut last = 0;
        for t in &texts {
            let pos = p.text.find(&format!("Text: {t}\n")).unwrap();
            assert!(pos > last);
            last = pos;
        }
        assert_eq!(p.text.matches("the query").count(), 1);
        assert!(p.text.find("Query Text: the query").unwrap() > last);
        assert_eq!(p.query_id, Some(7));

        let short = IclInputs {
            demonstrations: &shots[..9],
            ..inputs
        };
        assert!(render_icl_prompt(&short).is_err());
    }

    #[test]
    fn missing_labels_reports_undescribed_labels() {
        let ls = labels(&["negative", "neutral", "positive"]);
        let r = Rationales::new("**Negative**: harsh words\n- Positive: praise").unwrap();
        assert_eq!(r.missing_labels(&ls), vec!["neutral"]);
        let numeric = labels(&["-1", "0", "1"]);
        let r = Rationales::new("- -1: bad\n* 0: flat").unwrap();
        assert_eq!(r.missing_labels(&numeric), vec!["1"]);
        assert!(Rationales::new("  \n").is_err());
    }
}
