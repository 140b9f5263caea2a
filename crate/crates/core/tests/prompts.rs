//! Golden-file checks for both prompt templates.
//!
//! The expected files were written by hand from the template text, not
//! generated by the renderer.

use mkgp::icl::prompt::{render_icl_prompt, render_rationale_prompt, IclInputs, Shot};
use mkgp::icl::{PromptKind, Rationales};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn rationale_prompt_matches_golden_file() {
    let coreset = [
        Shot { id: 40, text: "The battery lasts all day.", label: "positive" },
        Shot { id: 7, text: "Screen cracked within a week.", label: "negative" },
        Shot { id: 12, text: "It's a phone.\n  It makes calls.", label: "neutral" },
        Shot { id: 3, text: "Great camera, awful speaker.", label: "conflict" },
        Shot { id: 99, text: "Arrived on Tuesday.", label: "none" },
        Shot { id: 41, text: "Love the \"night mode\" feature!", label: "positive" },
    ];
    let label_list = labels(&["positive", "negative", "neutral", "conflict", "none"]);
    let prompt = render_rationale_prompt(&coreset, &label_list).unwrap();
    assert_eq!(prompt.kind, PromptKind::RationaleGeneration);
    assert_eq!(prompt.source_ids, vec![40, 7, 12, 3, 99, 41]);
    assert_eq!(prompt.text, golden("rationale_prompt.txt"));
}

#[test]
fn icl_prompt_matches_golden_file() {
    let rationales = Rationales::new(
        "positive: praise, satisfaction.\nnegative: complaints, defects.\nit's fine: flat, factual tone.\n",
    )
    .unwrap();
    let demonstrations = [
        Shot { id: 5, text: "Charges fast and lasts long.", label: "positive" },
        Shot { id: 2, text: "Dies by noon.", label: "negative" },
        Shot { id: 9, text: "Battery is a battery.", label: "it's fine" },
    ];
    let label_list = labels(&["positive", "negative", "it's fine"]);
    let prompt = render_icl_prompt(&IclInputs {
        query_id: 77,
        query_text: "Lasts two days\non a single charge.",
        rationales: &rationales,
        demonstrations: &demonstrations,
        label_list: &label_list,
        target: "battery life",
        expected_shots: 3,
    })
    .unwrap();
    assert_eq!(prompt.kind, PromptKind::Icl);
    assert_eq!(prompt.query_id, Some(77));
    assert_eq!(prompt.source_ids, vec![5, 2, 9]);
    assert_eq!(prompt.text, golden("icl_prompt.txt"));
}
