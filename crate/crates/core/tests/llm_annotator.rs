use std::collections::BTreeMap;
use std::sync::Arc;

use haf_core::corpus::synthetic_corpus;
use haf_core::llm::{
    align_spans, build_extraction_prompt, build_identification_prompt, parse_boolean_output, parse_span_output,
    Annotator, ChatProvider, Extraction, FewShot, GenerationSettings, Identification, PromptTemplate,
    RuleMockProvider, ScriptedProvider, REVIEW_PREFIX,
};
use haf_core::rules::{tag_review, RuleConfig};
use haf_core::{General, LabelVector, Review};
use proptest::prelude::*;

fn review(text: &str) -> Review {
    Review::new("t-1", text).unwrap()
}

fn three_examples() -> Vec<FewShot> {
    ["Ang bilis dumating!", "mura pero sira", "Mabait si seller"]
        .into_iter()
        .map(|t| FewShot {
            text: t.into(),
            labels: Some(tag_review(&review(t), &RuleConfig::shipped()).labels),
            spans: None,
        })
        .collect()
}

#[test]
fn prompts_are_byte_stable() {
    let t = PromptTemplate::with_examples(three_examples()).unwrap();
    let s = GenerationSettings::default();
    let r = review("Sulit, ang bilis dumating.");
    let first = build_identification_prompt(&r, &t, &s).to_json();
    for _ in 0..50 {
        assert_eq!(build_identification_prompt(&r, &t, &s).to_json(), first);
    }
    let again = PromptTemplate::from_json_str(&t.to_json()).unwrap();
    assert_eq!(again.version(), t.version());
    assert_eq!(build_identification_prompt(&r, &again, &s).to_json(), first);
}

#[test]
fn few_shot_examples_appear_in_template_order() {
    let t = PromptTemplate::with_examples(three_examples()).unwrap();
    let req = build_identification_prompt(&review("target"), &t, &GenerationSettings::default());
    let roles: Vec<&str> = req.messages.iter().map(|m| m.role.as_str()).collect();
    assert_eq!(roles, ["system", "user", "assistant", "user", "assistant", "user", "assistant", "user"]);
    let users: Vec<&str> = req.messages.iter().filter(|m| m.role == "user").map(|m| m.content.as_str()).collect();
    assert_eq!(
        users,
        [
            "Review:\nAng bilis dumating!",
            "Review:\nmura pero sira",
            "Review:\nMabait si seller",
            "Review:\ntarget"
        ]
    );
    for a in req.messages.iter().filter(|m| m.role == "assistant") {
        parse_boolean_output(&a.content).unwrap();
    }

    let empty = PromptTemplate::with_examples(vec![]).unwrap();
    let req = build_identification_prompt(&review("target"), &empty, &GenerationSettings::default());
    assert_eq!(req.messages.len(), 2);
    assert_eq!(req.messages[1].content, format!("{REVIEW_PREFIX}target"));
    assert_eq!(req.target_text(), Some("target"));
    assert!(!req.is_extraction());
    assert!(build_extraction_prompt(&review("x"), &empty, &GenerationSettings::default()).is_extraction());
}

#[test]
fn version_tracks_content() {
    let a = PromptTemplate::with_examples(three_examples()).unwrap();
    let mut ex = three_examples();
    ex.swap(0, 1);
    let b = PromptTemplate::with_examples(ex).unwrap();
    assert_ne!(a.version(), b.version());
    assert_eq!(a.version().len(), 16);
    assert_eq!(PromptTemplate::default().version(), PromptTemplate::default().version());
}

#[test]
fn inconsistent_example_is_rejected() {
    let bad = LabelVector::from_labels(["PRICE.Affordability".parse().unwrap()]);
    let mut raw = bad;
    raw.general = [false; 4];
    let err = PromptTemplate::with_examples(vec![FewShot {
        text: "mura".into(),
        labels: Some(raw),
        spans: None,
    }]);
    assert!(err.is_err());
    let err = PromptTemplate::with_examples(vec![FewShot {
        text: "mura".into(),
        labels: None,
        spans: Some(BTreeMap::from([(General::Price, vec!["mahal".to_string()])])),
    }]);
    assert!(err.is_err());
}

#[test]
fn mock_annotates_whole_synthetic_corpus() {
    let corpus = synthetic_corpus();
    let reviews: Vec<Review> = corpus.reviews().cloned().collect();
    let config = Arc::new(RuleConfig::shipped());
    for wrapped in [false, true] {
        let provider = Arc::new(RuleMockProvider::new(config.clone()).wrapped(wrapped));
        let annotator = Annotator::new(provider, PromptTemplate::default()).with_parallelism(4);
        let outcomes = annotator.annotate_all(&reviews);
        assert_eq!(outcomes.len(), 60);
        for (o, r) in outcomes.iter().zip(&reviews) {
            assert_eq!(o.review_id, r.id);
            assert_eq!(o.attempts, 1);
            let labels = o.labels().expect("annotated");
            assert!(labels.is_consistent());
            assert_eq!(*labels, tag_review(r, &config).labels);
        }
        let spans = annotator.extract_all(&reviews);
        for (o, r) in spans.iter().zip(&reviews) {
            let Extraction::Extracted { spans, .. } = &o.result else {
                panic!("extraction failed for {}", r.id)
            };
            for s in spans {
                s.validate(&r.text).unwrap();
            }
        }
    }
}

#[test]
fn malformed_output_exhausts_retries() {
    let provider = Arc::new(ScriptedProvider::new(vec![], "I think this review is about delivery."));
    let annotator = Annotator::new(provider.clone(), PromptTemplate::default());
    let out = annotator.annotate(&review("bilis dumating"));
    assert_eq!(provider.calls(), 3);
    assert_eq!(out.attempts, 3);
    match &out.result {
        Identification::Unannotated { failures } => assert_eq!(failures.len(), 3),
        other => panic!("expected unannotated, got {other:?}"),
    }
    let json = serde_json::to_value(&out).unwrap();
    assert_eq!(json["status"], "unannotated");
}

#[test]
fn retry_recovers_on_later_attempt() {
    let ok = r#"{"DELIVERY": true, "DELIVERY.Timeliness": true}"#;
    let provider = Arc::new(ScriptedProvider::new(
        vec![Ok("nope".into()), Ok(format!("```json\n{ok}\n```"))],
        "unused",
    ));
    let annotator = Annotator::new(provider.clone(), PromptTemplate::default());
    let out = annotator.annotate(&review("bilis dumating"));
    assert_eq!(out.attempts, 2);
    assert!(out.labels().unwrap().get("DELIVERY.Timeliness".parse().unwrap()));
}

#[test]
fn extraction_alignment() {
    let text = "Sobrang mura ng item, sulit!";
    let answers = BTreeMap::from([(
        General::Price,
        vec!["mura".to_string(), "sobrang mura".to_string(), "cheap talaga".to_string()],
    )]);
    let a = align_spans(text, &answers);
    let got: Vec<(usize, usize)> = a.spans.iter().map(|s| (s.start, s.end)).collect();
    assert_eq!(got, [(0, 12), (8, 12)]);
    assert_eq!(a.dropped.len(), 1);
    assert_eq!(a.dropped[0].text, "cheap talaga");

    let short = align_spans("mura ang item", &BTreeMap::from([(General::Price, vec!["mura".to_string()])]));
    assert_eq!((short.spans[0].start, short.spans[0].end), (0, 4));
}

#[test]
fn mock_extraction_matches_rule_surfaces() {
    let provider = RuleMockProvider::new(Arc::new(RuleConfig::shipped()));
    let req = build_extraction_prompt(&review("mura ang item"), &PromptTemplate::default(), &GenerationSettings::default());
    let raw = provider.complete(&req).unwrap();
    let answers = parse_span_output(&raw).unwrap();
    assert_eq!(answers.get(&General::Price).map(Vec::as_slice), Some(&["mura".to_string()][..]));
}

proptest! {
    #[test]
    fn parsers_are_total(s in any::<String>()) {
        if let Ok(p) = parse_boolean_output(&s) {
            prop_assert!(p.labels.is_consistent());
        }
        let _ = parse_span_output(&s);
    }

    #[test]
    fn parsers_are_total_on_jsonish_input(s in r#"[{}\[\]":,a-zA-Z. truefals\\`]{0,60}"#) {
        if let Ok(p) = parse_boolean_output(&s) {
            prop_assert!(p.labels.is_consistent());
        }
        let _ = parse_span_output(&s);
    }

    #[test]
    fn aligned_spans_are_sound(
        text in "[a-zA-Z ñ!]{1,40}",
        picks in prop::collection::vec((0usize..40, 0usize..10), 0..6),
        junk in prop::collection::vec("[a-z]{1,6}", 0..3),
    ) {
        let chars: Vec<char> = text.chars().collect();
        let mut strings: Vec<String> = picks
            .iter()
            .map(|&(s, len)| {
                let s = s % chars.len();
                let e = (s + len).min(chars.len());
                chars[s..e].iter().collect()
            })
            .collect();
        strings.extend(junk);
        let answers = BTreeMap::from([(General::Product, strings.clone())]);
        let a = align_spans(&text, &answers);
        prop_assert!(a.spans.len() + a.dropped.len() <= strings.len());
        for span in &a.spans {
            span.validate(&text).unwrap();
            prop_assert!(span.start < span.end);
        }
    }
}
