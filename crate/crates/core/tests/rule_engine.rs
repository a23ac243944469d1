use haf_core::labels::char_slice;
use haf_core::rules::{
    apply_disambiguation, match_lexicon, tag_review, LexiconEntry, Pattern, RuleConfig,
};
use haf_core::{Label, LabelVector, Review, Specific};
use proptest::prelude::*;

fn review(text: &str) -> Review {
    Review::new("fixture", text).unwrap()
}

fn slugs(v: &LabelVector) -> Vec<&'static str> {
    v.labels().map(Label::slug).collect()
}

#[test]
fn shipped_rules_cited_fixtures() {
    let cfg = RuleConfig::shipped();
    let cases: &[(&str, &[&str])] = &[
        ("mura ang item", &["PRICE", "PRICE.Affordability"]),
        ("bilis dumating", &["DELIVERY", "DELIVERY.Timeliness"]),
        ("bilis ng epekto", &["PRODUCT", "PRODUCT.Effectiveness"]),
        (
            "mura at ang bilis dumating",
            &["DELIVERY", "PRICE", "DELIVERY.Timeliness", "PRICE.Affordability"],
        ),
    ];
    for (text, expected) in cases {
        let out = tag_review(&review(text), &cfg);
        assert_eq!(slugs(&out.labels), *expected, "{text}");
    }
}

#[test]
fn color_contrast_is_a_fulfillment_error() {
    let cfg = RuleConfig::shipped();
    let out = tag_review(&review("Blue order ko pero pink dumating."), &cfg);
    let delivery_correctness: Specific = "DELIVERY.Correctness".parse().unwrap();
    let product_correctness: Specific = "PRODUCT.Correctness".parse().unwrap();
    assert!(out.labels.has_specific(delivery_correctness));
    assert!(!out.labels.has_specific(product_correctness));
    assert!(!out.labels.has_specific("PRODUCT.Color".parse().unwrap()));
    let fired: Vec<&str> = out.matches.iter().map(|m| m.span.surface.as_str()).collect();
    assert_eq!(fired, vec!["Blue", "pink"]);

    // Without a contrast, a color word is a color opinion.
    let out = tag_review(&review("Ganda ng kulay, pink talaga"), &cfg);
    assert_eq!(slugs(&out.labels), vec!["PRODUCT", "PRODUCT.Color"]);
}

#[test]
fn each_shipped_rule_resolves_its_branches() {
    let cfg = RuleConfig::shipped();
    let cases: &[(&str, &str, Option<&str>)] = &[
        ("bilis", "ang bilis mag reply", Some("SERVICE.Responsiveness")),
        ("color-vs-fulfillment", "mali ang kulay na pinadala", Some("DELIVERY.Correctness")),
        ("color-vs-fulfillment", "ganda ng color", Some("PRODUCT.Color")),
        ("dumating", "dumating agad", Some("DELIVERY.Timeliness")),
        ("dumating", "basag nung dumating", Some("DELIVERY.Condition")),
        ("dumating", "kulang nung dumating", Some("DELIVERY.Correctness")),
        ("dumating", "dumating na po", None),
        ("sira", "sira na pagdating", Some("DELIVERY.Condition")),
        ("sira", "nasira after two weeks", Some("PRODUCT.Durability")),
        ("sira", "sira yung zipper", Some("PRODUCT.Condition")),
        ("mali", "maling size binigay", Some("DELIVERY.Correctness")),
        ("mali", "mali ang description", Some("PRODUCT.Correctness")),
        ("mali", "mali ako", None),
        ("mahal", "mahal pero sulit", Some("PRICE.Value_for_Money")),
        ("mahal", "sobrang mahal", Some("PRICE.Affordability")),
        ("mahal", "mahal kita", None),
        ("tagal", "ang tagal dumating", Some("DELIVERY.Timeliness")),
        ("tagal", "matagal sumagot", Some("SERVICE.Responsiveness")),
        ("tagal", "tumagal ng tatlong buwan", Some("PRODUCT.Durability")),
        ("balot", "yupi yung balot", Some("DELIVERY.Condition")),
        ("balot", "maayos ang pagkabalot", Some("SERVICE.Handling")),
        ("balot", "packaging", Some("DELIVERY.Condition")),
        ("amoy", "amoy ng box", Some("DELIVERY.Condition")),
        ("amoy", "amoy rosas", Some("PRODUCT.Sensory")),
        ("seller", "seller mabilis sumagot", Some("SERVICE.Responsiveness")),
        ("seller", "legit seller", Some("SERVICE.Trustworthiness")),
        ("seller", "mabait si seller", Some("SERVICE.Handling")),
        ("seller", "thank you seller", Some("SERVICE.General")),
    ];
    for (rule_id, text, expected) in cases {
        let rule = cfg
            .disambiguation
            .iter()
            .find(|r| r.id == *rule_id)
            .unwrap_or_else(|| panic!("missing rule {rule_id}"));
        let got = apply_disambiguation(&review(text), std::slice::from_ref(rule));
        let got: Vec<&str> = got.iter().map(|m| m.specific.slug()).collect();
        assert_eq!(got, expected.iter().copied().collect::<Vec<_>>(), "{rule_id}: {text}");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = RuleConfig::shipped();
    let r = review("Sobrang MURAAA pero ang tagal dumating, sira pa yung box. Legit seller naman.");
    let first = serde_json::to_string(&tag_review(&r, &cfg)).unwrap();
    for _ in 0..100 {
        assert_eq!(serde_json::to_string(&tag_review(&r, &cfg)).unwrap(), first);
    }
}

#[test]
fn disambiguation_overrides_lexicon_on_same_term() {
    let cfg = RuleConfig::shipped();
    // "kulay" is also a color-rule trigger; the lexicon entry for "color"
    // words must not leak through when the rule resolves to fulfillment.
    let out = tag_review(&review("iba ang kulay na dumating"), &cfg);
    assert!(out
        .matches
        .iter()
        .all(|m| m.specific != "PRODUCT.Color".parse().unwrap()));
}

fn taglish_text() -> impl Strategy<Value = String> {
    let words = prop::sample::select(vec![
        "mura", "murang", "bilis", "dumating", "epekto", "ang", "ng", "item", "sira", "kulay",
        "pink", "blue", "pero", "seller", "legit", "tagal", "sulit", "MAHAL", "presyo", "amoy",
        "box", "Muraaaa", "ñ", "!", ",", "2", "cm", "php", "sobrang", "size", "mali",
    ]);
    prop::collection::vec(words, 0..14).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn spans_hierarchy_and_determinism(text in taglish_text()) {
        let cfg = RuleConfig::shipped();
        let r = Review { id: "p".into(), text: text.clone(), source: None };
        let out = tag_review(&r, &cfg);
        prop_assert!(out.labels.is_consistent());
        for m in &out.matches {
            prop_assert_eq!(char_slice(&text, m.span.start, m.span.end).unwrap(), m.span.surface.as_str());
            prop_assert_eq!(m.specific.parent(), m.span.category);
            prop_assert!(out.labels.has_specific(m.specific));
        }
        prop_assert_eq!(tag_review(&r, &cfg), out);
    }

    #[test]
    fn lexicon_growth_is_monotone(text in taglish_text(), extra in prop::sample::select(vec!["ang", "item", "pero", "box", "2"])) {
        let cfg = RuleConfig::shipped();
        let r = Review { id: "p".into(), text, source: None };
        let before = match_lexicon(&r, &cfg.lexicon);
        let mut grown = cfg.lexicon.clone();
        grown.push(LexiconEntry::new(Pattern::literal(extra).unwrap(), vec!["PRODUCT.General".parse().unwrap()]).unwrap());
        let after = match_lexicon(&r, &grown);
        for m in &before {
            prop_assert!(after.contains(m));
        }
        let mut cfg2 = cfg.clone();
        cfg2.lexicon = grown;
        let tagged_before = tag_review(&r, &cfg);
        let tagged_after = tag_review(&r, &cfg2);
        for m in &tagged_before.matches {
            prop_assert!(tagged_after.matches.contains(m));
        }
    }
}
