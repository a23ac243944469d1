use std::sync::Arc;

use haf_core::hierarchy::{
    predict_flat, predict_hierarchical, CountingScorer, Gate, HierarchyError, LabelScorer, ScorerSet,
};
use haf_core::rules::RuleConfig;
use haf_core::{enforce_hierarchy, General, Label, LabelVector, Review, N_GENERAL, N_LABELS};
use proptest::prelude::*;

struct Fixed {
    labels: Vec<Label>,
    scores: Vec<f64>,
}

impl LabelScorer for Fixed {
    fn labels(&self) -> &[Label] {
        &self.labels
    }
    fn score(&self, _: &Review) -> Result<Vec<f64>, HierarchyError> {
        Ok(self.labels.iter().map(|l| self.scores[l.index()]).collect())
    }
}

type Counted = Arc<CountingScorer<Fixed>>;

fn build(scores: &[f64]) -> (ScorerSet, Counted, [Counted; N_GENERAL]) {
    let scorer = |labels: Vec<Label>| Arc::new(CountingScorer::new(Fixed { labels, scores: scores.to_vec() }));
    let general = scorer(General::ALL.iter().map(|&g| Label::General(g)).collect());
    let specific = General::ALL.map(|g| scorer(g.specifics().map(Label::Specific).collect()));
    let set = ScorerSet::new(
        Box::new(general.clone()),
        specific.clone().map(|s| Box::new(s) as Box<dyn LabelScorer>),
    )
    .unwrap();
    (set, general, specific)
}

/// Scores drawn from a small grid so ties with the threshold are common.
fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..=10).prop_map(|x| x as f64 / 10.0), N_LABELS)
}

fn threshold() -> impl Strategy<Value = f64> {
    (0u8..=10).prop_map(|x| x as f64 / 10.0)
}

fn subset(a: &LabelVector, b: &LabelVector) -> bool {
    a.labels().all(|l| b.get(l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gating_is_sound_lazy_and_monotone(s in scores(), t in threshold(), t2 in threshold()) {
        let review = Review::new("r", "anything").unwrap();
        let (set, general, specific) = build(&s);
        let hier = predict_hierarchical(&review, &set, t, Gate::Predicted).unwrap();

        // Oracle: zero the specific scores under closed generals, threshold
        // everything, then repair.
        let mut masked = s.clone();
        for g in General::ALL {
            if s[g.index()] < t {
                for sp in g.specifics() {
                    masked[Label::Specific(sp).index()] = 0.0;
                }
            }
        }
        let bits: Vec<bool> = masked.iter().map(|&x| x >= t).collect();
        let expected = enforce_hierarchy(LabelVector::from_slice(&bits).unwrap());
        prop_assert_eq!(hier, expected);
        prop_assert!(hier.is_consistent());

        prop_assert_eq!(general.calls(), 1);
        for g in General::ALL {
            let open = s[g.index()] >= t;
            prop_assert_eq!(specific[g.index()].calls(), usize::from(open));
        }

        let (lo, hi) = if t <= t2 { (t, t2) } else { (t2, t) };
        let (set2, _, _) = build(&s);
        let h_lo = predict_hierarchical(&review, &set2, lo, Gate::Predicted).unwrap();
        let h_hi = predict_hierarchical(&review, &set2, hi, Gate::Predicted).unwrap();
        prop_assert!(subset(&h_hi, &h_lo));
        let f_lo = predict_flat(&review, &set2, lo).unwrap().labels;
        let f_hi = predict_flat(&review, &set2, hi).unwrap().labels;
        prop_assert!(subset(&f_hi, &f_lo));
    }

    #[test]
    fn open_gates_make_hierarchical_equal_repaired_flat(mut s in scores(), t in threshold()) {
        for g in 0..N_GENERAL {
            s[g] = 1.0;
        }
        let review = Review::new("r", "anything").unwrap();
        let (set, _, _) = build(&s);
        let hier = predict_hierarchical(&review, &set, t, Gate::Predicted).unwrap();
        let flat = predict_flat(&review, &set, t).unwrap();
        prop_assert_eq!(hier, enforce_hierarchy(flat.labels));
    }
}

#[test]
fn closed_gates_invoke_no_specific_scorer() {
    let review = Review::new("r", "x").unwrap();
    let mut s = vec![0.9; N_LABELS];
    s[..N_GENERAL].fill(0.1);
    let (set, _, specific) = build(&s);
    let out = predict_hierarchical(&review, &set, 0.5, Gate::Predicted).unwrap();
    assert!(out.is_empty());
    assert!(specific.iter().all(|c| c.calls() == 0));
}

#[test]
fn only_price_open_runs_only_price_children() {
    let review = Review::new("r", "x").unwrap();
    let mut s = vec![0.0; N_LABELS];
    let price: Label = "PRICE".parse().unwrap();
    let afford: Label = "PRICE.Affordability".parse().unwrap();
    s[price.index()] = 0.8;
    s[afford.index()] = 0.9;
    let (set, _, specific) = build(&s);
    let out = predict_hierarchical(&review, &set, 0.5, Gate::Predicted).unwrap();
    assert_eq!(out, LabelVector::from_labels([afford]));
    for g in General::ALL {
        assert_eq!(specific[g.index()].calls(), usize::from(g == General::Price));
    }
}

#[test]
fn color_swap_review_is_a_fulfillment_error_under_gating() {
    let scorers = ScorerSet::from_rules(Arc::new(RuleConfig::shipped()));
    let review = Review::new("r", "Blue order ko pero pink dumating.").unwrap();
    let out = predict_hierarchical(&review, &scorers, 0.5, Gate::Predicted).unwrap();
    assert!(out.get("DELIVERY.Correctness".parse().unwrap()));
    assert!(!out.get("PRODUCT.Correctness".parse().unwrap()));
    assert!(!out.get("PRODUCT.Color".parse().unwrap()));
}
