//! Metrics checked against independent brute-force oracles that enumerate
//! confusion cells directly and keep every quantity as an exact fraction.

use haf_core::metrics::{
    category_prf, exact_match_rows, fleiss_kappa, hamming_loss_rows, prf_rows, token_f1, SpanSet,
};
use haf_core::{AspectSpan, General, LabelVector};
use proptest::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frac(i128, i128);

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    fn new(n: i128, d: i128) -> Frac {
        if d == 0 {
            return Frac(0, 1);
        }
        let g = gcd(n, d).max(1);
        Frac(n / g, d / g)
    }
    fn add(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

struct Oracle {
    em: Frac,
    hl: Frac,
    precision: Vec<Frac>,
    recall: Vec<Frac>,
    f1: Vec<Frac>,
    macro_f1: Frac,
    micro_f1: Frac,
}

/// Counts cells by visiting every (item, label) pair; F1 from P and R via
/// the harmonic mean rather than the 2TP form used by the library.
fn oracle(gold: &[Vec<bool>], pred: &[Vec<bool>]) -> Oracle {
    let n = gold.len() as i128;
    let l = gold[0].len();
    let exact = (0..gold.len()).filter(|&i| gold[i] == pred[i]).count() as i128;
    let mut wrong = 0i128;
    let (mut tps, mut fps, mut fns) = (vec![0i128; l], vec![0i128; l], vec![0i128; l]);
    for i in 0..gold.len() {
        for j in 0..l {
            match (gold[i][j], pred[i][j]) {
                (true, true) => tps[j] += 1,
                (false, true) => {
                    fps[j] += 1;
                    wrong += 1
                }
                (true, false) => {
                    fns[j] += 1;
                    wrong += 1
                }
                (false, false) => {}
            }
        }
    }
    let harmonic = |p: Frac, r: Frac| -> Frac {
        if p.0 == 0 || r.0 == 0 {
            Frac(0, 1)
        } else {
            // 2pr / (p + r)
            let num = Frac::new(2 * p.0 * r.0, p.1 * r.1);
            let den = p.add(r);
            Frac::new(num.0 * den.1, num.1 * den.0)
        }
    };
    let precision: Vec<Frac> = (0..l).map(|j| Frac::new(tps[j], tps[j] + fps[j])).collect();
    let recall: Vec<Frac> = (0..l).map(|j| Frac::new(tps[j], tps[j] + fns[j])).collect();
    let f1: Vec<Frac> = (0..l).map(|j| harmonic(precision[j], recall[j])).collect();
    let sum = f1.iter().fold(Frac(0, 1), |a, b| a.add(*b));
    let macro_f1 = Frac::new(sum.0, sum.1 * l as i128);
    let (tp, fp, fn_): (i128, i128, i128) = (tps.iter().sum(), fps.iter().sum(), fns.iter().sum());
    let micro_f1 = harmonic(Frac::new(tp, tp + fp), Frac::new(tp, tp + fn_));
    Oracle {
        em: Frac::new(exact, n),
        hl: Frac::new(wrong, n * l as i128),
        precision,
        recall,
        f1,
        macro_f1,
        micro_f1,
    }
}

fn instance() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<Vec<bool>>)> {
    (1usize..=8, 1usize..=4).prop_flat_map(|(n, l)| {
        let rows = prop::collection::vec(prop::collection::vec(any::<bool>(), l), n);
        (rows.clone(), rows)
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn multilabel_metrics_equal_cell_oracle((gold, pred) in instance()) {
        let o = oracle(&gold, &pred);
        prop_assert!(close(exact_match_rows(&gold, &pred).unwrap(), o.em.value()));
        prop_assert!(close(hamming_loss_rows(&gold, &pred).unwrap(), o.hl.value()));
        let r = prf_rows(&gold, &pred).unwrap();
        for j in 0..gold[0].len() {
            prop_assert!(close(r.per_label[j].precision, o.precision[j].value()));
            prop_assert!(close(r.per_label[j].recall, o.recall[j].value()));
            prop_assert!(close(r.per_label[j].f1, o.f1[j].value()));
        }
        prop_assert!(close(r.macro_f1, o.macro_f1.value()));
        prop_assert!(close(r.micro.f1, o.micro_f1.value()));
    }

    #[test]
    fn em_and_hamming_invariants((gold, pred) in instance()) {
        let em = exact_match_rows(&gold, &pred).unwrap();
        let hl = hamming_loss_rows(&gold, &pred).unwrap();
        prop_assert_eq!(em == 1.0, hl == 0.0);
        prop_assert_eq!(hl, hamming_loss_rows(&pred, &gold).unwrap());
        let cells = (gold.len() * gold[0].len()) as f64;
        prop_assert!(close((hl * cells).round(), hl * cells));
        let n = gold.len() as f64;
        prop_assert!(close((em * n).round(), em * n));
        let r = prf_rows(&gold, &pred).unwrap();
        prop_assert!(r.micro.f1 >= 0.0);
        prop_assert!((0.0..=1.0).contains(&hl) && (0.0..=1.0).contains(&em));
    }

    #[test]
    fn micro_equals_macro_for_identical_columns(col in prop::collection::vec((any::<bool>(), any::<bool>()), 1..8), l in 1usize..5) {
        let gold: Vec<Vec<bool>> = col.iter().map(|(g, _)| vec![*g; l]).collect();
        let pred: Vec<Vec<bool>> = col.iter().map(|(_, p)| vec![*p; l]).collect();
        let r = prf_rows(&gold, &pred).unwrap();
        prop_assert!(close(r.macro_f1, r.micro.f1));
    }

    #[test]
    fn token_f1_invariant_under_resegmentation(
        words in prop::collection::vec("[a-z]{1,6}", 2..6),
        cut in 1usize..5,
        pred_words in prop::collection::vec("[a-z]{1,6}", 0..5),
    ) {
        let cut = cut.min(words.len() - 1);
        let text = words.join(" ");
        let whole = AspectSpan::new(&text, General::Price, 0, text.chars().count()).unwrap();
        let left_len = words[..cut].join(" ").chars().count();
        let left = AspectSpan::new(&text, General::Price, 0, left_len).unwrap();
        let right = AspectSpan::new(&text, General::Price, left_len + 1, text.chars().count()).unwrap();

        let ptext = if pred_words.is_empty() { "x".to_string() } else { pred_words.join(" ") };
        let pspan = AspectSpan::new(&ptext, General::Price, 0, ptext.chars().count()).unwrap();
        let pred: SpanSet = [("r".to_string(), vec![pspan])].into_iter().collect();

        let one: SpanSet = [("r".to_string(), vec![whole])].into_iter().collect();
        let two: SpanSet = [("r".to_string(), vec![left, right])].into_iter().collect();
        prop_assert_eq!(token_f1(&one, &pred), token_f1(&two, &pred));
        prop_assert_eq!(token_f1(&pred, &one), token_f1(&pred, &two));
    }
}

#[test]
fn category_pooling_matches_hand_counts() {
    let v = |s: &[&str]| LabelVector::from_slugs(s.iter().copied()).unwrap();
    let gold = vec![
        v(&["PRODUCT.Color", "PRODUCT.Material"]),
        v(&["PRODUCT.Durability"]),
        v(&["PRODUCT.Color", "PRICE.Affordability"]),
        v(&["PRODUCT.Sensory"]),
    ];
    let pred = vec![
        v(&["PRODUCT.Color"]),
        v(&["PRODUCT.Durability", "PRODUCT.Functionality"]),
        v(&["PRODUCT.Condition"]),
        v(&["PRODUCT.Sensory"]),
    ];
    // PRODUCT children: TP = Color(r1) + Durability(r2) + Sensory(r4) = 3,
    // FP = Functionality(r2) + Condition(r3) = 2,
    // FN = Material(r1) + Color(r3) = 2.
    let cats = category_prf(&gold, &pred).unwrap();
    let (c, p) = cats[General::Product.index()];
    assert_eq!((c.tp, c.fp, c.fn_), (3, 2, 2));
    assert_eq!(p.precision, 3.0 / 5.0);
    assert_eq!(p.recall, 3.0 / 5.0);
    assert_eq!(p.f1, 6.0 / 10.0);
    // Gold PRICE positive with no PRICE predictions.
    let (c, p) = cats[General::Price.index()];
    assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 1));
    assert_eq!(p.f1, 0.0);
    assert!(p.precision_undefined);
}

/// Textbook Fleiss with floats, used to screen candidate matrices.
fn kappa_reference(counts: &[Vec<usize>]) -> f64 {
    let n = counts[0].iter().sum::<usize>() as f64;
    let items = counts.len() as f64;
    let p_bar = counts
        .iter()
        .map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items;
    let pe: f64 = (0..counts[0].len())
        .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64 / (items * n))
        .map(|p| p * p)
        .sum();
    (p_bar - pe) / (1.0 - pe)
}

#[test]
fn brute_force_chance_level_fixtures_give_zero() {
    // Every 4-item, 3-rater, 2-category matrix; keep those whose observed
    // agreement equals chance agreement under exact integer arithmetic.
    let rows: Vec<Vec<usize>> = (0..=3).map(|a| vec![a, 3 - a]).collect();
    let mut found = 0;
    for a in &rows {
        for b in &rows {
            for c in &rows {
                for d in &rows {
                    let m = vec![a.clone(), b.clone(), c.clone(), d.clone()];
                    let agree: usize = m.iter().flatten().map(|&x| x * x.saturating_sub(1)).sum();
                    let col0: usize = m.iter().map(|r| r[0]).sum();
                    let col1 = 12 - col0;
                    // P_bar = agree / 24, Pe = (col0^2 + col1^2) / 144.
                    if agree * 144 == (col0 * col0 + col1 * col1) * 24 && agree != 24 {
                        found += 1;
                        let k = fleiss_kappa(&m).unwrap();
                        assert!(k.abs() < 1e-9, "{m:?} -> {k}");
                        assert!(kappa_reference(&m).abs() < 1e-9);
                    }
                }
            }
        }
    }
    assert!(found > 0);
}

proptest! {
    #[test]
    fn fleiss_matches_textbook(m in (2usize..6, 2usize..4, 1usize..7).prop_flat_map(|(n, k, items)| {
        prop::collection::vec(prop::collection::vec(0..k, n), items).prop_map(move |a| (a, k))
    })) {
        let (assign, k) = m;
        let counts: Vec<Vec<usize>> = assign
            .iter()
            .map(|row| (0..k).map(|c| row.iter().filter(|&&x| x == c).count()).collect())
            .collect();
        let ours = fleiss_kappa(&counts).unwrap();
        let reference = kappa_reference(&counts);
        if reference.is_finite() {
            prop_assert!((ours - reference).abs() < 1e-9);
        } else {
            prop_assert_eq!(ours, 1.0);
        }
    }
}
