//! Fleiss' kappa for a fixed number of raters per item.
//!
//! With `n_ij` the number of raters putting item `i` in category `j`,
//! `N` items and `n` raters per item:
//!
//! ```text
//! P_bar  = sum_ij n_ij (n_ij - 1) / (N n (n - 1))
//! Pe_bar = sum_j (sum_i n_ij)^2 / (N n)^2
//! kappa  = (P_bar - Pe_bar) / (1 - Pe_bar)
//! ```
//!
//! All sums are integers, so kappa is formed as one exact ratio and divided
//! once. When every rater agrees on every item (`P_bar = 1`) the ratio is
//! 0/0 and kappa is defined as 1.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::labels::LabelVector;
use crate::taxonomy::{Label, N_LABELS};

/// Kappa from an `items x categories` count matrix.
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64, MetricsError> {
    let Some(first) = counts.first() else {
        return Err(MetricsError::Empty);
    };
    let k = first.len();
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(MetricsError::TooFewRaters(raters));
    }
    let mut agree: i128 = 0;
    let mut column = vec![0i128; k];
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(MetricsError::Ragged { item: i });
        }
        let n_i: usize = row.iter().sum();
        if n_i != raters {
            return Err(MetricsError::UnequalRaters {
                item: i,
                expected: raters,
                got: n_i,
            });
        }
        for (j, &c) in row.iter().enumerate() {
            let c = c as i128;
            agree += c * (c - 1);
            column[j] += c;
        }
    }
    let items = counts.len() as i128;
    let n = raters as i128;
    // P_bar = agree / pairs, Pe_bar = chance / total^2.
    let pairs = items * n * (n - 1);
    let total_sq = (items * n) * (items * n);
    let chance: i128 = column.iter().map(|c| c * c).sum();
    if agree == pairs {
        return Ok(1.0);
    }
    let num = agree * total_sq - chance * pairs;
    let den = pairs * (total_sq - chance);
    Ok(num as f64 / den as f64)
}

/// Kappa from an `items x raters` matrix of category indices.
pub fn fleiss_kappa_from_assignments(
    assignments: &[Vec<usize>],
    n_categories: usize,
) -> Result<f64, MetricsError> {
    let counts = assignments
        .iter()
        .map(|row| {
            let mut c = vec![0usize; n_categories];
            for &cat in row {
                *c.get_mut(cat).ok_or(MetricsError::CategoryOutOfRange {
                    category: cat,
                    n_categories,
                })? += 1;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    fleiss_kappa(&counts)
}

/// Per-label kappa (presence vs absence) and the unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelKappa {
    pub per_label: Vec<LabelKappa>,
    pub mean: f64,
    pub n_items: usize,
    pub n_raters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelKappa {
    pub label: Label,
    pub kappa: f64,
}

/// `ratings[item][rater]`; every item needs the same number of raters.
pub fn multilabel_fleiss(ratings: &[Vec<LabelVector>], labels: &[Label]) -> Result<MultiLabelKappa, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n_raters = ratings.first().map_or(0, Vec::len);
    let mut per_label = Vec::with_capacity(labels.len());
    for &label in labels {
        let counts: Vec<Vec<usize>> = ratings
            .iter()
            .map(|row| {
                let present = row.iter().filter(|v| v.get(label)).count();
                vec![row.len() - present, present]
            })
            .collect();
        per_label.push(LabelKappa {
            label,
            kappa: fleiss_kappa(&counts)?,
        });
    }
    let mean = per_label.iter().map(|k| k.kappa).sum::<f64>() / per_label.len() as f64;
    Ok(MultiLabelKappa {
        per_label,
        mean,
        n_items: ratings.len(),
        n_raters,
    })
}

/// Per-label kappa over all 25 labels.
pub fn multilabel_fleiss_all(ratings: &[Vec<LabelVector>]) -> Result<MultiLabelKappa, MetricsError> {
    let labels: Vec<Label> = Label::all().collect();
    debug_assert_eq!(labels.len(), N_LABELS);
    multilabel_fleiss(ratings, &labels)
}

/// Conventional verbal band for a kappa value.
pub fn interpret_kappa(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "Poor",
        k if k < 0.20 => "Slight",
        k if k < 0.40 => "Fair",
        k if k < 0.60 => "Moderate",
        k if k < 0.80 => "Substantial",
        _ => "Almost Perfect",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook route: per-item agreement P_i and category shares p_j.
    fn kappa_by_definition(counts: &[Vec<usize>]) -> f64 {
        let n = counts[0].iter().sum::<usize>() as f64;
        let items = counts.len() as f64;
        let p_i: Vec<f64> = counts
            .iter()
            .map(|row| row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n)
            .map(|s| s / (n * (n - 1.0)))
            .collect();
        let p_bar = p_i.iter().sum::<f64>() / items;
        let k = counts[0].len();
        let pe: f64 = (0..k)
            .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64 / (items * n))
            .map(|p| p * p)
            .sum();
        (p_bar - pe) / (1.0 - pe)
    }

    #[test]
    fn perfect_agreement_is_one() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap(), 1.0);
        // Everyone always picks the same single category: 0/0 guarded.
        assert_eq!(fleiss_kappa(&[vec![4, 0], vec![4, 0]]).unwrap(), 1.0);
    }

    #[test]
    fn four_items_three_raters_by_hand() {
        // P_i = 1, 1/3, 1/3, 1 -> P_bar = 2/3.
        // Column totals 7 and 5 of 12 -> Pe_bar = (49 + 25) / 144 = 37/72.
        // kappa = (48/72 - 37/72) / (35/72) = 11/35.
        let counts = vec![vec![3, 0], vec![2, 1], vec![2, 1], vec![0, 3]];
        let k = fleiss_kappa(&counts).unwrap();
        assert!((k - 11.0 / 35.0).abs() < 1e-9);
        assert!((k - kappa_by_definition(&counts)).abs() < 1e-12);
    }

    #[test]
    fn chance_level_is_zero() {
        // Two raters: one agreeing pair per category plus two split items
        // gives P_bar = Pe_bar = 1/2.
        let counts = vec![vec![2, 0], vec![0, 2], vec![1, 1], vec![1, 1]];
        assert_eq!(fleiss_kappa(&counts).unwrap(), 0.0);
    }

    #[test]
    fn assignments_and_validation() {
        let a = vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 0, 1], vec![1, 1, 1]];
        let k = fleiss_kappa_from_assignments(&a, 2).unwrap();
        assert!((k - 11.0 / 35.0).abs() < 1e-12);
        assert!(matches!(
            fleiss_kappa_from_assignments(&[vec![0, 2]], 2),
            Err(MetricsError::CategoryOutOfRange { category: 2, .. })
        ));
        assert!(matches!(fleiss_kappa(&[vec![1, 0]]), Err(MetricsError::TooFewRaters(1))));
        assert!(matches!(
            fleiss_kappa(&[vec![2, 0], vec![1, 2]]),
            Err(MetricsError::UnequalRaters { item: 1, .. })
        ));
        assert!(matches!(fleiss_kappa(&[]), Err(MetricsError::Empty)));
    }

    #[test]
    fn multilabel_adapter() {
        let a = LabelVector::from_slugs(["PRICE.Affordability"]).unwrap();
        let b = LabelVector::from_slugs(["PRODUCT"]).unwrap();
        let same = vec![vec![a, a], vec![b, b]];
        let k = multilabel_fleiss_all(&same).unwrap();
        assert!(k.per_label.iter().all(|l| l.kappa == 1.0));
        assert_eq!(k.mean, 1.0);

        let mixed = vec![vec![a, b], vec![b, b], vec![a, a], vec![b, a]];
        let labels = ["PRICE".parse().unwrap()];
        let k = multilabel_fleiss(&mixed, &labels).unwrap();
        // PRICE presence counts per item: [1,1], [2,0], [0,2], [1,1].
        let expected = fleiss_kappa(&[vec![1, 1], vec![2, 0], vec![0, 2], vec![1, 1]]).unwrap();
        assert_eq!(k.per_label[0].kappa, expected);
        assert_eq!(k.mean, expected);
    }

    #[test]
    fn bands() {
        assert_eq!(interpret_kappa(0.691), "Substantial");
        assert_eq!(interpret_kappa(-0.1), "Poor");
        assert_eq!(interpret_kappa(1.0), "Almost Perfect");
    }
}
