//! Evaluation metrics: accuracy, ROC AUC via the rank statistic (tied
//! scores contribute one half), and average precision as the area under
//! the precision-recall step function. All exact; no sampling.

use crate::error::{Error, Result};

/// Fraction of masked nodes whose prediction matches their label.
pub fn accuracy(
    predictions: &[usize],
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::UndefinedMetric("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    for &v in mask {
        let label = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Domain(format!("node {v} has no label")))?;
        let pred = *predictions
            .get(v)
            .ok_or_else(|| Error::Index(format!("node {v} has no prediction")))?;
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

fn check_binary_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "both classes must be present".into(),
        ));
    }
    Ok((n_pos, n_neg))
}

/// ROC AUC by the Mann-Whitney rank statistic with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_binary_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Average precision: the area under the precision-recall step function,
/// with tied scores grouped at a single threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, _) = check_binary_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive pair-counting AUC used as the oracle for the rank
    /// implementation.
    fn auc_by_pair_counting(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                total += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / total
    }

    #[test]
    fn accuracy_counts_matches() {
        let predictions = vec![0, 1, 1, 0];
        let labels = vec![Some(0), Some(1), Some(0), Some(0)];
        let acc = accuracy(&predictions, &labels, &[0, 1, 2, 3]).unwrap();
        assert_abs_diff_eq!(acc, 0.75, epsilon = 1e-15);
        assert!(accuracy(&predictions, &labels, &[]).is_err());
    }

    #[test]
    fn perfectly_separated_scores_are_one() {
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let labels = vec![true, true, false, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
        assert_eq!(average_precision(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn all_equal_scores_give_half_auc_and_prevalence_ap() {
        let scores = vec![0.5; 8];
        let labels = vec![true, false, true, false, true, false, true, false];
        assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            average_precision(&scores, &labels).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn six_point_hand_case() {
        let scores = vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let labels = vec![true, true, false, true, false, false];
        assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), 8.0 / 9.0, epsilon = 1e-15);
        // step function: precisions 1, 1, 3/4 at the three positives
        assert_abs_diff_eq!(
            average_precision(&scores, &labels).unwrap(),
            (1.0 + 1.0 + 0.75) / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rank_auc_matches_pair_counting_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = 40;
            // Coarse grid of scores forces plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..6) as f64) / 5.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_by_pair_counting(&scores, &labels);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..500).map(|_| rng.gen::<f64>() < 0.4).collect();
        let base = auc(&scores, &labels).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|&s| s * 4.0).collect();
        assert_eq!(auc(&scaled, &labels).unwrap(), base);
        let exped: Vec<f64> = scores.iter().map(|&s| s.exp()).collect();
        assert_eq!(auc(&exped, &labels).unwrap(), base);
    }

    #[test]
    fn single_class_labels_are_undefined() {
        let scores = vec![0.1, 0.2];
        assert!(matches!(
            auc(&scores, &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            average_precision(&scores, &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
