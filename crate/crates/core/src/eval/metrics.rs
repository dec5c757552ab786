use crate::error::{Error, Result};

fn check_inputs(preds: &[f64], labels: &[u8]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Shape {
            op: "metric",
            detail: format!("{} predictions for {} labels", preds.len(), labels.len()),
        });
    }
    if preds.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite { op: "metric" });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::UndefinedMetric("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Area under the ROC curve by the rank-sum (Mann–Whitney) statistic with
/// mid-ranks for ties, i.e. P(score⁺ > score⁻) + ½·P(score⁺ = score⁻).
pub fn auc(preds: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(preds, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!("AUC needs both classes ({n_pos} positive, {n_neg} negative)")));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    // Sum of 1-based ranks of the positives; tied groups share their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && preds[order[j]] == preds[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid_rank * positives as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of predictions on the right side of `threshold`; a prediction
/// equal to the threshold counts as positive.
pub fn accuracy(preds: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_inputs(preds, labels)?;
    if preds.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty prediction set".into()));
    }
    let correct = preds.iter().zip(labels).filter(|(&p, &l)| (p >= threshold) == (l == 1)).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.2, 0.4], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(auc(&[0.2], &[1, 0]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.6, 0.4], &[1, 0], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.6, 0.4], &[0, 1], 0.5).unwrap(), 0.0);
        assert_eq!(accuracy(&[0.5], &[1], 0.5).unwrap(), 1.0);
        assert!(accuracy(&[], &[], 0.5).is_err());
    }

    #[test]
    fn std_of_identical_scores_is_zero() {
        assert_eq!(mean_std(&[0.7; 5]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
