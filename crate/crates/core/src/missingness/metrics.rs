use crate::error::{Error, Result};

/// Area under the ROC curve in its Mann–Whitney form: the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores must not be NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tied runs
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Share of rows where `score >= threshold` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[f64], threshold: f64) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| f64::from(**s >= threshold) == **l)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_pairs() {
        assert_eq!(auc(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn accuracy_threshold() {
        assert_eq!(accuracy(&[0.2, 0.6, 0.5], &[0.0, 1.0, 0.0], 0.5), 2.0 / 3.0);
    }
}
