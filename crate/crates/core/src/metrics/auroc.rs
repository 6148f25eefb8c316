use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for tied scores.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUROC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&p| labels[p] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn matches_pairwise_oracle() {
        assert_eq!(auroc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.1], &[0, 1]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        let s = [0.3, 0.3, 0.7, 0.1, 0.7, 0.2, 0.9, 0.3];
        let l = [1, 0, 1, 0, 0, 1, 1, 0];
        assert!((auroc(&s, &l).unwrap() - brute(&s, &l)).abs() < 1e-15);
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::Undefined(_))));
    }
}
