use std::collections::BTreeMap;

use super::EvalError;
use crate::autodiff::LOG_CLAMP;

/// Mid-ranks (1-based) with ties sharing their average rank.
fn mid_ranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(EvalError::Contract("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Rank AUC; tied positive/negative pairs count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::UndefinedMetric("AUC needs both classes".into()));
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64))
}

pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(EvalError::UndefinedMetric("log-loss of an empty sample".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaucResult {
    pub value: f64,
    pub users_used: usize,
    pub users_skipped: usize,
}

/// Impression-weighted mean of per-user AUCs over users with both classes.
pub fn gauc<U: Ord + Clone>(scores: &[f64], labels: &[u8], users: &[U]) -> Result<GaucResult, EvalError> {
    check_lengths(scores, labels)?;
    if users.len() != scores.len() {
        return Err(EvalError::Contract("user ids must align with scores".into()));
    }
    let mut groups: BTreeMap<U, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for ((s, l), u) in scores.iter().zip(labels).zip(users) {
        let g = groups.entry(u.clone()).or_default();
        g.0.push(*s);
        g.1.push(*l);
    }
    let (mut num, mut den) = (0.0, 0.0);
    let (mut used, mut skipped) = (0, 0);
    for (s, l) in groups.values() {
        match auc(s, l) {
            Ok(a) => {
                num += a * s.len() as f64;
                den += s.len() as f64;
                used += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    if used == 0 {
        return Err(EvalError::UndefinedMetric("no user has both classes".into()));
    }
    Ok(GaucResult {
        value: num / den,
        users_used: used,
        users_skipped: skipped,
    })
}

/// Kendall tau-b between two score vectors.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return None;
    }
    let (mut conc, mut disc, mut ties_a, mut ties_b) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                ties_a += 1.0;
            } else if db == 0.0 {
                ties_b += 1.0;
            } else if (da > 0.0) == (db > 0.0) {
                conc += 1.0;
            } else {
                disc += 1.0;
            }
        }
    }
    let denom = ((conc + disc + ties_a) * (conc + disc + ties_b)).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((conc - disc) / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let l = [0, 0, 1, 1];
        assert_eq!(auc(&s, &l).unwrap(), 1.0);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(auc(&neg, &l).unwrap(), 0.0);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::UndefinedMetric(_))));
    }

    #[test]
    fn gauc_skips_single_class_users() {
        let s = [0.1, 0.9, 0.3, 0.2, 0.4];
        let l = [0, 1, 1, 1, 0];
        let u = ["a", "a", "b", "b", "c"];
        let r = gauc(&s, &l, &u).unwrap();
        assert_eq!(r.users_used, 1);
        assert_eq!(r.users_skipped, 2);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn logloss_of_half_is_ln2() {
        assert!((logloss(&[0.5], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn kendall_extremes() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), Some(1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]), Some(-1.0));
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 1.0]), None);
    }
}
