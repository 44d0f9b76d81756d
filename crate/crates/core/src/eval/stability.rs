use serde::{Deserialize, Serialize};

use super::EvalError;

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Contract("KS needs non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Shared mass of two histograms over a common range.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 1.0;
    }
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for x in v {
            let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            h[k.min(bins - 1)] += 1.0 / v.len() as f64;
        }
        h
    };
    hist(a).iter().zip(hist(b)).map(|(p, q)| p.min(q)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `(i, j, ks, overlap)` for every pair `i < j`.
    pub pairwise: Vec<(usize, usize, f64, f64)>,
    pub max_ks: f64,
}

pub fn stability_report(distributions: &[Vec<f64>]) -> Result<StabilityReport, EvalError> {
    if distributions.len() < 2 {
        return Err(EvalError::Contract("need at least two distributions".into()));
    }
    let mut pairwise = Vec::new();
    let mut max_ks: f64 = 0.0;
    for i in 0..distributions.len() {
        for j in i + 1..distributions.len() {
            let ks = ks_statistic(&distributions[i], &distributions[j])?;
            let ov = histogram_overlap(&distributions[i], &distributions[j], 20);
            max_ks = max_ks.max(ks);
            pairwise.push((i, j, ks, ov));
        }
    }
    Ok(StabilityReport { pairwise, max_ks })
}
