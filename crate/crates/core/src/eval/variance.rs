use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scm::Episode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// Size-weighted within-cell variance of `Y` given `(X, T)`.
    pub var_without: f64,
    /// Same, given `(X, T, Y')`.
    pub var_with: f64,
    pub holds: bool,
    pub cells_dropped: usize,
    pub samples_used: usize,
}

fn pooled_within(groups: &BTreeMap<(u64, usize), (f64, f64, usize)>, total: usize) -> f64 {
    groups
        .values()
        .map(|&(s, s2, n)| {
            if n < 2 {
                return 0.0;
            }
            let m = s / n as f64;
            let var = (s2 - n as f64 * m * m) / (n - 1) as f64;
            var * n as f64 / total as f64
        })
        .sum()
}

/// Compares `E[Var(Y | X, T)]` with `E[Var(Y | X, T, Y')]` on the samples whose
/// `(X, T, Y')` cell has at least `min_cell` members.
pub fn variance_reduction_check(
    xt_cell: &[u64],
    proxy_bin: &[usize],
    y: &[f64],
    min_cell: usize,
    tolerance: f64,
) -> Result<VarianceReport, EvalError> {
    if xt_cell.len() != y.len() || proxy_bin.len() != y.len() {
        return Err(EvalError::Contract("conditioning arrays differ in length".into()));
    }
    let mut counts: BTreeMap<(u64, usize), usize> = BTreeMap::new();
    for (c, p) in xt_cell.iter().zip(proxy_bin) {
        *counts.entry((*c, *p)).or_default() += 1;
    }
    let cells_dropped = counts.values().filter(|&&n| n < min_cell).count();
    let mut with: BTreeMap<(u64, usize), (f64, f64, usize)> = BTreeMap::new();
    let mut without: BTreeMap<(u64, usize), (f64, f64, usize)> = BTreeMap::new();
    let mut used = 0;
    for i in 0..y.len() {
        if counts[&(xt_cell[i], proxy_bin[i])] < min_cell {
            continue;
        }
        used += 1;
        for (map, key) in [(&mut with, (xt_cell[i], proxy_bin[i])), (&mut without, (xt_cell[i], 0))] {
            let e = map.entry(key).or_insert((0.0, 0.0, 0));
            e.0 += y[i];
            e.1 += y[i] * y[i];
            e.2 += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::Degenerate(format!("no cell reaches {min_cell} samples")));
    }
    let var_without = pooled_within(&without, used);
    let var_with = pooled_within(&with, used);
    Ok(VarianceReport {
        var_without,
        var_with,
        holds: var_with <= var_without + tolerance,
        cells_dropped,
        samples_used: used,
    })
}

/// Discretizes episodes into `(X, T)` cells and proxy bins.
///
/// `X` is cut at the quantiles of its first coordinate, `T` is the sorted
/// cluster multiset, and `Y'` is the episode's mean proxy score in equal-width bins.
pub fn discretize_episodes(episodes: &[Episode], x_bins: usize, proxy_bins: usize) -> (Vec<u64>, Vec<usize>, Vec<f64>) {
    let mut x0: Vec<f64> = episodes.iter().map(|e| e.x.first().copied().unwrap_or(0.0)).collect();
    x0.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..x_bins.max(1)).map(|k| x0[k * x0.len() / x_bins]).collect();
    let mut t_ids: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    let mut cells = Vec::with_capacity(episodes.len());
    let mut bins = Vec::with_capacity(episodes.len());
    let mut y = Vec::with_capacity(episodes.len());
    for e in episodes {
        let xb = cuts.partition_point(|c| *c <= e.x.first().copied().unwrap_or(0.0)) as u64;
        let mut t = e.clusters();
        t.sort_unstable();
        let next = t_ids.len() as u64;
        let tid = *t_ids.entry(t).or_insert(next);
        cells.push(tid * x_bins.max(1) as u64 + xb);
        let mp = e.touches.iter().map(|t| t.proxy_score).sum::<f64>() / e.touches.len().max(1) as f64;
        bins.push(((mp * proxy_bins as f64) as usize).min(proxy_bins - 1));
        y.push(f64::from(e.y));
    }
    (cells, bins, y)
}
