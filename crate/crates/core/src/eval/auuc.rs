use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Debug, PartialEq)]
pub struct BucketAssignment {
    pub bucket: Vec<usize>,
    /// `B - 1` quantile cut-points; a pair lands in the count of cuts `<=` its score.
    pub cuts: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Quantile stratification of estimated propensities into `b` buckets.
pub fn propensity_buckets(e_hat: &[f64], b: usize) -> Result<BucketAssignment, EvalError> {
    if b < 2 {
        return Err(EvalError::Config("need at least 2 buckets".into()));
    }
    if e_hat.len() < b {
        return Err(EvalError::Degenerate(format!(
            "{} pairs cannot fill {b} buckets",
            e_hat.len()
        )));
    }
    if e_hat.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(EvalError::Contract("propensities must lie in [0, 1]".into()));
    }
    let mut sorted = e_hat.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..b).map(|k| sorted[k * n / b]).collect();
    let bucket: Vec<usize> = e_hat.iter().map(|e| cuts.partition_point(|c| c <= e)).collect();
    let mut populated = vec![false; b];
    for &i in &bucket {
        populated[i] = true;
    }
    let n_pop = populated.iter().filter(|p| **p).count();
    let mut warnings = Vec::new();
    if n_pop < b {
        warnings.push(format!("tied propensities: only {n_pop} of {b} buckets populated"));
    }
    Ok(BucketAssignment { bucket, cuts, warnings })
}

/// Descending-score order, ties kept in input order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// `(1/N) * sum_k U(k) / Z` with `U(k)` the cumulative label sum of the top `k`.
pub fn bucket_auuc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Contract("scores and labels differ in length".into()));
    }
    if scores.is_empty() {
        return Err(EvalError::Contract("empty bucket".into()));
    }
    let z: f64 = labels.iter().map(|l| l.abs()).sum();
    if z == 0.0 {
        return Err(EvalError::UndefinedMetric("bucket has zero total |uplift|".into()));
    }
    let mut u = 0.0;
    let mut acc = 0.0;
    for i in ranking(scores) {
        u += labels[i];
        acc += u / z;
    }
    Ok(acc / scores.len() as f64)
}

/// Normalized uplift curve points `(k / N, U(k) / Z)` including the origin.
pub fn uplift_curve(scores: &[f64], labels: &[f64]) -> Vec<(f64, f64)> {
    let z: f64 = labels.iter().map(|l| l.abs()).sum();
    let n = scores.len() as f64;
    let mut out = vec![(0.0, 0.0)];
    let mut u = 0.0;
    for (k, i) in ranking(scores).into_iter().enumerate() {
        u += labels[i];
        out.push(((k + 1) as f64 / n, if z > 0.0 { u / z } else { 0.0 }));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Propensity buckets.
    pub b: usize,
    /// Treatment clusters.
    pub k: usize,
    /// Shapley permutations per user.
    pub l: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub index: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub n_pairs: usize,
    /// `None` when the bucket is empty or its labels sum to zero.
    pub auuc: Option<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketedAuucReport {
    pub buckets: Vec<BucketRow>,
    pub gauuc: f64,
    pub params: ProtocolParams,
    pub warnings: Vec<String>,
}

impl BucketedAuucReport {
    pub fn weights(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.weight).collect()
    }

    pub fn to_csv(&self) -> String {
        let p = &self.params;
        let mut s = format!("# B={} K={} L={} seed={}\n", p.b, p.k, p.l, p.seed);
        s.push_str("bucket,e_min,e_max,n_pairs,auuc,weight\n");
        for r in &self.buckets {
            let a = r.auuc.map_or("NA".to_string(), |v| format!("{v:.10}"));
            s.push_str(&format!(
                "{},{:.10},{:.10},{},{},{:.10}\n",
                r.index, r.e_min, r.e_max, r.n_pairs, a, r.weight
            ));
        }
        s.push_str(&format!("gauuc,,,{},{:.10},1\n", self.buckets.iter().map(|b| b.n_pairs).sum::<usize>(), self.gauuc));
        s
    }
}

/// Buckets pairs by `e_hat`, scores each bucket and size-weights the result.
pub fn grouped_auuc_from_pairs(
    e_hat: &[f64],
    scores: &[f64],
    labels: &[f64],
    params: &ProtocolParams,
) -> Result<BucketedAuucReport, EvalError> {
    if e_hat.len() != scores.len() || scores.len() != labels.len() {
        return Err(EvalError::Contract("pair arrays differ in length".into()));
    }
    let assign = propensity_buckets(e_hat, params.b).map_err(|e| e.at("propensity_buckets"))?;
    let mut warnings = assign.warnings.clone();
    let mut rows = Vec::with_capacity(params.b);
    for b in 0..params.b {
        let members: Vec<usize> = (0..e_hat.len()).filter(|&i| assign.bucket[i] == b).collect();
        let s: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
        let l: Vec<f64> = members.iter().map(|&i| labels[i]).collect();
        let auuc = if members.is_empty() {
            None
        } else {
            match bucket_auuc(&s, &l) {
                Ok(v) => Some(v),
                Err(EvalError::UndefinedMetric(m)) => {
                    warnings.push(format!("bucket {b} excluded: {m}"));
                    None
                }
                Err(e) => return Err(e.at("bucket_auuc")),
            }
        };
        let e = members.iter().map(|&i| e_hat[i]);
        rows.push(BucketRow {
            index: b,
            e_min: e.clone().fold(f64::INFINITY, f64::min),
            e_max: e.fold(f64::NEG_INFINITY, f64::max),
            n_pairs: members.len(),
            auuc,
            weight: 0.0,
        });
    }
    let total: usize = rows.iter().filter(|r| r.auuc.is_some()).map(|r| r.n_pairs).sum();
    if total == 0 {
        return Err(EvalError::UndefinedMetric("no bucket has a defined AUUC".into()));
    }
    let mut gauuc = 0.0;
    for r in &mut rows {
        if let Some(a) = r.auuc {
            r.weight = r.n_pairs as f64 / total as f64;
            gauuc += r.weight * a;
        }
    }
    Ok(BucketedAuucReport {
        buckets: rows,
        gauuc,
        params: params.clone(),
        warnings,
    })
}
