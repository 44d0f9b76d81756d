use serde::{Deserialize, Serialize};

use super::EstimatorError;

const ROW_TOL: f64 = 1e-9;

/// Discretized plug-in tables for the front-door sum
/// `sum_{m, t', x} f(m, t', x) * P(t', x) * P(m | t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontdoorTables {
    pub n_m: usize,
    pub n_t: usize,
    pub n_x: usize,
    /// `E[Y | m, t', x]` indexed `(m * n_t + t') * n_x + x`; `None` for empty cells.
    pub f_hat: Vec<Option<f64>>,
    /// `P(m | t)` rows, `n_t x n_m`.
    pub p_m_given_t: Vec<Vec<f64>>,
    /// Joint `P(t', x)`, `n_t x n_x`.
    pub p_tx: Vec<Vec<f64>>,
}

/// One discretized observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSample {
    pub m: usize,
    pub t: usize,
    pub x: usize,
    pub y: f64,
    /// Weight in the `P(m | t)` table, e.g. an inverse propensity.
    pub w_mt: f64,
}

impl FrontdoorTables {
    pub fn f(&self, m: usize, t: usize, x: usize) -> Option<f64> {
        self.f_hat[(m * self.n_t + t) * self.n_x + x]
    }

    /// Empirical tables: cell means for `f`, joint frequencies for `P(t', x)` and
    /// `w_mt`-weighted frequencies for `P(m | t)`.
    pub fn from_samples(samples: &[FdSample], n_m: usize, n_t: usize, n_x: usize) -> Result<Self, EstimatorError> {
        if samples.is_empty() {
            return Err(EstimatorError::Contract("no samples".into()));
        }
        let mut sum = vec![0.0; n_m * n_t * n_x];
        let mut cnt = vec![0usize; n_m * n_t * n_x];
        let mut mt = vec![vec![0.0; n_m]; n_t];
        let mut tx = vec![vec![0.0; n_x]; n_t];
        for s in samples {
            if s.m >= n_m || s.t >= n_t || s.x >= n_x {
                return Err(EstimatorError::Contract(format!("sample cell ({}, {}, {}) out of range", s.m, s.t, s.x)));
            }
            let k = (s.m * n_t + s.t) * n_x + s.x;
            sum[k] += s.y;
            cnt[k] += 1;
            mt[s.t][s.m] += s.w_mt;
            tx[s.t][s.x] += 1.0;
        }
        for row in &mut mt {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
        let n = samples.len() as f64;
        tx.iter_mut().flatten().for_each(|v| *v /= n);
        let f_hat = sum
            .iter()
            .zip(&cnt)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(Self {
            n_m,
            n_t,
            n_x,
            f_hat,
            p_m_given_t: mt,
            p_tx: tx,
        })
    }

    fn check(&self, t: usize) -> Result<(), EstimatorError> {
        if t >= self.n_t {
            return Err(EstimatorError::Contract(format!("treatment {t} out of range {}", self.n_t)));
        }
        if self.f_hat.len() != self.n_m * self.n_t * self.n_x
            || self.p_m_given_t.len() != self.n_t
            || self.p_tx.len() != self.n_t
        {
            return Err(EstimatorError::Contract("table dimensions disagree".into()));
        }
        let row = &self.p_m_given_t[t];
        let s: f64 = row.iter().sum();
        if row.len() != self.n_m || (s - 1.0).abs() > ROW_TOL || row.iter().any(|p| *p < 0.0) {
            return Err(EstimatorError::Contract(format!("P(m | t={t}) is not a distribution (sums to {s})")));
        }
        Ok(())
    }
}

/// Front-door plug-in value of `P(Y=1 | do(t))`.
pub fn frontdoor_do(tables: &FrontdoorTables, t: usize) -> Result<f64, EstimatorError> {
    frontdoor_do_restricted(tables, t, None)
}

/// As [`frontdoor_do`], marginalizing only over the retained `t'` values with
/// `P(t', x)` renormalized over that support.
pub fn frontdoor_do_restricted(
    tables: &FrontdoorTables,
    t: usize,
    retained: Option<&[bool]>,
) -> Result<f64, EstimatorError> {
    tables.check(t)?;
    let keep = |tp: usize| retained.is_none_or(|r| r.get(tp).copied().unwrap_or(false));
    let mass: f64 = (0..tables.n_t).filter(|&tp| keep(tp)).map(|tp| tables.p_tx[tp].iter().sum::<f64>()).sum();
    if !(mass > 0.0) {
        return Err(EstimatorError::Positivity("retained treatment support has zero mass".into()));
    }
    let mut total = 0.0;
    for (m, &pm) in tables.p_m_given_t[t].iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        for tp in (0..tables.n_t).filter(|&tp| keep(tp)) {
            for (x, &ptx) in tables.p_tx[tp].iter().enumerate() {
                if ptx == 0.0 {
                    continue;
                }
                let f = tables.f(m, tp, x).ok_or_else(|| {
                    EstimatorError::Positivity(format!("empty cell (m={m}, t'={tp}, x={x}) has positive weight"))
                })?;
                total += f * (ptx / mass) * pm;
            }
        }
    }
    Ok(total)
}

/// `E[Y | T = t]` over the samples, unadjusted.
pub fn naive_conditional(samples: &[FdSample], t: usize) -> Option<f64> {
    let (s, n) = samples.iter().filter(|s| s.t == t).fold((0.0, 0usize), |(s, n), x| (s + x.y, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables(f: impl Fn(usize, usize, usize) -> f64, pm: Vec<Vec<f64>>) -> FrontdoorTables {
        let (n_m, n_t, n_x) = (3, 2, 2);
        let mut f_hat = Vec::new();
        for m in 0..n_m {
            for t in 0..n_t {
                for x in 0..n_x {
                    f_hat.push(Some(f(m, t, x)));
                }
            }
        }
        FrontdoorTables {
            n_m,
            n_t,
            n_x,
            f_hat,
            p_m_given_t: pm,
            p_tx: vec![vec![0.1, 0.3], vec![0.4, 0.2]],
        }
    }

    #[test]
    fn constant_outcome() {
        let t = tables(|_, _, _| 0.37, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]]);
        for tr in 0..2 {
            assert!((frontdoor_do(&t, tr).unwrap() - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn severed_treatment_mediator_edge() {
        let f = |m: usize, t: usize, x: usize| 0.1 * m as f64 + 0.05 * t as f64 + 0.2 * x as f64;
        let t = tables(f, vec![vec![0.2, 0.3, 0.5]; 2]);
        assert_eq!(frontdoor_do(&t, 0).unwrap(), frontdoor_do(&t, 1).unwrap());
    }

    #[test]
    fn unnormalized_row_is_rejected() {
        let t = tables(|_, _, _| 0.5, vec![vec![0.2, 0.3, 0.4], vec![0.6, 0.4, 0.0]]);
        assert!(matches!(frontdoor_do(&t, 0), Err(EstimatorError::Contract(_))));
    }

    #[test]
    fn empty_cell_names_the_cell() {
        let mut t = tables(|_, _, _| 0.5, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]]);
        t.f_hat[(1 * 2 + 1) * 2] = None;
        match frontdoor_do(&t, 0) {
            Err(EstimatorError::Positivity(msg)) => assert!(msg.contains("m=1, t'=1, x=0")),
            other => panic!("{other:?}"),
        }
        // The same cell is harmless when P(m=1 | t) is zero for the queried t.
        let mut t2 = tables(|_, _, _| 0.5, vec![vec![0.5, 0.0, 0.5], vec![0.6, 0.4, 0.0]]);
        t2.f_hat[(1 * 2 + 1) * 2] = None;
        assert!(frontdoor_do(&t2, 0).is_ok());
    }

    #[test]
    fn restriction_renormalizes() {
        let f = |m: usize, t: usize, _x: usize| if t == 1 { 1.0 } else { 0.1 * m as f64 };
        let t = tables(f, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]]);
        let only1 = frontdoor_do_restricted(&t, 0, Some(&[false, true])).unwrap();
        assert!((only1 - 1.0).abs() < 1e-12);
        let all = frontdoor_do_restricted(&t, 0, Some(&[true, true])).unwrap();
        assert_eq!(all, frontdoor_do(&t, 0).unwrap());
    }

    #[test]
    fn mediator_relabeling_invariance() {
        let f = |m: usize, t: usize, x: usize| 0.1 + 0.2 * m as f64 + 0.1 * t as f64 * x as f64;
        let base = tables(f, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]]);
        let perm = [2usize, 0, 1];
        let mut moved = base.clone();
        for m in 0..3 {
            for t in 0..2 {
                for x in 0..2 {
                    moved.f_hat[(perm[m] * 2 + t) * 2 + x] = base.f(m, t, x);
                }
                moved.p_m_given_t[t][perm[m]] = base.p_m_given_t[t][m];
            }
        }
        for t in 0..2 {
            assert!((frontdoor_do(&base, t).unwrap() - frontdoor_do(&moved, t).unwrap()).abs() < 1e-15);
        }
    }
}
