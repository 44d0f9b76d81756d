//! Simplified comparison models, each labelled `-lite` in reports, plus a
//! common interface over them and the attribution network.

use crate::glm::{solve_spd, FitOptions, Logistic};
use crate::math::sigmoid;
use crate::nn::{ModelState, NnError};
use crate::scm::{Episode, Oracle, ScmError};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("fitting {model}: {reason}")]
    Fit { model: &'static str, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Scm(#[from] ScmError),
}

/// Anything that predicts upload and credits touches by deletion.
pub trait UpliftModel {
    fn name(&self) -> &str;
    /// `P(Y=1)` for discrimination metrics.
    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError>;
    /// Per-touch deletion uplift.
    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError>;
    /// Drop in predicted upload when every touch of `cluster` is removed.
    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError>;

    fn predict_all(&self, eps: &[Episode]) -> Result<Vec<f64>, BaselineError> {
        eps.iter().map(|e| self.predict(e)).collect()
    }
}

fn counts(ep: &Episode, n_clusters: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_clusters];
    for t in &ep.touches {
        c[t.cluster_id] += 1.0;
    }
    c
}

/// Conversion rate by last-touch cluster; the last touch takes all credit.
#[derive(Clone, Debug, PartialEq)]
pub struct LastTouch {
    pub rates: Vec<f64>,
}

impl LastTouch {
    pub fn fit(eps: &[Episode], n_clusters: usize) -> Self {
        let mut pos = vec![1.0; n_clusters];
        let mut tot = vec![2.0; n_clusters];
        for e in eps {
            if let Some(t) = e.touches.last() {
                pos[t.cluster_id] += f64::from(e.y);
                tot[t.cluster_id] += 1.0;
            }
        }
        Self {
            rates: pos.iter().zip(&tot).map(|(p, t)| p / t).collect(),
        }
    }

    fn last(ep: &Episode) -> Option<usize> {
        ep.touches.last().map(|t| t.cluster_id)
    }
}

impl UpliftModel for LastTouch {
    fn name(&self) -> &str {
        "last-touch-lite"
    }

    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError> {
        let mean = self.rates.iter().sum::<f64>() / self.rates.len() as f64;
        Ok(Self::last(ep).map_or(mean, |c| self.rates[c]))
    }

    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError> {
        let p = self.predict(ep)?;
        let n = ep.touches.len();
        Ok((0..n).map(|j| if j + 1 == n { p } else { 0.0 }).collect())
    }

    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError> {
        Ok(if Self::last(ep) == Some(cluster) { self.predict(ep)? } else { 0.0 })
    }
}

/// L2 logistic regression on covariates and per-cluster touch counts.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticBaseline {
    pub model: Logistic,
    pub n_clusters: usize,
}

impl LogisticBaseline {
    pub fn fit(eps: &[Episode], n_clusters: usize) -> Result<Self, BaselineError> {
        let x: Vec<Vec<f64>> = eps.iter().map(|e| Self::features(e, n_clusters)).collect();
        let y: Vec<u8> = eps.iter().map(|e| e.y).collect();
        let model = Logistic::fit(&x, &y, None, FitOptions::default()).map_err(|e| BaselineError::Fit {
            model: "logistic",
            reason: e.to_string(),
        })?;
        Ok(Self { model, n_clusters })
    }

    fn features(ep: &Episode, n_clusters: usize) -> Vec<f64> {
        let mut f = ep.x.clone();
        f.extend(counts(ep, n_clusters));
        f
    }

    fn logit(&self, ep: &Episode) -> f64 {
        let f = Self::features(ep, self.n_clusters);
        self.model.bias + self.model.weights.iter().zip(&f).map(|(w, v)| w * v).sum::<f64>()
    }

    fn count_weight(&self, c: usize) -> f64 {
        self.model.weights[self.model.weights.len() - self.n_clusters + c]
    }
}

impl UpliftModel for LogisticBaseline {
    fn name(&self) -> &str {
        "logistic-lite"
    }

    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError> {
        Ok(sigmoid(self.logit(ep)))
    }

    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError> {
        let z = self.logit(ep);
        Ok(ep
            .touches
            .iter()
            .map(|t| sigmoid(z) - sigmoid(z - self.count_weight(t.cluster_id)))
            .collect())
    }

    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError> {
        let z = self.logit(ep);
        let n = counts(ep, self.n_clusters)[cluster];
        Ok(sigmoid(z) - sigmoid(z - n * self.count_weight(cluster)))
    }
}

/// Ridge least squares with an unpenalized intercept; returns `[b, w...]`.
fn ridge(x: &[Vec<f64>], y: &[f64], l2: f64) -> Option<Vec<f64>> {
    let p = x.first().map_or(0, Vec::len) + 1;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut z = vec![1.0; p];
    for (xi, yi) in x.iter().zip(y) {
        z[1..].copy_from_slice(xi);
        for u in 0..p {
            b[u] += z[u] * yi;
            for v in 0..p {
                a[u * p + v] += z[u] * z[v];
            }
        }
    }
    for u in 1..p {
        a[u * p + u] += l2 * x.len() as f64;
    }
    a[0] += 1e-12;
    solve_spd(&a, &b, p)
}

fn linear(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
}

/// Two-stage residualization: outcome and per-cluster exposure counts are
/// regressed on covariates, then outcome residuals on count residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageResidual {
    pub outcome: Logistic,
    /// Per-cluster linear models of the touch count on covariates.
    pub exposure: Vec<Vec<f64>>,
    /// Effect of one extra touch of each cluster on the outcome probability.
    pub theta: Vec<f64>,
}

const PROB_CLAMP: f64 = 1e-4;

impl TwoStageResidual {
    pub fn fit(eps: &[Episode], n_clusters: usize) -> Result<Self, BaselineError> {
        let err = |reason: String| BaselineError::Fit {
            model: "two-stage",
            reason,
        };
        let x: Vec<Vec<f64>> = eps.iter().map(|e| e.x.clone()).collect();
        let y: Vec<u8> = eps.iter().map(|e| e.y).collect();
        let outcome = Logistic::fit(&x, &y, None, FitOptions::default()).map_err(|e| err(e.to_string()))?;
        let cnt: Vec<Vec<f64>> = eps.iter().map(|e| counts(e, n_clusters)).collect();
        let exposure = (0..n_clusters)
            .map(|c| {
                let t: Vec<f64> = cnt.iter().map(|r| r[c]).collect();
                ridge(&x, &t, 1e-6).ok_or_else(|| err(format!("singular exposure system for cluster {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ry: Vec<f64> = eps.iter().zip(&x).map(|(e, xi)| f64::from(e.y) - outcome.predict(xi)).collect();
        let rt: Vec<Vec<f64>> = cnt
            .iter()
            .zip(&x)
            .map(|(r, xi)| (0..n_clusters).map(|c| r[c] - linear(&exposure[c], xi)).collect())
            .collect();
        let coef = ridge(&rt, &ry, 1e-6).ok_or_else(|| err("singular residual system".into()))?;
        Ok(Self {
            outcome,
            exposure,
            theta: coef[1..].to_vec(),
        })
    }

    fn raw(&self, ep: &Episode, cnt: &[f64]) -> f64 {
        let base = self.outcome.predict(&ep.x);
        base + self
            .theta
            .iter()
            .enumerate()
            .map(|(c, th)| th * (cnt[c] - linear(&self.exposure[c], &ep.x)))
            .sum::<f64>()
    }
}

impl UpliftModel for TwoStageResidual {
    fn name(&self) -> &str {
        "two-stage-residual-lite"
    }

    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError> {
        let cnt = counts(ep, self.theta.len());
        Ok(self.raw(ep, &cnt).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }

    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError> {
        Ok(ep.touches.iter().map(|t| self.theta[t.cluster_id]).collect())
    }

    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError> {
        Ok(counts(ep, self.theta.len())[cluster] * self.theta[cluster])
    }
}

/// Attribution network (full method or the plain sequence ablation).
#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub label: String,
    pub state: ModelState,
}

impl UpliftModel for NetworkModel {
    fn name(&self) -> &str {
        &self.label
    }

    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError> {
        Ok(self.state.predict_observational(std::slice::from_ref(ep))?[0])
    }

    fn predict_all(&self, eps: &[Episode]) -> Result<Vec<f64>, BaselineError> {
        let mut out = Vec::with_capacity(eps.len());
        for chunk in eps.chunks(512) {
            out.extend(self.state.predict_observational(chunk)?);
        }
        Ok(out)
    }

    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError> {
        let full = ep.clusters();
        let mut variants = vec![full.clone()];
        for j in 0..full.len() {
            let mut rest = full.clone();
            rest.remove(j);
            variants.push(rest);
        }
        let p = self.state.score_variants(&ep.x, &variants)?;
        Ok(p[1..].iter().map(|q| p[0] - q).collect())
    }

    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError> {
        let full = ep.clusters();
        let rest: Vec<usize> = full.iter().copied().filter(|&c| c != cluster).collect();
        let p = self.state.score_variants(&ep.x, &[full, rest])?;
        Ok(p[0] - p[1])
    }
}

/// Ground-truth interventional response, used as a reference scorer.
pub struct OracleModel<'a> {
    pub oracle: &'a Oracle,
}

impl UpliftModel for OracleModel<'_> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, ep: &Episode) -> Result<f64, BaselineError> {
        Ok(self.oracle.p_do(&ep.x, &ep.clusters())?)
    }

    fn touch_uplifts(&self, ep: &Episode) -> Result<Vec<f64>, BaselineError> {
        Ok(self.oracle.uplift(ep)?.true_uplift)
    }

    fn cluster_uplift(&self, ep: &Episode, cluster: usize) -> Result<f64, BaselineError> {
        let full = ep.clusters();
        let rest: Vec<usize> = full.iter().copied().filter(|&c| c != cluster).collect();
        Ok(self.oracle.p_do(&ep.x, &full)? - self.oracle.p_do(&ep.x, &rest)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{generate, ScmConfig};

    fn data() -> Vec<Episode> {
        generate(&ScmConfig { oracle_grid: 11, ..ScmConfig::default() }, 3000).unwrap().episodes
    }

    #[test]
    fn last_touch_credits_only_the_last_touch() {
        let eps = data();
        let m = LastTouch::fit(&eps, 6);
        for e in eps.iter().take(20) {
            let u = m.touch_uplifts(e).unwrap();
            assert!(u[..u.len() - 1].iter().all(|&v| v == 0.0));
            assert_eq!(*u.last().unwrap(), m.predict(e).unwrap());
        }
    }

    #[test]
    fn logistic_uplifts_are_exact_deletions() {
        let eps = data();
        let m = LogisticBaseline::fit(&eps, 6).unwrap();
        for e in eps.iter().take(20) {
            let full = m.predict(e).unwrap();
            for (j, u) in m.touch_uplifts(e).unwrap().into_iter().enumerate() {
                assert!((full - m.predict(&e.without(j)).unwrap() - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_stage_recovers_an_unconfounded_linear_effect() {
        // Randomized exposure: residualization should find the true slopes.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let template = data().remove(0);
        let theta = [0.05, -0.03, 0.0];
        let eps: Vec<Episode> = (0..40_000)
            .map(|_| {
                let mut e = template.clone();
                e.x = vec![rng.random_range(-1.0..1.0); 4];
                let n = rng.random_range(1..=4);
                e.touches = (0..n)
                    .map(|_| {
                        let mut t = template.touches[0].clone();
                        t.cluster_id = rng.random_range(0..3);
                        t
                    })
                    .collect();
                let c = counts(&e, 3);
                let p = 0.4 + 0.1 * e.x[0] + (0..3).map(|k| theta[k] * c[k]).sum::<f64>();
                e.y = u8::from(rng.random::<f64>() < p);
                e
            })
            .collect();
        let m = TwoStageResidual::fit(&eps, 3).unwrap();
        for k in 0..3 {
            assert!((m.theta[k] - theta[k]).abs() < 0.01, "{:?}", m.theta);
        }
    }
}
