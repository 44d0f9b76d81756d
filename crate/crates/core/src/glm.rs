//! L2-regularized logistic and multinomial-logit models fitted by damped Newton.
//!
//! Used for evaluation propensities, probes and the logistic baseline. The
//! intercept is never penalized.

use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softmax};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GlmError {
    #[error("no training rows")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("Newton system is singular")]
    Singular,
}

/// Multinomial logit with class 0 as reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLogit {
    pub classes: usize,
    pub dim: usize,
    /// `(classes - 1) x (dim + 1)`, intercept first.
    pub coef: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 50,
            tol: 1e-10,
        }
    }
}

impl MultinomialLogit {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            coef: vec![vec![0.0; dim + 1]; classes.saturating_sub(1)],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.classes);
        out.push(0.0);
        for b in &self.coef {
            out.push(b[0] + b[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
        out
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        classes: usize,
        weights: Option<&[f64]>,
        opts: FitOptions,
    ) -> Result<Self, GlmError> {
        if x.is_empty() {
            return Err(GlmError::Empty);
        }
        let dim = x[0].len();
        for (row, xi) in x.iter().enumerate() {
            if xi.len() != dim {
                return Err(GlmError::Width {
                    row,
                    got: xi.len(),
                    expected: dim,
                });
            }
        }
        if let Some(&label) = y.iter().find(|&&l| l >= classes) {
            return Err(GlmError::Label { label, classes });
        }
        let mut model = Self::zeros(classes, dim);
        let k = classes - 1;
        let p = dim + 1;
        let n_par = k * p;
        let total_w: f64 = weights.map_or(x.len() as f64, |w| w.iter().sum());
        let objective = |m: &Self| -> f64 {
            let mut ll = 0.0;
            for (i, xi) in x.iter().enumerate() {
                let w = weights.map_or(1.0, |w| w[i]);
                let pr = m.predict_proba(xi);
                ll += w * pr[y[i]].max(1e-300).ln();
            }
            let pen: f64 = m.coef.iter().map(|b| b[1..].iter().map(|v| v * v).sum::<f64>()).sum();
            -ll / total_w + 0.5 * opts.l2 * pen
        };
        let mut current = objective(&model);
        for _ in 0..opts.max_iter {
            let mut grad = vec![0.0; n_par];
            let mut hess = vec![0.0; n_par * n_par];
            let mut z = vec![1.0; p];
            for (i, xi) in x.iter().enumerate() {
                let w = weights.map_or(1.0, |w| w[i]) / total_w;
                z[1..].copy_from_slice(xi);
                let pr = model.predict_proba(xi);
                for a in 0..k {
                    let ya = f64::from(u8::from(y[i] == a + 1));
                    let r = w * (pr[a + 1] - ya);
                    for (u, zu) in z.iter().enumerate() {
                        grad[a * p + u] += r * zu;
                    }
                    for b in 0..k {
                        let c = w * pr[a + 1] * (f64::from(u8::from(a == b)) - pr[b + 1]);
                        if c == 0.0 {
                            continue;
                        }
                        for (u, zu) in z.iter().enumerate() {
                            let row = (a * p + u) * n_par + b * p;
                            for (v, zv) in z.iter().enumerate() {
                                hess[row + v] += c * zu * zv;
                            }
                        }
                    }
                }
            }
            for a in 0..k {
                for u in 1..p {
                    let idx = a * p + u;
                    grad[idx] += opts.l2 * model.coef[a][u];
                    hess[idx * n_par + idx] += opts.l2;
                }
            }
            for d in 0..n_par {
                hess[d * n_par + d] += 1e-10;
            }
            let step = solve_spd(&hess, &grad, n_par).ok_or(GlmError::Singular)?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = model.clone();
                for a in 0..k {
                    for u in 0..p {
                        trial.coef[a][u] -= scale * step[a * p + u];
                    }
                }
                let obj = objective(&trial);
                if obj <= current {
                    let gain = current - obj;
                    model = trial;
                    current = obj;
                    accepted = true;
                    if gain < opts.tol {
                        return Ok(model);
                    }
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(model)
    }
}

/// Binary logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl Logistic {
    pub fn fit(x: &[Vec<f64>], y: &[u8], weights: Option<&[f64]>, opts: FitOptions) -> Result<Self, GlmError> {
        let labels: Vec<usize> = y.iter().map(|&v| usize::from(v)).collect();
        let m = MultinomialLogit::fit(x, &labels, 2, weights, opts)?;
        Ok(Self {
            bias: m.coef[0][0],
            weights: m.coef[0][1..].to_vec(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

/// Solves `A x = b` for a symmetric positive definite `A` (row-major, `n x n`).
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spd_solve() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        assert!(solve_spd(&[0.0], &[1.0], 1).is_none());
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, w) = (-0.5, [1.5, -2.0]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..20_000 {
            let xi = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let p = sigmoid(b + w[0] * xi[0] + w[1] * xi[1]);
            y.push(u8::from(rng.random::<f64>() < p));
            x.push(xi);
        }
        let m = Logistic::fit(&x, &y, None, FitOptions { l2: 0.0, ..Default::default() }).unwrap();
        assert!((m.bias - b).abs() < 0.08);
        assert!((m.weights[0] - w[0]).abs() < 0.1);
        assert!((m.weights[1] - w[1]).abs() < 0.1);
    }

    #[test]
    fn multinomial_intercepts_match_frequencies() {
        let y = [0, 1, 1, 2, 2, 2, 2, 2];
        let x = vec![vec![]; y.len()];
        let m = MultinomialLogit::fit(&x, &y, 3, None, FitOptions::default()).unwrap();
        let p = m.predict_proba(&[]);
        assert!((p[0] - 1.0 / 8.0).abs() < 1e-6);
        assert!((p[1] - 2.0 / 8.0).abs() < 1e-6);
        assert!((p[2] - 5.0 / 8.0).abs() < 1e-6);
    }
}
