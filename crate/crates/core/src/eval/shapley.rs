use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MAX_EXACT_PLAYERS: usize = 12;
pub const MAX_SAMPLED_PLAYERS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub phi: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Zero for exact enumeration.
    pub sample_count: usize,
}

/// Exact values by enumerating every coalition. `v` receives a bitmask of players.
pub fn exact_shapley(n_players: usize, mut v: impl FnMut(u64) -> f64) -> Result<ShapleyEstimate, EvalError> {
    if n_players > MAX_EXACT_PLAYERS {
        return Err(EvalError::Capability(format!(
            "exact Shapley supports at most {MAX_EXACT_PLAYERS} players, got {n_players}"
        )));
    }
    let n = n_players;
    let values: Vec<f64> = (0..1u64 << n).map(&mut v).collect();
    // weight[s] = s! (n - s - 1)! / n!
    let mut fact = vec![1.0_f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    let mut phi = vec![0.0; n];
    for (mask, &vs) in values.iter().enumerate() {
        let size = (mask as u64).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *p += weight[size] * (values[mask | (1 << i)] - vs);
            }
        }
    }
    Ok(ShapleyEstimate {
        phi,
        std_err: vec![0.0; n],
        sample_count: 0,
    })
}

/// Permutation-sampling estimate: mean marginal contribution over `l` random orders.
pub fn sampled_shapley(
    n_players: usize,
    l: usize,
    seed: u64,
    mut v: impl FnMut(u64) -> f64,
) -> Result<ShapleyEstimate, EvalError> {
    if l == 0 {
        return Err(EvalError::Config("Shapley sample count must be at least 1".into()));
    }
    if n_players > MAX_SAMPLED_PLAYERS {
        return Err(EvalError::Capability(format!(
            "sampled Shapley supports at most {MAX_SAMPLED_PLAYERS} players"
        )));
    }
    let n = n_players;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let empty = v(0);
    for _ in 0..l {
        order.shuffle(&mut rng);
        let mut mask = 0u64;
        let mut prev = empty;
        for &i in &order {
            mask |= 1 << i;
            let cur = v(mask);
            let d = cur - prev;
            sum[i] += d;
            sum_sq[i] += d * d;
            prev = cur;
        }
    }
    let lf = l as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / lf).collect();
    let std_err = phi
        .iter()
        .zip(&sum_sq)
        .map(|(m, s2)| {
            if l < 2 {
                return 0.0;
            }
            let var = ((s2 / lf - m * m) * lf / (lf - 1.0)).max(0.0);
            (var / lf).sqrt()
        })
        .collect();
    Ok(ShapleyEstimate {
        phi,
        std_err,
        sample_count: l,
    })
}
