use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;

pub const KMEANS_MAX_ITER: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with seeded k-means++ initialization and at most 50 Lloyd iterations.
pub fn cluster_treatments(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|d| *d == p) {
            distinct.push(p);
            if distinct.len() > k {
                break;
            }
        }
    }
    if k < 2 || k > distinct.len() {
        return Err(EvalError::Config(format!(
            "k = {k} must satisfy 2 <= k <= number of distinct points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct points remain");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .expect("k >= 2");
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(assign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs_are_recovered() {
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in [(0usize, [0.0, 0.0]), (1, [10.0, 0.0]), (2, [0.0, 10.0])] {
            for i in 0..20 {
                let j = i as f64 * 0.01;
                pts.push(vec![c[0] + j, c[1] - j]);
                truth.push(b);
            }
        }
        let a = cluster_treatments(&pts, 3, 5).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(truth[i] == truth[j], a[i] == a[j]);
            }
        }
        assert_eq!(a, cluster_treatments(&pts, 3, 5).unwrap());
    }

    #[test]
    fn k_equal_to_distinct_gives_singletons() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![1.0]];
        let a = cluster_treatments(&pts, 3, 1).unwrap();
        assert_eq!(a[1], a[3]);
        assert_ne!(a[0], a[1]);
        assert_ne!(a[0], a[2]);
        assert_ne!(a[1], a[2]);
    }

    #[test]
    fn invalid_k() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(cluster_treatments(&pts, 1, 0).is_err());
        assert!(cluster_treatments(&pts, 3, 0).is_err());
    }
}
