use crate::autodiff::Tensor;
use crate::scm::Episode;

use super::NnError;

/// Episodes flattened to touch rows. `seg[j]` is the episode of touch row `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub n_episodes: usize,
    pub x: Tensor,
    pub clusters: Vec<usize>,
    pub seg: Vec<usize>,
    pub proxy: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn from_episodes<'a, I>(episodes: I, n_clusters: usize, d_x: usize) -> Result<Self, NnError>
    where
        I: IntoIterator<Item = &'a Episode>,
    {
        let mut b = Batch {
            n_episodes: 0,
            x: Tensor::zeros(0, d_x),
            clusters: Vec::new(),
            seg: Vec::new(),
            proxy: Vec::new(),
            y: Vec::new(),
        };
        let mut xs = Vec::new();
        for ep in episodes {
            if ep.x.len() != d_x {
                return Err(NnError::Contract(format!(
                    "episode {} has {} covariates, model expects {d_x}",
                    ep.user_id,
                    ep.x.len()
                )));
            }
            if ep.touches.is_empty() {
                return Err(NnError::Contract(format!("episode {} has no touches", ep.user_id)));
            }
            for t in &ep.touches {
                check_cluster(t.cluster_id, n_clusters)?;
                b.clusters.push(t.cluster_id);
                b.seg.push(b.n_episodes);
                b.proxy.push(t.proxy_score);
            }
            xs.extend_from_slice(&ep.x);
            b.y.push(f64::from(ep.y));
            b.n_episodes += 1;
        }
        b.x = Tensor::from_vec(b.n_episodes, d_x, xs);
        Ok(b)
    }

    /// One covariate row shared by several treatment sequences, which may be empty.
    pub fn variants(x: &[f64], sequences: &[Vec<usize>], n_clusters: usize) -> Result<Self, NnError> {
        let mut b = Batch {
            n_episodes: sequences.len(),
            x: Tensor::from_vec(
                sequences.len(),
                x.len(),
                sequences.iter().flat_map(|_| x.iter().copied()).collect(),
            ),
            clusters: Vec::new(),
            seg: Vec::new(),
            proxy: Vec::new(),
            y: vec![0.0; sequences.len()],
        };
        for (i, s) in sequences.iter().enumerate() {
            for &c in s {
                check_cluster(c, n_clusters)?;
                b.clusters.push(c);
                b.seg.push(i);
                b.proxy.push(0.0);
            }
        }
        Ok(b)
    }

    pub fn n_touches(&self) -> usize {
        self.clusters.len()
    }

    /// Label of the episode each touch belongs to.
    pub fn touch_labels(&self) -> Vec<f64> {
        self.seg.iter().map(|&s| self.y[s]).collect()
    }

    /// Row of the highest-proxy touch in each episode; ties go to the earliest.
    pub fn top_proxy_rows(&self) -> Vec<usize> {
        let mut best: Vec<Option<usize>> = vec![None; self.n_episodes];
        for (j, &s) in self.seg.iter().enumerate() {
            match best[s] {
                Some(k) if self.proxy[k] >= self.proxy[j] => {}
                _ => best[s] = Some(j),
            }
        }
        best.into_iter().map(|b| b.expect("episodes are non-empty")).collect()
    }
}

pub(crate) fn check_cluster(c: usize, n_clusters: usize) -> Result<(), NnError> {
    if c >= n_clusters {
        return Err(NnError::Vocabulary {
            cluster: c,
            n_clusters,
        });
    }
    Ok(())
}
