use super::forward::{self, Bound};
use super::*;
use crate::autodiff::{Graph, Tensor};
use crate::scm::{generate, ScmConfig};

fn small_cfg() -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        backbone_widths: vec![6, 5],
        mediator_dim: 3,
        ctr_dim: 4,
        adv_hidden: 4,
        n_references: 8,
        seed: 5,
        ..ModelConfig::default()
    }
}

fn episodes(n: usize) -> Vec<Episode> {
    generate(&ScmConfig { oracle_grid: 11, ..ScmConfig::default() }, n).unwrap().episodes
}

fn state() -> ModelState {
    let mut s = ModelState::new(small_cfg(), 6, 4).unwrap();
    s.set_references(&episodes(20));
    s
}

#[test]
fn identical_episodes_encode_identically() {
    let s = state();
    let ep = episodes(1).remove(0);
    assert_eq!(s.encode(&ep).unwrap(), s.encode(&ep.clone()).unwrap());
}

#[test]
fn per_touch_encoding_is_permutation_equivariant() {
    let s = state();
    let mut ep = episodes(1).remove(0);
    let mut other = ep.touches[0].clone();
    other.cluster_id = (other.cluster_id + 1) % 6;
    ep.touches = vec![ep.touches[0].clone(), other];
    let a = s.encode(&ep).unwrap();
    ep.touches.swap(0, 1);
    let b = s.encode(&ep).unwrap();
    assert_eq!(a.touches[0], b.touches[1]);
    assert_eq!(a.touches[1], b.touches[0]);
    assert!((a.context.iter().zip(&b.context).map(|(p, q)| (p - q).abs()).sum::<f64>()) < 1e-15);
}

#[test]
fn zero_embeddings_pool_to_the_covariate_pathway() {
    let mut s = state();
    let emb = s.params.ids.emb;
    let t = &mut s.params.list[emb].value;
    *t = Tensor::zeros(t.rows(), t.cols());
    let ep = episodes(3).into_iter().find(|e| e.touches.len() > 1).unwrap();
    let enc = s.encode(&ep).unwrap();
    // Every touch sees the same input, so pooling returns that single row.
    for row in &enc.touches {
        for (a, b) in row.iter().zip(&enc.context) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn unknown_cluster_is_a_vocabulary_error() {
    let s = state();
    let mut ep = episodes(1).remove(0);
    ep.touches[0].cluster_id = 6;
    assert!(matches!(s.encode(&ep), Err(NnError::Vocabulary { cluster: 6, .. })));
    let mut empty = episodes(1).remove(0);
    empty.touches.clear();
    assert!(matches!(s.predict_upload(&empty), Err(NnError::Contract(_))));
}

#[test]
fn zero_aggregation_weights_give_sigmoid_of_bias() {
    let mut s = state();
    let ids = s.params.ids.clone();
    for i in [ids.wc, ids.wxi, ids.u] {
        let t = &mut s.params.list[i].value;
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    s.params.list[ids.b].value = Tensor::scalar(0.7);
    for ep in episodes(5) {
        for fd in [true, false] {
            s.config.frontdoor_inference = fd;
            let p = s.predict_upload(&ep).unwrap();
            assert!((p - crate::math::sigmoid(0.7)).abs() < 1e-15);
        }
    }
}

#[test]
fn outputs_are_probabilities_and_deterministic() {
    let s = state();
    for ep in episodes(30) {
        let p = s.predict_upload(&ep).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, s.predict_upload(&ep).unwrap());
        let m = s.mediator_branch(&ep).unwrap();
        assert_eq!(m.proxy.len(), ep.touches.len());
        for y in &m.proxy {
            assert!((0.0..=1.0).contains(y));
            // Freshly initialized head stays close to indifference.
            assert!((y - 0.5).abs() < 0.35);
        }
    }
}

#[test]
fn batched_scoring_matches_single_episode_scoring() {
    let mut s = state();
    s.config.frontdoor_inference = false;
    let eps = episodes(12);
    let batched = s.predict_observational(&eps).unwrap();
    for (ep, b) in eps.iter().zip(batched) {
        assert!((s.predict_upload(ep).unwrap() - b).abs() < 1e-12);
    }
    let rows = s.mediator_rows(&eps).unwrap();
    for (ep, r) in eps.iter().zip(rows) {
        let one = s.mediator_branch(ep).unwrap();
        for (a, b) in one.proxy.iter().zip(&r.proxy) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn adversary_gradient_vanishes_at_zero_strength() {
    let s = state();
    let eps = episodes(6);
    let batch = Batch::from_episodes(&eps, 6, 4).unwrap();
    for (lambda, expect_zero) in [(0.0, true), (1.0, false)] {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &s.params).unwrap();
        let enc = forward::encode(&mut g, &s.params, &b, &s.config, &batch).unwrap();
        let med = forward::mediator(&mut g, &s.params, &b, &s.config, &enc, &batch).unwrap();
        let out = forward::adversary(&mut g, &s.params, &b, med.mhat, lambda).unwrap();
        forward::check_reversal(&g, out, med.mhat).unwrap();
        let l = g.binary_cross_entropy(out, &batch.touch_labels(), None).unwrap();
        g.backward(l).unwrap();
        let norm = g.grad(med.mhat).squared_norm();
        assert_eq!(norm == 0.0, expect_zero, "lambda {lambda}: {norm}");
        assert!(g.grad(b.v(s.params.ids.wa1)).squared_norm() > 0.0);
    }
}

#[test]
fn tape_without_reversal_is_rejected() {
    let s = state();
    let mut g = Graph::new();
    let b = Bound::new(&mut g, &s.params).unwrap();
    let m = g.leaf(Tensor::row(vec![0.1, -0.2, 0.3])).unwrap();
    let out = forward::adversary_without_reversal(&mut g, &s.params, &b, m).unwrap();
    assert!(matches!(forward::check_reversal(&g, out, m), Err(NnError::Structure(_))));
    let stop = g.grad_scale(m, 0.0).unwrap();
    let out = forward::adversary_without_reversal(&mut g, &s.params, &b, stop).unwrap();
    assert!(matches!(forward::check_reversal(&g, out, m), Err(NnError::Structure(_))));
    assert!(s.adversary(&[0.1, -0.2, 0.3], 0.5).unwrap() > 0.0);
}

#[test]
fn outcome_head_never_reads_labels_or_proxy_scores() {
    let s = state();
    let eps = episodes(8);
    let batch = Batch::from_episodes(&eps, 6, 4).unwrap();
    let w = LossWeights {
        dml: 1.0,
        proxy: 1.0,
        adv: 1.0,
        ctr: 1.0,
        reg: 1e-3,
        prop: 1.0,
        grl: 1.0,
    };
    let tape = forward::composite_loss(&s.params, &s.config, &batch, &[1.0; 8], &w, &Block::ALL).unwrap();
    let g = &tape.graph;
    let proxy_like = |op: &crate::autodiff::Op| {
        matches!(op, crate::autodiff::Op::BinaryCrossEntropy(..) | crate::autodiff::Op::SoftmaxCrossEntropy(..))
    };
    assert!(!g.path_has(tape.logit, proxy_like));
    // The only leaves under the outcome logit are parameters, covariates and constants.
    let ones_or_params = (0..tape.logit.index())
        .filter(|&i| matches!(g.op(value_at(g, i)), crate::autodiff::Op::Leaf))
        .filter(|&i| g.depends_on(tape.logit, value_at(g, i)))
        .all(|i| {
            let v = g.value(value_at(g, i));
            tape.bound.vals.iter().any(|b| b.index() == i)
                || v.shape() == batch.x.shape() && v == &batch.x
                || v.data().iter().all(|&x| x == 1.0)
        });
    assert!(ones_or_params);
}

fn value_at(g: &Graph, i: usize) -> crate::autodiff::Value {
    g.value_handle(i)
}

#[test]
fn contrastive_score_cases() {
    let mut s = state();
    s.config.tau_ctr = 1.0;
    let ids = s.params.ids.clone();
    s.params.list[ids.pc].value = Tensor::zeros(4, 4);
    s.params.list[ids.uc].value = Tensor::from_vec(6, 4, (0..24).map(|i| (i % 5) as f64 * 0.1).collect());
    let mut vb = Tensor::zeros(11, 4);
    for k in 0..4 {
        vb.set(3, k, s.params.get(ids.uc).get(2, k));
    }
    vb.set(4, 0, 1.0);
    s.params.list[ids.vb].value = vb;
    let mut touch = episodes(1).remove(0).touches.remove(0);
    touch.cluster_id = 2;
    let u2: f64 = s.params.get(ids.uc).row_slice(2).iter().map(|v| v * v).sum();
    assert!((s.contrastive_score(&touch, 3).unwrap() - u2).abs() < 1e-15);
    // Cluster 0's row starts with 0, so it is orthogonal to bin 4's unit vector.
    touch.cluster_id = 0;
    assert_eq!(s.contrastive_score(&touch, 4).unwrap(), 0.0);
    assert!(matches!(s.contrastive_score(&touch, 11), Err(NnError::Vocabulary { .. })));
}

/// Naive double loop over the batch.
fn infonce_reference(s: &ModelState, eps: &[Episode]) -> f64 {
    let mut pos = Vec::new();
    for ep in eps {
        let mut best = 0;
        for (j, t) in ep.touches.iter().enumerate() {
            if t.proxy_score > ep.touches[best].proxy_score {
                best = j;
            }
        }
        pos.push((ep.touches[best].cluster_id, s.config.proxy_bin(ep.touches[best].proxy_score)));
    }
    let mut total = 0.0;
    for i in 0..pos.len() {
        let mut denom = 0.0;
        for j in 0..pos.len() {
            denom += s.contrastive_scores(&[pos[i].0], &[pos[j].1])[0].exp();
        }
        total += denom.ln() - s.contrastive_scores(&[pos[i].0], &[pos[i].1])[0];
    }
    total / pos.len() as f64
}

#[test]
fn infonce_matches_literal_sum() {
    let s = state();
    let eps = episodes(9);
    let a = s.infonce_loss(&eps).unwrap();
    assert!((a - infonce_reference(&s, &eps)).abs() < 1e-10);
    assert!(matches!(s.infonce_loss(&eps[..1]), Err(NnError::DegenerateBatch(1))));
}

#[test]
fn infonce_limits() {
    let mut s = state();
    let ids = s.params.ids.clone();
    let eps: Vec<Episode> = episodes(5)
        .into_iter()
        .enumerate()
        .map(|(i, mut e)| {
            e.touches.truncate(1);
            e.touches[0].cluster_id = i;
            e.touches[0].proxy_score = (2 * i) as f64 / 10.0 + 0.01;
            e
        })
        .collect();
    for i in [ids.uc, ids.vb, ids.pc] {
        let t = &mut s.params.list[i].value;
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    assert!((s.infonce_loss(&eps).unwrap() - 5f64.ln()).abs() < 1e-12);
    // One-hot anchors aligned with their own signature bins, far apart relative to tau.
    let mut uc = Tensor::zeros(6, 4);
    let mut vb = Tensor::zeros(11, 4);
    for (i, ep) in eps.iter().enumerate().take(4) {
        uc.set(i, i, 10.0);
        vb.set(s.config.proxy_bin(ep.touches[0].proxy_score), i, 10.0);
    }
    s.params.list[ids.uc].value = uc;
    s.params.list[ids.vb].value = vb;
    assert!(s.infonce_loss(&eps[..4]).unwrap() < 1e-12);
}

#[test]
fn propensity_is_a_distribution() {
    let mut s = state();
    for ep in episodes(10) {
        let p = s.propensity(&ep.x);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for v in &p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }
    let ids = s.params.ids.clone();
    s.params.list[ids.bprop].value = Tensor::row(vec![0.0, 1.0, 2.0, 0.0, -1.0, 0.5]);
    let p = s.propensity(&[0.2, 0.1, 0.0, -0.3]);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(s.propensity_of(&[0.0; 4], 6).is_err());
}

#[test]
fn unit_weights_leave_the_main_risk_unchanged() {
    let s = state();
    let eps = episodes(10);
    let batch = Batch::from_episodes(&eps, 6, 4).unwrap();
    let w = LossWeights {
        dml: 0.0,
        proxy: 0.0,
        adv: 0.0,
        ctr: 0.0,
        reg: 0.0,
        prop: 0.0,
        grl: 0.0,
    };
    let weighted = forward::composite_loss(&s.params, &s.config, &batch, &[1.0; 10], &w, &[]).unwrap();
    let p = s.predict_observational(&eps).unwrap();
    let plain: f64 = p
        .iter()
        .zip(&eps)
        .map(|(p, e)| if e.y == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum::<f64>()
        / 10.0;
    assert!((weighted.parts.main - plain).abs() < 1e-12);
    assert_eq!(weighted.parts.total, weighted.parts.main);
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let s = state();
    let dir = std::env::temp_dir().join(format!("mta-ckpt-{}", std::process::id()));
    let m = s.save(&dir, "abc", 3, 42).unwrap();
    let (back, m2) = ModelState::load(&dir).unwrap();
    assert_eq!(back, s);
    assert_eq!(m, m2);
    assert_eq!(back.fingerprint(), s.fingerprint());
    std::fs::write(dir.join(CHECKPOINT_PARAMS), b"MTAPxx").unwrap();
    assert!(ModelState::load(&dir).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_model_configs_are_rejected() {
    let mut c = small_cfg();
    c.tau_ctr = 0.0;
    assert!(ModelState::new(c, 6, 4).is_err());
    let mut c = small_cfg();
    c.top_k = 0;
    assert!(c.validate().is_err());
    let mut c = small_cfg();
    c.lambda_adv = -1.0;
    assert!(c.validate().is_err());
    let mut c = small_cfg();
    c.backbone_widths = vec![];
    assert!(c.validate().is_err());
}
