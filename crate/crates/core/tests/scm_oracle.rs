use mta_core::math::sigmoid;
use mta_core::scm::{fixtures, generate, Oracle, ScmConfig};
use serde_json::Value as Json;

fn golden() -> Json {
    serde_json::from_str(include_str!("../fixtures/golden/c1_oracle.json")).unwrap()
}

fn as_vec<T: serde::de::DeserializeOwned>(v: &Json) -> T {
    serde_json::from_value(v.clone()).unwrap()
}

/// Composite-Simpson integral of `P(Y=1)` over the single normal that the two
/// latents form inside the logit.
fn simpson_reference(cfg: &ScmConfig, x: &[f64], t: &[usize]) -> f64 {
    let base = cfg.outcome_offset(x) + cfg.beta_my * sigmoid(cfg.mediator_index(x, t));
    let sd = (cfg.beta_w.powi(2) + (cfg.beta_my * cfg.mediator_noise).powi(2)).sqrt();
    let n = 20_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| sigmoid(base + sd * z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let z = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
    }
    s * h / 3.0
}

#[test]
fn c1_matches_independent_enumeration_and_quadrature() {
    let cfg = fixtures::load("c1").unwrap();
    let g = golden();
    let x: Vec<f64> = as_vec(&g["x"]);
    let t: Vec<usize> = as_vec(&g["t"]);
    let oracle = Oracle::new(&cfg).unwrap();

    let full = oracle.p_do(&x, &t).unwrap();
    let enumerated = g["p_do_full"]["enumeration"].as_f64().unwrap();
    let quad = g["p_do_full"]["quadrature"].as_f64().unwrap();
    assert!((full - enumerated).abs() < 1e-12, "{full} vs {enumerated}");
    assert!((full - quad).abs() < 1e-3);
    assert!((simpson_reference(&cfg, &x, &t) - quad).abs() < 1e-9);

    let empty = g["p_do_empty"]["enumeration"].as_f64().unwrap();
    assert!((oracle.p_do(&x, &[]).unwrap() - empty).abs() < 1e-12);
}

#[test]
fn e1_uplift_vector_matches_golden() {
    let cfg = fixtures::load("c1").unwrap();
    let g = golden();
    let mut ep = generate(&cfg, 1).unwrap().episodes.remove(0);
    ep.x = as_vec(&g["x"]);
    let t: Vec<usize> = as_vec(&g["t"]);
    ep.touches.truncate(1);
    let template = ep.touches[0].clone();
    ep.touches = t
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let mut tt = template.clone();
            tt.cluster_id = c;
            tt.timestamp = j as u64 + 1;
            tt
        })
        .collect();
    let gt = Oracle::new(&cfg).unwrap().uplift(&ep).unwrap();
    let expected: Vec<f64> = as_vec(&g["true_uplift_enumeration"]);
    for (a, b) in gt.true_uplift.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn enumeration_error_is_below_one_thousandth() {
    let cfg = fixtures::load("c1").unwrap();
    let oracle = Oracle::new(&cfg).unwrap();
    for (x, t) in [
        (vec![0.0, 0.0], vec![]),
        (vec![1.5, -0.3], vec![5, 5, 5]),
        (vec![-2.0, 2.0], vec![2]),
        (vec![0.7, 0.1], vec![0, 1, 2, 3, 4]),
    ] {
        let e = oracle.p_do(&x, &t).unwrap();
        assert!((e - simpson_reference(&cfg, &x, &t)).abs() < 1e-3);
    }
}

#[test]
fn base_rate_matches_oracle_marginal() {
    let cfg = ScmConfig::default();
    let data = generate(&cfg, 50_000).unwrap();
    let rate = data.episodes.iter().map(|e| e.y as f64).sum::<f64>() / 50_000.0;
    let marginal = Oracle::new(&cfg).unwrap().observational_marginal(1_000_000);
    assert!((rate - marginal).abs() < 0.01, "rate {rate} marginal {marginal}");
}

#[test]
fn zero_confounder_decouples_w_from_clusters() {
    let cfg = ScmConfig {
        beta_w: 0.0,
        ..ScmConfig::default()
    };
    let data = generate(&cfg, 40_000).unwrap();
    let w: Vec<f64> = data
        .episodes
        .iter()
        .map(|e| data.latents.get(&e.latent_handle).unwrap().w)
        .collect();
    for c in [0, cfg.n_clusters - 1] {
        let freq: Vec<f64> = data
            .episodes
            .iter()
            .map(|e| e.touches.iter().filter(|t| t.cluster_id == c).count() as f64 / e.touches.len() as f64)
            .collect();
        assert!(correlation(&w, &freq).abs() < 0.02);
    }

    // With the path switched on the same statistic is clearly non-zero.
    let confounded = generate(&ScmConfig::default(), 40_000).unwrap();
    let w: Vec<f64> = confounded
        .episodes
        .iter()
        .map(|e| confounded.latents.get(&e.latent_handle).unwrap().w)
        .collect();
    let freq: Vec<f64> = confounded
        .episodes
        .iter()
        .map(|e| e.touches.iter().filter(|t| t.cluster_id == 0).count() as f64 / e.touches.len() as f64)
        .collect();
    assert!(correlation(&w, &freq) < -0.1);
}

#[test]
fn confounding_witness() {
    // Naive P(Y | T contains c) vs the interventional value averaged over the
    // covariates of the same episodes, for single-touch episodes.
    let cfg = ScmConfig {
        seq_len_range: mta_core::scm::SeqLenRange { min: 1, max: 1 },
        ..ScmConfig::default()
    };
    let data = generate(&cfg, 60_000).unwrap();
    let oracle = Oracle::new(&cfg).unwrap();
    let mut found = false;
    for c in 0..cfg.n_clusters {
        let eps: Vec<_> = data.episodes.iter().filter(|e| e.touches[0].cluster_id == c).collect();
        let n = eps.len() as f64;
        let naive = eps.iter().map(|e| e.y as f64).sum::<f64>() / n;
        let se = (naive * (1.0 - naive) / n).sqrt();
        let truth = data.episodes[..3000]
            .iter()
            .map(|e| oracle.p_do(&e.x, &[c]).unwrap())
            .sum::<f64>()
            / 3000.0;
        if (naive - truth).abs() > 3.0 * se {
            found = true;
        }
    }
    assert!(found);
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
