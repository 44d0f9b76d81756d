use mta_core::experiment::{
    benchmark, covariate_cohorts, fixtures, split, top_clusters, ExperimentConfig, ExperimentError, ALM_NAME,
};
use mta_core::scm::generate;
use proptest::prelude::*;

fn tiny() -> ExperimentConfig {
    let mut cfg = fixtures::load("bench").unwrap();
    cfg.n_episodes = 600;
    cfg.plan.stage_steps.warmup = 20;
    cfg.plan.stage_steps.proxy = 20;
    cfg.plan.stage_steps.anneal = 20;
    cfg.eval.l = 20;
    cfg.eval.protocol_seeds = vec![1, 2];
    cfg.eval.auuc_users = 100;
    cfg.eval.tau_episodes = 50;
    cfg
}

#[test]
fn fixtures_roundtrip_through_toml() {
    for name in fixtures::names() {
        let cfg = fixtures::load(name).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg, "{name}");
        assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn hashes_separate_data_from_model_changes() {
    let a = fixtures::load("bench").unwrap();
    let mut b = a.clone();
    b.model.lambda_adv += 0.5;
    assert_ne!(a.hash(), b.hash());
    assert_ne!(a.train_hash(), b.train_hash());
    assert_eq!(a.data_hash(), b.data_hash());
    b.scm.seed += 1;
    assert_ne!(a.data_hash(), b.data_hash());
}

#[test]
fn invalid_configs_name_the_field() {
    let base = fixtures::load("bench").unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut ExperimentConfig)>)> = vec![
        ("n_episodes", Box::new(|c| c.n_episodes = 0)),
        ("holdout_fraction", Box::new(|c| c.holdout_fraction = 1.0)),
        ("run_id", Box::new(|c| c.run_id.clear())),
        ("scm", Box::new(|c| c.scm.n_clusters = 1)),
        ("eval.b", Box::new(|c| c.eval.b = 0)),
        ("eval.protocol_seeds", Box::new(|c| c.eval.protocol_seeds.clear())),
    ];
    for (field, mutate) in cases {
        let mut c = base.clone();
        mutate(&mut c);
        match c.validate() {
            Err(ExperimentError::Config { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{field}: {other:?}"),
        }
    }
    let text = base.to_toml().replace("run_id =", "stray = 1\nrun_id =");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn holdout_split_keeps_order() {
    let cfg = tiny();
    let data = generate(&cfg.scm, 100).unwrap();
    let n = cfg.n_train(100);
    assert_eq!(n, 75);
    let (train, hold) = split(&data.episodes, n);
    assert_eq!(train.len() + hold.len(), 100);
    assert_eq!(hold[0].user_id, data.episodes[75].user_id);
}

#[test]
fn cohorts_are_balanced_and_ordered() {
    let data = generate(&tiny().scm, 1000).unwrap();
    let cohorts = covariate_cohorts(&data.episodes, 10);
    let mut counts = [0usize; 10];
    for &c in &cohorts {
        counts[c] += 1;
    }
    assert!(counts.iter().all(|&n| n == 100), "{counts:?}");
    let lo = data.episodes.iter().zip(&cohorts).filter(|(_, &c)| c == 0).map(|(e, _)| e.x[0]).fold(f64::MIN, f64::max);
    let hi = data.episodes.iter().zip(&cohorts).filter(|(_, &c)| c == 9).map(|(e, _)| e.x[0]).fold(f64::MAX, f64::min);
    assert!(lo < hi);
}

#[test]
fn top_clusters_breaks_ties_by_id_and_skips_unseen() {
    let s = [Some(0.2), None, Some(0.5), Some(0.2), Some(0.1)];
    assert_eq!(top_clusters(&s, 2), vec![true, false, true, false, false]);
    assert_eq!(top_clusters(&s, 10), vec![true, false, true, true, true]);
    assert_eq!(top_clusters(&s, 0), vec![false; 5]);
}

proptest! {
    #[test]
    fn top_clusters_keeps_the_highest(scores in prop::collection::vec(prop::option::of(-1.0f64..1.0), 1..12), k in 0usize..14) {
        let keep = top_clusters(&scores, k);
        let seen = scores.iter().filter(|s| s.is_some()).count();
        prop_assert_eq!(keep.iter().filter(|&&b| b).count(), k.min(seen));
        for (i, a) in scores.iter().enumerate() {
            for (j, b) in scores.iter().enumerate() {
                if keep[i] && !keep[j] {
                    if let (Some(a), Some(b)) = (a, b) {
                        prop_assert!(a >= b);
                    }
                }
            }
            if a.is_none() {
                prop_assert!(!keep[i]);
            }
        }
    }
}

#[test]
fn benchmark_smoke_reports_every_model() {
    let cfg = tiny();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let report = benchmark(&cfg, &data.episodes).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert_eq!(report.config_hash, cfg.hash());
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), format!("# config_hash={}", cfg.hash()));
    assert_eq!(lines.next().unwrap(), "model,AUC,log-loss,gAUC,avg AUUC");
    for row in &report.rows {
        assert!((0.0..=1.0).contains(&row.auc));
        assert!(row.logloss > 0.0);
        assert_eq!(row.gauuc_per_seed.len(), 2);
    }
    assert!(report.tau_of(ALM_NAME).is_some());
}
