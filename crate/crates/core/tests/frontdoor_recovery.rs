use mta_core::experiment::deconfounding;
use mta_core::scm::fixtures;

#[test]
fn frontdoor_recovers_oracle_while_naive_is_biased() {
    let cfg = fixtures::load("deconf").unwrap();
    let report = deconfounding(&cfg, 100_000, 5_000).unwrap();
    assert_eq!(report.clusters.len(), cfg.n_clusters);
    assert!(report.max_frontdoor_error < 0.02, "{report:?}");
    assert!(report.max_naive_error > 0.05, "{report:?}");
}
