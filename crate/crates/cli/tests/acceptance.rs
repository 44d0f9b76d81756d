//! Acceptance run: one line per criterion, nonzero exit if any criterion fails.

#[path = "../../core/tests/support/grad_sweep.rs"]
mod grad_sweep;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mta_core::digest::bytes_hash;
use mta_core::eval::{exact_shapley, sampled_shapley};
use mta_core::experiment::{
    auuc_sanity, benchmark, deconfounding, fixtures, leakage, overlap, stability, variance_check, ALM_NAME, NAIVE_NAME,
};
use mta_core::scm::{self, generate};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_deconfounding() -> Outcome {
    let cfg = scm::fixtures::load("deconf").unwrap();
    let r = deconfounding(&cfg, 200_000, 20_000).unwrap();
    outcome(
        r.max_frontdoor_error < 0.02 && r.max_naive_error > 0.05,
        format!(
            "max |front-door - oracle| = {:.4} (< 0.02), max |naive - oracle| = {:.4} (> 0.05)",
            r.max_frontdoor_error, r.max_naive_error
        ),
    )
}

fn c2_gradients() -> Outcome {
    let mut worst = ("", 0.0_f64);
    let mut checked = 0;
    for (name, err) in grad_sweep::elementwise()
        .into_iter()
        .chain(grad_sweep::reductions())
        .chain(grad_sweep::structural())
        .chain(grad_sweep::losses())
        .chain([("matmul_single", grad_sweep::matmul_tight()), ("grad_reverse", grad_sweep::grad_reverse())])
    {
        checked += 1;
        if err >= worst.1 {
            worst = (name, err);
        }
    }
    let composite = grad_sweep::composite(grad_sweep::TRIALS);
    outcome(
        worst.1 < grad_sweep::TOL && composite < grad_sweep::TOL,
        format!(
            "{checked} primitive checks x {} trials, worst {} {:.2e}; composite loss {:.2e} (< 1e-4)",
            grad_sweep::TRIALS,
            worst.0,
            worst.1,
            composite
        ),
    )
}

fn eight_player_game(mask: u64) -> f64 {
    let w = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.6, 0.4];
    let s: f64 = (0..8).filter(|i| mask & (1 << i) != 0).map(|i| w[i]).sum();
    let synergy = if mask & 0b11 == 0b11 { 0.8 } else { 0.0 };
    let redundancy = if mask & 0b1100_0000 != 0 { 0.5 } else { 0.0 };
    (s * s) / 4.0 + synergy + redundancy
}

fn c3_shapley() -> Outcome {
    let exact = exact_shapley(8, eight_player_game).unwrap();
    let sampled = sampled_shapley(8, 10_000, 17, eight_player_game).unwrap();
    let gap = exact.phi.iter().zip(&sampled.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let w = [0.25, -1.5, 2.0, 0.75, 0.0, 1.25];
    let additive = |m: u64| (0..6).filter(|i| m & (1 << i) != 0).map(|i| w[i]).sum::<f64>();
    let add_exact = exact_shapley(6, additive).unwrap();
    let add_sampled = sampled_shapley(6, 500, 3, additive).unwrap();
    let add_gap = w
        .iter()
        .enumerate()
        .map(|(i, wi)| (add_exact.phi[i] - wi).abs().max((add_sampled.phi[i] - wi).abs()))
        .fold(0.0, f64::max);

    let symmetric = |m: u64| f64::from(m.count_ones()).powi(2);
    let sym = exact_shapley(5, symmetric).unwrap();
    let sym_gap = sym.phi.iter().map(|p| (p - 5.0).abs()).fold(0.0, f64::max);
    outcome(
        gap < 1e-2 && add_gap < 1e-12 && sym_gap < 1e-12,
        format!("8-player max gap {gap:.4} (< 1e-2); additive {add_gap:.1e}; symmetric {sym_gap:.1e}"),
    )
}

fn c4_auuc_sanity() -> Outcome {
    let cfg = fixtures::load("bench").unwrap();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let s = auuc_sanity(&cfg, &data.episodes[..cfg.eval.auuc_users]).unwrap();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    outcome(
        s.passes(),
        format!(
            "oracle gAUUC {} vs random {}; monotone invariant {}",
            fmt(&s.oracle),
            fmt(&s.random),
            s.monotone_invariant
        ),
    )
}

fn c5_variance() -> Outcome {
    let cfg = scm::fixtures::load("deconf").unwrap();
    let r = variance_check(&cfg, 100_000, 0.005).unwrap();
    outcome(
        r.holds,
        format!(
            "E[Var(Y|X,T,Y')] = {:.5} vs E[Var(Y|X,T)] = {:.5} (tolerance 0.005, {} samples)",
            r.var_with, r.var_without, r.samples_used
        ),
    )
}

fn c6_leakage() -> Outcome {
    let cfg = fixtures::load("leakage").unwrap();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let r = leakage(&cfg, &data.episodes).unwrap();
    outcome(
        r.full.discriminator_auc <= 0.55
            && r.ablation.discriminator_auc >= 0.7
            && r.full.proxy_auc >= 0.8
            && r.ablation.proxy_auc >= 0.8,
        format!(
            "discriminator AUC full {:.3} (<= 0.55), lambda_adv=0 {:.3} (>= 0.7); proxy AUC {:.3}/{:.3} (>= 0.8)",
            r.full.discriminator_auc, r.ablation.discriminator_auc, r.full.proxy_auc, r.ablation.proxy_auc
        ),
    )
}

fn c7_stability() -> Outcome {
    let cfg = fixtures::load("bench").unwrap();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let r = stability(&cfg, &data.episodes, 1000).unwrap();
    outcome(
        r.full.max_ks < r.ablation.max_ks,
        format!(
            "seeds {:?}: attribution max KS full {:.4} vs lambda_reg=0 {:.4} (strictly below)",
            r.seeds, r.full.max_ks, r.ablation.max_ks
        ),
    )
}

fn c8_benchmark() -> Outcome {
    let cfg = fixtures::load("bench").unwrap();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let r = benchmark(&cfg, &data.episodes).unwrap();
    let alm = r.row(ALM_NAME).unwrap();
    let logit = r.row("logistic-lite").unwrap();
    let tau = r.tau_of(ALM_NAME).unwrap();
    let naive = r.tau_of(NAIVE_NAME).unwrap();
    outcome(
        alm.avg_auuc > logit.avg_auuc && alm.auc > logit.auc && tau > naive && tau >= 0.6,
        format!(
            "gAUUC {:.3} vs logistic {:.3}; AUC {:.3} vs {:.3}; Kendall tau {:.3} vs naive {:.3} (>= 0.6)",
            alm.avg_auuc, logit.avg_auuc, alm.auc, logit.auc, tau, naive
        ),
    )
}

fn c9_overlap() -> Outcome {
    let cfg = fixtures::load("sparse").unwrap();
    let data = generate(&cfg.scm, cfg.n_episodes).unwrap();
    let r = overlap(&cfg, &data, 200).unwrap().report;
    let kept: Vec<usize> = (0..r.retained.len()).filter(|&c| r.retained[c]).collect();
    outcome(
        r.total_filtered <= r.total_unfiltered,
        format!(
            "bootstrap variance filtered {:.3e} vs unfiltered {:.3e}; retained {kept:?}; {} of {} resamples skipped",
            r.total_filtered, r.total_unfiltered, r.resamples_skipped, r.resamples
        ),
    )
}

fn digest_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, bytes_hash(&fs::read(&path).unwrap()));
            }
        }
    }
    out
}

fn c10_reproducibility() -> Outcome {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small.toml");
    let subs = ["gen", "train", "attribute", "eval", "bench", "sensitivity"];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let mut stdout = Vec::new();
            for sub in subs {
                let o = Command::new(env!("CARGO_BIN_EXE_mta"))
                    .args([sub, "--config", config, "--out"])
                    .arg(dir.path())
                    .output()
                    .unwrap();
                assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
                stdout.push(String::from_utf8(o.stdout).unwrap().replace(&dir.path().display().to_string(), "<out>"));
            }
            (digest_tree(dir.path()), stdout, dir)
        })
        .collect();
    let same = runs[0].0 == runs[1].0 && runs[0].1 == runs[1].1;
    outcome(
        same,
        format!(
            "{} subcommands run twice, {} output files, all sha256 digests identical: {same}",
            subs.len(),
            runs[0].0.len()
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test -- --list` and name filters are accepted but ignored.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(u8, &str, u64, fn() -> Outcome); 10] = [
        (1, "deconfounding recovery", 300, c1_deconfounding),
        (2, "gradient fidelity", 60, c2_gradients),
        (3, "Shapley correctness", 60, c3_shapley),
        (4, "grouped-AUUC sanity", 600, c4_auuc_sanity),
        (5, "variance-reduction inequality", 60, c5_variance),
        (6, "adversarial leakage removal", 1200, c6_leakage),
        (7, "multi-seed stability", 1800, c7_stability),
        (8, "benchmark ordering", 1800, c8_benchmark),
        (9, "overlap filtering", 600, c9_overlap),
        (10, "reproducibility", 300, c10_reproducibility),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took < Duration::from_secs(budget);
        let pass = o.pass && in_time;
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
