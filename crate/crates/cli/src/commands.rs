use std::fs;
use std::path::{Path, PathBuf};

use mta_core::baselines::NetworkModel;
use mta_core::digest::{bytes_hash, config_hash};
use mta_core::estimators::{AttributionConfig, AttributionReport};
use mta_core::experiment::{
    benchmark, bucket_reports, evaluate_models, fixtures, sensitivity as sweep, split, ExperimentConfig, ALM_NAME,
};
use mta_core::nn::{ModelState, CHECKPOINT_MANIFEST};
use mta_core::scm::io::{read_episodes, read_manifest, write_dataset, EPISODES_FILE, MANIFEST_FILE};
use mta_core::scm::{generate, Episode};
use mta_core::training::staged_train_observed;

use crate::error::CliError;
use crate::Common;

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
    force: bool,
}

impl Run {
    fn load(c: &Common) -> Result<Self, CliError> {
        let mut cfg = match c.config.strip_prefix("fixture:") {
            Some(name) => fixtures::load(name)?,
            None => {
                let text = fs::read_to_string(&c.config)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", c.config)))?;
                ExperimentConfig::from_toml(&text)?
            }
        };
        if let Some(seed) = c.seed {
            cfg.scm.seed = seed;
            cfg.model.seed = seed;
        }
        cfg.validate()?;
        if c.workers == Some(0) {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        Ok(Self {
            cfg,
            out: c.out.clone(),
            force: c.force,
        })
    }

    fn dataset_dir(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.dataset)
    }

    fn checkpoint_dir(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.checkpoint)
    }

    fn reports_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.join(&self.cfg.paths.reports);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn mismatch(&self, what: String) -> Result<(), CliError> {
        if self.force {
            eprintln!("warning: {what}; continuing because of --force");
            Ok(())
        } else {
            Err(CliError::Mismatch(what))
        }
    }

    /// Reads the dataset after checking it was generated from this config.
    fn episodes(&self) -> Result<Vec<Episode>, CliError> {
        let dir = self.dataset_dir();
        let mpath = dir.join(MANIFEST_FILE);
        if !mpath.exists() {
            return Err(CliError::Data(format!(
                "no dataset manifest at {}; run `mta gen` with this config first",
                mpath.display()
            )));
        }
        let manifest = read_manifest(&mpath)?;
        let expected = config_hash(&self.cfg.scm);
        if manifest.config_hash != expected || manifest.n_episodes != self.cfg.n_episodes {
            self.mismatch(format!(
                "dataset at {} was generated with config {} ({} episodes), current config is {} ({} episodes)",
                dir.display(),
                manifest.config_hash,
                manifest.n_episodes,
                expected,
                self.cfg.n_episodes
            ))?;
        }
        let epath = dir.join(EPISODES_FILE);
        let body = fs::read(&epath).map_err(|e| CliError::Data(format!("{}: {e}", epath.display())))?;
        if bytes_hash(&body) != manifest.episodes_sha256 {
            return Err(CliError::Data(format!("{} does not match its manifest digest", epath.display())));
        }
        Ok(read_episodes(&epath)?)
    }

    fn holdout<'a>(&self, eps: &'a [Episode]) -> &'a [Episode] {
        split(eps, self.cfg.n_train(eps.len())).1
    }

    /// Loads the checkpoint after checking it was trained from this config.
    fn model(&self) -> Result<ModelState, CliError> {
        let dir = self.checkpoint_dir();
        let mpath = dir.join(CHECKPOINT_MANIFEST);
        if !mpath.exists() {
            return Err(CliError::Data(format!(
                "no checkpoint at {}; run `mta train` with this config first",
                mpath.display()
            )));
        }
        let (state, manifest) = ModelState::load(&dir)?;
        let expected = self.cfg.train_hash();
        if manifest.config_hash != expected {
            self.mismatch(format!(
                "checkpoint at {} was trained with config {}, current config is {expected}",
                dir.display(),
                manifest.config_hash
            ))?;
        }
        Ok(state)
    }

    fn write(&self, dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        println!("wrote {} sha256={}", path.display(), bytes_hash(body.as_bytes()));
        Ok(())
    }

    fn write_config(&self, dir: &Path) -> Result<(), CliError> {
        let body = format!("# config_hash={}\n{}", self.cfg.hash(), self.cfg.to_toml());
        self.write(dir, "config.toml", &body)
    }
}

/// Summary statistics of a generated dataset, one `key,value` per line.
pub fn dataset_summary(cfg: &ExperimentConfig, eps: &[Episode]) -> String {
    let n = eps.len() as f64;
    let touches: usize = eps.iter().map(|e| e.touches.len()).sum();
    let mut per_cluster = vec![0usize; cfg.scm.n_clusters];
    let mut proxy = 0.0;
    for t in eps.iter().flat_map(|e| &e.touches) {
        per_cluster[t.cluster_id] += 1;
        proxy += t.proxy_score;
    }
    let mut s = format!("# config_hash={}\nkey,value\n", cfg.hash());
    s.push_str(&format!("n_episodes,{}\n", eps.len()));
    s.push_str(&format!("positive_rate,{:.6}\n", eps.iter().map(|e| f64::from(e.y)).sum::<f64>() / n));
    s.push_str(&format!("mean_touches,{:.6}\n", touches as f64 / n));
    s.push_str(&format!("mean_proxy_score,{:.6}\n", proxy / touches as f64));
    for (c, k) in per_cluster.iter().enumerate() {
        s.push_str(&format!("cluster_share_{c},{:.6}\n", *k as f64 / touches as f64));
    }
    s
}

pub fn gen(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let dir = run.dataset_dir();
    let mpath = dir.join(MANIFEST_FILE);
    if mpath.exists() {
        let old = read_manifest(&mpath)?;
        if old.config_hash != config_hash(&run.cfg.scm) || old.n_episodes != run.cfg.n_episodes {
            run.mismatch(format!("{} holds a dataset from a different config", dir.display()))?;
        }
    }
    let data = generate(&run.cfg.scm, run.cfg.n_episodes)?;
    let manifest = write_dataset(&dir, &run.cfg.scm, &data.episodes, &data.latents)?;
    println!(
        "dataset {} episodes={} config_hash={} episodes_sha256={}",
        dir.display(),
        manifest.n_episodes,
        manifest.config_hash,
        manifest.episodes_sha256
    );
    run.write(&dir, "summary.csv", &dataset_summary(&run.cfg, &data.episodes))
}

pub fn train(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let eps = run.episodes()?;
    let (train, _) = split(&eps, run.cfg.n_train(eps.len()));
    let (k, d) = (run.cfg.scm.n_clusters, run.cfg.scm.d_x);
    let mut progress = |r: &mta_core::training::LogRow| {
        eprintln!("progress stage={} step={} total={:.6} main={:.6} grl={:.4}", r.stage, r.step, r.total, r.main, r.grl);
    };
    let (state, log) = staged_train_observed(train, k, d, &run.cfg.model, &run.cfg.plan, &mut progress)
        .map_err(|e| CliError::Train(e.to_string()))?;
    let dir = run.checkpoint_dir();
    let manifest = state.save(&dir, &run.cfg.train_hash(), 3, log.stage_end[2])?;
    println!(
        "checkpoint {} config_hash={} params_sha256={}",
        dir.display(),
        manifest.config_hash,
        manifest.params_sha256
    );
    run.write(&dir, "train_log.csv", &log.to_csv(&run.cfg.train_hash()))
}

pub fn attribute(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let eps = run.episodes()?;
    let state = run.model()?;
    let acfg = AttributionConfig {
        top_k: run.cfg.model.top_k,
        coverage_threshold: run.cfg.eval.coverage_threshold,
    };
    let report = AttributionReport::build(&state, run.holdout(&eps), &acfg, &run.cfg.hash())
        .map_err(|e| CliError::Eval(e.to_string()))?;
    let dir = run.reports_dir()?;
    run.write(&dir, "attributions.jsonl", &report.to_jsonl())?;
    run.write(&dir, "attribution_summary.csv", &report.summary_csv())
}

pub fn eval(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let eps = run.episodes()?;
    let model = NetworkModel {
        label: ALM_NAME.into(),
        state: run.model()?,
    };
    let holdout = run.holdout(&eps);
    let report = evaluate_models(&run.cfg, &[&model], holdout)?;
    let dir = run.reports_dir()?;
    run.write(&dir, "metrics.csv", &report.to_csv())?;
    run.write(&dir, "kendall.csv", &report.tau_csv())?;
    for r in bucket_reports(&run.cfg, &model, holdout)? {
        let body = format!("# config_hash={}\n{}", run.cfg.hash(), r.to_csv());
        run.write(&dir, &format!("auuc_seed{}.csv", r.params.seed), &body)?;
    }
    Ok(())
}

pub fn bench(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let eps = run.episodes()?;
    let report = benchmark(&run.cfg, &eps)?;
    let dir = run.reports_dir()?;
    run.write_config(&dir)?;
    run.write(&dir, "bench.csv", &report.to_csv())?;
    run.write(&dir, "bench_kendall.csv", &report.tau_csv())
}

pub fn sensitivity(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let rows = sweep(&run.cfg)?;
    let mut body = format!(
        "# config_hash={}\nproxy_relevance,proxy_leakage,AUC,log-loss,avg AUUC,mean_kendall_tau\n",
        run.cfg.hash()
    );
    for r in rows {
        body.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.relevance, r.leakage, r.auc, r.logloss, r.avg_auuc, r.mean_tau
        ));
    }
    let dir = run.reports_dir()?;
    run.write(&dir, "sensitivity.csv", &body)
}
