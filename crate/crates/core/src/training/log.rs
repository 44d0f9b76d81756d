use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub stage: u8,
    pub main: f64,
    pub dml: f64,
    pub proxy: f64,
    pub adv: f64,
    pub ctr: f64,
    pub reg: f64,
    pub prop: f64,
    pub total: f64,
    pub lambda_dml: f64,
    pub lambda_adv: f64,
    pub lambda_reg: f64,
    pub lambda_ctr: f64,
    pub grl: f64,
    /// Propensities clamped when forming this step's weights.
    pub clamped: usize,
    pub auc: Option<f64>,
}

impl LogRow {
    /// `lambda * L` for main, DML, adversarial, regularization, contrastive.
    pub fn weighted(&self) -> [f64; 5] {
        [
            self.main,
            self.lambda_dml * self.dml,
            self.lambda_adv * self.adv,
            self.lambda_reg * self.reg,
            self.lambda_ctr * self.ctr,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub lr_dense: f64,
    pub lr_sparse: f64,
    pub rows: Vec<LogRow>,
    /// Step at which each stage ended (early warm-up exit shortens stage 1).
    pub stage_end: [u64; 3],
}

pub const COMPONENTS: [&str; 5] = ["main", "dml", "adv", "reg", "ctr"];

impl TrainLog {
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = format!(
            "# config_hash={config_hash} seed={} lr_dense={} lr_sparse={}\n\
             step,stage,main,dml,proxy,adv,ctr,reg,prop,total,lambda_dml,lambda_adv,lambda_reg,lambda_ctr,grl,clamped,auc\n",
            self.seed, self.lr_dense, self.lr_sparse
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.stage,
                r.main,
                r.dml,
                r.proxy,
                r.adv,
                r.ctr,
                r.reg,
                r.prop,
                r.total,
                r.lambda_dml,
                r.lambda_adv,
                r.lambda_reg,
                r.lambda_ctr,
                r.grl,
                r.clamped,
                r.auc.map_or_else(String::new, |a| a.to_string())
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Windowed mean of each weighted component over the weighted main loss.
    pub ratios: [f64; 5],
    pub target: [f64; 5],
    pub band: f64,
    /// Names of components outside `target * [1/band, band]`.
    pub flagged: Vec<String>,
}

/// Checks the last `window` log rows against the target loss ratios.
pub fn balance_check(log: &TrainLog, window: usize, target: [f64; 5], band: f64) -> Result<BalanceReport, TrainError> {
    if window == 0 || log.rows.len() < window {
        return Err(TrainError::Contract(format!(
            "balance window of {window} rows needs a log with at least that many (have {})",
            log.rows.len()
        )));
    }
    let tail = &log.rows[log.rows.len() - window..];
    let mut mean = [0.0; 5];
    for r in tail {
        for (m, v) in mean.iter_mut().zip(r.weighted()) {
            *m += v / window as f64;
        }
    }
    if !(mean[0] > 0.0) {
        return Err(TrainError::Contract("main loss is zero over the window".into()));
    }
    let mut ratios = [0.0; 5];
    let mut flagged = Vec::new();
    for k in 0..5 {
        ratios[k] = mean[k] / mean[0];
        let rel = ratios[k] / (target[k] / target[0]);
        if !(rel <= band && rel >= 1.0 / band) {
            flagged.push(COMPONENTS[k].to_string());
        }
    }
    Ok(BalanceReport {
        ratios,
        target,
        band,
        flagged,
    })
}
