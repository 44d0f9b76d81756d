use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::autodiff::Tensor;

/// Parameter groups that the training schedule switches on and off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Backbone,
    HeadIte,
    HeadProxy,
    HeadAdv,
    HeadCtr,
    Propensity,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::Backbone,
        Block::HeadIte,
        Block::HeadProxy,
        Block::HeadAdv,
        Block::HeadCtr,
        Block::Propensity,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub block: Block,
    /// Row-sparse embedding table (adaptive-gradient updates).
    pub sparse: bool,
    pub value: Tensor,
}

/// Positions of every named parameter in [`Params::list`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Ids {
    pub emb: usize,
    pub wx: usize,
    pub bx: usize,
    pub layers: Vec<(usize, usize)>,
    pub skip: Option<usize>,
    pub att: usize,
    pub wc: usize,
    pub wxi: usize,
    pub b: usize,
    pub u: usize,
    pub wm: usize,
    pub bm: usize,
    pub wp: usize,
    pub bp: usize,
    pub wa1: usize,
    pub ba1: usize,
    pub wa2: usize,
    pub ba2: usize,
    pub uc: usize,
    pub vb: usize,
    pub pc: usize,
    pub wprop: usize,
    pub bprop: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub list: Vec<Param>,
    pub ids: Ids,
}

struct Init {
    rng: ChaCha8Rng,
    list: Vec<Param>,
}

impl Init {
    fn add(&mut self, name: &str, block: Block, value: Tensor, sparse: bool) -> usize {
        self.list.push(Param {
            name: name.to_string(),
            block,
            sparse,
            value,
        });
        self.list.len() - 1
    }

    /// Glorot-uniform weight matrix.
    fn dense(&mut self, name: &str, block: Block, rows: usize, cols: usize) -> usize {
        let limit = if rows + cols == 0 {
            0.0
        } else {
            (6.0 / (rows + cols) as f64).sqrt()
        };
        let data = (0..rows * cols).map(|_| self.rng.random_range(-1.0..=1.0) * limit).collect();
        self.add(name, block, Tensor::from_vec(rows, cols, data), false)
    }

    fn zeros(&mut self, name: &str, block: Block, rows: usize, cols: usize) -> usize {
        self.add(name, block, Tensor::zeros(rows, cols), false)
    }

    fn table(&mut self, name: &str, block: Block, rows: usize, cols: usize, scale: f64) -> usize {
        let data = (0..rows * cols)
            .map(|_| scale * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.add(name, block, Tensor::from_vec(rows, cols, data), true)
    }
}

impl Params {
    pub fn init(cfg: &ModelConfig, n_clusters: usize, d_x: usize) -> Self {
        use Block::*;
        let mut it = Init {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            list: Vec::new(),
        };
        let e = cfg.embed_dim;
        let h = cfg.hidden_out();
        let mut ids = Ids {
            emb: it.table("backbone.emb", Backbone, n_clusters, e, 0.1),
            wx: it.dense("backbone.wx", Backbone, d_x, e),
            bx: it.zeros("backbone.bx", Backbone, 1, e),
            ..Ids::default()
        };
        let mut fan_in = 2 * e;
        for (l, &w) in cfg.backbone_widths.iter().enumerate() {
            let wi = it.dense(&format!("backbone.w{l}"), Backbone, fan_in, w);
            let bi = it.zeros(&format!("backbone.b{l}"), Backbone, 1, w);
            ids.layers.push((wi, bi));
            fan_in = w;
        }
        if cfg.residual && cfg.backbone_widths.len() > 1 {
            ids.skip = Some(it.dense("backbone.skip", Backbone, cfg.backbone_widths[0], h));
        }
        ids.att = it.zeros("ite.att", HeadIte, h, 1);
        ids.wc = it.dense("ite.wc", HeadIte, h, 1);
        ids.wxi = it.dense("ite.wx", HeadIte, e, 1);
        ids.b = it.zeros("ite.b", HeadIte, 1, 1);
        ids.u = it.zeros("ite.u", HeadIte, 1, 1);

        let dm = cfg.mediator_dim;
        ids.wm = it.dense("proxy.wm", HeadProxy, h, dm);
        ids.bm = it.zeros("proxy.bm", HeadProxy, 1, dm);
        ids.wp = it.dense("proxy.wp", HeadProxy, dm, 1);
        ids.bp = it.zeros("proxy.bp", HeadProxy, 1, 1);

        ids.wa1 = it.dense("adv.w1", HeadAdv, dm, cfg.adv_hidden);
        ids.ba1 = it.zeros("adv.b1", HeadAdv, 1, cfg.adv_hidden);
        ids.wa2 = it.dense("adv.w2", HeadAdv, cfg.adv_hidden, 1);
        ids.ba2 = it.zeros("adv.b2", HeadAdv, 1, 1);

        ids.uc = it.table("ctr.touch", HeadCtr, n_clusters, cfg.ctr_dim, 0.1);
        ids.vb = it.table("ctr.proxy", HeadCtr, cfg.proxy_bins, cfg.ctr_dim, 0.1);
        ids.pc = it.dense("ctr.share", HeadCtr, e, cfg.ctr_dim);

        ids.wprop = it.zeros("propensity.w", Propensity, d_x, n_clusters);
        ids.bprop = it.zeros("propensity.b", Propensity, 1, n_clusters);
        Params { list: it.list, ids }
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.list[i].value
    }

    pub fn block_norm_sq(&self, block: Block) -> f64 {
        self.list.iter().filter(|p| p.block == block).map(|p| p.value.squared_norm()).sum()
    }
}
