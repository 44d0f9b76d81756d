//! Graph construction for every head and for the composite training loss.

use crate::autodiff::{Graph, Op, Tensor, Value};

use super::params::{Block, Params};
use super::{Batch, ModelConfig, NnError};

type Result<T> = std::result::Result<T, NnError>;

/// Parameters placed on a tape as leaves, in [`Params::list`] order.
pub struct Bound {
    pub vals: Vec<Value>,
}

impl Bound {
    pub fn new(g: &mut Graph, params: &Params) -> Result<Self> {
        let vals = params
            .list
            .iter()
            .map(|p| g.leaf(p.value.clone()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { vals })
    }

    pub fn v(&self, i: usize) -> Value {
        self.vals[i]
    }
}

pub struct Encoded {
    pub x: Value,
    /// Projected covariates, one row per episode.
    pub xp: Value,
    /// Per-touch backbone output.
    pub h: Value,
    /// Attention weight of each touch within its episode.
    pub alpha: Value,
    /// Attention-pooled context, one row per episode (zero for empty episodes).
    pub ctx: Value,
}

fn dense(g: &mut Graph, input: Value, w: Value, b: Value) -> Result<Value> {
    let z = g.matmul(input, w)?;
    Ok(g.add(z, b)?)
}

/// Broadcasts an `n x 1` column across `cols` columns.
fn spread(g: &mut Graph, col: Value, cols: usize) -> Result<Value> {
    let ones = g.leaf(Tensor::filled(1, cols, 1.0))?;
    Ok(g.matmul(col, ones)?)
}

pub fn encode(g: &mut Graph, p: &Params, b: &Bound, cfg: &ModelConfig, batch: &Batch) -> Result<Encoded> {
    let ids = &p.ids;
    let x = g.leaf(batch.x.clone())?;
    let xp = dense(g, x, b.v(ids.wx), b.v(ids.bx))?;
    let xp = g.tanh(xp)?;
    let e = g.gather_rows(b.v(ids.emb), &batch.clusters)?;
    let xt = g.gather_rows(xp, &batch.seg)?;
    let mut h = g.concat(e, xt)?;
    let mut first = None;
    let last = ids.layers.len() - 1;
    for (l, &(w, bias)) in ids.layers.iter().enumerate() {
        let mut z = dense(g, h, b.v(w), b.v(bias))?;
        if l == last {
            if let (Some(skip), Some(h0)) = (ids.skip, first) {
                let s = g.matmul(h0, b.v(skip))?;
                z = g.add(z, s)?;
            }
        }
        h = g.tanh(z)?;
        if l == 0 {
            first = Some(h);
        }
    }
    let score = g.matmul(h, b.v(ids.att))?;
    let alpha = g.segment_softmax(score, &batch.seg)?;
    let a = spread(g, alpha, cfg.hidden_out())?;
    let weighted = g.mul(h, a)?;
    let ctx = g.segment_sum_to(weighted, &batch.seg, batch.n_episodes)?;
    Ok(Encoded { x, xp, h, alpha, ctx })
}

pub struct Mediator {
    /// Per-touch mediator representation.
    pub mhat: Value,
    pub proxy_logit: Value,
    /// Per-touch proxy prediction in `[0, 1]`.
    pub yprime: Value,
    /// Per-episode sum of the scalar mediator channel, as seen by the outcome head.
    pub mu: Value,
}

pub fn mediator(
    g: &mut Graph,
    p: &Params,
    b: &Bound,
    cfg: &ModelConfig,
    enc: &Encoded,
    batch: &Batch,
) -> Result<Mediator> {
    let ids = &p.ids;
    let hs = g.grad_scale(enc.h, cfg.proxy_to_backbone)?;
    let m = dense(g, hs, b.v(ids.wm), b.v(ids.bm))?;
    let mhat = g.tanh(m)?;
    let direction = g.matmul(mhat, b.v(ids.wp))?;
    let proxy_logit = g.add(direction, b.v(ids.bp))?;
    let yprime = g.sigmoid(proxy_logit)?;
    let channel = g.grad_scale(direction, cfg.main_to_mediator)?;
    let mu = g.segment_sum_to(channel, &batch.seg, batch.n_episodes)?;
    Ok(Mediator {
        mhat,
        proxy_logit,
        yprime,
        mu,
    })
}

/// Outcome-head logit `b + ctx.wc + xp.wx + u * mu`, one row per episode.
pub fn ite_logit(g: &mut Graph, p: &Params, b: &Bound, enc: &Encoded, med: &Mediator) -> Result<Value> {
    let ids = &p.ids;
    let c = g.matmul(enc.ctx, b.v(ids.wc))?;
    let xi = g.matmul(enc.xp, b.v(ids.wxi))?;
    let m = g.matmul(med.mu, b.v(ids.u))?;
    let s = g.add(c, xi)?;
    let s = g.add(s, m)?;
    Ok(g.add(s, b.v(ids.b))?)
}

/// Discriminator probability of `Y` per mediator row. The mediator enters
/// through a reversal node of strength `lambda_grl`.
pub fn adversary(g: &mut Graph, p: &Params, b: &Bound, mhat: Value, lambda_grl: f64) -> Result<Value> {
    let r = g.grad_reverse(mhat, lambda_grl)?;
    adversary_unchecked(g, p, b, r)
}

fn adversary_unchecked(g: &mut Graph, p: &Params, b: &Bound, input: Value) -> Result<Value> {
    let ids = &p.ids;
    let a = dense(g, input, b.v(ids.wa1), b.v(ids.ba1))?;
    let a = g.tanh(a)?;
    let o = dense(g, a, b.v(ids.wa2), b.v(ids.ba2))?;
    Ok(g.sigmoid(o)?)
}

/// Rejects tapes on which `out` sees `mhat` other than through a reversal node.
pub fn check_reversal(g: &Graph, out: Value, mhat: Value) -> Result<()> {
    if !g.depends_on(out, mhat) {
        return Err(NnError::Structure("adversary output does not depend on the mediator".into()));
    }
    let reversal = |op: &Op| matches!(op, Op::GradScale(_, f) if f.is_sign_negative());
    if g.reaches_avoiding(out, mhat, reversal) {
        return Err(NnError::Structure(
            "mediator reaches the adversary without a gradient-reversal node".into(),
        ));
    }
    Ok(())
}

/// Contrastive anchor for each listed touch row: `U[c] + Emb[c] P`.
pub fn ctr_anchor(g: &mut Graph, p: &Params, b: &Bound, cfg: &ModelConfig, clusters: &[usize]) -> Result<Value> {
    let ids = &p.ids;
    let u = g.gather_rows(b.v(ids.uc), clusters)?;
    let e = g.gather_rows(b.v(ids.emb), clusters)?;
    let e = g.grad_scale(e, cfg.ctr_to_backbone)?;
    let shared = g.matmul(e, b.v(ids.pc))?;
    Ok(g.add(u, shared)?)
}

pub fn ctr_signature(g: &mut Graph, p: &Params, b: &Bound, bins: &[usize]) -> Result<Value> {
    Ok(g.gather_rows(b.v(p.ids.vb), bins)?)
}

/// In-batch InfoNCE over each episode's highest-proxy touch.
pub fn infonce(g: &mut Graph, p: &Params, b: &Bound, cfg: &ModelConfig, batch: &Batch) -> Result<Value> {
    if batch.n_episodes < 2 {
        return Err(NnError::DegenerateBatch(batch.n_episodes));
    }
    let rows = batch.top_proxy_rows();
    let clusters: Vec<usize> = rows.iter().map(|&j| batch.clusters[j]).collect();
    let bins: Vec<usize> = rows.iter().map(|&j| cfg.proxy_bin(batch.proxy[j])).collect();
    let anchor = ctr_anchor(g, p, b, cfg, &clusters)?;
    let sig = ctr_signature(g, p, b, &bins)?;
    let sig_t = g.transpose(sig)?;
    let logits = g.matmul(anchor, sig_t)?;
    let logits = g.scale(logits, 1.0 / cfg.tau_ctr)?;
    let targets: Vec<usize> = (0..batch.n_episodes).collect();
    Ok(g.softmax_cross_entropy(logits, &targets)?)
}

pub fn propensity_logits(g: &mut Graph, p: &Params, b: &Bound, x: Value) -> Result<Value> {
    dense(g, x, b.v(p.ids.wprop), b.v(p.ids.bprop))
}

/// Loss multipliers for one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub dml: f64,
    pub proxy: f64,
    pub adv: f64,
    pub ctr: f64,
    pub reg: f64,
    pub prop: f64,
    pub grl: f64,
}

/// Unweighted loss components. Components whose weight is zero are not
/// computed and read as zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub main: f64,
    pub dml: f64,
    pub proxy: f64,
    pub adv: f64,
    pub ctr: f64,
    pub reg: f64,
    pub prop: f64,
    pub total: f64,
}

pub struct LossTape {
    pub graph: Graph,
    pub bound: Bound,
    pub total: Value,
    pub logit: Value,
    pub parts: LossParts,
}

/// Builds the weighted composite objective on a fresh tape.
///
/// `ipw` holds one (detached) weight per episode; `reg_blocks` lists the
/// parameter groups that carry the L2 penalty.
pub fn composite_loss(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
    ipw: &[f64],
    w: &LossWeights,
    reg_blocks: &[Block],
) -> Result<LossTape> {
    if ipw.len() != batch.n_episodes {
        return Err(NnError::Contract(format!(
            "{} weights for {} episodes",
            ipw.len(),
            batch.n_episodes
        )));
    }
    let mut g = Graph::new();
    let b = Bound::new(&mut g, params)?;
    let enc = encode(&mut g, params, &b, cfg, batch)?;
    let med = mediator(&mut g, params, &b, cfg, &enc, batch)?;
    let logit = ite_logit(&mut g, params, &b, &enc, &med)?;
    let prob = g.sigmoid(logit)?;
    let main = g.binary_cross_entropy(prob, &batch.y, Some(ipw))?;
    let mut parts = LossParts {
        main: g.scalar(main),
        ..LossParts::default()
    };
    let mut total = main;
    let n = batch.n_episodes as f64;

    if w.dml > 0.0 {
        let y = g.leaf(Tensor::column(batch.y.clone()))?;
        let r = g.sub(y, prob)?;
        let sq = g.mul(r, r)?;
        let wrow = g.leaf(Tensor::row(ipw.to_vec()))?;
        let s = g.matmul(wrow, sq)?;
        let dml = g.scale(s, 1.0 / n)?;
        parts.dml = g.scalar(dml);
        let t = g.scale(dml, w.dml)?;
        total = g.add(total, t)?;
    }
    if w.proxy > 0.0 {
        let labels: Vec<f64> = batch
            .proxy
            .iter()
            .map(|&s| f64::from(u8::from(s >= cfg.proxy_threshold)))
            .collect();
        let l = g.binary_cross_entropy(med.yprime, &labels, None)?;
        parts.proxy = g.scalar(l);
        let t = g.scale(l, w.proxy)?;
        total = g.add(total, t)?;
    }
    if w.adv > 0.0 {
        let out = adversary(&mut g, params, &b, med.mhat, w.grl)?;
        check_reversal(&g, out, med.mhat)?;
        let l = g.binary_cross_entropy(out, &batch.touch_labels(), None)?;
        parts.adv = g.scalar(l);
        let t = g.scale(l, w.adv)?;
        total = g.add(total, t)?;
    }
    if w.ctr > 0.0 {
        let l = infonce(&mut g, params, &b, cfg, batch)?;
        parts.ctr = g.scalar(l);
        let t = g.scale(l, w.ctr)?;
        total = g.add(total, t)?;
    }
    if w.reg > 0.0 {
        let mut acc: Option<Value> = None;
        for (i, prm) in params.list.iter().enumerate() {
            if !reg_blocks.contains(&prm.block) {
                continue;
            }
            let d = g.dot(b.v(i), b.v(i))?;
            acc = Some(match acc {
                Some(a) => g.add(a, d)?,
                None => d,
            });
        }
        if let Some(l) = acc {
            parts.reg = g.scalar(l);
            let t = g.scale(l, w.reg)?;
            total = g.add(total, t)?;
        }
    }
    if w.prop > 0.0 {
        let logits = propensity_logits(&mut g, params, &b, enc.x)?;
        let per_touch = g.gather_rows(logits, &batch.seg)?;
        let l = g.softmax_cross_entropy(per_touch, &batch.clusters)?;
        parts.prop = g.scalar(l);
        let t = g.scale(l, w.prop)?;
        total = g.add(total, t)?;
    }
    parts.total = g.scalar(total);
    if !parts.total.is_finite() {
        return Err(NnError::NonFinite(format!("{parts:?}")));
    }
    Ok(LossTape {
        graph: g,
        bound: b,
        total,
        logit,
        parts,
    })
}

#[cfg(test)]
pub(crate) fn adversary_without_reversal(g: &mut Graph, p: &Params, b: &Bound, mhat: Value) -> Result<Value> {
    adversary_unchecked(g, p, b, mhat)
}
