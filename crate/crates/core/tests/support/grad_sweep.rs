//! Finite-difference sweeps over every differentiation primitive and the
//! composite training loss. Shared by the gradient tests and the acceptance run.

use mta_core::autodiff::{check_gradients, AutodiffError, Graph, Tensor, Value};
use mta_core::nn::{forward, Batch, Block, LossWeights, ModelConfig, Params};
use mta_core::scm::{generate, ScmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRIALS: usize = 100;
pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

type Build = fn(&mut Graph, &[Value]) -> Result<Value, AutodiffError>;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect(),
    )
}

/// Reduces a non-scalar output to a scalar through a fixed random projection so
/// every output element contributes a distinct weight.
fn project(g: &mut Graph, v: Value) -> Result<Value, AutodiffError> {
    let (r, c) = g.shape(v);
    let w: Vec<f64> = (0..r * c).map(|i| 0.3 + ((i * 7919) % 13) as f64 / 10.0).collect();
    let w = g.leaf(Tensor::from_vec(r, c, w))?;
    g.dot(v, w)
}

/// Worst relative error of `build` over [`TRIALS`] random inputs.
fn sweep(name: &str, shapes: &[(usize, usize, f64, f64)], build: Build) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 1_000_003);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let inputs: Vec<Tensor> = shapes
            .iter()
            .map(|&(r, c, lo, hi)| rand_tensor(&mut rng, r, c, lo, hi))
            .collect();
        let report = check_gradients(&inputs, EPS, build).unwrap();
        worst = worst.max(report.max_rel_error);
    }
    worst
}

/// Single matmul case held to a tighter bound than the sweep tolerance.
pub fn matmul_tight() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, 4, 3, -1.0, 1.0);
    let b = rand_tensor(&mut rng, 3, 2, -1.0, 1.0);
    check_gradients(&[a, b], EPS, |g, v| {
        let m = g.matmul(v[0], v[1])?;
        project(g, m)
    })
    .unwrap()
    .max_rel_error
}

pub fn elementwise() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    out.push(("add", sweep("add", &[(3, 4, -2.0, 2.0), (3, 4, -2.0, 2.0)], |g, v| {
        let o = g.add(v[0], v[1])?;
        project(g, o)
    })));
    out.push(("add_bias", sweep("add_bias", &[(3, 4, -2.0, 2.0), (1, 4, -2.0, 2.0)], |g, v| {
        let o = g.add(v[0], v[1])?;
        project(g, o)
    })));
    out.push(("sub", sweep("sub", &[(2, 3, -2.0, 2.0), (2, 3, -2.0, 2.0)], |g, v| {
        let o = g.sub(v[0], v[1])?;
        project(g, o)
    })));
    out.push(("mul", sweep("mul", &[(2, 3, -2.0, 2.0), (2, 3, -2.0, 2.0)], |g, v| {
        let o = g.mul(v[0], v[1])?;
        project(g, o)
    })));
    out.push(("scale", sweep("scale", &[(2, 3, -2.0, 2.0)], |g, v| {
        let o = g.scale(v[0], -1.7)?;
        project(g, o)
    })));
    out.push(("sigmoid", sweep("sigmoid", &[(3, 3, -4.0, 4.0)], |g, v| {
        let o = g.sigmoid(v[0])?;
        project(g, o)
    })));
    out.push(("tanh", sweep("tanh", &[(3, 3, -3.0, 3.0)], |g, v| {
        let o = g.tanh(v[0])?;
        project(g, o)
    })));
    // Inputs kept away from the kink.
    out.push(("relu", sweep("relu", &[(3, 3, 0.05, 2.0)], |g, v| {
        let n = g.scale(v[0], -1.0)?;
        let a = g.relu(v[0])?;
        let b = g.relu(n)?;
        let o = g.add(a, b)?;
        project(g, o)
    })));
    out.push(("log", sweep("log", &[(2, 3, 0.05, 3.0)], |g, v| {
        let o = g.log(v[0])?;
        project(g, o)
    })));
    out.push(("exp", sweep("exp", &[(2, 3, -2.0, 2.0)], |g, v| {
        let o = g.exp(v[0])?;
        project(g, o)
    })));
    out
}

pub fn reductions() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    out.push(("mean", sweep("mean", &[(3, 4, -2.0, 2.0)], |g, v| {
        let s = g.tanh(v[0])?;
        g.mean(s)
    })));
    out.push(("sum", sweep("sum", &[(3, 4, -2.0, 2.0)], |g, v| {
        let s = g.sigmoid(v[0])?;
        g.sum(s)
    })));
    out.push(("l2_norm", sweep("l2_norm", &[(2, 5, -2.0, 2.0)], |g, v| g.l2_norm(v[0]))));
    out.push(("dot", sweep("dot", &[(2, 3, -2.0, 2.0), (2, 3, -2.0, 2.0)], |g, v| {
        g.dot(v[0], v[1])
    })));
    out
}

pub fn structural() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    out.push(("matmul", sweep("matmul", &[(4, 3, -1.0, 1.0), (3, 2, -1.0, 1.0)], |g, v| {
        let o = g.matmul(v[0], v[1])?;
        project(g, o)
    })));
    out.push(("concat", sweep("concat", &[(3, 2, -1.0, 1.0), (3, 4, -1.0, 1.0)], |g, v| {
        let o = g.concat(v[0], v[1])?;
        let o = g.tanh(o)?;
        project(g, o)
    })));
    out.push(("transpose", sweep("transpose", &[(3, 2, -1.0, 1.0)], |g, v| {
        let o = g.transpose(v[0])?;
        project(g, o)
    })));
    out.push(("gather_rows", sweep("gather_rows", &[(4, 3, -1.0, 1.0)], |g, v| {
        let o = g.gather_rows(v[0], &[2, 0, 2, 3])?;
        let o = g.sigmoid(o)?;
        project(g, o)
    })));
    out.push(("segment_sum", sweep("segment_sum", &[(5, 2, -1.0, 1.0)], |g, v| {
        let o = g.segment_sum(v[0], &[0, 0, 1, 1, 1])?;
        let o = g.tanh(o)?;
        project(g, o)
    })));
    out.push(("segment_softmax", sweep("segment_softmax", &[(6, 1, -2.0, 2.0)], |g, v| {
        let o = g.segment_softmax(v[0], &[0, 0, 0, 1, 2, 2])?;
        project(g, o)
    })));
    out
}

pub fn losses() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    out.push(("softmax_cross_entropy", sweep("softmax_cross_entropy", &[(4, 5, -3.0, 3.0)], |g, v| {
        g.softmax_cross_entropy(v[0], &[0, 4, 2, 2])
    })));
    out.push(("binary_cross_entropy", sweep("binary_cross_entropy", &[(4, 1, -3.0, 3.0)], |g, v| {
        let p = g.sigmoid(v[0])?;
        g.binary_cross_entropy(p, &[1.0, 0.0, 1.0, 0.0], Some(&[0.5, 2.0, 1.0, 1.5]))
    })));
    out
}

/// `d/dx f(grad_reverse(x, 2))` against finite differences of `-2 f(x)`.
pub fn grad_reverse() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let x0: f64 = rng.random_range(-2.0..2.0);
        let f = |g: &mut Graph, x: Value| -> Result<Value, AutodiffError> {
            let t = g.tanh(x)?;
            let s = g.mul(t, x)?;
            g.sum(s)
        };
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(x0)).unwrap();
        let r = g.grad_reverse(x, 2.0).unwrap();
        let out = f(&mut g, r).unwrap();
        g.backward(out).unwrap();
        let analytic = g.grad(x).item();

        let surrogate = |x: f64| -2.0 * x.tanh() * x;
        let numeric = (surrogate(x0 + EPS) - surrogate(x0 - EPS)) / (2.0 * EPS);
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1e-6));
    }
    worst
}

/// Full weighted objective on a 10-episode batch, every parameter element.
///
/// Tape gradients follow the reversal node, so parameters upstream of the
/// mediator are compared against the surrogate in which the discriminator loss
/// enters with weight `-grl * lambda_adv`; the discriminator's own weights are
/// compared against the plain objective. Pass-through fractions are set to one.
pub fn composite(trials: usize) -> f64 {

    let scm = ScmConfig {
        oracle_grid: 11,
        ..ScmConfig::default()
    };
    let mut worst = 0.0_f64;
    for trial in 0..trials as u64 {
        let cfg = ModelConfig {
            embed_dim: 3,
            backbone_widths: vec![4, 3],
            mediator_dim: 2,
            ctr_dim: 3,
            adv_hidden: 3,
            proxy_bins: 5,
            main_to_mediator: 1.0,
            proxy_to_backbone: 1.0,
            ctr_to_backbone: 1.0,
            residual: trial % 2 == 1,
            seed: trial,
            ..ModelConfig::default()
        };
        let eps = generate(&ScmConfig { seed: 100 + trial, ..scm.clone() }, 10).unwrap().episodes;
        let batch = Batch::from_episodes(&eps, scm.n_clusters, scm.d_x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let ipw: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..3.0)).collect();
        let w = LossWeights {
            dml: 0.6,
            proxy: 1.0,
            adv: 4.0,
            ctr: 0.2,
            reg: 0.1,
            prop: 1.0,
            grl: rng.random_range(0.0..1.0),
        };
        let mut params = Params::init(&cfg, scm.n_clusters, scm.d_x);
        for p in &mut params.list {
            for v in p.value.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let eval = |p: &Params, adversary_block: bool| {
            let parts = forward::composite_loss(p, &cfg, &batch, &ipw, &w, &Block::ALL).unwrap().parts;
            if adversary_block {
                parts.total
            } else {
                parts.total - (1.0 + w.grl) * w.adv * parts.adv
            }
        };
        let mut tape = forward::composite_loss(&params, &cfg, &batch, &ipw, &w, &Block::ALL).unwrap();
        tape.graph.backward(tape.total).unwrap();
        for k in 0..params.list.len() {
            let analytic = tape.graph.grad(tape.bound.v(k)).clone();
            let adv = params.list[k].block == Block::HeadAdv;
            for i in 0..analytic.len() {
                let orig = params.list[k].value.data()[i];
                params.list[k].value.data_mut()[i] = orig + EPS;
                let plus = eval(&params, adv);
                params.list[k].value.data_mut()[i] = orig - EPS;
                let minus = eval(&params, adv);
                params.list[k].value.data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * EPS);
                let a = analytic.data()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}
