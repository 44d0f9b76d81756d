//! Per-parameter optimizers: Adam for dense blocks, row-lazy Adagrad for
//! embedding tables.

use crate::autodiff::Tensor;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const ADAGRAD_EPS: f64 = 1e-10;
/// Starting value of the Adagrad accumulator.
pub const ADAGRAD_INIT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, value: &mut Tensor, grad: &Tensor, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, (x, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            *x -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    acc: Vec<f64>,
}

impl Adagrad {
    pub fn new(len: usize) -> Self {
        Self {
            acc: vec![ADAGRAD_INIT; len],
        }
    }

    /// Updates only the rows that received a non-zero gradient.
    pub fn step(&mut self, value: &mut Tensor, grad: &Tensor, lr: f64) {
        let cols = value.cols();
        for r in 0..value.rows() {
            let g_row = grad.row_slice(r);
            if g_row.iter().all(|&g| g == 0.0) {
                continue;
            }
            for (c, &g) in g_row.iter().enumerate() {
                let i = r * cols + c;
                self.acc[i] += g * g;
                let x = value.get(r, c) - lr * g / (self.acc[i].sqrt() + ADAGRAD_EPS);
                value.set(r, c, x);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Adam(Adam),
    Adagrad(Adagrad),
}
