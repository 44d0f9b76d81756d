use std::rc::Rc;

use super::tensor::Tensor;
use super::AutodiffError;

/// Lower clamp applied to every logarithm argument.
pub const LOG_CLAMP: f64 = 1e-7;

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(usize);

impl Value {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag recorded for each node. Parents always have smaller indices
/// than their children, so the node vector is a topological order.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    MatMul(Value, Value),
    Add(Value, Value),
    /// `a + b` where `b` is a `1 x cols` row broadcast over the rows of `a`.
    AddBias(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    Scale(Value, f64),
    Sigmoid(Value),
    Tanh(Value),
    Relu(Value),
    Log(Value),
    Exp(Value),
    Mean(Value),
    Sum(Value),
    L2Norm(Value),
    Dot(Value, Value),
    Concat(Value, Value),
    Transpose(Value),
    GatherRows(Value, Rc<[usize]>),
    SegmentSum(Value, Rc<[usize]>),
    SegmentSoftmax(Value, Rc<[usize]>),
    SoftmaxCrossEntropy(Value, Rc<[usize]>),
    BinaryCrossEntropy(Value, Rc<[f64]>, Rc<[f64]>),
    GradScale(Value, f64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Log(..) => "log",
            Op::Exp(..) => "exp",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::L2Norm(..) => "l2_norm",
            Op::Dot(..) => "dot",
            Op::Concat(..) => "concat",
            Op::Transpose(..) => "transpose",
            Op::GatherRows(..) => "gather_rows",
            Op::SegmentSum(..) => "segment_sum",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::SoftmaxCrossEntropy(..) => "softmax_cross_entropy",
            Op::BinaryCrossEntropy(..) => "binary_cross_entropy",
            Op::GradScale(..) => "grad_scale",
        }
    }

    pub fn parents(&self) -> Vec<Value> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | AddBias(a, b) | Sub(a, b) | Mul(a, b) | Dot(a, b)
            | Concat(a, b) => vec![*a, *b],
            Scale(a, _) | Sigmoid(a) | Tanh(a) | Relu(a) | Log(a) | Exp(a) | Mean(a) | Sum(a)
            | L2Norm(a) | Transpose(a) | GatherRows(a, _) | SegmentSum(a, _)
            | SegmentSoftmax(a, _) | SoftmaxCrossEntropy(a, _) | BinaryCrossEntropy(a, _, _)
            | GradScale(a, _) => vec![*a],
        }
    }
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Single-owner reverse-mode tape.
///
/// Nodes are appended in evaluation order; `backward` walks them in reverse,
/// visiting each reachable node exactly once. Gradients accumulate across
/// repeated `backward` calls until [`Graph::zero_grad`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].grad
    }

    /// Handle of the `i`-th node.
    pub fn value_handle(&self, i: usize) -> Value {
        assert!(i < self.nodes.len(), "node {i} out of range");
        Value(i)
    }

    pub fn op(&self, v: Value) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn shape(&self, v: Value) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Value) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Whether `target` is reachable from `from` by following parent links.
    pub fn depends_on(&self, from: Value, target: Value) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; from.0 + 1];
        while let Some(v) = stack.pop() {
            if v == target {
                return true;
            }
            if v.0 < target.0 || seen[v.0] {
                continue;
            }
            seen[v.0] = true;
            stack.extend(self.nodes[v.0].op.parents());
        }
        false
    }

    /// Whether `target` is reachable from `from` without expanding any node
    /// whose op matches `stop`.
    pub fn reaches_avoiding(&self, from: Value, target: Value, stop: impl Fn(&Op) -> bool) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; from.0 + 1];
        while let Some(v) = stack.pop() {
            if v == target {
                return true;
            }
            if v.0 < target.0 || seen[v.0] {
                continue;
            }
            seen[v.0] = true;
            let op = &self.nodes[v.0].op;
            if stop(op) {
                continue;
            }
            stack.extend(op.parents());
        }
        false
    }

    /// Whether `from` or any of its ancestors has an op matching `pred`.
    pub fn path_has(&self, from: Value, pred: impl Fn(&Op) -> bool) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; from.0 + 1];
        while let Some(v) = stack.pop() {
            if seen[v.0] {
                continue;
            }
            seen[v.0] = true;
            let op = &self.nodes[v.0].op;
            if pred(op) {
                return true;
            }
            stack.extend(op.parents());
        }
        false
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Value> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op.name() });
        }
        let (r, c) = value.shape();
        self.nodes.push(Node {
            value,
            grad: Tensor::zeros(r, c),
            op,
        });
        Ok(Value(self.nodes.len() - 1))
    }

    /// Leaf node (parameter or input).
    pub fn leaf(&mut self, value: Tensor) -> Result<Value> {
        self.push(value, Op::Leaf)
    }

    fn same_shape(&self, op: &'static str, a: Value, b: Value) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// Elementwise sum. `b` may also be a `1 x cols` bias row.
    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let mut out = self.value(a).clone();
            out.add_assign(self.value(b));
            return self.push(out, Op::Add(a, b));
        }
        if sb.0 == 1 && sb.1 == sa.1 {
            let bias = self.value(b).data().to_vec();
            let mut out = self.value(a).clone();
            for r in 0..sa.0 {
                for c in 0..sa.1 {
                    out.set(r, c, out.get(r, c) + bias[c]);
                }
            }
            return self.push(out, Op::AddBias(a, b));
        }
        Err(AutodiffError::Shape {
            op: "add",
            lhs: sa,
            rhs: sb,
        })
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("sub", a, b)?;
        let bv = self.value(b).clone();
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(bv.data())
            .for_each(|(x, y)| *x -= y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("mul", a, b)?;
        let bv = self.value(b).clone();
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(bv.data())
            .for_each(|(x, y)| *x *= y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Value, s: f64) -> Result<Value> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Natural log with the argument clamped below at [`LOG_CLAMP`].
    pub fn log(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).map(|x| x.max(LOG_CLAMP).ln());
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn mean(&mut self, a: Value) -> Result<Value> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(AutodiffError::Contract("mean of an empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Value) -> Result<Value> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn l2_norm(&mut self, a: Value) -> Result<Value> {
        let n = self.value(a).squared_norm().sqrt();
        self.push(Tensor::scalar(n), Op::L2Norm(a))
    }

    pub fn dot(&mut self, a: Value, b: Value) -> Result<Value> {
        self.same_shape("dot", a, b)?;
        let d = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum::<f64>();
        self.push(Tensor::scalar(d), Op::Dot(a, b))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(AutodiffError::Shape {
                op: "concat",
                lhs: sa,
                rhs: sb,
            });
        }
        let cols = sa.1 + sb.1;
        let mut out = Tensor::zeros(sa.0, cols);
        let (ta, tb) = (self.value(a), self.value(b));
        for r in 0..sa.0 {
            for c in 0..sa.1 {
                out.set(r, c, ta.get(r, c));
            }
            for c in 0..sb.1 {
                out.set(r, sa.1 + c, tb.get(r, c));
            }
        }
        self.push(out, Op::Concat(a, b))
    }

    pub fn transpose(&mut self, a: Value) -> Result<Value> {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Row lookup `table[idx[i]]`, the embedding primitive.
    pub fn gather_rows(&mut self, table: Value, idx: &[usize]) -> Result<Value> {
        let t = self.value(table);
        let (rows, cols) = t.shape();
        let mut out = Tensor::zeros(idx.len(), cols);
        for (i, &r) in idx.iter().enumerate() {
            if r >= rows {
                return Err(AutodiffError::Index {
                    op: "gather_rows",
                    index: r,
                    len: rows,
                });
            }
            for c in 0..cols {
                out.set(i, c, t.get(r, c));
            }
        }
        self.push(out, Op::GatherRows(table, idx.into()))
    }

    fn check_segments(&self, op: &'static str, a: Value, seg: &[usize]) -> Result<usize> {
        let rows = self.shape(a).0;
        if seg.len() != rows {
            return Err(AutodiffError::Shape {
                op,
                lhs: self.shape(a),
                rhs: (seg.len(), 1),
            });
        }
        if seg.windows(2).any(|w| w[1] < w[0]) {
            return Err(AutodiffError::Contract(format!(
                "{op}: segment ids must be sorted"
            )));
        }
        Ok(seg.last().map_or(0, |s| s + 1))
    }

    /// Sums rows sharing a segment id; output has one row per segment.
    /// Segment ids must be sorted and contiguous from zero.
    pub fn segment_sum(&mut self, a: Value, seg: &[usize]) -> Result<Value> {
        let n_seg = self.check_segments("segment_sum", a, seg)?;
        self.segment_sum_to(a, seg, n_seg)
    }

    /// [`Graph::segment_sum`] with an explicit segment count, so trailing or
    /// interior segments may be empty (their rows are zero).
    pub fn segment_sum_to(&mut self, a: Value, seg: &[usize], n_seg: usize) -> Result<Value> {
        let needed = self.check_segments("segment_sum", a, seg)?;
        if needed > n_seg {
            return Err(AutodiffError::Index {
                op: "segment_sum",
                index: needed - 1,
                len: n_seg,
            });
        }
        let t = self.value(a);
        let cols = t.cols();
        let mut out = Tensor::zeros(n_seg, cols);
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                out.set(s, c, out.get(s, c) + t.get(r, c));
            }
        }
        self.push(out, Op::SegmentSum(a, seg.into()))
    }

    /// Softmax of an `n x 1` column taken separately within each segment.
    pub fn segment_softmax(&mut self, a: Value, seg: &[usize]) -> Result<Value> {
        let n_seg = self.check_segments("segment_softmax", a, seg)?;
        if self.shape(a).1 != 1 {
            return Err(AutodiffError::Shape {
                op: "segment_softmax",
                lhs: self.shape(a),
                rhs: (self.shape(a).0, 1),
            });
        }
        let x = self.value(a).data().to_vec();
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (i, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(x[i]);
        }
        let mut denom = vec![0.0; n_seg];
        let e: Vec<f64> = x
            .iter()
            .zip(seg)
            .map(|(&v, &s)| {
                let e = (v - max[s]).exp();
                denom[s] += e;
                e
            })
            .collect();
        let out: Vec<f64> = e.iter().zip(seg).map(|(v, &s)| v / denom[s]).collect();
        self.push(Tensor::column(out), Op::SegmentSoftmax(a, seg.into()))
    }

    /// Mean cross-entropy of row-wise softmax(logits) against class targets.
    pub fn softmax_cross_entropy(&mut self, logits: Value, targets: &[usize]) -> Result<Value> {
        let t = self.value(logits);
        let (rows, cols) = t.shape();
        if rows != targets.len() || rows == 0 {
            return Err(AutodiffError::Shape {
                op: "softmax_cross_entropy",
                lhs: (rows, cols),
                rhs: (targets.len(), 1),
            });
        }
        let mut loss = 0.0;
        for (r, &k) in targets.iter().enumerate() {
            if k >= cols {
                return Err(AutodiffError::Index {
                    op: "softmax_cross_entropy",
                    index: k,
                    len: cols,
                });
            }
            let row = t.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[k];
        }
        let out = Tensor::scalar(loss / rows as f64);
        self.push(out, Op::SoftmaxCrossEntropy(logits, targets.into()))
    }

    /// Weighted mean binary cross-entropy `mean_i w_i * -(y ln p + (1-y) ln(1-p))`,
    /// probabilities clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]`.
    pub fn binary_cross_entropy(
        &mut self,
        p: Value,
        targets: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<Value> {
        let t = self.value(p);
        if t.len() != targets.len() || t.is_empty() {
            return Err(AutodiffError::Shape {
                op: "binary_cross_entropy",
                lhs: t.shape(),
                rhs: (targets.len(), 1),
            });
        }
        let w: Rc<[f64]> = match weights {
            Some(w) if w.len() != targets.len() => {
                return Err(AutodiffError::Shape {
                    op: "binary_cross_entropy",
                    lhs: t.shape(),
                    rhs: (w.len(), 1),
                })
            }
            Some(w) => w.into(),
            None => vec![1.0; targets.len()].into(),
        };
        let n = targets.len() as f64;
        let loss = t
            .data()
            .iter()
            .zip(targets)
            .zip(w.iter())
            .map(|((&p, &y), &w)| {
                let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
                -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        self.push(
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy(p, targets.into(), w),
        )
    }

    /// Identity forward; backward multiplies the incoming gradient by `-lambda`.
    pub fn grad_reverse(&mut self, a: Value, lambda: f64) -> Result<Value> {
        if !lambda.is_finite() {
            return Err(AutodiffError::NonFinite { op: "grad_reverse" });
        }
        self.grad_scale(a, -lambda)
    }

    /// Identity forward; backward multiplies the incoming gradient by `factor`.
    /// A factor of zero is a stop-gradient.
    pub fn grad_scale(&mut self, a: Value, factor: f64) -> Result<Value> {
        let out = self.value(a).clone();
        self.push(out, Op::GradScale(a, factor))
    }

    /// Reverse pass from a scalar `loss`, accumulating into every reachable node.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            self.nodes[i].grad.add_assign(&g);
        }
        if self.nodes[..=loss.0].iter().any(|n| !n.grad.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "backward" });
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        fn acc(grads: &mut [Option<Tensor>], v: Value, t: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        }
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(grads, *a, g.matmul(&tb.transpose()));
                acc(grads, *b, ta.transpose().matmul(g));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddBias(a, b) => {
                acc(grads, *a, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        gb.set(0, c, gb.get(0, c) + g.get(r, c));
                    }
                }
                acc(grads, *b, gb);
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(grads, *a, zip(g, tb, |x, y| x * y));
                acc(grads, *b, zip(g, ta, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(grads, *a, g.map(|x| x * s)),
            Op::Sigmoid(a) => acc(grads, *a, zip(g, out, |x, y| x * y * (1.0 - y))),
            Op::Tanh(a) => acc(grads, *a, zip(g, out, |x, y| x * (1.0 - y * y))),
            Op::Relu(a) => {
                let ta = self.value(*a);
                acc(grads, *a, zip(g, ta, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Log(a) => {
                let ta = self.value(*a);
                acc(
                    grads,
                    *a,
                    zip(g, ta, |x, y| if y > LOG_CLAMP { x / y } else { 0.0 }),
                );
            }
            Op::Exp(a) => acc(grads, *a, zip(g, out, |x, y| x * y)),
            Op::Mean(a) => {
                let ta = self.value(*a);
                let v = g.item() / ta.len() as f64;
                acc(grads, *a, Tensor::filled(ta.rows(), ta.cols(), v));
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                acc(grads, *a, Tensor::filled(ta.rows(), ta.cols(), g.item()));
            }
            Op::L2Norm(a) => {
                let ta = self.value(*a);
                let n = out.item();
                let gi = g.item();
                acc(
                    grads,
                    *a,
                    ta.map(|x| if n > 0.0 { gi * x / n } else { 0.0 }),
                );
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let gi = g.item();
                acc(grads, *a, tb.map(|x| gi * x));
                acc(grads, *b, ta.map(|x| gi * x));
            }
            Op::Concat(a, b) => {
                let (ca, cb) = (self.shape(*a).1, self.shape(*b).1);
                let rows = g.rows();
                let mut ga = Tensor::zeros(rows, ca);
                let mut gb = Tensor::zeros(rows, cb);
                for r in 0..rows {
                    for c in 0..ca {
                        ga.set(r, c, g.get(r, c));
                    }
                    for c in 0..cb {
                        gb.set(r, c, g.get(r, ca + c));
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Transpose(a) => acc(grads, *a, g.transpose()),
            Op::GatherRows(table, idx) => {
                let (rows, cols) = self.shape(*table);
                let mut gt = Tensor::zeros(rows, cols);
                for (i, &r) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gt.set(r, c, gt.get(r, c) + g.get(i, c));
                    }
                }
                acc(grads, *table, gt);
            }
            Op::SegmentSum(a, seg) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        ga.set(r, c, g.get(s, c));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, seg) => {
                // d x_i = y_i * (g_i - sum_{j in seg} g_j y_j)
                let y = out.data();
                let gd = g.data();
                let n_seg = seg.last().map_or(0, |s| s + 1);
                let mut inner = vec![0.0; n_seg];
                for (i, &s) in seg.iter().enumerate() {
                    inner[s] += gd[i] * y[i];
                }
                let ga: Vec<f64> = seg
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| y[i] * (gd[i] - inner[s]))
                    .collect();
                acc(grads, *a, Tensor::column(ga));
            }
            Op::SoftmaxCrossEntropy(logits, targets) => {
                let t = self.value(*logits);
                let (rows, cols) = t.shape();
                let scale = g.item() / rows as f64;
                let mut gl = Tensor::zeros(rows, cols);
                for (r, &k) in targets.iter().enumerate() {
                    let row = t.row_slice(r);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for c in 0..cols {
                        let p = (row[c] - m).exp() / z;
                        let ind = if c == k { 1.0 } else { 0.0 };
                        gl.set(r, c, scale * (p - ind));
                    }
                }
                acc(grads, *logits, gl);
            }
            Op::BinaryCrossEntropy(p, targets, weights) => {
                let tp = self.value(*p);
                let n = targets.len() as f64;
                let gi = g.item();
                let data: Vec<f64> = tp
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .zip(weights.iter())
                    .map(|((&p, &y), &w)| {
                        if p <= LOG_CLAMP || p >= 1.0 - LOG_CLAMP {
                            0.0
                        } else {
                            gi * w * (-(y / p) + (1.0 - y) / (1.0 - p)) / n
                        }
                    })
                    .collect();
                acc(grads, *p, Tensor::from_vec(tp.rows(), tp.cols(), data));
            }
            Op::GradScale(a, f) => acc(grads, *a, g.map(|x| x * f)),
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}
