//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node whose inputs have smaller indices, so the tape is
//! already in topological order and `backward` is a single reverse sweep.
//! Nodes that cannot reach a gradient-requiring leaf are skipped entirely.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary {
        op: BinaryOp,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Activation(Activation, Var),
    Mask {
        input: Var,
        mask: Vec<u8>,
        scale: f64,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive ops.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; all zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn get_slice(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Usage(format!("variable {} is not on this tape", v.0)))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is tracked (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::tensor::matmul(&self.check(a)?.value, &self.check(b)?.value)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Pointwise `a op b`. `b` may also match only the trailing dimensions of
    /// `a`, in which case it is broadcast along the leading (batch) axes.
    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let av = &self.check(a)?.value;
        let bv = &self.check(b)?.value;
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if !bv.is_empty() && av.shape().ends_with(bv.shape()) {
            true
        } else {
            return shape_err(format!(
                "elementwise shapes {:?} and {:?} are incompatible",
                av.shape(),
                bv.shape()
            ));
        };
        let bd = bv.data();
        let w = bd.len();
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
        };
        let data: Vec<f64> = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[if broadcast { i % w } else { i }]))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            value,
            Op::Binary {
                op,
                a,
                b,
                broadcast,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        let xv = &self.check(x)?.value;
        if !xv.is_finite() {
            return Err(Error::Domain("activation input is not finite".into()));
        }
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Activation(kind, x), rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Tanh, x)
    }

    /// Multiplies `x` by a binary mask (times `scale` where the mask is 1).
    ///
    /// The mask either matches the trailing dimension of `x` (shared across
    /// rows) or covers every element. Masked positions produce `0.0` in the
    /// output and exactly `0.0` in the gradient.
    pub fn apply_mask(&mut self, x: Var, mask: &[u8], scale: f64) -> Result<Var> {
        let xv = &self.check(x)?.value;
        if mask.len() != xv.last_dim() && mask.len() != xv.len() {
            return shape_err(format!(
                "mask of length {} does not fit tensor {:?}",
                mask.len(),
                xv.shape()
            ));
        }
        let w = mask.len();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask[i % w] == 0 { 0.0 } else { v * scale })
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::Mask {
                input: x,
                mask: mask.to_vec(),
                scale,
            },
            rg,
        ))
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn cross_entropy_logits(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = &self.check(logits)?.value;
        if lv.shape().len() != 2 {
            return shape_err(format!("logits must be 2-D, got {:?}", lv.shape()));
        }
        let (batch, classes) = (lv.shape()[0], lv.shape()[1]);
        if labels.len() != batch {
            return shape_err(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch
            ));
        }
        if batch == 0 {
            return shape_err("empty batch");
        }
        let mut probs = vec![0.0; batch * classes];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::Index(format!(
                    "label {label} out of range for {classes} classes"
                )));
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let lse = max + sum_exp.ln();
            total += lse - row[label];
            for (c, &z) in row.iter().enumerate() {
                probs[r * classes + c] = (z - max).exp() / sum_exp;
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / batch as f64),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.check(x)?.value.sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    /// Selects rows of a 2-D `table`, producing `[ids.len() × width]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = &self.check(table)?.value;
        if tv.shape().len() != 2 {
            return shape_err(format!("gather table must be 2-D, got {:?}", tv.shape()));
        }
        let (rows, width) = (tv.shape()[0], tv.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index(format!("row {id} out of range for {rows} rows")));
            }
            data.extend_from_slice(tv.row(id));
        }
        let value = Tensor::new(vec![ids.len(), width], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse accumulation from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self.check(loss)?;
        if node.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if let Some(da) = self.slot(grads, *a) {
                    // da += g · bᵀ
                    gemm(m, n, k, g, (n, 1), bv.data(), (1, n), 1.0, da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    // db += aᵀ · g
                    gemm(k, m, n, av.data(), (1, k), g, (n, 1), 1.0, db);
                }
            }
            Op::Binary {
                op,
                a,
                b,
                broadcast,
            } => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let w = bv.len();
                let bi = |j: usize| if *broadcast { j % w } else { j };
                if let Some(da) = self.slot(grads, *a) {
                    for (j, (d, &gj)) in da.iter_mut().zip(g).enumerate() {
                        *d += match op {
                            BinaryOp::Add | BinaryOp::Sub => gj,
                            BinaryOp::Mul => gj * bv[bi(j)],
                        };
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for (j, &gj) in g.iter().enumerate() {
                        db[bi(j)] += match op {
                            BinaryOp::Add => gj,
                            BinaryOp::Sub => -gj,
                            BinaryOp::Mul => gj * av[j],
                        };
                    }
                }
            }
            Op::Activation(kind, x) => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gj), &yj) in dx.iter_mut().zip(g).zip(y) {
                        *d += gj * kind.derivative_from_output(yj);
                    }
                }
            }
            Op::Mask { input, mask, scale } => {
                let w = mask.len();
                if let Some(dx) = self.slot(grads, *input) {
                    for (j, (d, &gj)) in dx.iter_mut().zip(g).enumerate() {
                        if mask[j % w] != 0 {
                            *d += gj * scale;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let batch = labels.len();
                let classes = probs.len() / batch;
                let scale = g[0] / batch as f64;
                if let Some(dl) = self.slot(grads, *logits) {
                    for (r, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            dl[r * classes + c] += scale * (probs[r * classes + c] - onehot);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Gather { table, ids } => {
                let width = self.nodes[table.0].value.last_dim();
                if let Some(dt) = self.slot(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..width {
                            dt[id * width + c] += g[r * width + c];
                        }
                    }
                }
            }
        }
    }
}
