//! Define-by-run reverse-mode tape.
//!
//! Every operation evaluates eagerly and appends a node holding its value.
//! Nodes only ever reference earlier nodes, so the node list is already in
//! topological order and `backward` is a single reverse sweep.

use std::fmt;

use super::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    /// The relu subgradient at 0 is 0.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// An operation whose forward value is computed outside the tape and whose
/// vector-Jacobian product is supplied by the implementor.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;

    /// Returns one gradient per input; entries for inputs with
    /// `needs_grad[i] == false` may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &Tensor,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Activation(usize, Activation),
    SoftmaxColumns(usize),
    Sum(usize),
    SumLast(usize),
    SumRows(usize),
    Reshape(usize),
    SliceCols { src: usize, start: usize },
    Gather { src: usize, index: Vec<usize> },
    Custom { inputs: Vec<usize>, op: Box<dyn CustomOp> },
}

impl Op {
    fn name(&self) -> &str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Activation(..) => "activation",
            Op::SoftmaxColumns(..) => "softmax_columns",
            Op::Sum(..) => "sum",
            Op::SumLast(..) => "sum_last",
            Op::SumRows(..) => "sum_rows",
            Op::Reshape(..) => "reshape",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visits: usize,
}

impl Gradients {
    /// Gradient for a trainable leaf; `None` for constants and interior nodes.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Number of nodes the reverse sweep visited.
    pub fn visits(&self) -> usize {
        self.visits
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| (n.op.name(), n.value.shape())))
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input: receives a gradient from `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Fixed input: no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn needs_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Inputs of every relu node, flattened as a sign pattern (`x > 0`).
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            if let Op::Activation(src, Activation::Relu) = node.op {
                pattern.extend(self.nodes[src].value.data().iter().map(|&x| x > 0.0));
            }
        }
        pattern
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].needs_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.value(a).require_2d("matmul")?;
        let (k2, c) = self.value(b).require_2d("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{r}x{k}] x [{k2}x{c}]")));
        }
        let mut out = vec![0.0; r * c];
        gemm(r, k, c, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let value = Tensor::new(vec![r, c], out)?;
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(Op::MatMul(a.0, b.0), value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(Op::Add(a.0, b.0), value, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x - y);
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(Op::Sub(a.0, b.0), value, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x * y);
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(Op::Mul(a.0, b.0), value, ng))
    }

    /// Adds a `[1, c]` (or `[c]`) bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).cols();
        if self.value(bias).len() != c {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} vs input {:?}", self.value(bias).shape(), self.value(x).shape()),
            ));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in value.data_mut().chunks_mut(c) {
            for (v, bb) in row.iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let ng = self.any_grad(&[x.0, bias.0]);
        Ok(self.push(Op::AddBias(x.0, bias.0), value, ng))
    }

    /// `x * w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let ng = self.nodes[a.0].needs_grad;
        self.push(Op::Scale(a.0, factor), value, ng)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        let ng = self.nodes[x.0].needs_grad;
        self.push(Op::Activation(x.0, kind), value, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    /// Softmax down each column of the trailing `[rows, cols]` block.
    /// Leading axes are treated as a batch.
    pub fn softmax_columns(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() < 2 {
            return Err(shape_err("softmax_columns", format!("need >= 2 axes, got {shape:?}")));
        }
        let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut value = self.value(x).clone();
        for block in value.data_mut().chunks_mut(rows * cols) {
            softmax_block(block, rows, cols);
        }
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(Op::SoftmaxColumns(x.0), value, ng))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let ng = self.nodes[x.0].needs_grad;
        self.push(Op::Sum(x.0), Tensor::scalar(s), ng)
    }

    /// Reduces the last axis.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let data: Vec<f64> = t.data().chunks(c).map(|row| row.iter().sum()).collect();
        let mut shape = t.shape()[..t.shape().len() - 1].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let value = Tensor::new(shape, data).expect("sum_last shape");
        let ng = self.nodes[x.0].needs_grad;
        self.push(Op::SumLast(x.0), value, ng)
    }

    /// Column sums of a matrix, as `[1, c]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let (_, c) = self.value(x).require_2d("sum_rows")?;
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(Op::SumRows(x.0), Tensor::new(vec![1, c], out)?, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).with_shape(shape)?;
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(Op::Reshape(x.0), value, ng))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).require_2d("slice_cols")?;
        if len == 0 || start + len > c {
            return Err(shape_err("slice_cols", format!("{start}..{} of {c} columns", start + len)));
        }
        let mut out = Vec::with_capacity(r * len);
        for row in self.value(x).data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(Op::SliceCols { src: x.0, start }, Tensor::new(vec![r, len], out)?, ng))
    }

    /// `out.flat[k] = x.flat[index[k]]`, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(shape_err("gather", format!("index {bad} out of {} values", src.len())));
        }
        let data: Vec<f64> = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(Op::Gather { src: x.0, index }, value, ng))
    }

    /// Records an externally computed node.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let ids: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        let ng = self.any_grad(&ids);
        self.push(Op::Custom { inputs: ids, op }, output, ng)
    }

    /// Reverse sweep from a scalar `seed`.
    ///
    /// Every node up to and including the seed is visited once. Trainable
    /// leaves that do not influence the seed get a zero gradient.
    pub fn backward(&self, seed: Var) -> Result<Gradients> {
        let seed_value = self.value(seed);
        if seed_value.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "backward seed must be a scalar, got shape {:?}",
                seed_value.shape()
            )));
        }
        let n = seed.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[seed.0] = Some(Tensor::filled(seed_value.shape(), 1.0));
        let mut visits = 0;

        for idx in (0..n).rev() {
            visits += 1;
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            if let Op::Leaf = node.op {
                if grads[idx].is_none() {
                    grads[idx] = Some(Tensor::zeros(node.value.shape()));
                }
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
        }
        Ok(Gradients { grads, visits })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let ng = |i: usize| self.nodes[i].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let (r, k) = (av.shape()[0], av.shape()[1]);
                let c = bv.shape()[1];
                if ng(*a) {
                    let mut da = vec![0.0; r * k];
                    gemm(r, c, k, g.data(), false, bv.data(), true, 0.0, &mut da);
                    accumulate(grads, *a, Tensor::new(vec![r, k], da)?);
                }
                if ng(*b) {
                    let mut db = vec![0.0; k * c];
                    gemm(k, r, c, av.data(), true, g.data(), false, 0.0, &mut db);
                    accumulate(grads, *b, Tensor::new(vec![k, c], db)?);
                }
            }
            Op::Add(a, b) => {
                if ng(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if ng(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if ng(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if ng(*b) {
                    accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if ng(*a) {
                    accumulate(grads, *a, g.zip(&self.nodes[*b].value, |x, y| x * y));
                }
                if ng(*b) {
                    accumulate(grads, *b, g.zip(&self.nodes[*a].value, |x, y| x * y));
                }
            }
            Op::AddBias(x, bias) => {
                if ng(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if ng(*bias) {
                    let c = g.cols();
                    let mut db = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let shape = self.nodes[*bias].value.shape().to_vec();
                    accumulate(grads, *bias, Tensor::new(shape, db)?);
                }
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.map(|x| x * f)),
            Op::Activation(x, kind) => {
                let xv = &self.nodes[*x].value;
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(y.data()))
                    .map(|(&gg, (&xx, &yy))| gg * kind.derivative(xx, yy))
                    .collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::SoftmaxColumns(x) => {
                let y = &node.value;
                let shape = y.shape();
                let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
                let mut dx = vec![0.0; y.len()];
                for ((yb, gb), db) in y
                    .data()
                    .chunks(rows * cols)
                    .zip(g.data().chunks(rows * cols))
                    .zip(dx.chunks_mut(rows * cols))
                {
                    for c in 0..cols {
                        let dot: f64 = (0..rows).map(|r| yb[r * cols + c] * gb[r * cols + c]).sum();
                        for r in 0..rows {
                            let i = r * cols + c;
                            db[i] = yb[i] * (gb[i] - dot);
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(shape.to_vec(), dx)?);
            }
            Op::Sum(x) => {
                let shape = self.nodes[*x].value.shape();
                accumulate(grads, *x, Tensor::filled(shape, g.data()[0]));
            }
            Op::SumLast(x) => {
                let xv = &self.nodes[*x].value;
                let c = xv.cols();
                let data = g.data().iter().flat_map(|&gg| std::iter::repeat_n(gg, c)).collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::SumRows(x) => {
                let xv = &self.nodes[*x].value;
                let r = xv.rows();
                let data = (0..r).flat_map(|_| g.data().iter().copied()).collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Reshape(x) => {
                let shape = self.nodes[*x].value.shape();
                accumulate(grads, *x, g.with_shape(shape)?);
            }
            Op::SliceCols { src, start } => {
                let sv = &self.nodes[*src].value;
                let c = sv.cols();
                let len = g.cols();
                let mut d = vec![0.0; sv.len()];
                for (drow, grow) in d.chunks_mut(c).zip(g.data().chunks(len)) {
                    drow[*start..*start + len].copy_from_slice(grow);
                }
                accumulate(grads, *src, Tensor::new(sv.shape().to_vec(), d)?);
            }
            Op::Gather { src, index } => {
                let sv = &self.nodes[*src].value;
                let mut d = vec![0.0; sv.len()];
                for (&i, &gg) in index.iter().zip(g.data()) {
                    d[i] += gg;
                }
                accumulate(grads, *src, Tensor::new(sv.shape().to_vec(), d)?);
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
                let needs: Vec<bool> = inputs.iter().map(|&i| ng(i)).collect();
                let input_grads = op.backward(&values, &node.value, g, &needs)?;
                for ((&i, need), grad) in inputs.iter().zip(needs).zip(input_grads) {
                    if let (true, Some(grad)) = (need, grad) {
                        if grad.shape() != self.nodes[i].value.shape() {
                            return Err(shape_err("custom backward", op.name().to_string()));
                        }
                        accumulate(grads, i, grad);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn softmax_block(block: &mut [f64], rows: usize, cols: usize) {
    for c in 0..cols {
        let max = (0..rows).map(|r| block[r * cols + c]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in 0..rows {
            let e = (block[r * cols + c] - max).exp();
            block[r * cols + c] = e;
            total += e;
        }
        for r in 0..rows {
            block[r * cols + c] /= total;
        }
    }
}
