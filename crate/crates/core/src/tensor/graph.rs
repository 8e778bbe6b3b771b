use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::params::{ParamId, ParamStore};
use super::rng::RngStream;
use crate::error::{MmffError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// ELU with alpha = 1.
    Elu,
    Tanh,
    /// Clamp to [-1, 1].
    Hardtanh,
    Sigmoid,
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Hardtanh => x.clamp(-1.0, 1.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Hardtanh => {
                if x > -1.0 && x < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Primitive operation kinds accepted by [`Graph::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    MatMul,
    Add,
    /// Multiply an array by a one-element node.
    Scale,
    Hadamard,
    Concat,
    Mean,
    Sum,
    /// `W x + b`.
    Affine,
    Softmax,
    Activation(Activation),
    /// Extract element `i` of a vector as a one-element node.
    Pick(usize),
}

impl FromStr for Primitive {
    type Err = MmffError;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "matmul" => Primitive::MatMul,
            "add" => Primitive::Add,
            "scale" => Primitive::Scale,
            "hadamard" => Primitive::Hadamard,
            "concat" => Primitive::Concat,
            "mean" => Primitive::Mean,
            "sum" => Primitive::Sum,
            "affine" => Primitive::Affine,
            "softmax" => Primitive::Softmax,
            "relu" => Primitive::Activation(Activation::Relu),
            "elu" => Primitive::Activation(Activation::Elu),
            "tanh" => Primitive::Activation(Activation::Tanh),
            "hardtanh" => Primitive::Activation(Activation::Hardtanh),
            "sigmoid" => Primitive::Activation(Activation::Sigmoid),
            other => {
                return Err(MmffError::Usage(format!(
                    "unknown primitive kind `{other}`"
                )))
            }
        };
        Ok(kind)
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Activation(a) => write!(f, "{a:?}"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale { x: NodeId, s: NodeId },
    Hadamard(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Mean(NodeId),
    Sum(NodeId),
    Affine { w: NodeId, x: NodeId, b: NodeId },
    Softmax(NodeId),
    Act(Activation, NodeId),
    Pick(NodeId, usize),
    Mask { x: NodeId, mask: Vec<f64> },
    Mse { pred: NodeId, target: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Tape of value nodes.
///
/// Operands always precede the nodes that consume them, so the tape order is
/// a topological order and the graph cannot contain cycles.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> NodeId {
        debug_assert_eq!(numel(&shape), value.len());
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node {
            shape,
            value,
            grad,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<NodeId> {
        if shape.is_empty() || shape.contains(&0) || numel(&shape) != values.len() {
            return Err(MmffError::dim(
                "leaf",
                format!("shape {shape:?} with {} values", values.len()),
            ));
        }
        Ok(self.push(shape, values, Op::Leaf, requires_grad))
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<NodeId> {
        self.leaf(shape, values, false)
    }

    /// Differentiable leaf not backed by a parameter store.
    pub fn variable(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<NodeId> {
        self.leaf(shape, values, true)
    }

    pub fn vector(&mut self, values: &[f64]) -> Result<NodeId> {
        self.constant(vec![values.len()], values.to_vec())
    }

    /// Leaf holding a copy of a stored parameter. Repeated calls for the same
    /// parameter return the same node. Frozen parameters are plain constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let t = store.value(id);
        let node = self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Param,
            !store.is_frozen(id),
        );
        self.param_nodes.insert(id, node);
        node
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Accumulated gradient; all zeros until a backward pass reaches the node.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Apply a primitive by kind.
    pub fn apply(&mut self, kind: Primitive, operands: &[NodeId]) -> Result<NodeId> {
        let arity = |n: usize| -> Result<()> {
            if operands.len() != n {
                Err(MmffError::Usage(format!(
                    "{kind} takes {n} operand(s), got {}",
                    operands.len()
                )))
            } else {
                Ok(())
            }
        };
        match kind {
            Primitive::MatMul => {
                arity(2)?;
                self.matmul(operands[0], operands[1])
            }
            Primitive::Add => {
                arity(2)?;
                self.add(operands[0], operands[1])
            }
            Primitive::Scale => {
                arity(2)?;
                self.scale(operands[0], operands[1])
            }
            Primitive::Hadamard => {
                arity(2)?;
                self.hadamard(operands[0], operands[1])
            }
            Primitive::Concat => self.concat(operands),
            Primitive::Mean => {
                arity(1)?;
                Ok(self.mean(operands[0]))
            }
            Primitive::Sum => {
                arity(1)?;
                Ok(self.sum(operands[0]))
            }
            Primitive::Affine => {
                arity(3)?;
                self.affine(operands[0], operands[1], operands[2])
            }
            Primitive::Softmax => {
                arity(1)?;
                Ok(self.softmax(operands[0]))
            }
            Primitive::Activation(act) => {
                arity(1)?;
                Ok(self.activation(act, operands[0]))
            }
            Primitive::Pick(i) => {
                arity(1)?;
                self.pick(operands[0], i)
            }
        }
    }

    /// `[m,k] x [k,n] -> [m,n]`, or `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(MmffError::dim("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * k..(i + 1) * k];
            for (p, &aip) in row.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bpj) in orow.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(MmffError::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    /// Multiply every element of `x` by the single value held in `s`.
    pub fn scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(MmffError::dim(
                "scale",
                format!("scalar operand has shape {:?}", self.shape(s)),
            ));
        }
        let k = self.scalar(s);
        let out = self.value(x).iter().map(|v| v * k).collect();
        let rg = self.rg(&[x, s]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Scale { x, s }, rg))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Hadamard(a, b), rg))
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(MmffError::Usage("concat needs at least one operand".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(MmffError::dim(
                    "concat",
                    format!("operands must be vectors, got {:?}", self.shape(p)),
                ));
            }
            out.extend_from_slice(self.value(p));
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![out.len()], out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        self.push(vec![1], vec![m], Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().sum::<f64>();
        let rg = self.rg(&[x]);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    /// `W x + b` with `W: [m,k]`, `x: [k]`, `b: [m]`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let sw = self.shape(w).to_vec();
        let sx = self.shape(x).to_vec();
        let sb = self.shape(b).to_vec();
        if sw.len() != 2 || sx != [sw[1]] || sb != [sw[0]] {
            return Err(MmffError::dim(
                "affine",
                format!("W {sw:?}, x {sx:?}, b {sb:?}"),
            ));
        }
        let (m, k) = (sw[0], sw[1]);
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[b.0].value;
        let out: Vec<f64> = (0..m)
            .map(|i| {
                wv[i * k..(i + 1) * k]
                    .iter()
                    .zip(xv)
                    .fold(bv[i], |acc, (a, b)| acc + a * b)
            })
            .collect();
        let rg = self.rg(&[w, x, b]);
        Ok(self.push(vec![m], out, Op::Affine { w, x, b }, rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.rg(&[x]);
        self.push(shape, out, Op::Softmax(x), rg)
    }

    pub fn activation(&mut self, act: Activation, x: NodeId) -> NodeId {
        let out = self.value(x).iter().map(|&v| act.eval(v)).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Act(act, x), rg)
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        if self.shape(x).len() != 1 || index >= self.value(x).len() {
            return Err(MmffError::dim(
                "pick",
                format!("index {index} into {:?}", self.shape(x)),
            ));
        }
        let v = self.value(x)[index];
        let rg = self.rg(&[x]);
        Ok(self.push(vec![1], vec![v], Op::Pick(x, index), rg))
    }

    /// Inverted dropout. Eval mode and `rate == 0` return `x` itself.
    pub fn dropout(&mut self, x: NodeId, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(MmffError::Usage(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Mask { x, mask }, rg))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let p = self.value(pred);
        if p.len() != target.len() || target.is_empty() {
            return Err(MmffError::dim(
                "mse",
                format!("prediction {:?} vs target of length {}", self.shape(pred), target.len()),
            ));
        }
        let loss = p
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / target.len() as f64;
        let rg = self.rg(&[pred]);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Accumulate `d loss / d node` into every node that requires a gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(MmffError::Usage(format!(
                "backward needs a one-element loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        // Gradients of this pass only; merged into the persistent buffers at the end.
        let mut pass: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pass[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = pass[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &gy, &mut pass);
            pass[i] = Some(gy);
        }

        for (node, g) in self.nodes.iter_mut().zip(pass) {
            if let Some(g) = g {
                for (acc, v) in node.grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, gy: &[f64], pass: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let sa = &nodes[a.0].shape;
                let (m, k) = (sa[0], sa[1]);
                let n = gy.len() / m;
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                if let Some(ga) = slot(nodes, pass, *a) {
                    for r in 0..m {
                        let grow = &gy[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = slot(nodes, pass, *b) {
                    for r in 0..m {
                        let grow = &gy[r * n..(r + 1) * n];
                        for p in 0..k {
                            let arp = av[r * k + p];
                            for (g, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *g += arp * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if let Some(g) = slot(nodes, pass, *id) {
                        g.iter_mut().zip(gy).for_each(|(g, v)| *g += v);
                    }
                }
            }
            Op::Scale { x, s } => {
                let k = nodes[s.0].value[0];
                if let Some(gx) = slot(nodes, pass, *x) {
                    gx.iter_mut().zip(gy).for_each(|(g, v)| *g += k * v);
                }
                let xv = &nodes[x.0].value;
                if let Some(gs) = slot(nodes, pass, *s) {
                    gs[0] += xv.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Op::Hadamard(a, b) => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                if let Some(ga) = slot(nodes, pass, *a) {
                    for ((g, v), o) in ga.iter_mut().zip(gy).zip(bv) {
                        *g += v * o;
                    }
                }
                if let Some(gb) = slot(nodes, pass, *b) {
                    for ((g, v), o) in gb.iter_mut().zip(gy).zip(av) {
                        *g += v * o;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(g) = slot(nodes, pass, *p) {
                        g.iter_mut()
                            .zip(&gy[offset..offset + len])
                            .for_each(|(g, v)| *g += v);
                    }
                    offset += len;
                }
            }
            Op::Mean(x) => {
                if let Some(g) = slot(nodes, pass, *x) {
                    let d = gy[0] / g.len() as f64;
                    g.iter_mut().for_each(|g| *g += d);
                }
            }
            Op::Sum(x) => {
                if let Some(g) = slot(nodes, pass, *x) {
                    g.iter_mut().for_each(|g| *g += gy[0]);
                }
            }
            Op::Affine { w, x, b } => {
                let k = nodes[x.0].value.len();
                let wv = &nodes[w.0].value;
                let xv = &nodes[x.0].value;
                if let Some(gw) = slot(nodes, pass, *w) {
                    for (r, &gr) in gy.iter().enumerate() {
                        for (g, &xj) in gw[r * k..(r + 1) * k].iter_mut().zip(xv) {
                            *g += gr * xj;
                        }
                    }
                }
                if let Some(gx) = slot(nodes, pass, *x) {
                    for (r, &gr) in gy.iter().enumerate() {
                        for (g, &wrj) in gx.iter_mut().zip(&wv[r * k..(r + 1) * k]) {
                            *g += gr * wrj;
                        }
                    }
                }
                if let Some(gb) = slot(nodes, pass, *b) {
                    gb.iter_mut().zip(gy).for_each(|(g, v)| *g += v);
                }
            }
            Op::Softmax(x) => {
                let width = *node.shape.last().unwrap();
                let y = &node.value;
                if let Some(gx) = slot(nodes, pass, *x) {
                    for ((grow, yrow), gyrow) in gx
                        .chunks_mut(width)
                        .zip(y.chunks(width))
                        .zip(gy.chunks(width))
                    {
                        let dot: f64 = yrow.iter().zip(gyrow).map(|(a, b)| a * b).sum();
                        for ((g, &yj), &gj) in grow.iter_mut().zip(yrow).zip(gyrow) {
                            *g += yj * (gj - dot);
                        }
                    }
                }
            }
            Op::Act(act, x) => {
                let xv = &nodes[x.0].value;
                let y = &node.value;
                if let Some(gx) = slot(nodes, pass, *x) {
                    for (((g, &xi), &yi), &gi) in gx.iter_mut().zip(xv).zip(y).zip(gy) {
                        *g += gi * act.derivative(xi, yi);
                    }
                }
            }
            Op::Pick(x, idx) => {
                if let Some(g) = slot(nodes, pass, *x) {
                    g[*idx] += gy[0];
                }
            }
            Op::Mask { x, mask } => {
                if let Some(g) = slot(nodes, pass, *x) {
                    for ((g, m), v) in g.iter_mut().zip(mask).zip(gy) {
                        *g += m * v;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let p = &nodes[pred.0].value;
                let scale = 2.0 * gy[0] / target.len() as f64;
                if let Some(g) = slot(nodes, pass, *pred) {
                    for ((g, a), b) in g.iter_mut().zip(p).zip(target) {
                        *g += scale * (a - b);
                    }
                }
            }
        }
    }

    /// Add the gradients held by parameter leaves into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&pid, &node) in &self.param_nodes {
            let n = &self.nodes[node.0];
            if n.requires_grad {
                store.accumulate_grad(pid, &n.grad);
            }
        }
    }

    /// [`backward`](Self::backward) followed by
    /// [`accumulate_param_grads`](Self::accumulate_param_grads).
    pub fn backward_into(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        self.backward(loss)?;
        self.accumulate_param_grads(store);
        Ok(())
    }
}

fn slot<'a>(nodes: &[Node], pass: &'a mut [Option<Vec<f64>>], id: NodeId) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[id.0];
    if !n.requires_grad {
        return None;
    }
    Some(pass[id.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}
