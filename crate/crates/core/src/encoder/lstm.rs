use crate::error::{MmffError, Result};
use crate::tensor::nn::init_uniform;
use crate::tensor::{Activation, Graph, Mode, NodeId, ParamId, ParamStore, RngStream, Tensor};

/// Gate order used for every per-gate array: input, forget, output, candidate.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];
const FORGET: usize = 1;
const CANDIDATE: usize = 3;

/// One direction of one LSTM layer.
#[derive(Debug, Clone)]
pub struct LstmParams {
    /// `[hidden, in]` per gate.
    pub input: [ParamId; 4],
    /// `[hidden, hidden]` per gate.
    pub recurrent: [ParamId; 4],
    pub bias: [ParamId; 4],
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut input = Vec::with_capacity(4);
        let mut recurrent = Vec::with_capacity(4);
        let mut bias = Vec::with_capacity(4);
        for (gi, gate) in GATES.iter().enumerate() {
            input.push(store.add(
                format!("{name}.{gate}.w"),
                init_uniform(vec![hidden, in_dim], in_dim, rng)?,
            )?);
            recurrent.push(store.add(
                format!("{name}.{gate}.u"),
                init_uniform(vec![hidden, hidden], hidden, rng)?,
            )?);
            let b = if gi == FORGET {
                Tensor::new(vec![hidden], vec![1.0; hidden])?
            } else {
                init_uniform(vec![hidden], hidden, rng)?
            };
            bias.push(store.add(format!("{name}.{gate}.b"), b)?);
        }
        Ok(LstmParams {
            input: input.try_into().unwrap(),
            recurrent: recurrent.try_into().unwrap(),
            bias: bias.try_into().unwrap(),
            in_dim,
            hidden,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.input
            .iter()
            .chain(&self.recurrent)
            .chain(&self.bias)
            .copied()
            .collect()
    }

    /// Zero initial hidden and cell state.
    pub fn zero_state(&self, g: &mut Graph) -> Result<(NodeId, NodeId)> {
        let h = g.constant(vec![self.hidden], vec![0.0; self.hidden])?;
        let c = g.constant(vec![self.hidden], vec![0.0; self.hidden])?;
        Ok((h, c))
    }

    /// One cell update:
    /// `i, f, o = sigmoid(W x + U h + b)`, `g = tanh(W x + U h + b)`,
    /// `c' = f * c + i * g`, `h' = o * tanh(c')`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        if g.shape(x) != [self.in_dim] || g.shape(h) != [self.hidden] || g.shape(c) != [self.hidden] {
            return Err(MmffError::dim(
                "lstm_cell_step",
                format!(
                    "x {:?}, h {:?}, c {:?} for input {} / hidden {}",
                    g.shape(x),
                    g.shape(h),
                    g.shape(c),
                    self.in_dim,
                    self.hidden
                ),
            ));
        }
        let mut gates = [x; 4];
        for (k, gate) in gates.iter_mut().enumerate() {
            let w = g.param(store, self.input[k]);
            let u = g.param(store, self.recurrent[k]);
            let b = g.param(store, self.bias[k]);
            let wx = g.affine(w, x, b)?;
            let uh = g.matmul(u, h)?;
            let pre = g.add(wx, uh)?;
            let act = if k == CANDIDATE {
                Activation::Tanh
            } else {
                Activation::Sigmoid
            };
            *gate = g.activation(act, pre);
        }
        let [i, f, o, cand] = gates;
        let keep = g.hadamard(f, c)?;
        let write = g.hadamard(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.activation(Activation::Tanh, c_next);
        let h_next = g.hadamard(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Hidden states after each input, in processing order.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, xs: &[NodeId]) -> Result<Vec<NodeId>> {
        let (mut h, mut c) = self.zero_state(g)?;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            (h, c) = self.step(g, store, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmLayer {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

/// Stacked bidirectional LSTM pooled to `[h_fwd(last); h_bwd(first)]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
    pub hidden: usize,
    /// Applied to the outputs of every layer except the last, train mode only.
    pub dropout: f64,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut built = Vec::with_capacity(layers);
        let mut width = in_dim;
        for l in 0..layers {
            built.push(BiLstmLayer {
                forward: LstmParams::new(store, &format!("{name}.l{l}.fwd"), width, hidden, rng)?,
                backward: LstmParams::new(store, &format!("{name}.l{l}.bwd"), width, hidden, rng)?,
            });
            width = 2 * hidden;
        }
        Ok(BiLstm {
            layers: built,
            hidden,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].forward.in_dim
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| l.forward.params().into_iter().chain(l.backward.params()))
            .collect()
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seq: &[NodeId],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        if seq.is_empty() {
            return Err(MmffError::Data("BiLSTM input sequence is empty".into()));
        }
        let mut inputs = seq.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let fwd = layer.forward.run(g, store, &inputs)?;
            let reversed: Vec<NodeId> = inputs.iter().rev().copied().collect();
            let mut bwd = layer.backward.run(g, store, &reversed)?;
            bwd.reverse();
            if l == last {
                return g.concat(&[*fwd.last().unwrap(), bwd[0]]);
            }
            inputs = fwd
                .iter()
                .zip(&bwd)
                .map(|(&f, &b)| {
                    let both = g.concat(&[f, b])?;
                    g.dropout(both, self.dropout, mode, rng)
                })
                .collect::<Result<Vec<_>>>()?;
        }
        unreachable!("BiLSTM has at least one layer")
    }
}
