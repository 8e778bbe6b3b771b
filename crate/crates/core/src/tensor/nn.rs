//! Dense layers built from graph primitives.

use super::{Activation, Graph, Mode, NodeId, ParamId, ParamStore, RngStream, Tensor};
use crate::error::Result;

/// Uniform initialization in `±1/sqrt(fan_in)`.
pub fn init_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut RngStream) -> Result<Tensor> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_in(-bound, bound)).collect())
}

/// `y = W x + b`, `W` stored as `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(vec![out_dim, in_dim], in_dim, rng)?,
        )?;
        let bias = if bias {
            Some(store.add(
                format!("{name}.bias"),
                init_uniform(vec![out_dim], in_dim, rng)?,
            )?)
        } else {
            None
        };
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.affine(w, x, b)
            }
            None => g.matmul(w, x),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Stack of [`Linear`] layers with a shared hidden activation.
///
/// Dropout (when `dropout > 0`) follows every hidden activation in train mode.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    /// `None` leaves the final layer linear.
    pub output: Option<Activation>,
    pub dropout: f64,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output: Option<Activation>,
        dropout: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp {
            layers,
            hidden,
            output,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i < last {
                h = g.activation(self.hidden, h);
                h = g.dropout(h, self.dropout, mode, rng)?;
            } else if let Some(act) = self.output {
                h = g.activation(act, h);
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::params).collect()
    }
}
