//! Shared latent proxy learned by cross-modal reconstruction.
//!
//! Each modality feature is mapped into an `r`-dimensional subspace, the three
//! embeddings are averaged into the proxy `z`, and per-modality decoders
//! reconstruct every feature from `z` alone.

use crate::encoder::ModalityFeatures;
use crate::error::{MmffError, Result};
use crate::preprocess::Modality;
use crate::tensor::nn::Mlp;
use crate::tensor::{Activation, AdamW, AdamWConfig, Graph, Mode, NodeId, ParamId, ParamStore, RngStream};
use crate::training::{run_epochs, LoopConfig};

pub const DEFAULT_LATENT_DIM: usize = 16;

#[derive(Debug, Clone)]
pub struct ProxyParams {
    /// `F_mod`: two Tanh layers, `d -> hidden -> r`.
    pub encoders: [Mlp; 3],
    /// `F'_mod`: Tanh hidden layer and a linear output, `r -> hidden -> d`.
    pub decoders: [Mlp; 3],
    pub feature_dim: usize,
    pub latent_dim: usize,
}

/// Width of the hidden layer in the proxy encoders and decoders.
pub fn proxy_hidden(feature_dim: usize, latent_dim: usize) -> usize {
    (feature_dim / 2).max(latent_dim)
}

impl ProxyParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        latent_dim: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if latent_dim == 0 || latent_dim >= feature_dim {
            return Err(MmffError::Config(format!(
                "latent dimension must satisfy 0 < r < d, got r = {latent_dim}, d = {feature_dim}"
            )));
        }
        let hidden = proxy_hidden(feature_dim, latent_dim);
        let mut enc = Vec::new();
        let mut dec = Vec::new();
        for m in Modality::ALL {
            enc.push(Mlp::new(
                store,
                &format!("{prefix}.enc.{m}"),
                &[feature_dim, hidden, latent_dim],
                Activation::Tanh,
                Some(Activation::Tanh),
                0.0,
                rng,
            )?);
            dec.push(Mlp::new(
                store,
                &format!("{prefix}.dec.{m}"),
                &[latent_dim, hidden, feature_dim],
                Activation::Tanh,
                None,
                0.0,
                rng,
            )?);
        }
        Ok(ProxyParams {
            encoders: enc.try_into().unwrap(),
            decoders: dec.try_into().unwrap(),
            feature_dim,
            latent_dim,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.encoders
            .iter()
            .chain(&self.decoders)
            .flat_map(Mlp::params)
            .collect()
    }

    fn inputs(&self, g: &mut Graph, x: &ModalityFeatures) -> Result<[NodeId; 3]> {
        if let Err(e) = x.validate(self.feature_dim) {
            return Err(match e {
                MmffError::Dimension { detail, .. } => MmffError::dim("proxy_encode", detail),
                other => other,
            });
        }
        Ok([g.vector(&x.text)?, g.vector(&x.audio)?, g.vector(&x.video)?])
    }

    /// Embeddings `y_mod` and their mean `z`, on a graph.
    pub fn encode_nodes(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inputs: [NodeId; 3],
    ) -> Result<ProxyNodes> {
        let mut rng = RngStream::new(0);
        let mut y = [inputs[0]; 3];
        for (k, enc) in self.encoders.iter().enumerate() {
            y[k] = enc.forward(g, store, inputs[k], Mode::Eval, &mut rng)?;
        }
        let sum = g.add(y[0], y[1])?;
        let sum = g.add(sum, y[2])?;
        let third = g.constant(vec![1], vec![1.0 / 3.0])?;
        let z = g.scale(sum, third)?;
        Ok(ProxyNodes { y, z })
    }

    pub fn proxy_encode(&self, store: &ParamStore, x: &ModalityFeatures) -> Result<LatentProxy> {
        let mut g = Graph::new();
        let inputs = self.inputs(&mut g, x)?;
        let nodes = self.encode_nodes(&mut g, store, inputs)?;
        Ok(LatentProxy {
            z: g.value(nodes.z).to_vec(),
            y: nodes.y.map(|n| g.value(n).to_vec()),
        })
    }

    /// `(1/3) sum_mod mean((F'_mod(z) - x_mod)^2)` on a fresh graph.
    pub fn latent_loss(&self, store: &ParamStore, x: &ModalityFeatures) -> Result<(Graph, NodeId)> {
        let mut g = Graph::new();
        let inputs = self.inputs(&mut g, x)?;
        let nodes = self.encode_nodes(&mut g, store, inputs)?;
        let mut rng = RngStream::new(0);
        let mut total = None;
        for m in Modality::ALL {
            let recon = self.decoders[m.index()].forward(&mut g, store, nodes.z, Mode::Eval, &mut rng)?;
            let err = g.mse(recon, x.get(m))?;
            total = Some(match total {
                None => err,
                Some(t) => g.add(t, err)?,
            });
        }
        let third = g.constant(vec![1], vec![1.0 / 3.0])?;
        let loss = g.scale(total.unwrap(), third)?;
        Ok((g, loss))
    }

    /// Minimize the mean reconstruction loss, then freeze every proxy parameter.
    /// Returns the per-epoch mean loss.
    pub fn train_latent_stage(
        &self,
        store: &mut ParamStore,
        features: &[ModalityFeatures],
        optimizer: AdamWConfig,
        cfg: LoopConfig,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let own = self.params();
        let saved: Vec<(ParamId, bool)> = store.ids().map(|id| (id, store.is_frozen(id))).collect();
        for id in store.ids().collect::<Vec<_>>() {
            store.set_frozen(id, true);
        }
        for &id in &own {
            store.set_frozen(id, false);
        }
        let mut opt = AdamW::new(optimizer)?;
        let result = run_epochs(
            store,
            &mut opt,
            features.len(),
            cfg,
            rng,
            "latent stage",
            |s, i, _| {
                let (g, loss) = self.latent_loss(s, &features[i])?;
                Ok((g, loss, ()))
            },
            |_| Ok(()),
        );
        for (id, frozen) in saved {
            store.set_frozen(id, frozen);
        }
        for &id in &own {
            store.set_frozen(id, true);
        }
        result
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProxyNodes {
    pub y: [NodeId; 3],
    pub z: NodeId,
}

/// Proxy `z` with the per-modality embeddings it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProxy {
    pub z: Vec<f64>,
    /// `y_t, y_a, y_v`.
    pub y: [Vec<f64>; 3],
}
