//! Multi-order factor fusion driven by proxy-generated weights.
//!
//! Order 1 projects each modality on its own, order 2 combines the three
//! modality pairs with a low-rank bilinear (Hadamard) product, and order 3
//! combines all three. Four softmax heads on the latent proxy weight the
//! modalities inside each order and the orders against each other.

use crate::encoder::ModalityFeatures;
use crate::error::{MmffError, Result};
use crate::preprocess::Modality;
use crate::tensor::nn::{init_uniform, Linear, Mlp};
use crate::tensor::{
    Activation, AdamW, AdamWConfig, Graph, Mode, NodeId, ParamId, ParamStore, RngStream,
};
use crate::training::{run_epochs, Event, LoopConfig};

pub const DEFAULT_FACTOR_HIDDEN: usize = 32;
pub const DEFAULT_FACTOR_DIM: usize = 32;
pub const HEAD_WIDTH: usize = 32;

/// Modality pairs of the second order, in `ta, av, tv` order.
pub const PAIRS: [(Modality, Modality); 3] = [
    (Modality::Text, Modality::Audio),
    (Modality::Audio, Modality::Video),
    (Modality::Text, Modality::Video),
];

pub fn pair_name(pair: (Modality, Modality)) -> String {
    let c = |m: Modality| &m.name()[..1];
    format!("{}{}", c(pair.0), c(pair.1))
}

/// Activation applied to the Hadamard products of orders 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorActivation {
    #[default]
    Tanh,
    /// Leaves the products untouched so the factors stay exactly multilinear.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Dimension `d` of every modality feature.
    pub feature_dim: usize,
    /// Dimension `r` of the latent proxy.
    pub latent_dim: usize,
    /// Output width `h_f` of the factor encoders `G`.
    pub factor_hidden: usize,
    /// Common factor dimension `f`.
    pub factor_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub sigma: FactorActivation,
}

impl FusionConfig {
    pub fn new(feature_dim: usize, latent_dim: usize, factor_hidden: usize, factor_dim: usize, dropout: f64) -> Self {
        FusionConfig {
            feature_dim,
            latent_dim,
            factor_hidden,
            factor_dim,
            head_hidden: HEAD_WIDTH,
            dropout,
            sigma: FactorActivation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.feature_dim),
            ("r", self.latent_dim),
            ("h_f", self.factor_hidden),
            ("f", self.factor_dim),
            ("head width", self.head_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(MmffError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MmffError::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub config: FusionConfig,
    /// `G_k^mod`, indexed `[order - 1][modality]`.
    pub encoders: [[Linear; 3]; 3],
    /// `P_mod`, stored transposed as `[f, h_f]`.
    pub first: [ParamId; 3],
    /// `P_ta, P_av, P_tv`, stored transposed as `[f, h_f]`.
    pub second: [ParamId; 3],
    /// `P_tav`, stored transposed as `[f, h_f]`.
    pub third: ParamId,
    /// `P_1, P_2, P_3`, stored transposed as `[f, f]`.
    pub integrate: [ParamId; 3],
    /// `H_1, H_2, H_3`.
    pub heads: [Mlp; 3],
    /// `H_com`.
    pub order_head: Mlp,
    pub predictor: Mlp,
}

/// Weight vectors `gamma^1, gamma^2, gamma^3` over `(t, a, v)` and `gamma`
/// over the orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderWeights {
    pub per_order: [[f64; 3]; 3],
    pub order: [f64; 3],
}

impl OrderWeights {
    pub fn uniform() -> Self {
        let u = [1.0 / 3.0; 3];
        OrderWeights {
            per_order: [u; 3],
            order: u,
        }
    }

    pub fn vectors(&self) -> [[f64; 3]; 4] {
        [self.per_order[0], self.per_order[1], self.per_order[2], self.order]
    }

    /// True when every vector is non-negative and sums to 1 within `tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        self.vectors()
            .iter()
            .all(|v| v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Element-wise mean.
    pub fn mean(items: &[OrderWeights]) -> Option<OrderWeights> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut out = OrderWeights {
            per_order: [[0.0; 3]; 3],
            order: [0.0; 3],
        };
        for w in items {
            for k in 0..3 {
                for m in 0..3 {
                    out.per_order[k][m] += w.per_order[k][m] / n;
                }
                out.order[k] += w.order[k] / n;
            }
        }
        Some(out)
    }
}

/// Every factor of one forward pass as plain vectors of length `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    /// `v1_t, v1_a, v1_v`.
    pub first: [Vec<f64>; 3],
    /// `v2_ta, v2_av, v2_tv`.
    pub second: [Vec<f64>; 3],
    pub third: Vec<f64>,
    /// Integrated `v1, v2, v3`.
    pub orders: [Vec<f64>; 3],
    pub fused: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OrderWeightNodes {
    pub per_order: [NodeId; 3],
    pub order: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionNodes {
    pub weights: OrderWeightNodes,
    pub first: [NodeId; 3],
    pub second: [NodeId; 3],
    pub third: NodeId,
    pub orders: [NodeId; 3],
    pub fused: NodeId,
    pub prediction: NodeId,
}

/// Result of an eval-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub weights: OrderWeights,
    pub factors: FactorSet,
    pub prediction: f64,
}

/// One stage-2 training example: frozen features, frozen proxy, target.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    pub features: ModalityFeatures,
    pub z: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneTrace {
    pub losses: Vec<f64>,
    /// Dataset-mean weights of each epoch.
    pub weights: Vec<OrderWeights>,
}

fn weights3(g: &Graph, id: NodeId) -> [f64; 3] {
    let v = g.value(id);
    [v[0], v[1], v[2]]
}

impl FusionParams {
    pub fn new(store: &mut ParamStore, prefix: &str, config: FusionConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let FusionConfig {
            feature_dim: d,
            latent_dim: r,
            factor_hidden: hf,
            factor_dim: f,
            head_hidden: hh,
            dropout,
            ..
        } = config;
        let mut encoders = Vec::new();
        for k in 1..=3 {
            let mut row = Vec::new();
            for m in Modality::ALL {
                row.push(Linear::new(store, &format!("{prefix}.g{k}.{m}"), d, hf, true, rng)?);
            }
            encoders.push(<[Linear; 3]>::try_from(row).unwrap());
        }
        let mut proj = |store: &mut ParamStore, name: String, rows: usize, cols: usize| {
            store.add(name, init_uniform(vec![rows, cols], cols, rng)?)
        };
        let mut first = Vec::new();
        for m in Modality::ALL {
            first.push(proj(store, format!("{prefix}.p1.{m}"), f, hf)?);
        }
        let mut second = Vec::new();
        for pair in PAIRS {
            second.push(proj(store, format!("{prefix}.p2.{}", pair_name(pair)), f, hf)?);
        }
        let third = proj(store, format!("{prefix}.p3.tav"), f, hf)?;
        let mut integrate = Vec::new();
        for k in 1..=3 {
            integrate.push(proj(store, format!("{prefix}.order{k}"), f, f)?);
        }
        let mut heads = Vec::new();
        for k in 1..=3 {
            heads.push(Mlp::new(store, &format!("{prefix}.h{k}"), &[r, hh, hh, 3], Activation::Relu, None, 0.0, rng)?);
        }
        let order_head = Mlp::new(store, &format!("{prefix}.hcom"), &[r, hh, hh, 3], Activation::Relu, None, 0.0, rng)?;
        let predictor = Mlp::new(store, &format!("{prefix}.predict"), &[f, hh, hh, 1], Activation::Relu, None, dropout, rng)?;
        Ok(FusionParams {
            config,
            encoders: encoders.try_into().unwrap(),
            first: first.try_into().unwrap(),
            second: second.try_into().unwrap(),
            third,
            integrate: integrate.try_into().unwrap(),
            heads: heads.try_into().unwrap(),
            order_head,
            predictor,
        })
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoders.iter().flatten().flat_map(Linear::params).collect()
    }

    pub fn projection_params(&self) -> Vec<ParamId> {
        self.first
            .iter()
            .chain(&self.second)
            .chain(std::iter::once(&self.third))
            .chain(&self.integrate)
            .copied()
            .collect()
    }

    pub fn head_params(&self) -> Vec<ParamId> {
        self.heads
            .iter()
            .chain(std::iter::once(&self.order_head))
            .flat_map(Mlp::params)
            .collect()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut all = self.encoder_params();
        all.extend(self.projection_params());
        all.extend(self.head_params());
        all.extend(self.predictor.params());
        all
    }

    /// Softmax outputs of `H_1, H_2, H_3` and `H_com` on `z`.
    pub fn order_weight_nodes(&self, g: &mut Graph, store: &ParamStore, z: NodeId) -> Result<OrderWeightNodes> {
        if g.value(z).len() != self.config.latent_dim {
            return Err(MmffError::dim(
                "order_weights",
                format!("proxy has {} values, heads expect {}", g.value(z).len(), self.config.latent_dim),
            ));
        }
        let mut rng = RngStream::new(0);
        let mut head = |g: &mut Graph, h: &Mlp| -> Result<NodeId> {
            let logits = h.forward(g, store, z, Mode::Eval, &mut rng)?;
            Ok(g.softmax(logits))
        };
        let per_order = [
            head(g, &self.heads[0])?,
            head(g, &self.heads[1])?,
            head(g, &self.heads[2])?,
        ];
        let order = head(g, &self.order_head)?;
        Ok(OrderWeightNodes { per_order, order })
    }

    pub fn order_weights(&self, store: &ParamStore, z: &[f64]) -> Result<OrderWeights> {
        let mut g = Graph::new();
        let z = g.vector(z)?;
        let nodes = self.order_weight_nodes(&mut g, store, z)?;
        Ok(OrderWeights {
            per_order: nodes.per_order.map(|n| weights3(&g, n)),
            order: weights3(&g, nodes.order),
        })
    }

    /// `gamma * G_k^mod(x)`, Hardtanh then dropout inside `G`.
    #[allow(clippy::too_many_arguments)]
    fn scaled_branch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        order: usize,
        m: Modality,
        x: NodeId,
        gamma: NodeId,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        let h = self.encoders[order - 1][m.index()].forward(g, store, x)?;
        let h = g.activation(Activation::Hardtanh, h);
        let h = g.dropout(h, self.config.dropout, mode, rng)?;
        let w = g.pick(gamma, m.index())?;
        g.scale(h, w)
    }

    fn sigma(&self, g: &mut Graph, x: NodeId) -> NodeId {
        match self.config.sigma {
            FactorActivation::Tanh => g.activation(Activation::Tanh, x),
            FactorActivation::Identity => x,
        }
    }

    fn check_inputs(&self, g: &Graph, x: &[NodeId; 3], gamma: NodeId, op: &'static str) -> Result<()> {
        if g.value(gamma).len() != 3 {
            return Err(MmffError::dim(op, format!("weights have {} values, expected 3", g.value(gamma).len())));
        }
        for (m, &id) in Modality::ALL.iter().zip(x) {
            if g.value(id).len() != self.config.feature_dim {
                return Err(MmffError::dim(
                    op,
                    format!("{m} feature has {} values, expected {}", g.value(id).len(), self.config.feature_dim),
                ));
            }
        }
        Ok(())
    }

    /// `v1_mod = gamma1_mod * P_mod^T G_1^mod(x_mod)`.
    pub fn first_order_factors(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: [NodeId; 3],
        gamma1: NodeId,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<[NodeId; 3]> {
        self.check_inputs(g, &x, gamma1, "first_order_factors")?;
        let mut out = Vec::with_capacity(3);
        for m in Modality::ALL {
            let h = self.scaled_branch(g, store, 1, m, x[m.index()], gamma1, mode, rng)?;
            let p = g.param(store, self.first[m.index()]);
            out.push(g.matmul(p, h)?);
        }
        Ok(out.try_into().unwrap())
    }

    /// `v2_pq = P_pq^T sigma(gamma2_p G_2^p(x_p) * gamma2_q G_2^q(x_q))`.
    pub fn second_order_factors(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: [NodeId; 3],
        gamma2: NodeId,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<[NodeId; 3]> {
        self.check_inputs(g, &x, gamma2, "second_order_factors")?;
        let mut branch = Vec::with_capacity(3);
        for m in Modality::ALL {
            branch.push(self.scaled_branch(g, store, 2, m, x[m.index()], gamma2, mode, rng)?);
        }
        let mut out = Vec::with_capacity(3);
        for (k, (p, q)) in PAIRS.into_iter().enumerate() {
            let prod = g.hadamard(branch[p.index()], branch[q.index()])?;
            let act = self.sigma(g, prod);
            let proj = g.param(store, self.second[k]);
            out.push(g.matmul(proj, act)?);
        }
        Ok(out.try_into().unwrap())
    }

    /// `v3_tav = P_tav^T sigma(gamma3_t G_3^t(x_t) * gamma3_a G_3^a(x_a) * gamma3_v G_3^v(x_v))`.
    pub fn third_order_factor(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: [NodeId; 3],
        gamma3: NodeId,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        self.check_inputs(g, &x, gamma3, "third_order_factor")?;
        let mut prod = None;
        for m in Modality::ALL {
            let b = self.scaled_branch(g, store, 3, m, x[m.index()], gamma3, mode, rng)?;
            prod = Some(match prod {
                None => b,
                Some(p) => g.hadamard(p, b)?,
            });
        }
        let act = self.sigma(g, prod.unwrap());
        let proj = g.param(store, self.third);
        g.matmul(proj, act)
    }

    /// `v_k = P_k^T (sum of the order-k subfactors)`.
    pub fn integrate_orders(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        first: [NodeId; 3],
        second: [NodeId; 3],
        third: NodeId,
    ) -> Result<[NodeId; 3]> {
        let sum3 = |g: &mut Graph, v: [NodeId; 3]| -> Result<NodeId> {
            let s = g.add(v[0], v[1])?;
            g.add(s, v[2])
        };
        let sums = [sum3(g, first)?, sum3(g, second)?, third];
        let mut out = Vec::with_capacity(3);
        for (k, s) in sums.into_iter().enumerate() {
            let p = g.param(store, self.integrate[k]);
            out.push(g.matmul(p, s)?);
        }
        Ok(out.try_into().unwrap())
    }

    /// Scalar estimate from the fused vector.
    pub fn predict(&self, g: &mut Graph, store: &ParamStore, v: NodeId, mode: Mode, rng: &mut RngStream) -> Result<NodeId> {
        let y = self.predictor.forward(g, store, v, mode, rng)?;
        g.pick(y, 0)
    }

    pub fn predict_values(&self, store: &ParamStore, v: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let v = g.vector(v)?;
        let y = self.predict(&mut g, store, v, Mode::Eval, &mut RngStream::new(0))?;
        Ok(g.scalar(y))
    }

    /// Full pass from features and proxy to the prediction.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &ModalityFeatures,
        z: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<FusionNodes> {
        let inputs = [g.vector(&x.text)?, g.vector(&x.audio)?, g.vector(&x.video)?];
        let z = g.vector(z)?;
        let weights = self.order_weight_nodes(g, store, z)?;
        let first = self.first_order_factors(g, store, inputs, weights.per_order[0], mode, rng)?;
        let second = self.second_order_factors(g, store, inputs, weights.per_order[1], mode, rng)?;
        let third = self.third_order_factor(g, store, inputs, weights.per_order[2], mode, rng)?;
        let orders = self.integrate_orders(g, store, first, second, third)?;
        let fused = fuse(g, orders, weights.order)?;
        let prediction = self.predict(g, store, fused, mode, rng)?;
        Ok(FusionNodes {
            weights,
            first,
            second,
            third,
            orders,
            fused,
            prediction,
        })
    }

    pub fn forward_values(&self, store: &ParamStore, x: &ModalityFeatures, z: &[f64]) -> Result<FusionOutput> {
        let mut g = Graph::new();
        let n = self.forward(&mut g, store, x, z, Mode::Eval, &mut RngStream::new(0))?;
        let vals = |ids: [NodeId; 3]| ids.map(|id| g.value(id).to_vec());
        let prediction = g.scalar(n.prediction);
        if !prediction.is_finite() {
            return Err(MmffError::Numeric(format!("non-finite prediction for sample `{}`", x.id)));
        }
        Ok(FusionOutput {
            weights: OrderWeights {
                per_order: n.weights.per_order.map(|id| weights3(&g, id)),
                order: weights3(&g, n.weights.order),
            },
            factors: FactorSet {
                first: vals(n.first),
                second: vals(n.second),
                third: g.value(n.third).to_vec(),
                orders: vals(n.orders),
                fused: g.value(n.fused).to_vec(),
            },
            prediction,
        })
    }

    /// Squared error of one sample, with the forward nodes.
    pub fn sample_loss(
        &self,
        store: &ParamStore,
        sample: &FusionSample,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Graph, NodeId, FusionNodes)> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, store, &sample.features, &sample.z, mode, rng)?;
        let loss = g.mse(nodes.prediction, &[sample.target])?;
        Ok((g, loss, nodes))
    }

    /// Minimize the mean squared error over the fusion parameters only.
    /// Every other parameter in the store is held fixed for the duration.
    pub fn train_backbone(
        &self,
        store: &mut ParamStore,
        data: &[FusionSample],
        optimizer: AdamWConfig,
        cfg: LoopConfig,
        rng: &mut RngStream,
    ) -> Result<BackboneTrace> {
        let own = self.params();
        let saved: Vec<(ParamId, bool)> = store.ids().map(|id| (id, store.is_frozen(id))).collect();
        for &(id, _) in &saved {
            store.set_frozen(id, true);
        }
        for &id in &own {
            store.set_frozen(id, false);
        }
        let mut opt = AdamW::new(optimizer)?;
        let mut epoch_weights = Vec::with_capacity(data.len());
        let mut trace = Vec::with_capacity(cfg.epochs);
        let result = run_epochs(
            store,
            &mut opt,
            data.len(),
            cfg,
            rng,
            "fusion stage",
            |s, i, rng| {
                let (g, loss, nodes) = self.sample_loss(s, &data[i], Mode::Train, rng)?;
                let weights = OrderWeights {
                    per_order: nodes.weights.per_order.map(|id| weights3(&g, id)),
                    order: weights3(&g, nodes.weights.order),
                };
                Ok((g, loss, weights))
            },
            |event| {
                match event {
                    Event::Sample(w) => epoch_weights.push(w),
                    Event::Epoch { .. } => {
                        trace.push(OrderWeights::mean(&epoch_weights).unwrap());
                        epoch_weights.clear();
                    }
                }
                Ok(())
            },
        );
        for (id, frozen) in saved {
            store.set_frozen(id, frozen);
        }
        Ok(BackboneTrace {
            losses: result?,
            weights: trace,
        })
    }
}

/// `v = gamma_1 v1 + gamma_2 v2 + gamma_3 v3`.
pub fn fuse(g: &mut Graph, orders: [NodeId; 3], gamma: NodeId) -> Result<NodeId> {
    if g.value(gamma).len() != 3 {
        return Err(MmffError::dim("fuse", format!("order weights have {} values", g.value(gamma).len())));
    }
    let mut acc = None;
    for (k, v) in orders.into_iter().enumerate() {
        let w = g.pick(gamma, k)?;
        let term = g.scale(v, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    Ok(acc.unwrap())
}

/// Plain-vector version of [`fuse`].
pub fn fuse_values(orders: &[Vec<f64>; 3], gamma: &[f64; 3]) -> Result<Vec<f64>> {
    let f = orders[0].len();
    if orders.iter().any(|v| v.len() != f) {
        return Err(MmffError::dim("fuse", "order factors differ in length".to_string()));
    }
    Ok((0..f)
        .map(|i| gamma[0] * orders[0][i] + gamma[1] * orders[1][i] + gamma[2] * orders[2][i])
        .collect())
}
