use super::params::{ParamId, ParamStore};
use crate::error::{MmffError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(MmffError::Config(format!("invalid AdamW hyperparameters {self:?}")))
        }
    }
}

/// Adam with decoupled weight decay:
///
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    t: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdamW {
            cfg,
            t: 0,
            moments: Vec::new(),
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&[f64]> {
        self.moments.get(id.index())?.as_ref().map(|(m, _)| m.as_slice())
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let trainable: Vec<ParamId> = store.ids().filter(|&id| !store.is_frozen(id)).collect();
        if let Some(&missing) = trainable.iter().find(|&&id| store.grad(id).is_none()) {
            return Err(MmffError::State(format!(
                "trainable parameter `{}` has no gradient",
                store.name(missing)
            )));
        }
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        self.t += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for id in trainable {
            let grad = store.grad(id).expect("checked above").to_vec();
            let (m, v) = self.moments[id.index()]
                .get_or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            let p = store.value_mut(id).data_mut();
            for i in 0..p.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p[i]);
            }
        }
        Ok(())
    }
}
