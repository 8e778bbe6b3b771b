//! Central finite-difference gradient oracles.
//!
//! These only ever evaluate forward passes, so they are independent of the
//! backward implementation they are used to check.

use super::{ParamId, ParamStore, RngStream};
use crate::error::Result;

/// Floor on the denominator of [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central differences of `f` with respect to every coordinate of `x`.
pub fn numeric_input_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Compare store gradients against central differences.
///
/// `loss` must be deterministic given the store. It is called once with
/// `backprop = true` and must then leave `d loss / d param` in the store's
/// gradients; every other call only needs the loss value. Up to `per_param`
/// coordinates are sampled from each parameter in `ids`.
pub fn check_param_gradients<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    per_param: usize,
    h: f64,
    rng: &mut RngStream,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    store.zero_grad();
    loss(store, true)?;
    let mut report = GradCheckReport::default();
    for &id in ids {
        let analytic_all = store
            .grad(id)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; store.value(id).numel()]);
        let n = analytic_all.len();
        let mut coords: Vec<usize> = (0..n).collect();
        if n > per_param {
            rng.shuffle(&mut coords);
            coords.truncate(per_param);
            coords.sort_unstable();
        }
        for idx in coords {
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + h;
            let up = loss(store, false)?;
            store.value_mut(id).data_mut()[idx] = orig - h;
            let down = loss(store, false)?;
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = analytic_all[idx];
            report.entries.push(GradCheckEntry {
                param: store.name(id).to_string(),
                index: idx,
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    store.zero_grad();
    Ok(report)
}
