//! Mini-batch AdamW loop shared by every training stage.

use rayon::prelude::*;

use crate::error::{MmffError, Result};
use crate::tensor::{AdamW, Graph, NodeId, ParamStore, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event<T> {
    Sample(T),
    Epoch { epoch: usize, mean_loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

/// Run `epochs` passes over `n` samples in shuffled mini-batches.
///
/// `sample_loss(store, index, rng)` builds one sample's graph and returns it
/// with its scalar loss node and a per-sample record passed on as
/// [`Event::Sample`].
/// Samples of a batch are differentiated in parallel, each with its own
/// derived random stream; gradients are summed in batch order and averaged
/// before the optimizer step, so results do not depend on thread scheduling.
/// [`Event::Epoch`] follows every epoch. Returns the mean training loss of
/// each epoch.
#[allow(clippy::too_many_arguments)]
pub fn run_epochs<T, L, E>(
    store: &mut ParamStore,
    optimizer: &mut AdamW,
    n: usize,
    cfg: LoopConfig,
    rng: &mut RngStream,
    stage: &str,
    sample_loss: L,
    mut on_event: E,
) -> Result<Vec<f64>>
where
    T: Send,
    L: Fn(&ParamStore, usize, &mut RngStream) -> Result<(Graph, NodeId, T)> + Sync,
    E: FnMut(Event<T>) -> Result<()>,
{
    if n == 0 {
        return Err(MmffError::Data(format!("{stage}: no training samples")));
    }
    if cfg.batch_size == 0 {
        return Err(MmffError::Config("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            store.zero_grad();
            let base = step;
            step += batch.len() as u64;
            let frozen: &ParamStore = store;
            let results: Vec<Result<(Graph, f64, T)>> = batch
                .par_iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let mut sample_rng = rng.derive(base + pos as u64);
                    let (mut g, loss, record) = sample_loss(frozen, i, &mut sample_rng)?;
                    let value = g.scalar(loss);
                    if !value.is_finite() {
                        return Err(MmffError::Numeric(format!(
                            "{stage}: non-finite loss at epoch {epoch} (sample {i})"
                        )));
                    }
                    g.backward(loss)?;
                    Ok((g, value, record))
                })
                .collect();
            for r in results {
                let (g, value, record) = r?;
                total += value;
                g.accumulate_param_grads(store);
                on_event(Event::Sample(record))?;
            }
            store.scale_grads(1.0 / batch.len() as f64);
            optimizer.step(store)?;
        }
        let mean = total / n as f64;
        trace.push(mean);
        on_event(Event::Epoch {
            epoch,
            mean_loss: mean,
        })?;
    }
    Ok(trace)
}
