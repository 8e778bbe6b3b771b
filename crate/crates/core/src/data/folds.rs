use crate::error::{MmffError, Result};
use crate::tensor::RngStream;

/// Fold index for every sample, stratified by label quantile.
///
/// Samples are ranked by label (ties by position) and cut into bins of `k`
/// consecutive ranks; each bin's members are dealt to distinct folds in a
/// seeded random order, so every fold sees the whole label range.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(MmffError::Config(format!("k-fold count must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(MmffError::Data(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut ranked: Vec<usize> = (0..labels.len()).collect();
    ranked.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    let mut rng = RngStream::new(seed);
    let mut folds = vec![0; labels.len()];
    for bin in ranked.chunks(k) {
        let mut slots: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut slots);
        for (&i, &f) in bin.iter().zip(&slots) {
            folds[i] = f;
        }
    }
    Ok(folds)
}
