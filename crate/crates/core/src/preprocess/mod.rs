//! Key-frame compression of long per-frame feature sequences.
//!
//! The pipeline for audio and video is: min-max normalization, low-variance
//! dimension filtering, projection onto the first principal component of the
//! pooled training frames, then Midimax selection on the projected series.
//! Every statistic is fitted on the training collection only.

mod midimax;
mod pca;

pub use midimax::{midimax_select, MidimaxPlan};
pub use pca::{first_principal_component, power_iteration, PrincipalAxis, PCA_MAX_ITERATIONS, PCA_TOLERANCE};

use std::fmt;
use std::str::FromStr;

use crate::error::{MmffError, Result};

/// Default low-variance threshold.
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_TARGET_LEN_AUDIO: usize = 600;
pub const DEFAULT_TARGET_LEN_VIDEO: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Text,
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Video];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }

    /// Position in `(text, audio, video)` ordering.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = MmffError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "t" => Ok(Modality::Text),
            "audio" | "a" => Ok(Modality::Audio),
            "video" | "v" => Ok(Modality::Video),
            other => Err(MmffError::Usage(format!(
                "unknown modality `{other}` (expected text, audio or video)"
            ))),
        }
    }
}

/// One sample's frames for one modality, `M` rows of `K` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub id: String,
    pub modality: Modality,
    rows: usize,
    dims: usize,
    data: Vec<f64>,
}

impl FrameSequence {
    pub fn from_flat(
        id: impl Into<String>,
        modality: Modality,
        rows: usize,
        dims: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if rows == 0 || dims == 0 {
            return Err(MmffError::Data(format!(
                "sequence `{id}` ({modality}) is empty: {rows} frames x {dims} dims"
            )));
        }
        if data.len() != rows * dims {
            return Err(MmffError::dim(
                "frame_sequence",
                format!("{rows} x {dims} needs {} values, got {}", rows * dims, data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MmffError::Data(format!(
                "sequence `{id}` has a non-finite value in frame {}",
                pos / dims
            )));
        }
        Ok(FrameSequence {
            id,
            modality,
            rows,
            dims,
            data,
        })
    }

    pub fn from_rows(id: impl Into<String>, modality: Modality, rows: &[Vec<f64>]) -> Result<Self> {
        let id = id.into();
        let dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dims) {
            return Err(MmffError::Data(format!(
                "sequence `{id}`: frame {bad} has {} values, expected {dims}",
                rows[bad].len()
            )));
        }
        let data = rows.concat();
        Self::from_flat(id, modality, rows.len(), dims, data)
    }

    /// Number of frames `M`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Frame dimension `K`.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        &self.data[j * self.dims..(j + 1) * self.dims]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn with_data(&self, rows: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        FrameSequence::from_flat(self.id.clone(), self.modality, rows, dims, data)
    }
}

fn common_dims(seqs: &[FrameSequence]) -> Result<usize> {
    let first = seqs
        .first()
        .ok_or_else(|| MmffError::Usage("training collection is empty".into()))?;
    if let Some(bad) = seqs.iter().find(|s| s.dims() != first.dims()) {
        return Err(MmffError::dim(
            "training_collection",
            format!(
                "sample `{}` has {} dims, `{}` has {}",
                bad.id,
                bad.dims(),
                first.id,
                first.dims()
            ),
        ));
    }
    Ok(first.dims())
}

/// Per-dimension range over every training frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_minmax(training: &[FrameSequence]) -> Result<NormStats> {
    let dims = common_dims(training)?;
    let mut min = vec![f64::INFINITY; dims];
    let mut max = vec![f64::NEG_INFINITY; dims];
    for frame in training.iter().flat_map(FrameSequence::frames) {
        for k in 0..dims {
            min[k] = min[k].min(frame[k]);
            max[k] = max[k].max(frame[k]);
        }
    }
    Ok(NormStats { min, max })
}

/// `(x - min) / (max - min)` clamped to `[0, 1]`; constant dimensions map to 0.
pub fn apply_minmax(seq: &FrameSequence, stats: &NormStats) -> Result<FrameSequence> {
    if seq.dims() != stats.min.len() {
        return Err(MmffError::dim(
            "apply_minmax",
            format!("sequence has {} dims, stats have {}", seq.dims(), stats.min.len()),
        ));
    }
    let data = seq
        .frames()
        .flat_map(|f| {
            f.iter().enumerate().map(|(k, &x)| {
                let range = stats.max[k] - stats.min[k];
                if range > 0.0 {
                    ((x - stats.min[k]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    seq.with_data(seq.len(), seq.dims(), data)
}

/// Which dimensions survive the low-variance filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    pub keep: Vec<bool>,
    pub beta: f64,
    /// Mean over samples of the within-sample variance, per dimension.
    pub statistic: Vec<f64>,
}

impl FilterMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Drop dimension `k` when `(1/N) sum_i (1/M_i) sum_j (x_ijk - mean_j x_ijk)^2 <= beta`.
pub fn fit_low_variance_filter(training: &[FrameSequence], beta: f64) -> Result<FilterMask> {
    if beta.is_nan() || beta < 0.0 {
        return Err(MmffError::Config(format!("beta must be >= 0, got {beta}")));
    }
    let dims = common_dims(training)?;
    let mut statistic = vec![0.0; dims];
    for seq in training {
        let m = seq.len() as f64;
        let mut mean = vec![0.0; dims];
        for f in seq.frames() {
            mean.iter_mut().zip(f).for_each(|(a, x)| *a += x);
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; dims];
        for f in seq.frames() {
            for k in 0..dims {
                let d = f[k] - mean[k];
                var[k] += d * d;
            }
        }
        for k in 0..dims {
            statistic[k] += var[k] / m;
        }
    }
    let n = training.len() as f64;
    statistic.iter_mut().for_each(|s| *s /= n);
    let keep: Vec<bool> = statistic.iter().map(|&s| s > beta).collect();
    if !keep.iter().any(|&k| k) {
        let best = statistic.iter().copied().fold(0.0, f64::max);
        return Err(MmffError::Config(format!(
            "low-variance filter with beta = {beta} removes all {dims} dimensions \
             (largest statistic {best:.3e}); use a smaller beta"
        )));
    }
    Ok(FilterMask {
        keep,
        beta,
        statistic,
    })
}

pub fn apply_filter(seq: &FrameSequence, mask: &FilterMask) -> Result<FrameSequence> {
    if seq.dims() != mask.keep.len() {
        return Err(MmffError::dim(
            "apply_filter",
            format!("sequence has {} dims, mask has {}", seq.dims(), mask.keep.len()),
        ));
    }
    let data = seq
        .frames()
        .flat_map(|f| f.iter().zip(&mask.keep).filter(|(_, &k)| k).map(|(x, _)| *x))
        .collect();
    seq.with_data(seq.len(), mask.kept(), data)
}

/// Compression ratio giving at most about `target_len` Midimax indices.
pub fn compression_ratio(frames: usize, target_len: usize) -> usize {
    (3 * frames).div_ceil(target_len).max(1)
}

/// Gather Midimax key frames and bring the result to exactly `target_len` frames.
///
/// Frames are selected on the projection onto `axis` but the original
/// multi-dimensional frames are gathered. Excess frames are cut from the tail,
/// missing ones are filled by repeating the last selected frame, and every
/// output frame is scaled to unit L2 norm (all-zero frames stay zero).
pub fn compress_sequence(
    seq: &FrameSequence,
    axis: &PrincipalAxis,
    target_len: usize,
) -> Result<FrameSequence> {
    let indices = key_frame_indices(seq, axis, target_len)?;
    let dims = seq.dims();
    let mut data = Vec::with_capacity(target_len * dims);
    for &j in &indices {
        let frame = seq.frame(j);
        let norm = frame.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            data.extend(frame.iter().map(|v| v / norm));
        } else {
            data.extend_from_slice(frame);
        }
    }
    seq.with_data(indices.len(), dims, data)
}

/// Source frame index for each output position of [`compress_sequence`].
pub fn key_frame_indices(
    seq: &FrameSequence,
    axis: &PrincipalAxis,
    target_len: usize,
) -> Result<Vec<usize>> {
    if target_len < 3 {
        return Err(MmffError::Usage(format!(
            "target length must be at least 3, got {target_len}"
        )));
    }
    if seq.dims() != axis.dims() {
        return Err(MmffError::dim(
            "compress_sequence",
            format!("sequence has {} dims, axis has {}", seq.dims(), axis.dims()),
        ));
    }
    let projected: Vec<f64> = seq.frames().map(|f| axis.project(f)).collect();
    let plan = midimax_select(&projected, compression_ratio(seq.len(), target_len))?;
    let mut indices = plan.indices();
    indices.truncate(target_len);
    let last = *indices.last().expect("midimax keeps at least one frame");
    indices.resize(target_len, last);
    Ok(indices)
}

/// Fitted preprocessing for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub norm: NormStats,
    pub mask: FilterMask,
    pub axis: PrincipalAxis,
}

impl Preprocessor {
    /// Fit min-max, filter and principal axis on the training sequences.
    pub fn fit(training: &[FrameSequence], beta: f64) -> Result<Self> {
        let norm = fit_minmax(training)?;
        let normalized = training
            .iter()
            .map(|s| apply_minmax(s, &norm))
            .collect::<Result<Vec<_>>>()?;
        let mask = fit_low_variance_filter(&normalized, beta)?;
        let filtered = normalized
            .iter()
            .map(|s| apply_filter(s, &mask))
            .collect::<Result<Vec<_>>>()?;
        let dims = mask.kept();
        let pooled: Vec<f64> = filtered.iter().flat_map(|s| s.data().iter().copied()).collect();
        let axis = first_principal_component(&pooled, dims)?;
        Ok(Preprocessor { norm, mask, axis })
    }

    /// Normalize and filter one sequence without compressing it.
    pub fn transform(&self, seq: &FrameSequence) -> Result<FrameSequence> {
        let normalized = apply_minmax(seq, &self.norm)?;
        apply_filter(&normalized, &self.mask)
    }

    /// Normalize, filter and compress one sequence.
    pub fn apply(&self, seq: &FrameSequence, target_len: usize) -> Result<FrameSequence> {
        compress_sequence(&self.transform(seq)?, &self.axis, target_len)
    }
}
