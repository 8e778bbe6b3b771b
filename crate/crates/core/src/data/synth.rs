//! Synthetic multimodal sequences with a known label-generating signal.
//!
//! Each sample draws a latent `u ~ N(0, I)`. Frame `j` of a modality is
//! `A u + c + a * sin(2 pi j / T + phi)` plus moving-average-smoothed noise;
//! the sinusoid is shared by all samples and gives every sequence temporal
//! structure independent of the label. The label is `12 + 4 w.u_label`
//! clipped to `[0, 24]`, where `u_label` are the first `label_dims`
//! coordinates of `u` and `w` is a unit vector.

use std::path::{Path, PathBuf};

use crate::error::{MmffError, Result};
use crate::preprocess::{FrameSequence, Modality};
use crate::tensor::RngStream;

use super::files::{write_manifest, write_sequence, ManifestRow, Sample, Split};

/// Window of the trailing moving average applied to the noise.
pub const NOISE_WINDOW: usize = 5;
/// Trailing dimensions of every modality that carry no oscillation.
pub const QUIET_DIMS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub samples: usize,
    /// Held-out samples drawn from the same generative maps.
    pub test_samples: usize,
    pub latent_dim: usize,
    /// Leading latent coordinates that determine the label.
    pub label_dims: usize,
    /// Frame dimension per modality, `(text, audio, video)`.
    pub frame_dims: [usize; 3],
    /// Nominal sequence length per modality.
    pub lengths: [usize; 3],
    /// Relative length variation; lengths are drawn in `len * (1 +- jitter)`.
    pub length_jitter: f64,
    pub noise_scale: f64,
    /// When set, only this modality's frames depend on the label coordinates.
    pub dominant: Option<Modality>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            samples: 64,
            test_samples: 0,
            latent_dim: 6,
            label_dims: 2,
            frame_dims: [12, 16, 20],
            lengths: [8, 120, 160],
            length_jitter: 0.2,
            noise_scale: 0.3,
            dominant: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(MmffError::Config("sample count must be positive".into()));
        }
        if self.latent_dim == 0 || self.label_dims == 0 || self.label_dims > self.latent_dim {
            return Err(MmffError::Config(format!(
                "need 0 < label dims <= latent dim, got {} and {}",
                self.label_dims, self.latent_dim
            )));
        }
        if self.frame_dims.iter().chain(&self.lengths).any(|&v| v == 0) {
            return Err(MmffError::Config("frame dims and lengths must be positive".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(MmffError::Config(format!(
                "noise scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if !(0.0..1.0).contains(&self.length_jitter) {
            return Err(MmffError::Config(format!(
                "length jitter must lie in [0, 1), got {}",
                self.length_jitter
            )));
        }
        Ok(())
    }
}

/// Per-modality generative map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMap {
    /// `[K, latent]`, row-major.
    pub weights: Vec<f64>,
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub period: Vec<f64>,
    pub phase: Vec<f64>,
}

impl ModalityMap {
    pub fn dims(&self) -> usize {
        self.offset.len()
    }

    /// Noise-free frame `j` for latent `u`.
    pub fn frame(&self, u: &[f64], j: usize) -> Vec<f64> {
        let latent = u.len();
        (0..self.dims())
            .map(|k| {
                let row = &self.weights[k * latent..(k + 1) * latent];
                let signal: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
                let wave = (std::f64::consts::TAU * j as f64 / self.period[k] + self.phase[k]).sin();
                signal + self.offset[k] + self.amplitude[k] * wave
            })
            .collect()
    }
}

/// The fixed maps shared by every sample of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub label_weights: Vec<f64>,
    pub maps: [ModalityMap; 3],
}

impl SynthWorld {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = RngStream::new(cfg.seed).derive(0);
        let mut w: Vec<f64> = (0..cfg.label_dims).map(|_| rng.normal()).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        w.iter_mut().for_each(|v| *v /= norm);
        let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
        let maps = Modality::ALL.map(|m| {
            let k = cfg.frame_dims[m.index()];
            let blind = cfg.dominant.is_some_and(|d| d != m);
            let weights = (0..k * cfg.latent_dim)
                .map(|i| {
                    let v = rng.normal() * scale;
                    if blind && i % cfg.latent_dim < cfg.label_dims {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let offset = (0..k).map(|_| rng.normal()).collect();
            let amplitude = (0..k)
                .map(|i| {
                    let a = rng.uniform_in(1.5, 2.5);
                    if i + QUIET_DIMS >= k && k > QUIET_DIMS {
                        0.0
                    } else {
                        a
                    }
                })
                .collect();
            let period = (0..k).map(|_| rng.uniform_in(4.0, 12.0)).collect();
            let phase = (0..k).map(|_| rng.uniform_in(0.0, std::f64::consts::TAU)).collect();
            ModalityMap {
                weights,
                offset,
                amplitude,
                period,
                phase,
            }
        });
        Ok(SynthWorld {
            label_weights: w,
            maps,
        })
    }

    pub fn label(&self, u: &[f64]) -> f64 {
        let s: f64 = self.label_weights.iter().zip(u).map(|(a, b)| a * b).sum();
        (12.0 + 4.0 * s).clamp(0.0, 24.0)
    }

    /// Draw one sample from its own random stream.
    pub fn sample(&self, cfg: &SynthConfig, id: &str, rng: &mut RngStream) -> Result<(Vec<f64>, Sample)> {
        let u: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal()).collect();
        let mut seqs = Vec::with_capacity(3);
        for m in Modality::ALL {
            let map = &self.maps[m.index()];
            let nominal = cfg.lengths[m.index()] as f64;
            let len = (nominal * (1.0 + cfg.length_jitter * rng.uniform_in(-1.0, 1.0))).round().max(1.0) as usize;
            let k = map.dims();
            let raw: Vec<f64> = (0..len * k).map(|_| rng.normal()).collect();
            let mut data = Vec::with_capacity(len * k);
            for j in 0..len {
                let clean = map.frame(&u, j);
                let lo = j.saturating_sub(NOISE_WINDOW - 1);
                for (d, c) in clean.iter().enumerate() {
                    let smooth = (lo..=j).map(|t| raw[t * k + d]).sum::<f64>() / (j - lo + 1) as f64;
                    data.push(c + cfg.noise_scale * smooth);
                }
            }
            seqs.push(FrameSequence::from_flat(id, m, len, k, data)?);
        }
        let label = self.label(&u);
        Ok((
            u,
            Sample {
                id: id.to_string(),
                label,
                sequences: seqs.try_into().unwrap(),
            },
        ))
    }
}

/// Train and test samples in memory.
pub fn synth_samples(cfg: &SynthConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let world = SynthWorld::new(cfg)?;
    let root = RngStream::new(cfg.seed);
    let train = (0..cfg.samples)
        .map(|i| Ok(world.sample(cfg, &format!("s{i:04}"), &mut root.derive(1 + i as u64))?.1))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.test_samples)
        .map(|i| Ok(world.sample(cfg, &format!("t{i:04}"), &mut root.derive((1 << 32) + i as u64))?.1))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, test))
}

/// Paths of the manifests written by [`synth_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
}

/// Write sequence CSVs under `out/{text,audio,video}/` and the manifests.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<SynthOutput> {
    let (train, test) = synth_samples(cfg)?;
    let write = |samples: &[Sample], split: Split| -> Result<PathBuf> {
        let mut rows = Vec::with_capacity(samples.len());
        for s in samples {
            let paths = Modality::ALL.map(|m| PathBuf::from(format!("{m}/{}.csv", s.id)));
            for m in Modality::ALL {
                write_sequence(&out.join(&paths[m.index()]), &s.sequences[m.index()])?;
            }
            rows.push(ManifestRow {
                id: s.id.clone(),
                label: s.label,
                paths,
            });
        }
        let path = out.join(split.file_name());
        write_manifest(&path, &rows)?;
        Ok(path)
    };
    let train = write(&train, Split::Train)?;
    let test = if test.is_empty() { None } else { Some(write(&test, Split::Test)?) };
    Ok(SynthOutput { train, test })
}
