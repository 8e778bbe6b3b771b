//! Sequence and manifest files, synthetic data, checkpoints and folds.

mod checkpoint;
mod files;
mod folds;
pub mod synth;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, NamedArray, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use files::{
    load_dataset, read_manifest, read_sequence, write_manifest, write_sequence, Dataset, Manifest,
    ManifestRow, Sample, Split, MANIFEST_HEADER,
};
pub use folds::stratified_folds;
pub use synth::{synth_generate, synth_samples, SynthConfig, SynthOutput, SynthWorld};
