//! Multimodal multi-order factor fusion for sequence regression.
//!
//! Frame sequences of three modalities (text, audio, video) are normalized,
//! filtered and compressed ([`preprocess`]), encoded by BiLSTM stacks
//! ([`encoder`]), summarized into a shared latent proxy ([`proxy`]) and fused
//! through first-, second- and third-order factors weighted by proxy-driven
//! softmax heads ([`fusion`]). [`pipeline`] ties the stages together and
//! [`analysis`] computes metrics, order ablations and contribution reports.

pub mod analysis;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod pipeline;
pub mod preprocess;
pub mod proxy;
pub mod tensor;
pub mod training;

pub use analysis::{AblationSpec, ContributionReport, MetricsReport};
pub use config::RunConfig;
pub use data::{Checkpoint, Dataset, Manifest, Sample, SynthConfig};
pub use encoder::ModalityFeatures;
pub use error::{MmffError, Result};
pub use fusion::{FactorSet, OrderWeights};
pub use pipeline::{Model, ModelDims, SampleAnalysis};
pub use preprocess::{FrameSequence, Modality};
pub use proxy::LatentProxy;
pub use tensor::{Graph, NodeId, ParamStore, RngStream, Tensor};
