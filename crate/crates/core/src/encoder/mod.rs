//! Trainable sequence encoders producing one fixed-length vector per modality.
//!
//! Every modality runs a two-layer BiLSTM. Text follows it with a three-layer
//! ReLU MLP; audio and video use a single affine projection with ELU.

mod lstm;

pub use lstm::{BiLstm, BiLstmLayer, LstmParams, GATES};

use crate::error::{MmffError, Result};
use crate::preprocess::{FrameSequence, Modality};
use crate::tensor::nn::Mlp;
use crate::tensor::{Activation, Graph, Mode, NodeId, ParamId, ParamStore, RngStream};

pub const BILSTM_LAYERS: usize = 2;
pub const TEXT_MLP_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub modality: Modality,
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout: f64,
    /// Number of dense layers after the BiLSTM.
    pub mlp_depth: usize,
}

impl EncoderConfig {
    /// Standard configuration for a modality: ReLU + 3 dense layers for text,
    /// ELU + 1 dense layer for audio and video.
    pub fn for_modality(
        modality: Modality,
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        dropout: f64,
    ) -> Self {
        let (activation, mlp_depth) = match modality {
            Modality::Text => (Activation::Relu, 3),
            Modality::Audio | Modality::Video => (Activation::Elu, 1),
        };
        EncoderConfig {
            modality,
            input_dim,
            hidden,
            output_dim,
            activation,
            dropout,
            mlp_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.output_dim == 0 || self.mlp_depth == 0 {
            return Err(MmffError::Config(format!("encoder dimensions must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MmffError::Config(format!("dropout must lie in [0, 1): {}", self.dropout)));
        }
        Ok(())
    }
}

/// BiLSTM followed by a dense head.
#[derive(Debug, Clone)]
pub struct SequenceEncoder {
    pub config: EncoderConfig,
    pub lstm: BiLstm,
    pub head: Mlp,
}

impl SequenceEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let lstm = BiLstm::new(
            store,
            &format!("{name}.bilstm"),
            config.input_dim,
            config.hidden,
            BILSTM_LAYERS,
            config.dropout,
            rng,
        )?;
        let mut widths = vec![lstm.out_dim()];
        widths.extend(std::iter::repeat_n(TEXT_MLP_WIDTH, config.mlp_depth - 1));
        widths.push(config.output_dim);
        // The text head keeps a linear output; the single-layer audio/video
        // projection is followed by its activation.
        let output = (config.mlp_depth == 1).then_some(config.activation);
        let head = Mlp::new(
            store,
            &format!("{name}.mlp"),
            &widths,
            config.activation,
            output,
            config.dropout,
            rng,
        )?;
        Ok(SequenceEncoder { config, lstm, head })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.lstm.params();
        p.extend(self.head.params());
        p
    }

    fn check(&self, seq: &FrameSequence) -> Result<()> {
        if seq.dims() != self.config.input_dim {
            return Err(MmffError::dim(
                "encode",
                format!(
                    "{} encoder expects {} dims, sequence `{}` has {}",
                    self.config.modality,
                    self.config.input_dim,
                    seq.id,
                    seq.dims()
                ),
            ));
        }
        Ok(())
    }

    /// Encode onto an existing graph.
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seq: &FrameSequence,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        self.check(seq)?;
        let xs = seq.frames().map(|f| g.vector(f)).collect::<Result<Vec<_>>>()?;
        let pooled = self.lstm.encode(g, store, &xs, mode, rng)?;
        self.head.forward(g, store, pooled, mode, rng)
    }

    /// Encode and return plain values.
    pub fn encode_values(
        &self,
        store: &ParamStore,
        seq: &FrameSequence,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.encode(&mut g, store, seq, mode, rng)?;
        Ok(g.value(out).to_vec())
    }
}

/// The three encoded modality vectors of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    pub id: String,
    pub text: Vec<f64>,
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
}

impl ModalityFeatures {
    pub fn get(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
        }
    }

    pub fn dim(&self) -> usize {
        self.text.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for m in Modality::ALL {
            let v = self.get(m);
            if v.len() != dim {
                return Err(MmffError::dim(
                    "modality_features",
                    format!("{m} feature has {} values, expected {dim}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MmffError::Numeric(format!(
                    "non-finite {m} feature for sample `{}`",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Text, audio and video encoders sharing one output dimension.
#[derive(Debug, Clone)]
pub struct ModalityEncoders {
    pub text: SequenceEncoder,
    pub audio: SequenceEncoder,
    pub video: SequenceEncoder,
}

impl ModalityEncoders {
    /// `input_dims` in `(text, audio, video)` order.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dims: [usize; 3],
        hidden: usize,
        output_dim: usize,
        dropout: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut make = |m: Modality| {
            let cfg = EncoderConfig::for_modality(m, input_dims[m.index()], hidden, output_dim, dropout);
            SequenceEncoder::new(store, &format!("{prefix}.{m}"), cfg, rng)
        };
        Ok(ModalityEncoders {
            text: make(Modality::Text)?,
            audio: make(Modality::Audio)?,
            video: make(Modality::Video)?,
        })
    }

    pub fn get(&self, m: Modality) -> &SequenceEncoder {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.text.config.output_dim
    }

    /// Text encoding: BiLSTM then the ReLU MLP.
    pub fn encode_text(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seq: &FrameSequence,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        self.text.encode(g, store, seq, mode, rng)
    }

    /// Audio or video encoding: BiLSTM then affine + ELU.
    pub fn encode_av(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seq: &FrameSequence,
        modality: Modality,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        if modality == Modality::Text {
            return Err(MmffError::Usage("encode_av takes audio or video".into()));
        }
        self.get(modality).encode(g, store, seq, mode, rng)
    }

    /// Encode all three modalities of a sample (eval mode) to plain vectors.
    pub fn features(
        &self,
        store: &ParamStore,
        id: &str,
        seqs: [&FrameSequence; 3],
    ) -> Result<ModalityFeatures> {
        let mut rng = RngStream::new(0);
        let mut enc = |m: Modality| self.get(m).encode_values(store, seqs[m.index()], Mode::Eval, &mut rng);
        let f = ModalityFeatures {
            id: id.to_string(),
            text: enc(Modality::Text)?,
            audio: enc(Modality::Audio)?,
            video: enc(Modality::Video)?,
        };
        f.validate(self.output_dim())?;
        Ok(f)
    }
}
