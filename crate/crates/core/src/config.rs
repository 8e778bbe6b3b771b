//! Run configuration read from `key = value` files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{MmffError, Result};
use crate::preprocess::{DEFAULT_BETA, DEFAULT_TARGET_LEN_AUDIO, DEFAULT_TARGET_LEN_VIDEO};
use crate::tensor::AdamWConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Modality feature dimension.
    pub d: usize,
    /// Latent proxy dimension.
    pub r: usize,
    /// BiLSTM hidden size.
    pub h: usize,
    /// Factor encoder width.
    pub hf: usize,
    /// Common factor dimension.
    pub f: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs of the encoder, proxy and fusion stages.
    pub epochs: [usize; 3],
    pub dropout: f64,
    pub beta: f64,
    pub target_len_audio: usize,
    pub target_len_video: usize,
    pub batch_size: usize,
    /// Epochs between weight-trace rows.
    pub log_interval: usize,
    pub kfold: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            d: 64,
            r: 16,
            h: 32,
            hf: 32,
            f: 32,
            lr: 1e-3,
            weight_decay: 0.01,
            epochs: [30, 60, 60],
            dropout: 0.5,
            beta: DEFAULT_BETA,
            target_len_audio: DEFAULT_TARGET_LEN_AUDIO,
            target_len_video: DEFAULT_TARGET_LEN_VIDEO,
            batch_size: 16,
            log_interval: 1,
            kfold: None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 18] = [
    "seed",
    "d",
    "r",
    "h",
    "hf",
    "f",
    "lr",
    "weight_decay",
    "epochs_stage0",
    "epochs_stage1",
    "epochs_stage2",
    "dropout",
    "beta",
    "target_len_audio",
    "target_len_video",
    "batch_size",
    "log_interval",
    "kfold",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MmffError::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Set one key. `kfold = 0` clears the fold count.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "r" => self.r = parse(key, v)?,
            "h" => self.h = parse(key, v)?,
            "hf" | "h_f" => self.hf = parse(key, v)?,
            "f" => self.f = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "epochs_stage0" => self.epochs[0] = parse(key, v)?,
            "epochs_stage1" => self.epochs[1] = parse(key, v)?,
            "epochs_stage2" => self.epochs[2] = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "target_len_audio" => self.target_len_audio = parse(key, v)?,
            "target_len_video" => self.target_len_video = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "log_interval" => self.log_interval = parse(key, v)?,
            "kfold" => {
                let k: usize = parse(key, v)?;
                self.kfold = (k > 0).then_some(k);
            }
            other => {
                return Err(MmffError::Config(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                MmffError::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            self.set(key, value).map_err(|e| match e {
                MmffError::Config(msg) => MmffError::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_str_validated(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MmffError::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.merge_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("r", self.r),
            ("h", self.h),
            ("hf", self.hf),
            ("f", self.f),
            ("batch_size", self.batch_size),
            ("log_interval", self.log_interval),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(MmffError::Config(format!("`{k}` must be positive")));
            }
        }
        if self.r >= self.d {
            return Err(MmffError::Config(format!(
                "latent dimension r = {} must be smaller than d = {}",
                self.r, self.d
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MmffError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(MmffError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        for (k, v) in [("target_len_audio", self.target_len_audio), ("target_len_video", self.target_len_video)] {
            if v < 3 {
                return Err(MmffError::Config(format!("`{k}` must be at least 3, got {v}")));
            }
        }
        if let Some(k) = self.kfold {
            if k < 2 {
                return Err(MmffError::Config(format!("kfold must be at least 2, got {k}")));
            }
        }
        self.optimizer().validate()
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    /// Canonical `key = value` rendering, readable by [`merge_str`](Self::merge_str).
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "h = {}", self.h);
        let _ = writeln!(s, "hf = {}", self.hf);
        let _ = writeln!(s, "f = {}", self.f);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        for (i, e) in self.epochs.iter().enumerate() {
            let _ = writeln!(s, "epochs_stage{i} = {e}");
        }
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "target_len_audio = {}", self.target_len_audio);
        let _ = writeln!(s, "target_len_video = {}", self.target_len_video);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "log_interval = {}", self.log_interval);
        let _ = writeln!(s, "kfold = {}", self.kfold.unwrap_or(0));
        s
    }
}
