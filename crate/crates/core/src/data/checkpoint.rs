use std::fs;
use std::path::Path;

use crate::error::{MmffError, Result};
use crate::tensor::{ParamStore, Tensor};

use super::files::write_file;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMFF";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Reserved array carrying the training-stage marker.
const STAGE_ARRAY: &str = "meta.stage";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub frozen: bool,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Named single-precision arrays plus the last completed training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    /// Snapshot every parameter of `store` in insertion order.
    pub fn from_store(store: &ParamStore, stage: u8) -> Self {
        let arrays = store
            .ids()
            .map(|id| NamedArray {
                name: store.name(id).to_string(),
                frozen: store.is_frozen(id),
                shape: store.value(id).shape().to_vec(),
                values: store.value(id).data().iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Checkpoint { stage, arrays }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Append a frozen vector (dimensions, statistics and similar metadata).
    pub fn push_meta(&mut self, name: &str, values: &[f64]) {
        self.arrays.push(NamedArray {
            name: name.to_string(),
            frozen: true,
            shape: vec![values.len().max(1)],
            values: if values.is_empty() { vec![0.0] } else { values.iter().map(|&v| v as f32).collect() },
        });
    }

    pub fn meta(&self, name: &str) -> Result<Vec<f64>> {
        self.get(name)
            .map(|a| a.values.iter().map(|&v| v as f64).collect())
            .ok_or_else(|| MmffError::Format(format!("checkpoint lacks `{name}`")))
    }

    /// Overwrite the values and frozen flags of every parameter in `store`
    /// from the array of the same name.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let a = self
                .get(&name)
                .ok_or_else(|| MmffError::Format(format!("checkpoint lacks parameter `{name}`")))?;
            if a.shape != store.value(id).shape() {
                return Err(MmffError::Format(format!(
                    "parameter `{name}` has shape {:?} in the checkpoint, model expects {:?}",
                    a.shape,
                    store.value(id).shape()
                )));
            }
            let t = Tensor::new(a.shape.clone(), a.values.iter().map(|&v| v as f64).collect())?;
            store.set_value(id, t)?;
            store.set_frozen(id, a.frozen);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let count = u32::try_from(self.arrays.len() + 1)
            .map_err(|_| MmffError::Format("too many arrays".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        let stage = NamedArray {
            name: STAGE_ARRAY.into(),
            frozen: true,
            shape: vec![1],
            values: vec![self.stage as f32],
        };
        for a in std::iter::once(&stage).chain(&self.arrays) {
            if a.name == STAGE_ARRAY && !std::ptr::eq(a, &stage) {
                return Err(MmffError::Format(format!("`{STAGE_ARRAY}` is reserved")));
            }
            let name_len = u16::try_from(a.name.len())
                .map_err(|_| MmffError::Format(format!("array name too long: {}", a.name)))?;
            let rank = u8::try_from(a.shape.len())
                .map_err(|_| MmffError::Format(format!("array `{}` has too many dims", a.name)))?;
            if a.shape.iter().product::<usize>() != a.values.len() {
                return Err(MmffError::Format(format!("array `{}` shape and length disagree", a.name)));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.frozen as u8);
            out.push(rank);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(MmffError::Format(format!("bad magic bytes {magic:?}")));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(MmffError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut stage = None;
        let mut arrays: Vec<NamedArray> = Vec::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| MmffError::Corrupt("array name is not UTF-8".into()))?
                .to_string();
            let frozen = match r.take(1)?[0] {
                0 => false,
                1 => true,
                other => return Err(MmffError::Corrupt(format!("frozen flag {other} on `{name}`"))),
            };
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
                let d = usize::try_from(d).map_err(|_| MmffError::Corrupt(format!("extent {d} on `{name}`")))?;
                shape.push(d);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n > 0 && rank > 0)
                .ok_or_else(|| MmffError::Corrupt(format!("invalid shape {shape:?} on `{name}`")))?;
            let payload = r.take(numel.checked_mul(4).ok_or_else(|| MmffError::Corrupt("payload size overflow".into()))?)?;
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if name == STAGE_ARRAY {
                let values: Vec<f32> = values;
                stage = Some(values[0]);
                continue;
            }
            if arrays.iter().any(|a| a.name == name) {
                return Err(MmffError::Corrupt(format!("duplicate array `{name}`")));
            }
            arrays.push(NamedArray {
                name,
                frozen,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(MmffError::Corrupt(format!(
                "{} trailing bytes after the last array",
                bytes.len() - r.pos
            )));
        }
        let stage = stage.ok_or_else(|| MmffError::Corrupt("missing stage marker".into()))?;
        if !(0.0..=255.0).contains(&stage) || stage.fract() != 0.0 {
            return Err(MmffError::Corrupt(format!("invalid stage marker {stage}")));
        }
        Ok(Checkpoint {
            stage: stage as u8,
            arrays,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            MmffError::Corrupt(format!("truncated file: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_file(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| MmffError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
