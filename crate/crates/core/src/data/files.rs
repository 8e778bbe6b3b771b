use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{MmffError, Result};
use crate::preprocess::{FrameSequence, Modality};

pub const MANIFEST_HEADER: [&str; 5] = ["sample_id", "label", "text_path", "audio_path", "video_path"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// `manifest.csv`, `manifest_val.csv` or `manifest_test.csv`.
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "manifest.csv",
            Split::Val => "manifest_val.csv",
            Split::Test => "manifest_test.csv",
        }
    }

    fn from_path(path: &Path) -> Split {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if stem.ends_with("_test") || stem == "test" {
            Split::Test
        } else if stem.ends_with("_val") || stem == "val" {
            Split::Val
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub label: f64,
    /// Paths relative to the manifest directory, `(text, audio, video)`.
    pub paths: [PathBuf; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: f64,
    /// `(text, audio, video)`.
    pub sequences: [FrameSequence; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> MmffError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => MmffError::io(path, source),
        other => MmffError::Data(format!("{}: {other:?}", path.display())),
    }
}

fn open(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            MmffError::Data(format!("missing file {}", path.display()))
        } else {
            MmffError::io(path, e)
        }
    })?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

/// Read a sequence CSV with header `dim_0..dim_{K-1}` and one frame per row.
pub fn read_sequence(path: &Path, id: &str, modality: Modality) -> Result<FrameSequence> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let dims = header.len();
    for (k, name) in header.iter().enumerate() {
        if name.trim() != format!("dim_{k}") {
            return Err(MmffError::Data(format!(
                "{}: header column {k} is `{name}`, expected `dim_{k}`",
                path.display()
            )));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = r + 1;
        if record.len() != dims {
            return Err(MmffError::Data(format!(
                "{} row {row}: {} values, expected {dims}",
                path.display(),
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                MmffError::Data(format!("{} row {row}: cannot parse `{field}`", path.display()))
            })?;
            if !v.is_finite() {
                return Err(MmffError::Data(format!(
                    "{} row {row}: non-finite value `{field}`",
                    path.display()
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    FrameSequence::from_flat(id, modality, rows, dims, data)
        .map_err(|e| MmffError::Data(format!("{}: {e}", path.display())))
}

/// Values are written with 12 significant digits.
pub fn write_sequence(path: &Path, seq: &FrameSequence) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..seq.dims()).map(|k| format!("dim_{k}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for frame in seq.frames() {
        let row: Vec<String> = frame.iter().map(|v| format!("{v:.11e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MmffError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| MmffError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(MmffError::Data(format!(
            "{}: manifest header must be `{}`",
            path.display(),
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut rows: Vec<ManifestRow> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = r + 1;
        if record.len() != 5 {
            return Err(MmffError::Data(format!(
                "{} row {row}: {} fields, expected 5",
                path.display(),
                record.len()
            )));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(MmffError::Data(format!("{} row {row}: empty sample id", path.display())));
        }
        if rows.iter().any(|x| x.id == id) {
            return Err(MmffError::Data(format!(
                "{} row {row}: duplicate sample id `{id}`",
                path.display()
            )));
        }
        let label: f64 = record[1].trim().parse().map_err(|_| {
            MmffError::Data(format!("{} row {row}: cannot parse label `{}`", path.display(), &record[1]))
        })?;
        if !label.is_finite() {
            return Err(MmffError::Data(format!("{} row {row}: non-finite label", path.display())));
        }
        let p = |i: usize| PathBuf::from(record[i].trim());
        rows.push(ManifestRow {
            id,
            label,
            paths: [p(2), p(3), p(4)],
        });
    }
    Ok(Manifest {
        split: Split::from_path(path),
        rows,
    })
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for row in rows {
        let paths: Vec<String> = row.paths.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect();
        out.push_str(&format!("{},{},{}\n", row.id, row.label, paths.join(",")));
    }
    write_file(path, out.as_bytes())
}

/// Load every sample of a manifest, in manifest row order. Sequence paths are
/// resolved relative to the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .rows
        .iter()
        .map(|row| {
            let seq = |m: Modality| read_sequence(&base.join(&row.paths[m.index()]), &row.id, m);
            Ok(Sample {
                id: row.id.clone(),
                label: row.label,
                sequences: [seq(Modality::Text)?, seq(Modality::Audio)?, seq(Modality::Video)?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split: manifest.split,
        samples,
    })
}
