//! OpenFace AU CSV ingestion and JSON-lines catalog loading.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::au::{clamp_intensity, AuFrame, AuSequence, Emotion, AU_COLUMNS, AU_COUNT};
use crate::fmt_real;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("empty input")]
    EmptyInput,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("bad label on manifest line {line}: {reason}")]
    BadLabel { line: usize, reason: String },
    #[error("malformed manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse an OpenFace-style CSV. Columns may appear in any order and extra
/// columns are ignored. Intensities outside [0, 5] are clamped and counted.
pub fn parse_au_csv<R: Read>(input: R, source: &str) -> Result<AuSequence, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input);

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(IngestError::MalformedRow {
                row: 0,
                reason: e.to_string(),
            })
        }
    };
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(IngestError::EmptyInput);
    }

    let mut au_cols = [0usize; AU_COUNT];
    for (slot, name) in AU_COLUMNS.iter().enumerate() {
        au_cols[slot] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| IngestError::MissingColumn((*name).to_string()))?;
    }
    let frame_col = headers.iter().position(|h| h == "frame");
    let conf_col = headers.iter().position(|h| h == "confidence");

    let mut frames = Vec::new();
    let mut clamped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        // 1-based data row number, header excluded
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let field = |col: usize| -> Result<f64, IngestError> {
            let raw = rec.get(col).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| IngestError::MalformedRow {
                row,
                reason: format!("`{}` is not a number in column `{}`", raw, &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(IngestError::MalformedRow {
                    row,
                    reason: format!("non-finite value in column `{}`", &headers[col]),
                });
            }
            Ok(v)
        };

        let mut au = [0.0; AU_COUNT];
        for (slot, &col) in au_cols.iter().enumerate() {
            let (v, moved) = clamp_intensity(field(col)?);
            clamped += moved as usize;
            au[slot] = v;
        }
        let frame_index = match frame_col {
            Some(col) => {
                let raw = rec.get(col).unwrap_or("");
                raw.parse::<u64>()
                    .or_else(|_| {
                        // OpenFace sometimes writes frame numbers as floats
                        raw.parse::<f64>()
                            .ok()
                            .filter(|f| f.fract() == 0.0 && *f >= 0.0)
                            .map(|f| f as u64)
                            .ok_or(())
                    })
                    .map_err(|_| IngestError::MalformedRow {
                        row,
                        reason: format!("bad frame index `{raw}`"),
                    })?
            }
            None => i as u64,
        };
        if let Some(prev) = frames.last().map(|f: &AuFrame| f.frame_index) {
            if frame_index <= prev {
                return Err(IngestError::MalformedRow {
                    row,
                    reason: format!("frame index {frame_index} does not follow {prev}"),
                });
            }
        }
        let confidence = match conf_col {
            Some(col) => {
                let c = field(col)?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(IngestError::MalformedRow {
                        row,
                        reason: format!("confidence {c} outside [0, 1]"),
                    });
                }
                Some(c)
            }
            None => None,
        };
        frames.push(AuFrame {
            frame_index,
            au,
            confidence,
        });
    }

    if frames.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    if clamped > 0 {
        log::warn!("{source}: clamped {clamped} intensities into [0, 5]");
    }
    let mut seq = AuSequence::unlabeled(frames, source);
    seq.clamped = clamped;
    Ok(seq)
}

pub fn read_au_csv(path: &Path) -> Result<AuSequence, IngestError> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::FileNotFound(path.to_path_buf()),
        _ => IngestError::Io(e),
    })?;
    parse_au_csv(std::io::BufReader::new(file), &path.display().to_string()).map_err(|e| {
        IngestError::InFile {
            path: path.display().to_string(),
            source: Box::new(e),
        }
    })
}

/// Serialize a sequence as OpenFace-compatible CSV (`frame`, optional
/// `confidence`, then the 17 intensity columns).
pub fn write_au_csv(seq: &AuSequence) -> String {
    let with_conf = seq.frames.iter().any(|f| f.confidence.is_some());
    let mut out = String::from("frame");
    if with_conf {
        out.push_str(",confidence");
    }
    for name in AU_COLUMNS {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for f in &seq.frames {
        out.push_str(&f.frame_index.to_string());
        if with_conf {
            out.push(',');
            // absent confidence in a mixed file is written as an empty cell
            if let Some(c) = f.confidence {
                out.push_str(&fmt_real(c));
            }
        }
        for v in f.au {
            out.push(',');
            out.push_str(&fmt_real(v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    path: String,
    #[serde(default)]
    emotion: Option<String>,
    #[serde(default)]
    level: Option<i64>,
    #[serde(default)]
    subject_id: Option<String>,
}

/// Label fields of one manifest entry after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub path: PathBuf,
    pub emotion: Option<Emotion>,
    pub level: Option<u8>,
    pub subject_id: Option<String>,
}

/// Parse and validate a JSON-lines manifest. Relative paths resolve against `base_dir`.
pub fn parse_manifest<R: Read>(mut input: R, base_dir: &Path) -> Result<Vec<CatalogEntry>, IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ml: ManifestLine = serde_json::from_str(raw).map_err(|e| IngestError::BadManifest {
            line,
            reason: e.to_string(),
        })?;
        let emotion = match ml.emotion.as_deref() {
            Some(name) => Some(name.parse::<Emotion>().map_err(|e| IngestError::BadLabel {
                line,
                reason: e.to_string(),
            })?),
            None => None,
        };
        let level = match (emotion, ml.level) {
            (None, Some(_)) => {
                return Err(IngestError::BadLabel {
                    line,
                    reason: "level given without emotion".into(),
                })
            }
            (_, Some(l)) if !(1..=3).contains(&l) => {
                return Err(IngestError::BadLabel {
                    line,
                    reason: format!("level {l} outside {{1, 2, 3}}"),
                })
            }
            (Some(Emotion::Neutral), Some(l)) if l != 1 => {
                return Err(IngestError::BadLabel {
                    line,
                    reason: format!("neutral only exists at level 1, got {l}"),
                })
            }
            (Some(Emotion::Neutral), None) => Some(1),
            (_, l) => l.map(|l| l as u8),
        };
        let path = PathBuf::from(&ml.path);
        let path = if path.is_absolute() {
            path
        } else {
            base_dir.join(path)
        };
        entries.push(CatalogEntry {
            path,
            emotion,
            level,
            subject_id: ml.subject_id,
        });
    }
    Ok(entries)
}

/// Load every sequence referenced by a manifest, labeled, in manifest order.
pub fn load_catalog<R: Read>(manifest: R, base_dir: &Path) -> Result<Vec<AuSequence>, IngestError> {
    parse_manifest(manifest, base_dir)?
        .into_iter()
        .map(|entry| {
            let mut seq = read_au_csv(&entry.path)?;
            seq.emotion = entry.emotion;
            seq.level = entry.level;
            seq.subject_id = entry.subject_id;
            Ok(seq)
        })
        .collect()
}

pub fn load_catalog_file(path: &Path) -> Result<Vec<AuSequence>, IngestError> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::FileNotFound(path.to_path_buf()),
        _ => IngestError::Io(e),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_catalog(file, base)
}
