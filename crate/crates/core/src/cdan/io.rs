//! Parameter files: a JSON document holding the seed and, per level, every
//! tensor as `{name, shape, data}` with `data` in row-major order.

use serde::{Deserialize, Serialize};

use super::{CdanLevel, CdanParams, LEVEL1_LEN, LEVEL2_LEN, TENSOR_NAMES};

pub const PARAMS_FORMAT: &str = "les-cdan-params";
pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("params schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("params shape mismatch: {level}/{tensor} expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        level: String,
        tensor: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LevelDoc {
    name: String,
    seq_len: usize,
    tensors: Vec<TensorDoc>,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    format: String,
    schema_version: u32,
    seed: u64,
    levels: Vec<LevelDoc>,
}

pub fn save_params(params: &CdanParams) -> Vec<u8> {
    let doc = ParamsDoc {
        format: PARAMS_FORMAT.to_string(),
        schema_version: PARAMS_SCHEMA_VERSION,
        seed: params.seed,
        levels: params
            .levels()
            .iter()
            .map(|(name, level)| LevelDoc {
                name: name.to_string(),
                seq_len: level.seq_len,
                tensors: level
                    .tensors()
                    .into_iter()
                    .map(|(n, shape, data)| TensorDoc {
                        name: n.to_string(),
                        shape,
                        data: data.to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("params serialize");
    out.push(b'\n');
    out
}

pub fn load_params(bytes: &[u8]) -> Result<CdanParams, ParamsError> {
    let doc: ParamsDoc =
        serde_json::from_slice(bytes).map_err(|e| ParamsError::SchemaMismatch(e.to_string()))?;
    if doc.format != PARAMS_FORMAT {
        return Err(ParamsError::SchemaMismatch(format!(
            "unknown format {:?}",
            doc.format
        )));
    }
    if doc.schema_version != PARAMS_SCHEMA_VERSION {
        return Err(ParamsError::SchemaMismatch(format!(
            "schema_version {} (supported: {PARAMS_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    if doc.levels.len() != 2 {
        return Err(ParamsError::SchemaMismatch(format!(
            "expected 2 levels, got {}",
            doc.levels.len()
        )));
    }
    let mut params = CdanParams::zeros(doc.seed);
    for (ld, (want_name, want_len)) in doc
        .levels
        .into_iter()
        .zip([("level1", LEVEL1_LEN), ("level2", LEVEL2_LEN)])
    {
        if ld.name != want_name {
            return Err(ParamsError::SchemaMismatch(format!(
                "expected level {want_name}, got {}",
                ld.name
            )));
        }
        let level = read_level(ld, want_name, want_len)?;
        match want_name {
            "level1" => params.level1 = level,
            _ => params.level2 = level,
        }
    }
    if !params.is_finite() {
        return Err(ParamsError::SchemaMismatch("non-finite weight".into()));
    }
    Ok(params)
}

fn read_level(doc: LevelDoc, level: &str, seq_len: usize) -> Result<CdanLevel, ParamsError> {
    if doc.tensors.len() != TENSOR_NAMES.len() {
        return Err(ParamsError::SchemaMismatch(format!(
            "{level}: expected {} tensors, got {}",
            TENSOR_NAMES.len(),
            doc.tensors.len()
        )));
    }
    let shapes = CdanLevel::expected_shapes(seq_len);
    let mut out = CdanLevel::zeros(seq_len);
    for ((t, name), expected) in doc.tensors.into_iter().zip(TENSOR_NAMES).zip(shapes) {
        if t.name != name {
            return Err(ParamsError::SchemaMismatch(format!(
                "{level}: expected tensor {name}, got {}",
                t.name
            )));
        }
        if t.shape != expected {
            return Err(ParamsError::ShapeMismatch {
                level: level.to_string(),
                tensor: name.to_string(),
                expected,
                got: t.shape,
            });
        }
        let count: usize = t.shape.iter().product();
        if t.data.len() != count {
            return Err(ParamsError::SchemaMismatch(format!(
                "{level}/{name}: shape {:?} needs {count} values, got {}",
                t.shape,
                t.data.len()
            )));
        }
        let dst = out
            .tensors_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, d)| d)
            .expect("known tensor");
        dst.copy_from_slice(&t.data);
    }
    if doc.seq_len != seq_len {
        return Err(ParamsError::ShapeMismatch {
            level: level.to_string(),
            tensor: "seq_len".into(),
            expected: vec![seq_len],
            got: vec![doc.seq_len],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdan::init_params;

    #[test]
    fn round_trip_is_exact() {
        let p = init_params(42);
        let bytes = save_params(&p);
        let q = load_params(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(save_params(&q), bytes);
    }

    #[test]
    fn truncated_is_schema_error() {
        let bytes = save_params(&init_params(1));
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(load_params(cut), Err(ParamsError::SchemaMismatch(_))));
        assert!(matches!(load_params(b""), Err(ParamsError::SchemaMismatch(_))));
    }

    #[test]
    fn wrong_version_is_schema_error() {
        let text = String::from_utf8(save_params(&init_params(1))).unwrap();
        let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(matches!(
            load_params(bumped.as_bytes()),
            Err(ParamsError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn level1_fc_for_length_24_is_shape_error() {
        let bytes = save_params(&init_params(1));
        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let fc = doc["levels"][0]["tensors"]
            .as_array_mut()
            .unwrap()
            .iter_mut()
            .find(|t| t["name"] == "fc_w")
            .unwrap();
        fc["shape"] = serde_json::json!([64, 24 + 64]);
        fc["data"] = serde_json::json!(vec![0.0; 64 * 88]);
        let bad = serde_json::to_vec(&doc).unwrap();
        match load_params(&bad) {
            Err(ParamsError::ShapeMismatch { level, tensor, .. }) => {
                assert_eq!(level, "level1");
                assert_eq!(tensor, "fc_w");
            }
            other => panic!("{other:?}"),
        }
    }
}
