//! Checkpoint container.
//!
//! Layout: the 8-byte magic `DYNTCKP1`, a little-endian `u64` manifest
//! length, the JSON manifest, then the tensor payloads back to back as
//! little-endian `f32`. The manifest echoes the model configuration and
//! the codec configuration and lists every tensor as `name`, `shape`,
//! `dtype` and byte `offset` into the payload section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TransducerModel};

pub const MAGIC: &[u8; 8] = b"DYNTCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub codec: CodecConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &TransducerModel, codec: &CodecConfig) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for (name, m) in model.params().iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [m.rows, m.cols],
            dtype: "f32".into(),
            offset: payload.len() as u64,
        });
        for &x in &m.data {
            payload.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let manifest = serde_json::to_vec(&CheckpointManifest {
        model: model.config().clone(),
        codec: codec.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<(TransducerModel, CheckpointManifest)> {
    let bad = |reason: String| Error::format(origin, reason);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: CheckpointManifest = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let payload = &bytes[16 + len..];

    let mut model = TransducerModel::new(manifest.model.clone())?;
    let expected: Vec<String> = model.params().iter().map(|(n, _)| n.to_string()).collect();
    if expected.len() != manifest.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, found {}",
            expected.len(),
            manifest.tensors.len()
        )));
    }
    for t in &manifest.tensors {
        if t.dtype != "f32" {
            return Err(bad(format!("{}: unsupported dtype {}", t.name, t.dtype)));
        }
        let id = model
            .params()
            .find(&t.name)
            .ok_or_else(|| bad(format!("unexpected tensor {}", t.name)))?;
        let m = model.params_mut().get_mut(id);
        if [m.rows, m.cols] != t.shape {
            return Err(bad(format!("{}: shape {:?} does not match {:?}", t.name, t.shape, [m.rows, m.cols])));
        }
        let start = t.offset as usize;
        let end = start + m.data.len() * 4;
        let raw = payload
            .get(start..end)
            .ok_or_else(|| bad(format!("{}: payload out of bounds", t.name)))?;
        for (x, c) in m.data.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
    }
    Ok((model, manifest))
}

pub fn save(path: &Path, model: &TransducerModel, codec: &CodecConfig) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_bytes(model, codec)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TransducerModel, CheckpointManifest)> {
    let bytes = fs::read(path).map_err(|e| Error::format(path, e.to_string()))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{ActivationPosition, ActivationStrategy};
    use crate::codec::TaskSet;
    use crate::tensor::Mat;

    fn codec() -> CodecConfig {
        CodecConfig {
            languages: vec!["en".into()],
            entity_types: vec![],
            lexicons: [("en".to_string(), vec!["a".to_string()])].into_iter().collect(),
        }
    }

    #[test]
    fn round_trip_is_exact_after_rounding() {
        let mut model = TransducerModel::new(ModelConfig {
            dim: 8,
            pred_hidden: 6,
            joint_dim: 5,
            vocab_size: 7,
            strategy: ActivationStrategy::PerTaskSum,
            position: ActivationPosition::Both,
            ..ModelConfig::default()
        })
        .unwrap();
        model.params_mut().round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &model, &codec()).unwrap();
        let (back, manifest) = load(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(manifest.codec, codec());
        assert!(manifest.tensors.iter().any(|t| t.name == "act.encoder.per_task_sum.4"));

        let frames = Mat::from_fn(9, 16, |r, c| ((r * 3 + c) % 5) as f64 - 2.0);
        let tasks = TaskSet::all(4);
        assert_eq!(
            model.encode(&frames, tasks).unwrap().data,
            back.encode(&frames, tasks).unwrap().data
        );
    }

    #[test]
    fn rejects_corruption() {
        let model = TransducerModel::new(ModelConfig {
            dim: 4,
            pred_hidden: 4,
            joint_dim: 4,
            vocab_size: 3,
            ..ModelConfig::default()
        })
        .unwrap();
        let bytes = to_bytes(&model, &codec()).unwrap();
        let p = Path::new("x");
        assert!(from_bytes(&bytes[..bytes.len() - 4], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad, p).is_err());
        assert!(from_bytes(&bytes, p).is_ok());
    }
}
