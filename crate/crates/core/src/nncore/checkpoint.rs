//! Parameter checkpoints: a JSON manifest plus one raw little-endian `f64`
//! blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::{NnError, Tensor};

pub const MANIFEST_FILE: &str = "params.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub seed: u64,
    pub tensors: Vec<CheckpointEntry>,
}

pub fn save_checkpoint(
    store: &ParamStore,
    seed: u64,
    dir: &Path,
) -> Result<CheckpointManifest, NnError> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::with_capacity(store.len());
    for (name, param) in store.iter() {
        let file = format!("{name}.f64");
        let bytes: Vec<u8> = param
            .value
            .data()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(dir.join(&file), bytes)?;
        tensors.push(CheckpointEntry {
            name: name.to_string(),
            shape: param.value.shape().to_vec(),
            file,
        });
    }
    let manifest = CheckpointManifest { seed, tensors };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, u64), NnError> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut store = ParamStore::new();
    for entry in manifest.tensors {
        let bytes = fs::read(dir.join(&entry.file))?;
        if bytes.len() % 8 != 0 {
            return Err(NnError::Shape(format!(
                "{}: blob is not a whole number of f64",
                entry.file
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    Ok((store, manifest.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert(
            "a.w",
            Tensor::new([2, 2], vec![1.0, -0.5, f64::MIN_POSITIVE, 3.25]).unwrap(),
        );
        store.insert("a.b", Tensor::new([2], vec![0.1, 0.2]).unwrap());
        save_checkpoint(&store, 42, dir.path()).unwrap();
        let (back, seed) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(back, store);
        assert_eq!(fs::read(dir.path().join("a.b.f64")).unwrap().len(), 16);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert("x", Tensor::zeros([3]));
        save_checkpoint(&store, 0, dir.path()).unwrap();
        fs::write(dir.path().join("x.f64"), [0u8; 12]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
