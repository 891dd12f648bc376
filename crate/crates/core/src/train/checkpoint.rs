//! Versioned JSON checkpoints.
//!
//! ```json
//! {"version": 1, "arch": {...},
//!  "tensors": {"pre.weight": [[3, 32], [..row-major..]], ...},
//!  "freeze": {"pre.weight": false, ...},
//!  "heads": ["mis", "coloring:10"]}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{Architecture, Params};
use crate::error::{Error, Result};
use crate::task::TaskKind;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    version: u32,
    arch: Architecture,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    freeze: BTreeMap<String, bool>,
    heads: Vec<TaskKind>,
}

pub fn checkpoint_json(params: &Params) -> Result<String> {
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let dims = t.shape().to_vec();
            let values = t.iter().copied().collect();
            (name, (dims, values))
        })
        .collect();
    let freeze = params
        .tensors()
        .into_iter()
        .map(|(name, _)| {
            let f = params.is_frozen(&name);
            (name, f)
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        arch: params.arch,
        tensors,
        freeze,
        heads: params.tasks(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn save_checkpoint(params: &Params, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_json(params)?)?;
    Ok(())
}

pub fn parse_checkpoint(text: &str) -> Result<Params> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::Checkpoint(format!(
            "field \"version\": expected {CHECKPOINT_VERSION}, found {}",
            value.get("version").map_or("nothing".to_string(), |v| v.to_string())
        )));
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut params = Params::init(file.arch, &file.heads, 0)
        .map_err(|e| Error::Checkpoint(format!("field \"arch\": {e}")))?;
    let mut seen = 0;
    for (name, mut t) in params.tensors_mut() {
        let (dims, values) = file
            .tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor \"{name}\"")))?;
        if dims.as_slice() != t.shape() || values.len() != t.len() {
            return Err(Error::Checkpoint(format!(
                "tensor \"{name}\": expected shape {:?}, found {:?} with {} values",
                t.shape(),
                dims,
                values.len()
            )));
        }
        for (dst, src) in t.iter_mut().zip(values) {
            *dst = *src;
        }
        seen += 1;
    }
    if seen != file.tensors.len() {
        let known: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let extra = file.tensors.keys().find(|k| !known.contains(k)).cloned().unwrap_or_default();
        return Err(Error::Checkpoint(format!("unexpected tensor \"{extra}\"")));
    }
    for (name, frozen) in &file.freeze {
        if !file.tensors.contains_key(name) {
            return Err(Error::Checkpoint(format!("field \"freeze\": unknown tensor \"{name}\"")));
        }
        if *frozen {
            params.frozen.insert(name.clone());
        }
    }
    Ok(params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Params> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
