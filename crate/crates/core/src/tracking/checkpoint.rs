use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ARCH_FILE, MODEL_DIR, PARAMS_FILE};
use crate::nn::{LayerSpec, Mlp};
use crate::{Error, Result};

/// Named networks plus free parameter vectors (e.g. a state-independent
/// log-std or an entropy temperature).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub networks: Vec<(String, Mlp<f32>)>,
    pub tensors: Vec<(String, Vec<f32>)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkArch {
    name: String,
    layers: Vec<LayerSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorArch {
    name: String,
    len: usize,
}

/// `arch.json`: networks in file order, each an ordered list of
/// `{in, out, activation}`, then free tensors.
#[derive(Debug, Serialize, Deserialize)]
struct Arch {
    networks: Vec<NetworkArch>,
    tensors: Vec<TensorArch>,
}

/// Writes `model/arch.json` and `model/params.f32` under `run_dir`.
///
/// `params.f32` holds, for each network in order and each layer in order, the
/// row-major weight matrix followed by the bias, then every free tensor; all
/// values little-endian `f32`.
pub fn save_checkpoint(run_dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let dir = run_dir.join(MODEL_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let arch = Arch {
        networks: ckpt
            .networks
            .iter()
            .map(|(name, net)| NetworkArch {
                name: name.clone(),
                layers: net.specs(),
            })
            .collect(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|(name, t)| TensorArch {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let arch_path = dir.join(ARCH_FILE);
    fs::write(&arch_path, serde_json::to_vec_pretty(&arch)?).map_err(|e| Error::io(&arch_path, e))?;

    let mut bytes = Vec::new();
    for (_, net) in &ckpt.networks {
        for s in net.param_slices() {
            for v in s {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for (_, t) in &ckpt.tensors {
        for v in t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, bytes).map_err(|e| Error::io(&params_path, e))
}

pub fn load_checkpoint(run_dir: &Path) -> Result<Checkpoint> {
    let dir = run_dir.join(MODEL_DIR);
    let arch_path = dir.join(ARCH_FILE);
    let raw = fs::read(&arch_path).map_err(|e| Error::io(&arch_path, e))?;
    let arch: Arch = serde_json::from_slice(&raw).map_err(|e| Error::Corrupted {
        path: arch_path.clone(),
        reason: e.to_string(),
    })?;
    let params_path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Corrupted {
            path: params_path,
            reason: format!("{} bytes is not a whole number of f32", bytes.len()),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let expected: usize = arch
        .networks
        .iter()
        .flat_map(|n| &n.layers)
        .map(|l| l.out_dim * (l.in_dim + 1))
        .sum::<usize>()
        + arch.tensors.iter().map(|t| t.len).sum::<usize>();
    if values.len() != expected {
        return Err(Error::Corrupted {
            path: params_path,
            reason: format!("expected {expected} values, found {}", values.len()),
        });
    }

    let mut offset = 0;
    let mut ckpt = Checkpoint::default();
    for n in arch.networks {
        let len: usize = n.layers.iter().map(|l| l.out_dim * (l.in_dim + 1)).sum();
        let net = Mlp::from_specs(&n.layers, &values[offset..offset + len])?;
        offset += len;
        ckpt.networks.push((n.name, net));
    }
    for t in arch.tensors {
        ckpt.tensors.push((t.name, values[offset..offset + t.len].to_vec()));
        offset += t.len;
    }
    Ok(ckpt)
}
