//! Policy container: a JSON manifest plus a flat little-endian `f64`
//! parameter blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Layout;
use super::{BehaviorPolicy, PolicyArch};
use crate::error::BehaviorError;

#[derive(Debug, Serialize, Deserialize)]
struct PolicyManifest {
    state_dim: usize,
    action_dim: usize,
    arch: PolicyArch,
    n_params: usize,
    state_mean: Vec<f64>,
    state_scale: Vec<f64>,
    degenerate_dims: Vec<usize>,
    dtype: String,
    param_file: String,
}

const DTYPE: &str = "f64-le";

pub fn save_policy(policy: &BehaviorPolicy, manifest_path: &Path) -> Result<(), BehaviorError> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("policy");
    let param_file = format!("{stem}.params.bin");
    let manifest = PolicyManifest {
        state_dim: policy.state_dim,
        action_dim: policy.action_dim,
        arch: policy.arch.clone(),
        n_params: policy.n_params(),
        state_mean: policy.state_mean.clone(),
        state_scale: policy.state_scale.clone(),
        degenerate_dims: policy.degenerate_dims.clone(),
        dtype: DTYPE.into(),
        param_file: param_file.clone(),
    };
    let blob: Vec<u8> = policy.params.iter().flat_map(|v| v.to_le_bytes()).collect();
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    fs::write(dir.join(&param_file), blob)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| BehaviorError::Persist(e.to_string()))?;
    fs::write(manifest_path, json)?;
    Ok(())
}

pub fn load_policy(manifest_path: &Path) -> Result<BehaviorPolicy, BehaviorError> {
    let text = fs::read_to_string(manifest_path)?;
    let m: PolicyManifest =
        serde_json::from_str(&text).map_err(|e| BehaviorError::Persist(e.to_string()))?;
    if m.dtype != DTYPE {
        return Err(BehaviorError::Persist(format!(
            "unsupported dtype {}",
            m.dtype
        )));
    }
    let layout = Layout::new(m.state_dim, m.action_dim, &m.arch.hidden);
    if layout.n_params() != m.n_params {
        return Err(BehaviorError::Persist(format!(
            "manifest declares {} parameters but the architecture has {}",
            m.n_params,
            layout.n_params()
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let bytes = fs::read(dir.join(&m.param_file))?;
    if bytes.len() != 8 * m.n_params {
        return Err(BehaviorError::Persist(format!(
            "parameter blob holds {} bytes, expected {}",
            bytes.len(),
            8 * m.n_params
        )));
    }
    if m.state_mean.len() != m.state_dim || m.state_scale.len() != m.state_dim {
        return Err(BehaviorError::Persist(
            "input scaling has the wrong length".into(),
        ));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(BehaviorPolicy {
        arch: m.arch,
        layout,
        state_dim: m.state_dim,
        action_dim: m.action_dim,
        params,
        state_mean: m.state_mean,
        state_scale: m.state_scale,
        degenerate_dims: m.degenerate_dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = BehaviorPolicy::zeros(
            3,
            2,
            PolicyArch {
                hidden: vec![4, 5],
                ..Default::default()
            },
        );
        for (i, v) in p.params_mut().iter_mut().enumerate() {
            *v = (i as f64).sin() / 3.0;
        }
        p.set_input_scaling(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 0.5]);
        let path = dir.path().join("policy.json");
        save_policy(&p, &path).unwrap();
        assert_eq!(load_policy(&path).unwrap(), p);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = BehaviorPolicy::zeros(
            1,
            1,
            PolicyArch {
                hidden: vec![2],
                ..Default::default()
            },
        );
        let path = dir.path().join("p.json");
        save_policy(&p, &path).unwrap();
        fs::write(dir.path().join("p.params.bin"), [0u8; 12]).unwrap();
        assert!(matches!(load_policy(&path), Err(BehaviorError::Persist(_))));
    }
}
