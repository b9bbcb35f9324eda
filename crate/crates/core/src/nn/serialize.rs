//! Model persistence: a JSON manifest describing the architecture plus a raw
//! little-endian f64 parameter blob, checksummed and format-versioned.
//!
//! A saved model is a directory containing `model.json` and `params.f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::deeponet::{triangle_coords, uniform_grid_coords, DeepOnet};
use crate::nn::feedback::FeedbackNet;
use crate::nn::mlp::{Activation, Dense, Mlp};

pub const MODEL_FORMAT: &str = "operator-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Kernel1d,
    Kernel2d,
    Feedback,
}

/// Any trainable model this crate can persist.
#[derive(Debug, Clone)]
pub enum SavedModel {
    Kernel1d(DeepOnet),
    Kernel2d(DeepOnet),
    Feedback(FeedbackNet),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Kernel1d(_) => ModelKind::Kernel1d,
            SavedModel::Kernel2d(_) => ModelKind::Kernel2d,
            SavedModel::Feedback(_) => ModelKind::Feedback,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    format: String,
    version: u32,
    kind: ModelKind,
    activation: Activation,
    branch_sizes: Vec<usize>,
    trunk_sizes: Vec<usize>,
    /// Grid cells of the sensor layout (uniform interval for 1D/feedback,
    /// triangle rows for 2D).
    sensor_cells: usize,
    /// Feedback only: cells of the state query grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combine_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    readout_sizes: Option<Vec<usize>>,
    output_scale: f64,
    #[serde(default = "default_input_scale")]
    input_scale: f64,
    n_params: usize,
    params_sha256: String,
}

fn default_input_scale() -> f64 {
    1.0
}

fn params_to_bytes(params: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for v in params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn params_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("parameter blob length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model(dir: &Path, model: &SavedModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    let manifest = match model {
        SavedModel::Kernel1d(net) | SavedModel::Kernel2d(net) => {
            net.branch.append_params(&mut params);
            net.trunk.append_params(&mut params);
            let sensor_cells = match model.kind() {
                ModelKind::Kernel1d => net.sensor_count() - 1,
                // triangle row count n: (n+1)(n+2)/2 sensors
                _ => triangle_cells_from_count(net.sensor_count())?,
            };
            ModelManifest {
                format: MODEL_FORMAT.into(),
                version: MODEL_VERSION,
                kind: model.kind(),
                activation: net.branch.activation,
                branch_sizes: net.branch.layer_sizes(),
                trunk_sizes: net.trunk.layer_sizes(),
                sensor_cells,
                query_cells: None,
                combine_sizes: None,
                readout_sizes: None,
                output_scale: net.output_scale,
                input_scale: net.input_scale,
                n_params: params.len(),
                params_sha256: String::new(),
            }
        }
        SavedModel::Feedback(net) => {
            net.kernel_stage.branch.append_params(&mut params);
            net.kernel_stage.trunk.append_params(&mut params);
            net.combine.append_params(&mut params);
            net.readout.append_params(&mut params);
            ModelManifest {
                format: MODEL_FORMAT.into(),
                version: MODEL_VERSION,
                kind: ModelKind::Feedback,
                activation: net.kernel_stage.branch.activation,
                branch_sizes: net.kernel_stage.branch.layer_sizes(),
                trunk_sizes: net.kernel_stage.trunk.layer_sizes(),
                sensor_cells: net.beta_sensor_count() - 1,
                query_cells: Some(net.n_cells()),
                combine_sizes: Some(net.combine.layer_sizes()),
                readout_sizes: Some(net.readout.layer_sizes()),
                output_scale: net.kernel_stage.output_scale,
                input_scale: net.kernel_stage.input_scale,
                n_params: params.len(),
                params_sha256: String::new(),
            }
        }
    };
    let bytes = params_to_bytes(&params);
    let manifest = ModelManifest {
        params_sha256: sha256_hex(&bytes),
        ..manifest
    };
    fs::write(dir.join("params.f64"), &bytes)?;
    fs::write(
        dir.join("model.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn triangle_cells_from_count(count: usize) -> Result<usize> {
    for n in 1..=4096 {
        if (n + 1) * (n + 2) / 2 == count {
            return Ok(n);
        }
    }
    Err(Error::Format(format!(
        "sensor count {count} is not a triangle grid size"
    )))
}

/// Build an MLP skeleton with the given layer sizes, to be filled from the
/// parameter blob.
fn mlp_skeleton(sizes: &[usize], activation: Activation) -> Result<Mlp> {
    if sizes.len() < 2 {
        return Err(Error::Format("layer size list too short".into()));
    }
    let layers = sizes
        .windows(2)
        .map(|pair| Dense {
            w: ndarray::Array2::zeros((pair[1], pair[0])),
            b: ndarray::Array1::zeros(pair[1]),
        })
        .collect();
    Ok(Mlp {
        layers,
        activation,
    })
}

pub fn load_model(dir: &Path) -> Result<SavedModel> {
    let manifest_text = fs::read_to_string(dir.join("model.json"))?;
    let manifest: ModelManifest = serde_json::from_str(&manifest_text)?;
    if manifest.format != MODEL_FORMAT {
        return Err(Error::Format(format!(
            "unexpected model format tag {:?}",
            manifest.format
        )));
    }
    if manifest.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {}",
            manifest.version
        )));
    }
    let bytes = fs::read(dir.join("params.f64"))?;
    let checksum = sha256_hex(&bytes);
    if checksum != manifest.params_sha256 {
        return Err(Error::Checksum(format!(
            "params.f64 checksum mismatch: expected {}, got {}",
            manifest.params_sha256, checksum
        )));
    }
    let params = params_from_bytes(&bytes)?;
    if params.len() != manifest.n_params {
        return Err(Error::Format(format!(
            "expected {} parameters, blob holds {}",
            manifest.n_params,
            params.len()
        )));
    }

    let mut branch = mlp_skeleton(&manifest.branch_sizes, manifest.activation)?;
    let mut trunk = mlp_skeleton(&manifest.trunk_sizes, manifest.activation)?;
    let mut cursor = 0;
    branch.read_params(&params, &mut cursor)?;
    trunk.read_params(&params, &mut cursor)?;

    match manifest.kind {
        ModelKind::Kernel1d | ModelKind::Kernel2d => {
            if cursor != params.len() {
                return Err(Error::Format("trailing bytes in parameter blob".into()));
            }
            let sensors = match manifest.kind {
                ModelKind::Kernel1d => uniform_grid_coords(manifest.sensor_cells),
                _ => triangle_coords(manifest.sensor_cells),
            };
            let net = DeepOnet {
                branch,
                trunk,
                sensors,
                output_scale: manifest.output_scale,
                input_scale: manifest.input_scale,
            };
            Ok(match manifest.kind {
                ModelKind::Kernel1d => SavedModel::Kernel1d(net),
                _ => SavedModel::Kernel2d(net),
            })
        }
        ModelKind::Feedback => {
            let combine_sizes = manifest
                .combine_sizes
                .ok_or_else(|| Error::Format("feedback model missing combine_sizes".into()))?;
            let readout_sizes = manifest
                .readout_sizes
                .ok_or_else(|| Error::Format("feedback model missing readout_sizes".into()))?;
            let query_cells = manifest
                .query_cells
                .ok_or_else(|| Error::Format("feedback model missing query_cells".into()))?;
            let mut combine = mlp_skeleton(&combine_sizes, manifest.activation)?;
            let mut readout = mlp_skeleton(&readout_sizes, manifest.activation)?;
            combine.read_params(&params, &mut cursor)?;
            readout.read_params(&params, &mut cursor)?;
            if cursor != params.len() {
                return Err(Error::Format("trailing bytes in parameter blob".into()));
            }
            let kernel_stage = DeepOnet {
                branch,
                trunk,
                sensors: uniform_grid_coords(manifest.sensor_cells),
                output_scale: manifest.output_scale,
                input_scale: manifest.input_scale,
            };
            Ok(SavedModel::Feedback(FeedbackNet {
                kernel_stage,
                u_queries: uniform_grid_coords(query_cells),
                combine,
                readout,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sensors = uniform_grid_coords(10);
        let mut net = DeepOnet::new_seeded(&[11, 16, 8], &[1, 16, 8], sensors, Activation::Tanh, 3)
            .unwrap();
        net.output_scale = 2.5;
        net.input_scale = 4.0;
        save_model(dir.path(), &SavedModel::Kernel1d(net.clone())).unwrap();
        let loaded = match load_model(dir.path()).unwrap() {
            SavedModel::Kernel1d(m) => m,
            _ => panic!("wrong kind"),
        };
        let queries = uniform_grid_coords(7);
        let input: Vec<f64> = (0..11).map(|i| (i as f64 * 0.2).sin()).collect();
        assert_eq!(
            net.forward(&input, &queries).unwrap(),
            loaded.forward(&input, &queries).unwrap()
        );
        assert_eq!(loaded.output_scale, 2.5);
        assert_eq!(loaded.input_scale, 4.0);
    }

    #[test]
    fn triangle_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let n = 6;
        let sensors = triangle_coords(n);
        let m = sensors.nrows();
        let net =
            DeepOnet::new_seeded(&[m, 12, 4], &[2, 12, 4], sensors, Activation::Tanh, 5).unwrap();
        save_model(dir.path(), &SavedModel::Kernel2d(net.clone())).unwrap();
        let loaded = match load_model(dir.path()).unwrap() {
            SavedModel::Kernel2d(m) => m,
            _ => panic!("wrong kind"),
        };
        let queries = triangle_coords(n);
        let input: Vec<f64> = (0..m).map(|i| (i as f64 * 0.1).cos()).collect();
        assert_eq!(
            net.forward(&input, &queries).unwrap(),
            loaded.forward(&input, &queries).unwrap()
        );
    }

    #[test]
    fn feedback_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = FeedbackNet::new_seeded(11, 10, &[12], 6, 7).unwrap();
        save_model(dir.path(), &SavedModel::Feedback(net.clone())).unwrap();
        let loaded = match load_model(dir.path()).unwrap() {
            SavedModel::Feedback(m) => m,
            _ => panic!("wrong kind"),
        };
        let beta: Vec<f64> = (0..11).map(|i| (i as f64 * 0.3).sin()).collect();
        let u: Vec<f64> = (0..11).map(|i| (i as f64 * 0.5).cos()).collect();
        assert_eq!(
            net.forward(&beta, &u).unwrap(),
            loaded.forward(&beta, &u).unwrap()
        );
    }

    #[test]
    fn corrupt_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sensors = uniform_grid_coords(4);
        let net =
            DeepOnet::new_seeded(&[5, 6, 3], &[1, 6, 3], sensors, Activation::Tanh, 0).unwrap();
        save_model(dir.path(), &SavedModel::Kernel1d(net)).unwrap();
        // flip one byte
        let blob_path = dir.path().join("params.f64");
        let mut bytes = std::fs::read(&blob_path).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(&blob_path, &bytes).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Checksum(_))));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sensors = uniform_grid_coords(4);
        let net =
            DeepOnet::new_seeded(&[5, 6, 3], &[1, 6, 3], sensors, Activation::Tanh, 0).unwrap();
        save_model(dir.path(), &SavedModel::Kernel1d(net)).unwrap();
        let blob_path = dir.path().join("params.f64");
        let bytes = std::fs::read(&blob_path).unwrap();
        std::fs::write(&blob_path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_model(dir.path()).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sensors = uniform_grid_coords(4);
        let net =
            DeepOnet::new_seeded(&[5, 6, 3], &[1, 6, 3], sensors, Activation::Tanh, 0).unwrap();
        save_model(dir.path(), &SavedModel::Kernel1d(net)).unwrap();
        let manifest_path = dir.path().join("model.json");
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&manifest_path, bumped).unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn triangle_size_inversion() {
        assert_eq!(triangle_cells_from_count(3).unwrap(), 1);
        assert_eq!(triangle_cells_from_count(1326).unwrap(), 50);
        assert!(triangle_cells_from_count(4).is_err());
    }
}
