//! Training-corpus generation and persistence for the three learned maps:
//! recirculation-to-kernel, (recirculation, state)-to-control, and the 2D
//! PIDE kernel map.
//!
//! Generation is per-sample seeded (`seed xor index`), so parallel and serial
//! runs produce identical corpora. A dataset on disk is a directory holding
//! `manifest.json`, one raw little-endian f64 blob per array, and
//! `checksums.txt`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction1D, TriangularGridFunction};
use crate::kernel1d::{residual_1d, solve_kernel, KernelSolveConfig};
use crate::kernel2d::{residual_2d, solve_kernel_2d};
use crate::nn::deeponet::{triangle_coords, uniform_grid_coords, OperatorDataset};
use crate::nn::feedback::FeedbackDataset;
use crate::nn::serialize::sha256_hex;
use crate::sim::control_1d;

/// Chebyshev-family recirculation coefficient `beta(x) = A cos(g arccos x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChebyshevSpec {
    pub amplitude: f64,
    pub gamma: f64,
}

impl ChebyshevSpec {
    pub fn new(gamma: f64) -> Self {
        Self {
            amplitude: 6.0,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(
                "chebyshev amplitude and gamma must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn chebyshev_beta(spec: &ChebyshevSpec, n_cells: usize) -> GridFunction1D {
    GridFunction1D::from_fn(n_cells, |x| {
        spec.amplitude * (spec.gamma * x.clamp(-1.0, 1.0).acos()).cos()
    })
}

pub const DATASET_FORMAT: &str = "operator-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Kernel1d,
    Feedback,
    Kernel2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub kind: DatasetKind,
    pub n_samples: usize,
    pub n_cells: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub solve_tolerance: f64,
    /// Feedback corpora record how the state samples were drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_distribution: Option<String>,
}

/// The stored arrays, row-per-sample.
#[derive(Debug, Clone)]
pub enum DatasetArrays {
    Kernel1d {
        betas: Array2<f64>,
        kernels: Array2<f64>,
    },
    Feedback {
        betas: Array2<f64>,
        us: Array2<f64>,
        controls: Array1<f64>,
    },
    Kernel2d {
        fs: Array2<f64>,
        kernels: Array2<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub arrays: DatasetArrays,
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

fn manifest_base(
    kind: DatasetKind,
    n_samples: usize,
    n_cells: usize,
    gamma_range: (f64, f64),
    seed: u64,
    cfg: &KernelSolveConfig,
) -> Result<DatasetManifest> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    if !(gamma_range.0 > 0.0 && gamma_range.1 > gamma_range.0) {
        return Err(Error::InvalidConfig(
            "gamma range must satisfy 0 < min < max".into(),
        ));
    }
    cfg.validate()?;
    Ok(DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        kind,
        n_samples,
        n_cells,
        gamma_min: gamma_range.0,
        gamma_max: gamma_range.1,
        amplitude: 6.0,
        seed,
        solve_tolerance: cfg.tolerance,
        u_distribution: None,
    })
}

/// Draw `n` Chebyshev coefficients and pair each with its solved gain kernel.
pub fn generate_kernel1d_dataset(
    n_samples: usize,
    gamma_range: (f64, f64),
    n_cells: usize,
    seed: u64,
    cfg: &KernelSolveConfig,
) -> Result<Dataset> {
    let manifest = manifest_base(
        DatasetKind::Kernel1d,
        n_samples,
        n_cells,
        gamma_range,
        seed,
        cfg,
    )?;
    let width = n_cells + 1;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let gamma = rng.gen_range(gamma_range.0..gamma_range.1);
            let beta = chebyshev_beta(&ChebyshevSpec::new(gamma), n_cells);
            let k = solve_kernel(&beta, cfg).map_err(|e| {
                Error::InvalidConfig(format!("kernel solve failed for gamma={gamma}: {e}"))
            })?;
            Ok((beta.values().to_vec(), k.values().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut betas = Array2::zeros((n_samples, width));
    let mut kernels = Array2::zeros((n_samples, width));
    for (i, (b, k)) in rows.iter().enumerate() {
        betas.row_mut(i).assign(&Array1::from_vec(b.clone()));
        kernels.row_mut(i).assign(&Array1::from_vec(k.clone()));
    }
    Ok(Dataset {
        manifest,
        arrays: DatasetArrays::Kernel1d { betas, kernels },
    })
}

const U_DISTRIBUTION: &str =
    "6-term Chebyshev combination, coefficients uniform in [-1,1], sup-norm clipped to 6";

/// Random state sample: a 6-term Chebyshev combination clipped to sup 6.
fn random_state(rng: &mut ChaCha8Rng, n_cells: usize) -> GridFunction1D {
    let coeffs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u = GridFunction1D::from_fn(n_cells, |x| {
        let t = x.clamp(-1.0, 1.0).acos();
        coeffs
            .iter()
            .enumerate()
            .map(|(d, c)| c * (d as f64 * t).cos())
            .sum()
    });
    let sup = u.sup_norm();
    if sup > 6.0 {
        u.scale(6.0 / sup)
    } else {
        u
    }
}

/// Triples `(beta samples, state samples, exact boundary control)`.
pub fn generate_feedback_dataset(
    n_samples: usize,
    gamma_range: (f64, f64),
    n_cells: usize,
    seed: u64,
    cfg: &KernelSolveConfig,
) -> Result<Dataset> {
    let mut manifest = manifest_base(
        DatasetKind::Feedback,
        n_samples,
        n_cells,
        gamma_range,
        seed,
        cfg,
    )?;
    manifest.u_distribution = Some(U_DISTRIBUTION.into());
    let width = n_cells + 1;
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let gamma = rng.gen_range(gamma_range.0..gamma_range.1);
            let beta = chebyshev_beta(&ChebyshevSpec::new(gamma), n_cells);
            let u = random_state(&mut rng, n_cells);
            let k = solve_kernel(&beta, cfg).map_err(|e| {
                Error::InvalidConfig(format!("kernel solve failed for gamma={gamma}: {e}"))
            })?;
            let control = control_1d(&k, &u)?;
            Ok((beta.values().to_vec(), u.values().to_vec(), control))
        })
        .collect::<Result<_>>()?;

    let mut betas = Array2::zeros((n_samples, width));
    let mut us = Array2::zeros((n_samples, width));
    let mut controls = Array1::zeros(n_samples);
    for (i, (b, u, c)) in rows.iter().enumerate() {
        betas.row_mut(i).assign(&Array1::from_vec(b.clone()));
        us.row_mut(i).assign(&Array1::from_vec(u.clone()));
        controls[i] = *c;
    }
    Ok(Dataset {
        manifest,
        arrays: DatasetArrays::Feedback {
            betas,
            us,
            controls,
        },
    })
}

/// 2D corpus with `f(x,y) = beta(x) beta(y)` on the triangle and `g == 0`.
pub fn generate_kernel2d_dataset(
    n_samples: usize,
    gamma_range: (f64, f64),
    n_cells: usize,
    seed: u64,
    cfg: &KernelSolveConfig,
) -> Result<Dataset> {
    let manifest = manifest_base(
        DatasetKind::Kernel2d,
        n_samples,
        n_cells,
        gamma_range,
        seed,
        cfg,
    )?;
    let width = TriangularGridFunction::storage_len(n_cells);
    let g = GridFunction1D::zeros(n_cells);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let gamma = rng.gen_range(gamma_range.0..gamma_range.1);
            let beta = chebyshev_beta(&ChebyshevSpec::new(gamma), n_cells);
            let f =
                TriangularGridFunction::from_fn(n_cells, |x, y| {
                    let bi = |v: f64| {
                        beta.get((v * n_cells as f64).round() as usize)
                    };
                    bi(x) * bi(y)
                });
            let k = solve_kernel_2d(&g, &f, cfg).map_err(|e| {
                Error::InvalidConfig(format!("2d kernel solve failed for gamma={gamma}: {e}"))
            })?;
            Ok((f.values().to_vec(), k.values().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut fs = Array2::zeros((n_samples, width));
    let mut kernels = Array2::zeros((n_samples, width));
    for (i, (f, k)) in rows.iter().enumerate() {
        fs.row_mut(i).assign(&Array1::from_vec(f.clone()));
        kernels.row_mut(i).assign(&Array1::from_vec(k.clone()));
    }
    Ok(Dataset {
        manifest,
        arrays: DatasetArrays::Kernel2d { fs, kernels },
    })
}

/// Regenerate a corpus from its manifest alone (the reproducibility contract).
pub fn regenerate(manifest: &DatasetManifest) -> Result<Dataset> {
    let cfg = KernelSolveConfig {
        tolerance: manifest.solve_tolerance,
        ..KernelSolveConfig::default()
    };
    let range = (manifest.gamma_min, manifest.gamma_max);
    match manifest.kind {
        DatasetKind::Kernel1d => generate_kernel1d_dataset(
            manifest.n_samples,
            range,
            manifest.n_cells,
            manifest.seed,
            &cfg,
        ),
        DatasetKind::Feedback => generate_feedback_dataset(
            manifest.n_samples,
            range,
            manifest.n_cells,
            manifest.seed,
            &cfg,
        ),
        DatasetKind::Kernel2d => generate_kernel2d_dataset(
            manifest.n_samples,
            range,
            manifest.n_cells,
            manifest.seed,
            &cfg,
        ),
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// View as an operator-learning corpus (kernel kinds only).
    pub fn to_operator_dataset(&self) -> Result<OperatorDataset> {
        match &self.arrays {
            DatasetArrays::Kernel1d { betas, kernels } => Ok(OperatorDataset {
                inputs: betas.clone(),
                targets: kernels.clone(),
                queries: uniform_grid_coords(self.manifest.n_cells),
            }),
            DatasetArrays::Kernel2d { fs, kernels } => Ok(OperatorDataset {
                inputs: fs.clone(),
                targets: kernels.clone(),
                queries: triangle_coords(self.manifest.n_cells),
            }),
            DatasetArrays::Feedback { .. } => Err(Error::Format(
                "feedback dataset is not an operator corpus".into(),
            )),
        }
    }

    pub fn to_feedback_dataset(&self) -> Result<FeedbackDataset> {
        match &self.arrays {
            DatasetArrays::Feedback {
                betas,
                us,
                controls,
            } => Ok(FeedbackDataset {
                betas: betas.clone(),
                us: us.clone(),
                controls: controls.clone(),
            }),
            _ => Err(Error::Format("not a feedback dataset".into())),
        }
    }

    /// Deterministic row split into a training head and a test tail.
    pub fn split_rows(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "split {n_train} out of range for {} samples",
                self.len()
            )));
        }
        let head = |a: &Array2<f64>| a.slice(ndarray::s![..n_train, ..]).to_owned();
        let tail = |a: &Array2<f64>| a.slice(ndarray::s![n_train.., ..]).to_owned();
        let (arr_head, arr_tail) = match &self.arrays {
            DatasetArrays::Kernel1d { betas, kernels } => (
                DatasetArrays::Kernel1d {
                    betas: head(betas),
                    kernels: head(kernels),
                },
                DatasetArrays::Kernel1d {
                    betas: tail(betas),
                    kernels: tail(kernels),
                },
            ),
            DatasetArrays::Feedback {
                betas,
                us,
                controls,
            } => (
                DatasetArrays::Feedback {
                    betas: head(betas),
                    us: head(us),
                    controls: controls.slice(ndarray::s![..n_train]).to_owned(),
                },
                DatasetArrays::Feedback {
                    betas: tail(betas),
                    us: tail(us),
                    controls: controls.slice(ndarray::s![n_train..]).to_owned(),
                },
            ),
            DatasetArrays::Kernel2d { fs, kernels } => (
                DatasetArrays::Kernel2d {
                    fs: head(fs),
                    kernels: head(kernels),
                },
                DatasetArrays::Kernel2d {
                    fs: tail(fs),
                    kernels: tail(kernels),
                },
            ),
        };
        let mut m_head = self.manifest.clone();
        m_head.n_samples = n_train;
        let mut m_tail = self.manifest.clone();
        m_tail.n_samples = self.len() - n_train;
        Ok((
            Dataset {
                manifest: m_head,
                arrays: arr_head,
            },
            Dataset {
                manifest: m_tail,
                arrays: arr_tail,
            },
        ))
    }
}

fn array_to_bytes(a: &Array2<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(a.len() * 8);
    for v in a.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn array_from_bytes(bytes: &[u8], rows: usize, cols: usize, name: &str) -> Result<Array2<f64>> {
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "{name}: expected {} bytes, got {}",
            rows * cols * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

fn blob_names(kind: DatasetKind) -> &'static [&'static str] {
    match kind {
        DatasetKind::Kernel1d => &["betas.f64", "kernels.f64"],
        DatasetKind::Feedback => &["betas.f64", "u.f64", "controls.f64"],
        DatasetKind::Kernel2d => &["f.f64", "kernels2d.f64"],
    }
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let blobs: Vec<(&str, Vec<u8>)> = match &dataset.arrays {
        DatasetArrays::Kernel1d { betas, kernels } => vec![
            ("betas.f64", array_to_bytes(betas)),
            ("kernels.f64", array_to_bytes(kernels)),
        ],
        DatasetArrays::Feedback {
            betas,
            us,
            controls,
        } => {
            let mut c_bytes = Vec::with_capacity(controls.len() * 8);
            for v in controls.iter() {
                c_bytes.extend_from_slice(&v.to_le_bytes());
            }
            vec![
                ("betas.f64", array_to_bytes(betas)),
                ("u.f64", array_to_bytes(us)),
                ("controls.f64", c_bytes),
            ]
        }
        DatasetArrays::Kernel2d { fs, kernels } => vec![
            ("f.f64", array_to_bytes(fs)),
            ("kernels2d.f64", array_to_bytes(kernels)),
        ],
    };
    let mut checksums = String::new();
    for (name, bytes) in &blobs {
        fs::write(dir.join(name), bytes)?;
        checksums.push_str(&format!("{}  {}\n", sha256_hex(bytes), name));
    }
    fs::write(dir.join("checksums.txt"), checksums)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&dataset.manifest)?,
    )?;
    Ok(())
}

fn read_checksums(dir: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(dir.join("checksums.txt"))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(hash), Some(name)) => out.push((hash.to_string(), name.to_string())),
            _ => return Err(Error::Format(format!("bad checksum line: {line:?}"))),
        }
    }
    Ok(out)
}

fn read_verified_blob(dir: &Path, name: &str, checksums: &[(String, String)]) -> Result<Vec<u8>> {
    let expected = checksums
        .iter()
        .find(|(_, n)| n == name)
        .map(|(h, _)| h.as_str())
        .ok_or_else(|| Error::Format(format!("{name} missing from checksums.txt")))?;
    let bytes = fs::read(dir.join(name))?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(Error::Checksum(format!(
            "{name}: expected {expected}, got {actual}"
        )));
    }
    Ok(bytes)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    load_dataset_as(dir, None)
}

/// Load and verify; if `expected_kind` is given, a mismatching corpus is
/// rejected before any blob is read.
pub fn load_dataset_as(dir: &Path, expected_kind: Option<DatasetKind>) -> Result<Dataset> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text)?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::Format(format!(
            "unexpected dataset format tag {:?}",
            manifest.format
        )));
    }
    if manifest.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {}",
            manifest.version
        )));
    }
    if let Some(kind) = expected_kind {
        if manifest.kind != kind {
            return Err(Error::Format(format!(
                "dataset kind {:?} does not match requested {:?}",
                manifest.kind, kind
            )));
        }
    }
    let checksums = read_checksums(dir)?;
    let n = manifest.n_samples;
    let names = blob_names(manifest.kind);
    let arrays = match manifest.kind {
        DatasetKind::Kernel1d => {
            let width = manifest.n_cells + 1;
            let betas = array_from_bytes(
                &read_verified_blob(dir, names[0], &checksums)?,
                n,
                width,
                names[0],
            )?;
            let kernels = array_from_bytes(
                &read_verified_blob(dir, names[1], &checksums)?,
                n,
                width,
                names[1],
            )?;
            DatasetArrays::Kernel1d { betas, kernels }
        }
        DatasetKind::Feedback => {
            let width = manifest.n_cells + 1;
            let betas = array_from_bytes(
                &read_verified_blob(dir, names[0], &checksums)?,
                n,
                width,
                names[0],
            )?;
            let us = array_from_bytes(
                &read_verified_blob(dir, names[1], &checksums)?,
                n,
                width,
                names[1],
            )?;
            let c_bytes = read_verified_blob(dir, names[2], &checksums)?;
            if c_bytes.len() != n * 8 {
                return Err(Error::Format(format!(
                    "controls.f64: expected {} bytes, got {}",
                    n * 8,
                    c_bytes.len()
                )));
            }
            let controls = Array1::from_vec(
                c_bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            DatasetArrays::Feedback {
                betas,
                us,
                controls,
            }
        }
        DatasetKind::Kernel2d => {
            let width = TriangularGridFunction::storage_len(manifest.n_cells);
            let fs_arr = array_from_bytes(
                &read_verified_blob(dir, names[0], &checksums)?,
                n,
                width,
                names[0],
            )?;
            let kernels = array_from_bytes(
                &read_verified_blob(dir, names[1], &checksums)?,
                n,
                width,
                names[1],
            )?;
            DatasetArrays::Kernel2d {
                fs: fs_arr,
                kernels,
            }
        }
    };
    let dataset = Dataset { manifest, arrays };
    spot_check(&dataset)?;
    Ok(dataset)
}

/// Residual contract on a deterministic 5% of the stored targets.
fn spot_check(dataset: &Dataset) -> Result<()> {
    let n = dataset.len();
    let stride = (n / (n / 20).max(1)).max(1);
    let indices: Vec<usize> = (0..n).step_by(stride).collect();
    match &dataset.arrays {
        DatasetArrays::Kernel1d { betas, kernels } => {
            for &i in &indices {
                let beta =
                    GridFunction1D::new(dataset.manifest.n_cells, betas.row(i).to_vec())?;
                let k = GridFunction1D::new(dataset.manifest.n_cells, kernels.row(i).to_vec())?;
                let r = residual_1d(&beta, &k)?;
                if r > 1e-7 {
                    return Err(Error::Format(format!(
                        "sample {i} violates the kernel residual contract: {r:.3e}"
                    )));
                }
            }
        }
        DatasetArrays::Feedback {
            betas,
            us,
            controls,
        } => {
            let cfg = KernelSolveConfig {
                tolerance: dataset.manifest.solve_tolerance,
                ..KernelSolveConfig::default()
            };
            for &i in &indices {
                let beta =
                    GridFunction1D::new(dataset.manifest.n_cells, betas.row(i).to_vec())?;
                let u = GridFunction1D::new(dataset.manifest.n_cells, us.row(i).to_vec())?;
                let k = solve_kernel(&beta, &cfg)?;
                let expected = control_1d(&k, &u)?;
                if (expected - controls[i]).abs() > 1e-8 {
                    return Err(Error::Format(format!(
                        "sample {i} control target off by {:.3e}",
                        (expected - controls[i]).abs()
                    )));
                }
            }
        }
        DatasetArrays::Kernel2d { fs, kernels } => {
            let g = GridFunction1D::zeros(dataset.manifest.n_cells);
            for &i in &indices {
                let f = TriangularGridFunction::new(
                    dataset.manifest.n_cells,
                    fs.row(i).to_vec(),
                )?;
                let k = TriangularGridFunction::new(
                    dataset.manifest.n_cells,
                    kernels.row(i).to_vec(),
                )?;
                let r = residual_2d(&g, &f, &k)?;
                if r > 1e-6 {
                    return Err(Error::Format(format!(
                        "sample {i} violates the 2d kernel residual contract: {r:.3e}"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> KernelSolveConfig {
        KernelSolveConfig::default()
    }

    #[test]
    fn chebyshev_identities() {
        let spec = ChebyshevSpec::new(2.0);
        let beta = chebyshev_beta(&spec, 100);
        // T2: 6(2x^2 - 1)
        for i in 0..=100 {
            let x = beta.x(i);
            assert!((beta.get(i) - 6.0 * (2.0 * x * x - 1.0)).abs() < 1e-12);
        }
        assert!((beta.get(100) - 6.0).abs() < 1e-12);
        assert!((beta.get(0) + 6.0).abs() < 1e-12);

        // x = 1 gives the amplitude for any gamma
        for gamma in [3.0, 5.5, 7.35] {
            let b = chebyshev_beta(&ChebyshevSpec::new(gamma), 50);
            assert!((b.get(50) - 6.0).abs() < 1e-12);
            assert!(b.sup_norm() <= 6.0 + 1e-12);
        }
    }

    #[test]
    fn kernel1d_generation_is_deterministic() {
        let a = generate_kernel1d_dataset(5, (2.0, 8.0), 50, 7, &cfg()).unwrap();
        let b = generate_kernel1d_dataset(5, (2.0, 8.0), 50, 7, &cfg()).unwrap();
        match (&a.arrays, &b.arrays) {
            (
                DatasetArrays::Kernel1d { betas: ba, kernels: ka },
                DatasetArrays::Kernel1d { betas: bb, kernels: kb },
            ) => {
                assert_eq!(ba, bb);
                assert_eq!(ka, kb);
            }
            _ => panic!("wrong kind"),
        }
        let c = regenerate(&a.manifest).unwrap();
        match (&a.arrays, &c.arrays) {
            (
                DatasetArrays::Kernel1d { kernels: ka, .. },
                DatasetArrays::Kernel1d { kernels: kc, .. },
            ) => assert_eq!(ka, kc),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn kernel1d_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_kernel1d_dataset(4, (2.0, 8.0), 40, 3, &cfg()).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        match (&ds.arrays, &loaded.arrays) {
            (
                DatasetArrays::Kernel1d { betas: a, kernels: ka },
                DatasetArrays::Kernel1d { betas: b, kernels: kb },
            ) => {
                assert_eq!(a, b);
                assert_eq!(ka, kb);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn truncated_blob_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_kernel1d_dataset(3, (2.0, 8.0), 30, 1, &cfg()).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let blob = dir.path().join("kernels.f64");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Checksum(_))
        ));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_kernel1d_dataset(2, (2.0, 8.0), 30, 1, &cfg()).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        assert!(matches!(
            load_dataset_as(dir.path(), Some(DatasetKind::Feedback)),
            Err(Error::Format(_))
        ));
        assert!(load_dataset_as(dir.path(), Some(DatasetKind::Kernel1d)).is_ok());
    }

    #[test]
    fn feedback_targets_are_exact_controls() {
        let ds = generate_feedback_dataset(6, (2.0, 6.0), 40, 11, &cfg()).unwrap();
        let (betas, us, controls) = match &ds.arrays {
            DatasetArrays::Feedback {
                betas,
                us,
                controls,
            } => (betas, us, controls),
            _ => panic!("wrong kind"),
        };
        for i in 0..6 {
            let beta = GridFunction1D::new(40, betas.row(i).to_vec()).unwrap();
            let u = GridFunction1D::new(40, us.row(i).to_vec()).unwrap();
            assert!(u.sup_norm() <= 6.0 + 1e-12);
            let k = solve_kernel(&beta, &cfg()).unwrap();
            let expected = control_1d(&k, &u).unwrap();
            assert!((expected - controls[i]).abs() < 1e-12);

            // linearity: doubling u doubles the target
            let doubled = control_1d(&k, &u.scale(2.0)).unwrap();
            assert!((doubled - 2.0 * expected).abs() < 1e-12);
        }
    }

    #[test]
    fn feedback_round_trip_and_spot_check() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_feedback_dataset(5, (2.0, 6.0), 30, 2, &cfg()).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let loaded = load_dataset_as(dir.path(), Some(DatasetKind::Feedback)).unwrap();
        assert_eq!(loaded.manifest.u_distribution, ds.manifest.u_distribution);
        let fb = loaded.to_feedback_dataset().unwrap();
        assert_eq!(fb.len(), 5);
    }

    #[test]
    fn kernel2d_generation_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_kernel2d_dataset(3, (2.0, 8.0), 20, 5, &cfg()).unwrap();
        // residual contract for every sample at this size
        if let DatasetArrays::Kernel2d { fs, kernels } = &ds.arrays {
            let g = GridFunction1D::zeros(20);
            for i in 0..3 {
                let f = TriangularGridFunction::new(20, fs.row(i).to_vec()).unwrap();
                let k = TriangularGridFunction::new(20, kernels.row(i).to_vec()).unwrap();
                assert!(residual_2d(&g, &f, &k).unwrap() <= 1e-6);
            }
        } else {
            panic!("wrong kind");
        }
        save_dataset(dir.path(), &ds).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let op = loaded.to_operator_dataset().unwrap();
        assert_eq!(op.inputs.nrows(), 3);
        assert_eq!(op.queries.nrows(), TriangularGridFunction::storage_len(20));
    }

    #[test]
    fn split_rows_partitions_samples() {
        let ds = generate_kernel1d_dataset(10, (2.0, 8.0), 20, 9, &cfg()).unwrap();
        let (train, test) = ds.split_rows(7).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        match (&ds.arrays, &test.arrays) {
            (
                DatasetArrays::Kernel1d { betas: all, .. },
                DatasetArrays::Kernel1d { betas: tail, .. },
            ) => {
                assert_eq!(all.row(7), tail.row(0));
            }
            _ => panic!("wrong kind"),
        }
        assert!(ds.split_rows(0).is_err());
        assert!(ds.split_rows(10).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_kernel1d_dataset(0, (2.0, 8.0), 20, 0, &cfg()).is_err());
        assert!(generate_kernel1d_dataset(1, (8.0, 2.0), 20, 0, &cfg()).is_err());
    }
}
