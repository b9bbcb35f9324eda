//! DeepONet: a branch network encoding input-function samples at `m` sensors
//! and a trunk network encoding query coordinates, combined by a `p`-term
//! inner product. Training minimizes per-sample relative L2 error with a
//! seeded, deterministic loop.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Mlp, MlpGrads, Optimizer, OptimizerKind};

/// Branch/trunk operator network.
#[derive(Debug, Clone)]
pub struct DeepOnet {
    pub branch: Mlp,
    pub trunk: Mlp,
    /// Sensor locations at which input functions are sampled, shape `(m, d_x)`.
    pub sensors: Array2<f64>,
    /// Output scale folded out of the targets during training.
    pub output_scale: f64,
    /// Input scale divided out of the branch inputs, so the first tanh layer
    /// sees roughly unit-magnitude values regardless of the data amplitude.
    pub input_scale: f64,
}

impl DeepOnet {
    pub fn new_seeded(
        branch_sizes: &[usize],
        trunk_sizes: &[usize],
        sensors: Array2<f64>,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if branch_sizes.last() != trunk_sizes.last() {
            return Err(Error::ShapeMismatch(format!(
                "branch output {:?} must match trunk output {:?}",
                branch_sizes.last(),
                trunk_sizes.last()
            )));
        }
        if branch_sizes[0] != sensors.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "branch input {} must match sensor count {}",
                branch_sizes[0],
                sensors.nrows()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            branch: Mlp::new_seeded(branch_sizes, activation, &mut rng),
            trunk: Mlp::new_seeded(trunk_sizes, activation, &mut rng),
            sensors,
            output_scale: 1.0,
            input_scale: 1.0,
        })
    }

    /// Number of sensors `m`.
    pub fn sensor_count(&self) -> usize {
        self.sensors.nrows()
    }

    /// Number of basis components `p`.
    pub fn basis_count(&self) -> usize {
        self.branch.output_dim()
    }

    /// Evaluate the operator output at the given query coordinates,
    /// shape `(q, d_y)`.
    pub fn forward(&self, u_sensors: &[f64], queries: &Array2<f64>) -> Result<Vec<f64>> {
        if u_sensors.len() != self.branch.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} sensor values, got {}",
                self.branch.input_dim(),
                u_sensors.len()
            )));
        }
        let input = Array2::from_shape_vec((1, u_sensors.len()), u_sensors.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let out = self.forward_batch(&input, queries)?;
        Ok(out.row(0).to_vec())
    }

    /// Batched evaluation: rows of `inputs` are sensor vectors; the result has
    /// shape `(batch, q)`.
    pub fn forward_batch(&self, inputs: &Array2<f64>, queries: &Array2<f64>) -> Result<Array2<f64>> {
        if queries.ncols() != self.trunk.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "query dim {} vs trunk input {}",
                queries.ncols(),
                self.trunk.input_dim()
            )));
        }
        let b = self.branch.forward(&(inputs / self.input_scale));
        let t = self.trunk.forward(queries);
        Ok(b.dot(&t.t()) * self.output_scale)
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.branch.n_params() + self.trunk.n_params());
        self.branch.append_params(&mut flat);
        self.trunk.append_params(&mut flat);
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut cursor = 0;
        self.branch.read_params(flat, &mut cursor)?;
        self.trunk.read_params(flat, &mut cursor)?;
        if cursor != flat.len() {
            return Err(Error::ShapeMismatch("parameter vector too long".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.branch.n_params() + self.trunk.n_params()
    }
}

/// A supervised operator-learning corpus: input-function sensor samples,
/// target-function values on a fixed query grid.
#[derive(Debug, Clone)]
pub struct OperatorDataset {
    /// Shape `(n_samples, m)`.
    pub inputs: Array2<f64>,
    /// Shape `(n_samples, q)`.
    pub targets: Array2<f64>,
    /// Shape `(q, d_y)`.
    pub queries: Array2<f64>,
}

impl OperatorDataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidConfig("empty dataset".into()));
        }
        if self.targets.nrows() != self.inputs.nrows() {
            return Err(Error::ShapeMismatch("inputs vs targets row count".into()));
        }
        if self.targets.ncols() != self.queries.nrows() {
            return Err(Error::ShapeMismatch("targets vs queries".into()));
        }
        Ok(())
    }

    /// Root-mean-square of the targets, used as the model output scale.
    pub fn target_rms(&self) -> f64 {
        let n = self.targets.len() as f64;
        (self.targets.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    /// Root-mean-square of the inputs, used as the model input scale.
    pub fn input_rms(&self) -> f64 {
        let n = self.inputs.len() as f64;
        (self.inputs.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Cosine-decay target for the step size; `None` keeps it constant. The
    /// relative L2 loss has gradients of fixed magnitude near its minimum, so
    /// without decay the loss floors at roughly the step size.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            final_learning_rate: None,
            batch_size: 64,
            epochs: 500,
            seed: 0,
            optimizer: OptimizerKind::AdaptiveMoment,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "learning_rate, batch_size, and epochs must be positive".into(),
            ));
        }
        if let Some(end) = self.final_learning_rate {
            if !(end > 0.0) || end > self.learning_rate {
                return Err(Error::InvalidConfig(
                    "final_learning_rate must be in (0, learning_rate]".into(),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn rate_at_epoch(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            None => self.learning_rate,
            Some(end) => {
                let span = (self.epochs.max(2) - 1) as f64;
                let phase = epoch as f64 / span * std::f64::consts::PI;
                end + 0.5 * (self.learning_rate - end) * (1.0 + phase.cos())
            }
        }
    }
}

/// Per-epoch relative-L2 history.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Mean over samples of `||pred - target||_2 / ||target||_2`, plus the
/// gradient of that loss with respect to the predictions.
fn relative_l2_loss(preds: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = preds.nrows() as f64;
    let mut grad = Array2::zeros(preds.raw_dim());
    let mut loss = 0.0;
    for i in 0..preds.nrows() {
        let diff = &preds.row(i) - &targets.row(i);
        let diff_norm = diff.dot(&diff).sqrt();
        let target_norm = targets.row(i).dot(&targets.row(i)).sqrt().max(1e-300);
        loss += diff_norm / target_norm;
        if diff_norm > 1e-14 {
            let scale = 1.0 / (n * diff_norm * target_norm);
            grad.row_mut(i).assign(&(&diff * scale));
        }
    }
    (loss / n, grad)
}

/// Mean relative L2 of model predictions over a dataset (the reported metric).
pub fn evaluate_relative_l2(model: &DeepOnet, dataset: &OperatorDataset) -> Result<f64> {
    dataset.validate()?;
    let preds = model.forward_batch(&dataset.inputs, &dataset.queries)?;
    let (loss, _) = relative_l2_loss(&preds, &dataset.targets);
    Ok(loss)
}

/// Train in place by minibatch gradient descent on the relative L2 loss.
///
/// Deterministic for a fixed seed: shuffling, batching, and the gradient
/// reduction order are all fixed.
pub fn train_deeponet(
    model: &mut DeepOnet,
    train: &OperatorDataset,
    validation: Option<&OperatorDataset>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    train.validate()?;
    if model.output_scale == 1.0 {
        let rms = train.target_rms();
        if rms > 0.0 {
            model.output_scale = rms;
        }
    }
    if model.input_scale == 1.0 {
        let rms = train.input_rms();
        if rms > 0.0 {
            model.input_scale = rms;
        }
    }

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.n_params());
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        opt.set_learning_rate(cfg.rate_at_epoch(epoch));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = select_rows(&train.inputs, chunk) / model.input_scale;
            let targets = select_rows(&train.targets, chunk);

            let (b_out, b_cache) = model.branch.forward_cached(&inputs);
            let (t_out, t_cache) = model.trunk.forward_cached(&train.queries);
            let preds = b_out.dot(&t_out.t()) * model.output_scale;

            let (loss, grad_preds) = relative_l2_loss(&preds, &targets);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1.0;

            let grad_scaled = &grad_preds * model.output_scale;
            let grad_b = grad_scaled.dot(&t_out);
            let grad_t = grad_scaled.t().dot(&b_out);
            let (branch_grads, _) = model.branch.backward(&b_cache, &grad_b);
            let (trunk_grads, _) = model.trunk.backward(&t_cache, &grad_t.to_owned());

            apply_step(model, &mut opt, &branch_grads, &trunk_grads)?;
        }
        history.train.push(epoch_loss / batches);
        if let Some(val) = validation {
            history.validation.push(evaluate_relative_l2(model, val)?);
        }
    }
    Ok(history)
}

fn apply_step(
    model: &mut DeepOnet,
    opt: &mut Optimizer,
    branch_grads: &MlpGrads,
    trunk_grads: &MlpGrads,
) -> Result<()> {
    let mut params = model.params_flat();
    let mut grads = Vec::with_capacity(params.len());
    Mlp::append_grads(branch_grads, &mut grads);
    Mlp::append_grads(trunk_grads, &mut grads);
    opt.step(&mut params, &grads);
    model.set_params_flat(&params)
}

pub(crate) fn select_rows(source: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), source.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&source.row(src));
    }
    out
}

/// Maximum relative discrepancy between the backpropagated gradient and a
/// central finite difference of the loss, over a random subset of at least
/// `min_checked` parameters.
pub fn gradient_check(
    model: &DeepOnet,
    sample_input: &[f64],
    sample_target: &[f64],
    queries: &Array2<f64>,
    epsilon_fd: f64,
    min_checked: usize,
    seed: u64,
) -> Result<f64> {
    if !(epsilon_fd > 0.0) {
        return Err(Error::InvalidConfig("epsilon_fd must be positive".into()));
    }
    let inputs = Array2::from_shape_vec((1, sample_input.len()), sample_input.to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let targets = Array2::from_shape_vec((1, sample_target.len()), sample_target.to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;

    // analytic gradient
    let scaled_inputs = &inputs / model.input_scale;
    let (b_out, b_cache) = model.branch.forward_cached(&scaled_inputs);
    let (t_out, t_cache) = model.trunk.forward_cached(queries);
    let preds = b_out.dot(&t_out.t()) * model.output_scale;
    let (_, grad_preds) = relative_l2_loss(&preds, &targets);
    let grad_scaled = &grad_preds * model.output_scale;
    let grad_b = grad_scaled.dot(&t_out);
    let grad_t = grad_scaled.t().dot(&b_out);
    let (branch_grads, _) = model.branch.backward(&b_cache, &grad_b);
    let (trunk_grads, _) = model.trunk.backward(&t_cache, &grad_t.to_owned());
    let mut grad_flat = Vec::new();
    Mlp::append_grads(&branch_grads, &mut grad_flat);
    Mlp::append_grads(&trunk_grads, &mut grad_flat);

    let params = model.params_flat();
    let loss_at = |p: &[f64]| -> Result<f64> {
        let mut probe = model.clone();
        probe.set_params_flat(p)?;
        let preds = probe.forward_batch(&inputs, queries)?;
        Ok(relative_l2_loss(&preds, &targets).0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..params.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(min_checked.min(params.len()).max(1));

    let mut worst = 0.0f64;
    for &i in &indices {
        let mut plus = params.clone();
        plus[i] += epsilon_fd;
        let mut minus = params.clone();
        minus[i] -= epsilon_fd;
        let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * epsilon_fd);
        let bp = grad_flat[i];
        if fd == 0.0 && bp == 0.0 {
            continue;
        }
        let denom = fd.abs().max(bp.abs()).max(1e-6);
        worst = worst.max((fd - bp).abs() / denom);
    }
    Ok(worst)
}

/// Uniform 1D sensor/query grid on `[0,1]` as an `(n+1, 1)` coordinate array.
pub fn uniform_grid_coords(n_cells: usize) -> Array2<f64> {
    let h = 1.0 / n_cells as f64;
    Array2::from_shape_fn((n_cells + 1, 1), |(i, _)| i as f64 * h)
}

/// Coordinates of the triangle grid points in storage order, shape `(len, 2)`.
pub fn triangle_coords(n_cells: usize) -> Array2<f64> {
    let h = 1.0 / n_cells as f64;
    let mut coords = Vec::new();
    for i in 0..=n_cells {
        for j in 0..=i {
            coords.push([i as f64 * h, j as f64 * h]);
        }
    }
    let rows = coords.len();
    Array2::from_shape_vec((rows, 2), coords.into_iter().flatten().collect()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Dense;
    use ndarray::array;

    fn tiny_model(seed: u64) -> DeepOnet {
        let sensors = uniform_grid_coords(4);
        DeepOnet::new_seeded(&[5, 8, 4], &[1, 8, 4], sensors, Activation::Tanh, seed).unwrap()
    }

    #[test]
    fn zero_branch_output_gives_zero_everywhere() {
        let mut model = tiny_model(0);
        // zero the branch's last layer
        let last = model.branch.layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(0.0);
        let queries = uniform_grid_coords(10);
        let out = model.forward(&[1.0, -2.0, 0.5, 3.0, 0.1], &queries).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constructed_identity_network() {
        // p = 1, branch == 1 (constant), trunk(y) = y: output equals y
        let sensors = uniform_grid_coords(2);
        let branch = Mlp {
            layers: vec![Dense {
                w: Array2::zeros((1, 3)),
                b: array![1.0],
            }],
            activation: Activation::Tanh,
        };
        let trunk = Mlp {
            layers: vec![Dense {
                w: array![[1.0]],
                b: array![0.0],
            }],
            activation: Activation::Tanh,
        };
        let model = DeepOnet {
            branch,
            trunk,
            sensors,
            output_scale: 1.0,
            input_scale: 1.0,
        };
        let queries = uniform_grid_coords(5);
        let out = model.forward(&[9.0, 9.0, 9.0], &queries).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert!((v - i as f64 / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let model = tiny_model(1);
        let queries = uniform_grid_coords(5);
        assert!(model.forward(&[1.0, 2.0], &queries).is_err());
        let bad_queries = Array2::zeros((3, 2));
        assert!(model.forward(&[0.0; 5], &bad_queries).is_err());
    }

    #[test]
    fn gradient_check_random_tanh_network() {
        let model = tiny_model(7);
        let queries = uniform_grid_coords(8);
        let input = [0.4, -1.2, 0.8, 2.0, -0.3];
        let target: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
        let err = gradient_check(&model, &input, &target, &queries, 1e-5, 200, 0).unwrap();
        assert!(err < 1e-5, "gradient check failed: {err}");
    }

    #[test]
    fn gradient_check_zero_direction() {
        // a network whose trunk input weight column is dead still checks out
        let model = tiny_model(2);
        let queries = uniform_grid_coords(8);
        let input = [0.0; 5];
        let target = vec![1.0; 9];
        let err = gradient_check(&model, &input, &target, &queries, 1e-5, 500, 1).unwrap();
        assert!(err < 1e-5);
    }

    #[test]
    fn training_memorizes_single_sample() {
        let n_q = 16;
        let queries = uniform_grid_coords(n_q);
        let target: Vec<f64> = (0..=n_q).map(|i| (i as f64 / n_q as f64 * 3.0).cos()).collect();
        let dataset = OperatorDataset {
            inputs: Array2::from_shape_vec((1, 5), vec![0.5, -0.5, 1.0, 0.0, 0.25]).unwrap(),
            targets: Array2::from_shape_vec((1, n_q + 1), target).unwrap(),
            queries,
        };
        let sensors = uniform_grid_coords(4);
        let mut model =
            DeepOnet::new_seeded(&[5, 8], &[1, 16, 16, 8], sensors, Activation::Tanh, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            final_learning_rate: Some(1e-5),
            batch_size: 1,
            epochs: 20000,
            seed: 5,
            optimizer: OptimizerKind::AdaptiveMoment,
        };
        let history = train_deeponet(&mut model, &dataset, None, &cfg).unwrap();
        let final_loss = *history.train.last().unwrap();
        assert!(final_loss < 2e-3, "failed to memorize: {final_loss}");
    }

    #[test]
    fn training_is_deterministic() {
        let queries = uniform_grid_coords(8);
        let inputs = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.31).sin());
        let targets = Array2::from_shape_fn((4, 9), |(i, j)| ((i + j) as f64 * 0.21).cos());
        let dataset = OperatorDataset {
            inputs,
            targets,
            queries,
        };
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let mut a = tiny_model(11);
        let mut b = tiny_model(11);
        let ha = train_deeponet(&mut a, &dataset, None, &cfg).unwrap();
        let hb = train_deeponet(&mut b, &dataset, None, &cfg).unwrap();
        assert_eq!(ha.train, hb.train);
        assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn rejects_empty_dataset() {
        let dataset = OperatorDataset {
            inputs: Array2::zeros((0, 5)),
            targets: Array2::zeros((0, 9)),
            queries: uniform_grid_coords(8),
        };
        let mut model = tiny_model(0);
        assert!(train_deeponet(&mut model, &dataset, None, &TrainConfig::default()).is_err());
    }
}
