//! Fully-connected network with tanh hidden activations and an identity
//! output layer, trained on mean squared error with analytic backpropagation
//! and Adam (or plain SGD). A depth-`d` network performs `d` affine
//! operations, i.e. `d - 1` hidden layers.

use super::{LearnerError, Predictor, TaskKind, TrainingSet};
use crate::linalg::Mat;
use crate::sampling::child_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// The architectures referenced by name in the experiment tooling.
pub const NAMED_ARCHITECTURES: [(&str, usize, usize); 4] = [
    ("mlp-2-2048", 2, 2048),
    ("mlp-3-200", 3, 200),
    ("mlp-5-2048", 5, 2048),
    ("mlp-4-4096", 4, 4096),
];

#[derive(Debug, Clone)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Flattened analytic gradient of the batch MSE (same parameter order as
/// [`MlpModel::get_parameter`]).
pub fn mlp_gradient_vector(model: &MlpModel, inputs: &Mat, targets: &Mat) -> (Vec<f64>, f64) {
    let (grads, loss) = model.gradients(inputs, targets);
    (grads.flat(), loss)
}

impl MlpModel {
    /// Build a `depth`-layer network of the given hidden width. Weights are
    /// Glorot-uniform (variance preserving for tanh layers), biases zero.
    pub fn new(input_dim: usize, output_dim: usize, depth: usize, width: usize, seed: u64) -> Self {
        assert!(depth >= 1, "depth counts affine operations, at least 1");
        let mut dims = Vec::with_capacity(depth + 1);
        dims.push(input_dim);
        for _ in 0..depth.saturating_sub(1) {
            dims.push(width);
        }
        dims.push(output_dim);
        Self::from_dims(dims, seed)
    }

    pub fn from_dims(dims: Vec<usize>, seed: u64) -> Self {
        assert!(dims.len() >= 2);
        let mut rng = child_rng(seed, 0);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Mat::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit));
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            dims,
            weights,
            biases,
        }
    }

    /// A named architecture from Appendix-style naming (`mlp-<depth>-<width>`).
    pub fn named(name: &str, input_dim: usize, output_dim: usize, seed: u64) -> Option<Self> {
        let (_, depth, width) = NAMED_ARCHITECTURES
            .iter()
            .find(|(n, _, _)| *n == name)?;
        Some(Self::new(input_dim, output_dim, *depth, *width, seed))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn layer(&self, l: usize) -> (&Mat, &[f64]) {
        (&self.weights[l], &self.biases[l])
    }

    pub fn set_layer(&mut self, l: usize, weights: Mat, biases: Vec<f64>) {
        assert_eq!(weights.rows(), self.dims[l + 1]);
        assert_eq!(weights.cols(), self.dims[l]);
        assert_eq!(biases.len(), self.dims[l + 1]);
        self.weights[l] = weights;
        self.biases[l] = biases;
    }

    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut offset = index;
        for l in 0..self.weights.len() {
            let wlen = self.weights[l].data().len();
            if offset < wlen {
                return (l, true, offset);
            }
            offset -= wlen;
            let blen = self.biases[l].len();
            if offset < blen {
                return (l, false, offset);
            }
            offset -= blen;
        }
        panic!("parameter index {index} out of range");
    }

    pub fn get_parameter(&self, index: usize) -> f64 {
        let (l, is_weight, off) = self.locate(index);
        if is_weight {
            self.weights[l].data()[off]
        } else {
            self.biases[l][off]
        }
    }

    pub fn add_to_parameter(&mut self, index: usize, delta: f64) {
        let (l, is_weight, off) = self.locate(index);
        if is_weight {
            self.weights[l].data_mut()[off] += delta;
        } else {
            self.biases[l][off] += delta;
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let wlen = w.data().len();
            w.data_mut().copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            let blen = b.len();
            b.copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dims[0], "input dimension mismatch");
        let mut act = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.matvec(&act);
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            if l < last {
                for zi in &mut z {
                    *zi = zi.tanh();
                }
            }
            act = z;
        }
        act
    }

    /// Batch forward pass keeping every layer's activations (index 0 is the
    /// input batch itself).
    fn forward_cached(&self, inputs: &Mat) -> Vec<Mat> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(inputs.clone());
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let mut z = acts[l].matmul_nt(&self.weights[l]);
            let b = &self.biases[l];
            let cols = z.cols();
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for c in 0..cols {
                    row[c] += b[c];
                }
            }
            if l < last {
                for v in z.data_mut() {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward_batch(&self, inputs: &Mat) -> Mat {
        self.forward_cached(inputs).pop().expect("at least one layer")
    }

    /// Analytic gradients of the batch MSE
    /// `mean((forward(x) - y)^2)` over every weight and bias, plus the loss.
    pub fn gradients(&self, inputs: &Mat, targets: &Mat) -> (MlpGradients, f64) {
        let batch = inputs.rows();
        assert!(batch > 0, "batch must be nonempty");
        assert_eq!(targets.rows(), batch);
        assert_eq!(targets.cols(), *self.dims.last().unwrap());
        let acts = self.forward_cached(inputs);
        let output = acts.last().unwrap();
        let denom = (batch * targets.cols()) as f64;
        let mut loss = 0.0;
        let mut delta = Mat::zeros(batch, targets.cols());
        for i in 0..output.data().len() {
            let err = output.data()[i] - targets.data()[i];
            loss += err * err;
            delta.data_mut()[i] = 2.0 * err / denom;
        }
        loss /= denom;

        let layer_count = self.weights.len();
        let mut grad_w = vec![Mat::zeros(0, 0); layer_count];
        let mut grad_b = vec![Vec::new(); layer_count];
        for l in (0..layer_count).rev() {
            grad_w[l] = delta.matmul_tn(&acts[l]);
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (c, d) in delta.row(r).iter().enumerate() {
                    db[c] += d;
                }
            }
            grad_b[l] = db;
            if l > 0 {
                let mut upstream = delta.matmul(&self.weights[l]);
                // Through the tanh: a' = 1 - a^2 at the cached activation.
                for (u, a) in upstream.data_mut().iter_mut().zip(acts[l].data()) {
                    *u *= 1.0 - a * a;
                }
                delta = upstream;
            }
        }
        (
            MlpGradients {
                weights: grad_w,
                biases: grad_b,
            },
            loss,
        )
    }
}

impl Predictor for MlpModel {
    fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam(AdamParams),
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam(AdamParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub noise_variance: f64,
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    32
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::default(),
            learning_rate: default_lr(),
            weight_decay: 0.0,
            epochs,
            batch_size: default_batch(),
            noise_variance: 0.0,
            seed,
        }
    }
}

/// Adam over a flat parameter vector. A zero gradient leaves parameters
/// unchanged; a constant gradient moves each parameter by about
/// `-lr * sign(g)` on the first step.
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    params: AdamParams,
    learning_rate: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamOptimizer {
    pub fn new(learning_rate: f64, params: AdamParams, n: usize) -> Self {
        Self {
            params,
            learning_rate,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, values: &mut [f64], grads: &[f64]) {
        assert_eq!(values.len(), grads.len());
        self.t += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

/// Train on shuffled mini-batches of MSE for `cfg.epochs`, returning the
/// per-epoch mean batch loss.
///
/// With `noise_variance > 0` every batch's state inputs are corrupted with
/// `N(0, variance)`; derivative targets are corrected by subtracting the same
/// noise, step targets stay clean. With `noise_variance == 0` the noise path
/// is skipped entirely, so runs are bitwise identical to noise-free code.
pub fn mlp_train(
    model: &mut MlpModel,
    data: &TrainingSet,
    task: TaskKind,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, LearnerError> {
    let n = data.inputs.rows();
    if n == 0 {
        return Err(LearnerError::EmptyTrainingSet);
    }
    if data.inputs.cols() != model.input_dim() {
        return Err(LearnerError::Dimension {
            expected: model.input_dim(),
            got: data.inputs.cols(),
        });
    }
    if data.targets.cols() != model.output_dim() {
        return Err(LearnerError::Dimension {
            expected: model.output_dim(),
            got: data.targets.cols(),
        });
    }
    let inject_noise = cfg.noise_variance > 0.0;
    if inject_noise && task == TaskKind::DerivativePrediction {
        assert_eq!(
            data.targets.cols(),
            data.state_dim,
            "derivative targets must align with the state for noise correction"
        );
    }

    let mut params = model.params_flat();
    let mut adam = match cfg.optimizer {
        OptimizerKind::Adam(p) => Some(AdamOptimizer::new(cfg.learning_rate, p, params.len())),
        OptimizerKind::Sgd => None,
    };
    let mut shuffle_rng = child_rng(cfg.seed, 1);
    let mut noise_rng = child_rng(cfg.seed, 2);
    let mut order: Vec<usize> = (0..n).collect();
    let batch_size = cfg.batch_size.max(1);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let mut xb = Mat::zeros(chunk.len(), data.inputs.cols());
            let mut yb = Mat::zeros(chunk.len(), data.targets.cols());
            for (i, &r) in chunk.iter().enumerate() {
                xb.row_mut(i).copy_from_slice(data.inputs.row(r));
                yb.row_mut(i).copy_from_slice(data.targets.row(r));
            }
            if inject_noise {
                let sigma = cfg.noise_variance.sqrt();
                for i in 0..chunk.len() {
                    for c in 0..data.state_dim {
                        let noise = sigma * noise_rng.sample::<f64, _>(StandardNormal);
                        xb.row_mut(i)[c] += noise;
                        if task == TaskKind::DerivativePrediction {
                            yb.row_mut(i)[c] -= noise;
                        }
                    }
                }
            }
            let (grads, loss) = model.gradients(&xb, &yb);
            if !loss.is_finite() {
                return Err(LearnerError::Divergence { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            let flat = grads.flat();
            match &mut adam {
                Some(opt) => {
                    if cfg.weight_decay > 0.0 {
                        let decayed: Vec<f64> = flat
                            .iter()
                            .zip(&params)
                            .map(|(g, w)| g + cfg.weight_decay * w)
                            .collect();
                        opt.step(&mut params, &decayed);
                    } else {
                        opt.step(&mut params, &flat);
                    }
                }
                None => {
                    for i in 0..params.len() {
                        params[i] -=
                            cfg.learning_rate * (flat[i] + cfg.weight_decay * params[i]);
                    }
                }
            }
            model.set_params_flat(&params);
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let mut model = MlpModel::new(3, 2, 2, 4, 0);
        model.set_layer(0, Mat::zeros(4, 3), vec![0.0; 4]);
        model.set_layer(1, Mat::zeros(2, 4), vec![0.0; 2]);
        assert_eq!(model.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn depth_one_is_a_plain_affine_map() {
        let mut model = MlpModel::new(2, 2, 1, 64, 0);
        model.set_layer(0, Mat::identity(2), vec![0.0, 0.0]);
        assert_eq!(model.forward(&[0.3, -0.6]), vec![0.3, -0.6]);
        assert_eq!(model.depth(), 1);
        assert_eq!(model.dims(), &[2, 2]);
    }

    #[test]
    fn hand_computed_tanh_composition() {
        // depth 2, width 1 on a scalar: out = w2 * tanh(w1 x + b1) + b2.
        let mut model = MlpModel::new(1, 1, 2, 1, 0);
        model.set_layer(0, Mat::from_vec(1, 1, vec![0.7]), vec![0.1]);
        model.set_layer(1, Mat::from_vec(1, 1, vec![-1.3]), vec![0.25]);
        let x = 0.4f64;
        let want = -1.3 * (0.7 * x + 0.1).tanh() + 0.25;
        let got = model.forward(&[x])[0];
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn named_architectures_have_documented_shapes() {
        for (name, depth, width) in NAMED_ARCHITECTURES {
            let model = MlpModel::named(name, 5, 3, 0).unwrap();
            assert_eq!(model.depth(), depth);
            // depth affine ops means depth - 1 hidden layers.
            assert_eq!(model.dims().len(), depth + 1);
            if depth > 1 {
                assert_eq!(model.dims()[1], width);
            }
        }
        assert!(MlpModel::named("mlp-99-1", 2, 2, 0).is_none());
    }

    #[test]
    fn batch_forward_matches_single_forward() {
        let model = MlpModel::new(3, 2, 3, 8, 11);
        let rows = vec![
            vec![0.1, -0.4, 0.7],
            vec![1.0, 0.0, -1.0],
            vec![0.0, 0.0, 0.0],
        ];
        let mut data = Vec::new();
        for r in &rows {
            data.extend_from_slice(r);
        }
        let batch = model.forward_batch(&Mat::from_vec(3, 3, data));
        for (i, r) in rows.iter().enumerate() {
            let single = model.forward(r);
            for (a, b) in batch.row(i).iter().zip(&single) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = MlpModel::new(4, 3, 3, 16, 7);
        let mut rng = child_rng(21, 0);
        let batch = 8;
        let xs = Mat::from_fn(batch, 4, |_, _| rng.gen_range(-1.0..1.0));
        let ys = Mat::from_fn(batch, 3, |_, _| rng.gen_range(-1.0..1.0));
        let (flat, _) = mlp_gradient_vector(&model, &xs, &ys);
        let h = 1e-6;
        let mut worst = 0.0f64;
        for idx in 0..model.parameter_count() {
            let mut plus = model.clone();
            plus.add_to_parameter(idx, h);
            let (_, lp) = plus.gradients(&xs, &ys);
            let mut minus = model.clone();
            minus.add_to_parameter(idx, -h);
            let (_, lm) = minus.gradients(&xs, &ys);
            let fd = (lp - lm) / (2.0 * h);
            let denom = flat[idx].abs().max(fd.abs()).max(1.0);
            worst = worst.max((flat[idx] - fd).abs() / denom);
        }
        assert!(worst <= 1e-5, "max relative gradient error {worst}");
    }

    #[test]
    fn duplicating_the_batch_preserves_mean_gradient() {
        let model = MlpModel::new(2, 2, 2, 8, 3);
        let xs = Mat::from_vec(2, 2, vec![0.3, -0.2, 0.9, 0.4]);
        let ys = Mat::from_vec(2, 2, vec![0.1, 0.1, -0.5, 0.2]);
        let (g1, l1) = mlp_gradient_vector(&model, &xs, &ys);
        let mut xs2 = xs.data().to_vec();
        xs2.extend_from_slice(xs.data());
        let mut ys2 = ys.data().to_vec();
        ys2.extend_from_slice(ys.data());
        let (g2, l2) = mlp_gradient_vector(
            &model,
            &Mat::from_vec(4, 2, xs2),
            &Mat::from_vec(4, 2, ys2),
        );
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut opt = AdamOptimizer::new(1e-3, AdamParams::default(), 4);
        let mut values = vec![1.0, -2.0, 0.5, 0.0];
        let before = values.clone();
        for _ in 0..10 {
            opt.step(&mut values, &[0.0; 4]);
        }
        assert_eq!(values, before);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let lr = 1e-3;
        let mut opt = AdamOptimizer::new(lr, AdamParams::default(), 3);
        let mut values = vec![0.0, 0.0, 0.0];
        opt.step(&mut values, &[2.5, -0.04, 1e-3]);
        for (v, g) in values.iter().zip([2.5f64, -0.04, 1e-3]) {
            let expect = -lr * g.signum() * (g.abs() / (g.abs() + 1e-8));
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
            assert!((v.abs() - lr).abs() < 1e-6);
        }
    }

    fn linear_training_set(n: usize) -> TrainingSet {
        let mut rng = child_rng(2, 0);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..1.0);
            xs.push(x);
            ys.push(2.0 * x);
        }
        TrainingSet {
            inputs: Mat::from_vec(n, 1, xs),
            targets: Mat::from_vec(n, 1, ys),
            state_dim: 1,
        }
    }

    #[test]
    fn tiny_mlp_learns_a_linear_map() {
        let data = linear_training_set(256);
        let mut model = MlpModel::new(1, 1, 2, 16, 5);
        let cfg = TrainConfig::new(200, 5);
        let history = mlp_train(&mut model, &data, TaskKind::DerivativePrediction, &cfg).unwrap();
        let final_loss = *history.last().unwrap();
        assert!(final_loss < 1e-3, "training MSE {final_loss}");
        assert!(history[0] > final_loss);
    }

    #[test]
    fn zero_epochs_leaves_the_model_unchanged() {
        let data = linear_training_set(16);
        let mut model = MlpModel::new(1, 1, 2, 4, 9);
        let before = model.params_flat();
        let cfg = TrainConfig::new(0, 9);
        let history = mlp_train(&mut model, &data, TaskKind::StepPrediction, &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(model.params_flat(), before);
    }

    #[test]
    fn training_is_deterministic_given_seed_and_data() {
        let data = linear_training_set(64);
        let cfg = TrainConfig::new(20, 13);
        let mut a = MlpModel::new(1, 1, 3, 8, 13);
        let mut b = MlpModel::new(1, 1, 3, 8, 13);
        let ha = mlp_train(&mut a, &data, TaskKind::DerivativePrediction, &cfg).unwrap();
        let hb = mlp_train(&mut b, &data, TaskKind::DerivativePrediction, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn zero_noise_variance_matches_noise_free_run_bitwise() {
        let data = linear_training_set(64);
        let mut with_flag = MlpModel::new(1, 1, 2, 8, 4);
        let mut cfg = TrainConfig::new(10, 4);
        cfg.noise_variance = 0.0;
        mlp_train(&mut with_flag, &data, TaskKind::DerivativePrediction, &cfg).unwrap();
        let mut baseline = MlpModel::new(1, 1, 2, 8, 4);
        let cfg2 = TrainConfig::new(10, 4);
        mlp_train(&mut baseline, &data, TaskKind::DerivativePrediction, &cfg2).unwrap();
        assert_eq!(with_flag.params_flat(), baseline.params_flat());
    }

    #[test]
    fn noise_injection_changes_training_but_not_targets_for_step_task() {
        let data = linear_training_set(64);
        let mut noisy = MlpModel::new(1, 1, 2, 8, 4);
        let mut cfg = TrainConfig::new(5, 4);
        cfg.noise_variance = 1e-3;
        mlp_train(&mut noisy, &data, TaskKind::StepPrediction, &cfg).unwrap();
        let mut clean = MlpModel::new(1, 1, 2, 8, 4);
        cfg.noise_variance = 0.0;
        mlp_train(&mut clean, &data, TaskKind::StepPrediction, &cfg).unwrap();
        assert_ne!(noisy.params_flat(), clean.params_flat());
    }
}
