//! Random-feature approximation of a dot-product kernel, trained with ridge
//! regression. Features are frozen random projections through a ReLU:
//! `phi(x)_l = (1/sqrt(L)) relu(<x, z_l>)` with `z_l` i.i.d. standard normal.
//! Rows of the projection are drawn sequentially, so feature sets with the
//! same seed are prefix-nested across different `L`.

use super::{LearnerError, Predictor};
use crate::linalg::{LinalgError, Mat};
use crate::sampling::child_rng;
use rand::Rng;
use rand_distr::StandardNormal;

const FIT_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct RandomFeatureModel {
    pub feature_count: usize,
    pub seed: u64,
    projection: Mat,
    weights: Option<Mat>,
    fitted_lambda: Option<f64>,
}

impl RandomFeatureModel {
    pub fn new(input_dim: usize, feature_count: usize, seed: u64) -> Self {
        let mut rng = child_rng(seed, 0);
        let mut data = Vec::with_capacity(feature_count * input_dim);
        for _ in 0..feature_count * input_dim {
            data.push(rng.sample::<f64, _>(StandardNormal));
        }
        Self {
            feature_count,
            seed,
            projection: Mat::from_vec(feature_count, input_dim, data),
            weights: None,
            fitted_lambda: None,
        }
    }

    pub fn projection(&self) -> &Mat {
        &self.projection
    }

    pub fn weights(&self) -> Option<&Mat> {
        self.weights.as_ref()
    }

    pub fn fitted_lambda(&self) -> Option<f64> {
        self.fitted_lambda
    }

    /// Rebuild a model from stored parts (checkpoint loading).
    pub fn from_parts(projection: Mat, weights: Option<Mat>, seed: u64, lambda: Option<f64>) -> Self {
        Self {
            feature_count: projection.rows(),
            seed,
            projection,
            weights,
            fitted_lambda: lambda,
        }
    }

    /// Feature map of one input.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (self.feature_count as f64).sqrt();
        let mut out = self.projection.matvec(x);
        for v in &mut out {
            *v = v.max(0.0) * scale;
        }
        out
    }

    /// Feature matrix of a batch of rows.
    pub fn features_batch(&self, xs: &Mat) -> Mat {
        let scale = 1.0 / (self.feature_count as f64).sqrt();
        let mut phi = xs.matmul_nt(&self.projection);
        for v in phi.data_mut() {
            *v = v.max(0.0) * scale;
        }
        phi
    }

    fn accumulate_normal_equations(&self, inputs: &Mat, targets: &Mat) -> (Mat, Mat) {
        let l = self.feature_count;
        let mut gram = Mat::zeros(l, l);
        let mut moment = Mat::zeros(l, targets.cols());
        let n = inputs.rows();
        let mut start = 0;
        while start < n {
            let end = (start + FIT_CHUNK).min(n);
            let chunk = copy_rows(inputs, start, end);
            let target_chunk = copy_rows(targets, start, end);
            let phi = self.features_batch(&chunk);
            gram.add_assign(&phi.matmul_tn(&phi));
            moment.add_assign(&phi.matmul_tn(&target_chunk));
            start = end;
        }
        (gram, moment)
    }

    /// Ridge fit by normal equations: minimizes
    /// `|phi W - Y|^2 + lambda |W|^2` with a symmetric positive-definite
    /// solve. Fails with an ill-conditioning hint when the shifted Gram
    /// matrix is not positive definite.
    pub fn fit(&mut self, inputs: &Mat, targets: &Mat, lambda: f64) -> Result<(), LearnerError> {
        if inputs.rows() == 0 {
            return Err(LearnerError::EmptyTrainingSet);
        }
        if inputs.cols() != self.projection.cols() {
            return Err(LearnerError::Dimension {
                expected: self.projection.cols(),
                got: inputs.cols(),
            });
        }
        let (gram, moment) = self.accumulate_normal_equations(inputs, targets);
        self.solve_ridge(gram, &moment, lambda)
    }

    /// Ridge fit with the default lambda rule
    /// `1e-8 * mean(diag(phi^T phi))`. Returns the lambda used.
    pub fn fit_auto(&mut self, inputs: &Mat, targets: &Mat) -> Result<f64, LearnerError> {
        if inputs.rows() == 0 {
            return Err(LearnerError::EmptyTrainingSet);
        }
        if inputs.cols() != self.projection.cols() {
            return Err(LearnerError::Dimension {
                expected: self.projection.cols(),
                got: inputs.cols(),
            });
        }
        let (gram, moment) = self.accumulate_normal_equations(inputs, targets);
        let lambda = default_ridge_lambda(&gram);
        self.solve_ridge(gram, &moment, lambda)?;
        Ok(lambda)
    }

    fn solve_ridge(&mut self, gram: Mat, moment: &Mat, lambda: f64) -> Result<(), LearnerError> {
        let mut shifted = gram;
        shifted.add_diagonal(lambda);
        let solve = |rhs: &Mat| -> Result<Mat, LearnerError> {
            shifted.clone().cholesky_solve(rhs).map_err(|e| match e {
                LinalgError::NotPositiveDefinite { row, pivot } => LearnerError::IllConditioned(
                    format!("Cholesky pivot {pivot:e} at row {row}"),
                ),
                other => LearnerError::Linalg(other),
            })
        };
        let mut weights = solve(moment)?;
        // Iterative refinement recovers the digits the factorization loses
        // when lambda is near zero and the Gram matrix is near singular.
        for _ in 0..2 {
            let mut residual = moment.clone();
            residual.sub_assign(&shifted.matmul(&weights));
            let correction = solve(&residual)?;
            weights.add_assign(&correction);
        }
        self.weights = Some(weights);
        self.fitted_lambda = Some(lambda);
        Ok(())
    }

    /// Stochastic-gradient fit of the same ridge objective (weight decay
    /// plays the role of the penalty). Returns the per-epoch mean batch loss.
    pub fn fit_sgd(
        &mut self,
        inputs: &Mat,
        targets: &Mat,
        cfg: &RfSgdConfig,
    ) -> Result<Vec<f64>, LearnerError> {
        if inputs.rows() == 0 {
            return Err(LearnerError::EmptyTrainingSet);
        }
        let n = inputs.rows();
        let d_out = targets.cols();
        let l = self.feature_count;
        let mut weights = match self.weights.take() {
            Some(w) => w,
            None => Mat::zeros(l, d_out),
        };
        let mut rng = child_rng(cfg.seed, 1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            shuffle(&mut order, &mut rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let xb = gather_rows(inputs, chunk);
                let yb = gather_rows(targets, chunk);
                let phi = self.features_batch(&xb);
                let mut err = phi.matmul(&weights);
                for (e, y) in err.data_mut().iter_mut().zip(yb.data()) {
                    *e -= y;
                }
                let loss =
                    err.data().iter().map(|v| v * v).sum::<f64>() / (chunk.len() * d_out) as f64;
                if !loss.is_finite() {
                    return Err(LearnerError::Divergence { epoch });
                }
                epoch_loss += loss;
                batches += 1;
                let mut grad = phi.matmul_tn(&err);
                grad.scale_in_place(2.0 / (chunk.len() * d_out) as f64);
                for (w, g) in weights.data_mut().iter_mut().zip(grad.data()) {
                    *w -= cfg.learning_rate * (g + cfg.weight_decay * *w);
                }
            }
            history.push(epoch_loss / batches.max(1) as f64);
        }
        self.weights = Some(weights);
        self.fitted_lambda = None;
        Ok(history)
    }

    /// Mean squared training residual of the fitted weights.
    pub fn residual_mse(&self, inputs: &Mat, targets: &Mat) -> f64 {
        let weights = self.weights.as_ref().expect("model must be fitted");
        let mut total = 0.0;
        let mut start = 0;
        while start < inputs.rows() {
            let end = (start + FIT_CHUNK).min(inputs.rows());
            let phi = self.features_batch(&copy_rows(inputs, start, end));
            let pred = phi.matmul(weights);
            let target_chunk = copy_rows(targets, start, end);
            total += pred
                .data()
                .iter()
                .zip(target_chunk.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            start = end;
        }
        total / (inputs.rows() * targets.cols()) as f64
    }
}

impl Predictor for RandomFeatureModel {
    fn input_dim(&self) -> usize {
        self.projection.cols()
    }

    fn output_dim(&self) -> usize {
        self.weights.as_ref().map_or(0, Mat::cols)
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let weights = self.weights.as_ref().expect("model must be fitted");
        let phi = self.features(x);
        let mut out = vec![0.0; weights.cols()];
        for (l, f) in phi.iter().enumerate() {
            if *f == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(weights.row(l)) {
                *o += f * w;
            }
        }
        out
    }
}

/// `1e-8 * mean(diag(gram))`, the default ridge shift.
pub fn default_ridge_lambda(gram: &Mat) -> f64 {
    1e-8 * gram.mean_diagonal()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSgdConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RfSgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

fn copy_rows(m: &Mat, start: usize, end: usize) -> Mat {
    let cols = m.cols();
    Mat::from_vec(end - start, cols, m.data()[start * cols..end * cols].to_vec())
}

fn gather_rows(m: &Mat, rows: &[usize]) -> Mat {
    let cols = m.cols();
    let mut out = Mat::zeros(rows.len(), cols);
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(m.row(r));
    }
    out
}

fn shuffle(order: &mut [usize], rng: &mut rand_chacha::ChaCha12Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_relu_projections() {
        let model = RandomFeatureModel::new(2, 16, 3);
        assert_eq!(model.features(&[0.0, 0.0]), vec![0.0; 16]);
        // Positive homogeneity of ReLU.
        let f1 = model.features(&[0.4, -0.2]);
        let f3 = model.features(&[1.2, -0.6]);
        for (a, b) in f1.iter().zip(&f3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_feature_by_hand() {
        // L = 1, z = (1, 1), x = (2, -1): phi = relu(1) / sqrt(1) = 1.
        let mut model = RandomFeatureModel::new(2, 1, 0);
        model.projection = Mat::from_vec(1, 2, vec![1.0, 1.0]);
        assert_eq!(model.features(&[2.0, -1.0]), vec![1.0]);
        assert_eq!(model.features(&[-2.0, 1.0]), vec![0.0]);
    }

    #[test]
    fn projections_are_prefix_nested_across_sizes() {
        let small = RandomFeatureModel::new(3, 8, 42);
        let large = RandomFeatureModel::new(3, 32, 42);
        assert_eq!(
            small.projection.data(),
            &large.projection.data()[..8 * 3],
            "same seed must give a shared feature prefix"
        );
    }

    fn toy_problem(n: usize) -> (Mat, Mat) {
        // Scattered inputs with the spring's linear derivative as target.
        let mut rng = child_rng(7, 0);
        let mut xs = Vec::with_capacity(2 * n);
        let mut ys = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            xs.extend_from_slice(&[a, b]);
            ys.extend_from_slice(&[b, -a]);
        }
        (Mat::from_vec(n, 2, xs), Mat::from_vec(n, 2, ys))
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let (xs, _) = toy_problem(50);
        let ys = Mat::zeros(50, 2);
        let mut model = RandomFeatureModel::new(2, 16, 1);
        model.fit(&xs, &ys, 1e-6).unwrap();
        assert!(model.weights().unwrap().data().iter().all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn huge_lambda_shrinks_predictions_to_zero() {
        let (xs, ys) = toy_problem(50);
        let mut model = RandomFeatureModel::new(2, 16, 1);
        model.fit(&xs, &ys, 1e12).unwrap();
        let out = model.predict(&[0.3, 0.3]);
        assert!(out.iter().all(|v| v.abs() < 1e-6), "{out:?}");
    }

    #[test]
    fn overparameterized_fit_interpolates() {
        let (xs, ys) = toy_problem(40);
        let mut model = RandomFeatureModel::new(2, 64, 1);
        model.fit(&xs, &ys, 1e-10).unwrap();
        let mse = model.residual_mse(&xs, &ys);
        assert!(mse < 1e-8, "residual {mse}");
    }

    #[test]
    fn residual_non_increasing_in_nested_feature_count() {
        let (xs, ys) = toy_problem(100);
        let mut previous = f64::INFINITY;
        for l in [64usize, 128, 256] {
            let mut model = RandomFeatureModel::new(2, l, 42);
            model.fit(&xs, &ys, 1e-10).unwrap();
            let mse = model.residual_mse(&xs, &ys);
            assert!(
                mse <= previous + 1e-9,
                "residual grew from {previous} to {mse} at L = {l}"
            );
            previous = mse;
        }
    }

    #[test]
    fn default_lambda_rule() {
        let mut gram = Mat::identity(4);
        gram.scale_in_place(3.0);
        assert!((default_ridge_lambda(&gram) - 3e-8).abs() < 1e-20);
    }

    #[test]
    fn sgd_approaches_the_closed_form_objective() {
        let (xs, ys) = toy_problem(200);
        let n_d = (xs.rows() * ys.cols()) as f64;
        let cfg = RfSgdConfig {
            learning_rate: 0.2,
            weight_decay: 1e-4,
            epochs: 1500,
            batch_size: 32,
            seed: 5,
        };
        // Weight decay wd on the mean-squared loss matches the sum-squared
        // ridge objective with lambda = wd * N * d / 2.
        let lambda = cfg.weight_decay * n_d / 2.0;
        let objective = |model: &RandomFeatureModel| {
            let mse = model.residual_mse(&xs, &ys);
            let wnorm: f64 = model.weights().unwrap().data().iter().map(|w| w * w).sum();
            mse * n_d + lambda * wnorm
        };

        let mut closed = RandomFeatureModel::new(2, 32, 9);
        closed.fit(&xs, &ys, lambda).unwrap();
        let best = objective(&closed);

        let mut sgd = RandomFeatureModel::new(2, 32, 9);
        let history = sgd.fit_sgd(&xs, &ys, &cfg).unwrap();
        assert!(history.last().unwrap() < &history[0], "loss must decrease");
        let reached = objective(&sgd);
        assert!(
            reached < best * 1.15 + 1e-9,
            "sgd objective {reached} should approach closed form {best}"
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (xs, ys) = toy_problem(10);
        let mut model = RandomFeatureModel::new(3, 8, 0);
        assert!(matches!(
            model.fit(&xs, &ys, 1e-6),
            Err(LearnerError::Dimension { .. })
        ));
    }
}
