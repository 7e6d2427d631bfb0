//! The pseudo-label classifier: a 3-layer MLP with per-layer batch
//! normalization, LeakyReLU activations on the hidden layers, and a softmax
//! output over the `M` pseudo-classes.
//!
//! Layer widths are fixed by the input dimension `q`: `q -> 2q -> 4q -> M`.
//! Batch normalization sits between each affine map and its activation,
//! including on the output layer. All gradients are computed by hand and
//! verified against central finite differences in the test suites.
//!
//! Frozen numerical choices:
//! - LeakyReLU negative slope 0.01 (the derivative at exactly 0 uses the
//!   negative slope).
//! - Batch norm epsilon 1e-5, running-stat momentum 0.1 with
//!   `running = (1 - momentum) * running + momentum * batch_stat`;
//!   normalization uses the biased batch variance, the running variance is
//!   updated with the unbiased one.
//! - Weight initialization is fan-in scaled: `N(0, 2 / fan_in)`.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const BATCH_NORM_EPSILON: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in x out`, so a batch multiplies from the left.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub linear: Linear,
    pub norm: BatchNorm,
    /// LeakyReLU after batch norm; false on the output layer.
    pub activated: bool,
}

/// The full classifier. Immutable in eval mode; training mutates parameters
/// and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub input_dim: usize,
    pub class_count: usize,
    pub layers: Vec<Layer>,
}

/// Which statistics batch normalization uses in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Per-batch statistics; requires at least 2 rows.
    Train,
    /// Running statistics; a pure function of (model, input).
    Eval,
}

/// Intermediate values retained by a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    batch_rows: usize,
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Input to the affine map (`B x in`).
    input: Matrix,
    /// Normalized pre-scale activations (`B x out`).
    xhat: Matrix,
    /// 1 / sqrt(var + eps) per feature (batch or running var).
    invstd: Vec<f64>,
    /// Batch-norm output, i.e. activation input (`B x out`).
    bn_out: Matrix,
    used_batch_stats: bool,
}

/// Gradients of the mean cross-entropy loss for every parameter tensor and
/// for the input batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
    pub input: Matrix,
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// A named view of one parameter tensor; `decays` marks the tensors that
/// receive L2 weight decay (weight matrices only).
pub struct ParamMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub decays: bool,
}

/// Fan-in-scaled random initialization: weights `N(0, 2/fan_in)`, zero
/// biases, identity batch norm (gamma 1, beta 0, running stats (0, 1)).
pub fn init_model(rng: &mut Rng, input_dim: usize, class_count: usize) -> Result<Classifier> {
    if input_dim == 0 || class_count == 0 {
        return Err(Error::Config(
            "classifier needs input_dim and class_count >= 1".into(),
        ));
    }
    let dims = [
        (input_dim, 2 * input_dim),
        (2 * input_dim, 4 * input_dim),
        (4 * input_dim, class_count),
    ];
    let layers = dims
        .iter()
        .enumerate()
        .map(|(idx, &(fan_in, fan_out))| {
            let std = (2.0 / fan_in as f64).sqrt();
            let mut weight = Matrix::zeros(fan_in, fan_out);
            for v in weight.data_mut() {
                *v = rng.next_normal() * std;
            }
            Layer {
                linear: Linear {
                    weight,
                    bias: vec![0.0; fan_out],
                },
                norm: BatchNorm {
                    gamma: vec![1.0; fan_out],
                    beta: vec![0.0; fan_out],
                    running_mean: vec![0.0; fan_out],
                    running_var: vec![1.0; fan_out],
                },
                activated: idx < 2,
            }
        })
        .collect();
    Ok(Classifier {
        input_dim,
        class_count,
        layers,
    })
}

/// Per-feature batch statistics gathered by a train-mode forward pass.
struct BatchStats {
    mean: Vec<f64>,
    biased_var: Vec<f64>,
    unbiased_var: Vec<f64>,
}

impl Classifier {
    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::Config(format!(
                "batch has {} columns, classifier expects {}",
                batch.cols(),
                self.input_dim
            )));
        }
        if !batch.all_finite() {
            return Err(Error::Data("batch contains non-finite values".into()));
        }
        Ok(())
    }

    /// Pure forward pass; never touches running statistics. Returns the
    /// per-layer batch statistics when `use_batch_stats` so the caller can
    /// fold them into the running averages.
    fn forward_impl(
        &self,
        batch: &Matrix,
        use_batch_stats: bool,
    ) -> Result<(Matrix, ForwardCache, Vec<Option<BatchStats>>)> {
        self.check_input(batch)?;
        let rows = batch.rows();
        if use_batch_stats && rows < 2 {
            return Err(Error::Config(
                "train-mode forward needs a batch of at least 2 rows for batch statistics".into(),
            ));
        }
        let mut current = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats_out = Vec::with_capacity(self.layers.len());

        for layer in &self.layers {
            let z = {
                let mut z = current.matmul(&layer.linear.weight)?;
                for r in 0..z.rows() {
                    for (v, b) in z.row_mut(r).iter_mut().zip(&layer.linear.bias) {
                        *v += b;
                    }
                }
                z
            };
            let out_dim = z.cols();

            let (mean, invstd, stats) = if use_batch_stats {
                let mut mean = vec![0.0; out_dim];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(z.row(r)) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= rows as f64;
                }
                let mut biased_var = vec![0.0; out_dim];
                for r in 0..rows {
                    for ((s, v), m) in biased_var.iter_mut().zip(z.row(r)).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                for s in biased_var.iter_mut() {
                    *s /= rows as f64;
                }
                let invstd: Vec<f64> = biased_var
                    .iter()
                    .map(|v| 1.0 / (v + BATCH_NORM_EPSILON).sqrt())
                    .collect();
                let unbiased_var: Vec<f64> = biased_var
                    .iter()
                    .map(|v| v * rows as f64 / (rows as f64 - 1.0))
                    .collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    biased_var,
                    unbiased_var,
                };
                (mean, invstd, Some(stats))
            } else {
                let invstd: Vec<f64> = layer
                    .norm
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + BATCH_NORM_EPSILON).sqrt())
                    .collect();
                (layer.norm.running_mean.clone(), invstd, None)
            };

            let mut xhat = Matrix::zeros(rows, out_dim);
            let mut bn_out = Matrix::zeros(rows, out_dim);
            for r in 0..rows {
                let z_row = z.row(r);
                let xhat_row = xhat.row_mut(r);
                for j in 0..out_dim {
                    xhat_row[j] = (z_row[j] - mean[j]) * invstd[j];
                }
                let bn_row = bn_out.row_mut(r);
                for j in 0..out_dim {
                    bn_row[j] = layer.norm.gamma[j] * xhat_row[j] + layer.norm.beta[j];
                }
            }

            let next = if layer.activated {
                let mut act = bn_out.clone();
                for v in act.data_mut() {
                    if *v <= 0.0 {
                        *v *= LEAKY_RELU_SLOPE;
                    }
                }
                act
            } else {
                bn_out.clone()
            };

            caches.push(LayerCache {
                input: current,
                xhat,
                invstd,
                bn_out,
                used_batch_stats: use_batch_stats,
            });
            stats_out.push(stats);
            current = next;
        }

        Ok((
            current,
            ForwardCache {
                layers: caches,
                batch_rows: rows,
            },
            stats_out,
        ))
    }

    fn apply_running_updates(&mut self, stats: Vec<Option<BatchStats>>) {
        for (layer, st) in self.layers.iter_mut().zip(stats) {
            if let Some(st) = st {
                for j in 0..layer.norm.running_mean.len() {
                    layer.norm.running_mean[j] = (1.0 - BATCH_NORM_MOMENTUM)
                        * layer.norm.running_mean[j]
                        + BATCH_NORM_MOMENTUM * st.mean[j];
                    layer.norm.running_var[j] = (1.0 - BATCH_NORM_MOMENTUM)
                        * layer.norm.running_var[j]
                        + BATCH_NORM_MOMENTUM * st.unbiased_var[j];
                }
                debug_assert!(st.biased_var.iter().all(|v| *v >= 0.0));
            }
        }
    }

    /// Train-mode forward: normalizes with batch statistics and folds them
    /// into the running averages.
    pub fn forward_train(&mut self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let (logits, cache, stats) = self.forward_impl(batch, true)?;
        self.apply_running_updates(stats);
        Ok((logits, cache))
    }

    /// Eval-mode forward: normalizes with running statistics; pure.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let (logits, cache, _) = self.forward_impl(batch, false)?;
        Ok((logits, cache))
    }

    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<(Matrix, ForwardCache)> {
        match mode {
            Mode::Train => self.forward_train(batch),
            Mode::Eval => self.forward_eval(batch),
        }
    }

    /// Mean cross-entropy under batch statistics without updating running
    /// stats. This is the exact scalar function differentiated by the
    /// train-mode backward pass, which makes it the finite-difference
    /// reference for gradient checks.
    pub fn loss_with_batch_stats(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let (logits, _, _) = self.forward_impl(batch, true)?;
        mean_cross_entropy(&logits, labels)
    }

    /// Mean cross-entropy under running statistics (the eval-path analogue
    /// of [`Classifier::loss_with_batch_stats`]).
    pub fn loss_with_running_stats(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let (logits, _, _) = self.forward_impl(batch, false)?;
        mean_cross_entropy(&logits, labels)
    }

    /// Loss plus gradients for every parameter and the input batch,
    /// using train-mode batch normalization (running stats are updated).
    pub fn loss_and_grad_train(
        &mut self,
        batch: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, Gradients)> {
        let (logits, cache, stats) = self.forward_impl(batch, true)?;
        self.apply_running_updates(stats);
        self.loss_and_grad_from(logits, cache, labels)
    }

    /// Loss plus gradients with eval-mode batch normalization; pure.
    pub fn loss_and_grad_eval(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (logits, cache) = self.forward_eval(batch)?;
        self.loss_and_grad_from(logits, cache, labels)
    }

    fn loss_and_grad_from(
        &self,
        logits: Matrix,
        cache: ForwardCache,
        labels: &[usize],
    ) -> Result<(f64, Gradients)> {
        let loss = mean_cross_entropy(&logits, labels)?;
        let dlogits = cross_entropy_logit_gradient(&logits, labels)?;
        let grads = self.backward(&cache, &dlogits, true)?;
        Ok((loss, grads))
    }

    /// Backpropagates `dlogits` through the cached forward pass. When
    /// `with_params` is false only the input gradient is materialized
    /// (the scoring hot path).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Matrix,
        with_params: bool,
    ) -> Result<Gradients> {
        let rows = cache.batch_rows;
        if dlogits.rows() != rows {
            return Err(Error::Config(format!(
                "gradient has {} rows, cache has {rows}",
                dlogits.rows()
            )));
        }
        let mut d_out = dlogits.clone();
        let mut layer_grads: Vec<LayerGradients> = Vec::with_capacity(self.layers.len());

        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let out_dim = lc.bn_out.cols();

            // Activation.
            let mut d_bn = d_out;
            if layer.activated {
                for r in 0..rows {
                    let y = lc.bn_out.row(r);
                    for (d, y_v) in d_bn.row_mut(r).iter_mut().zip(y) {
                        if *y_v <= 0.0 {
                            *d *= LEAKY_RELU_SLOPE;
                        }
                    }
                }
            }

            // Batch norm.
            let mut d_gamma = vec![0.0; out_dim];
            let mut d_beta = vec![0.0; out_dim];
            for r in 0..rows {
                let d_row = d_bn.row(r);
                let x_row = lc.xhat.row(r);
                for j in 0..out_dim {
                    d_gamma[j] += d_row[j] * x_row[j];
                    d_beta[j] += d_row[j];
                }
            }

            let mut d_z = Matrix::zeros(rows, out_dim);
            if lc.used_batch_stats {
                // dz = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                let mut sum_dxhat = vec![0.0; out_dim];
                let mut sum_dxhat_xhat = vec![0.0; out_dim];
                for r in 0..rows {
                    let d_row = d_bn.row(r);
                    let x_row = lc.xhat.row(r);
                    for j in 0..out_dim {
                        let dxhat = d_row[j] * layer.norm.gamma[j];
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xhat[j] += dxhat * x_row[j];
                    }
                }
                let inv_rows = 1.0 / rows as f64;
                for r in 0..rows {
                    let d_row = d_bn.row(r);
                    let x_row = lc.xhat.row(r);
                    let z_row = d_z.row_mut(r);
                    for j in 0..out_dim {
                        let dxhat = d_row[j] * layer.norm.gamma[j];
                        z_row[j] = lc.invstd[j]
                            * (dxhat
                                - inv_rows * sum_dxhat[j]
                                - x_row[j] * inv_rows * sum_dxhat_xhat[j]);
                    }
                }
            } else {
                for r in 0..rows {
                    let d_row = d_bn.row(r);
                    let z_row = d_z.row_mut(r);
                    for j in 0..out_dim {
                        z_row[j] = d_row[j] * layer.norm.gamma[j] * lc.invstd[j];
                    }
                }
            }

            // Affine map.
            if with_params {
                let d_weight = lc.input.transpose().matmul(&d_z)?;
                let mut d_bias = vec![0.0; out_dim];
                for r in 0..rows {
                    for (b, d) in d_bias.iter_mut().zip(d_z.row(r)) {
                        *b += d;
                    }
                }
                layer_grads.push(LayerGradients {
                    weight: d_weight,
                    bias: d_bias,
                    gamma: d_gamma,
                    beta: d_beta,
                });
            }
            d_out = d_z.matmul(&layer.linear.weight.transpose())?;
        }

        layer_grads.reverse();
        Ok(Gradients {
            layers: layer_grads,
            input: d_out,
        })
    }

    /// Gradient of `dlogits` with respect to the input batch only.
    pub fn input_gradient(&self, cache: &ForwardCache, dlogits: &Matrix) -> Result<Matrix> {
        Ok(self.backward(cache, dlogits, false)?.input)
    }

    /// Named mutable views of all parameter tensors in the frozen order
    /// `layer{i}.{weight,bias,gamma,beta}`.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push(ParamMut {
                name: format!("layer{i}.weight"),
                values: layer.linear.weight.data_mut(),
                decays: true,
            });
            out.push(ParamMut {
                name: format!("layer{i}.bias"),
                values: &mut layer.linear.bias,
                decays: false,
            });
            out.push(ParamMut {
                name: format!("layer{i}.gamma"),
                values: &mut layer.norm.gamma,
                decays: false,
            });
            out.push(ParamMut {
                name: format!("layer{i}.beta"),
                values: &mut layer.norm.beta,
                decays: false,
            });
        }
        out
    }

    /// Tensor lengths in the [`Classifier::params_mut`] order.
    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.linear.weight.data().len());
            out.push(layer.linear.bias.len());
            out.push(layer.norm.gamma.len());
            out.push(layer.norm.beta.len());
        }
        out
    }

    /// Top-1 predictions from an eval-mode forward pass; ties resolve to
    /// the lowest class index.
    pub fn predict_eval(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let (logits, _) = self.forward_eval(batch)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

impl Gradients {
    /// Parameter gradients flattened in the same order as
    /// [`Classifier::params_mut`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for lg in &self.layers {
            out.push(lg.weight.data());
            out.push(lg.bias.as_slice());
            out.push(lg.gamma.as_slice());
            out.push(lg.beta.as_slice());
        }
        out
    }
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax via the log-sum-exp trick.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels; guarded
/// with log-sum-exp so it never returns NaN on finite logits.
pub fn mean_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::Config(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Config(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of the mean cross-entropy w.r.t. the logits:
/// `(softmax - onehot) / batch`.
fn cross_entropy_logit_gradient(logits: &Matrix, labels: &[usize]) -> Result<Matrix> {
    let mut grad = softmax_rows(logits);
    let inv = 1.0 / logits.rows() as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests;
