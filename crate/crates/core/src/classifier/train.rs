//! Mini-batch training loop with accuracy-threshold early stopping.
//!
//! The epoch order is reshuffled from a per-epoch child seed. After every
//! optimizer step the current batch is re-scored in eval mode; training
//! stops the moment that batch's top-1 accuracy reaches the threshold, so
//! no further optimizer steps run after the threshold is met. If the epoch
//! cap is hit first the model is still returned, flagged as non-converged.

use crate::error::{Error, Result};
use crate::projection::PseudoLabeledSet;
use crate::tensor::{derive_stream, Rng};

use super::{adam_step, init_model, AdamState, Classifier};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Early-stop batch accuracy threshold in (0, 1).
    pub accuracy_threshold: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// At least 2 (batch normalization needs two rows for a variance).
    pub batch_size: usize,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold < 1.0) {
            return Err(Error::Config(format!(
                "accuracy threshold must be in (0, 1), got {}",
                self.accuracy_threshold
            )));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Classifier,
    /// True when some batch reached the accuracy threshold.
    pub converged: bool,
    pub steps: u64,
    pub epochs_completed: usize,
    pub final_batch_accuracy: f64,
}

/// Trains a freshly initialized classifier on the pseudo-labeled set.
///
/// `rng` seeds the weight initialization; mini-batch order comes from
/// `config.shuffle_seed` (one derived child per epoch).
pub fn train(
    dataset: &PseudoLabeledSet,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = dataset.features.rows();
    if n == 0 {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if dataset.labels.len() != n {
        return Err(Error::Config(format!(
            "{} labels for {} rows",
            dataset.labels.len(),
            n
        )));
    }

    let mut model = init_model(rng, dataset.features.cols(), dataset.m_count)?;
    let mut adam = AdamState::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut steps = 0u64;
    let mut epochs_completed = 0usize;
    let mut last_accuracy = 0.0;

    for epoch in 0..config.max_epochs {
        let mut shuffle_rng = Rng::new(derive_stream(config.shuffle_seed, epoch as u64));
        shuffle_rng.shuffle(&mut order);

        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                // A trailing single row cannot be batch-normalized.
                continue;
            }
            let batch = dataset.features.gather_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i]).collect();

            let (loss, grads) = model.loss_and_grad_train(&batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at step {steps} (epoch {epoch}); \
                     try a smaller learning rate than {}",
                    config.learning_rate
                )));
            }
            adam_step(
                &mut model,
                &grads,
                &mut adam,
                config.learning_rate,
                config.weight_decay,
            )?;
            steps += 1;

            let predictions = model.predict_eval(&batch)?;
            let correct = predictions
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();
            last_accuracy = correct as f64 / labels.len() as f64;
            if last_accuracy >= config.accuracy_threshold {
                return Ok(TrainOutcome {
                    model,
                    converged: true,
                    steps,
                    epochs_completed,
                    final_batch_accuracy: last_accuracy,
                });
            }
        }
        epochs_completed = epoch + 1;
    }

    Ok(TrainOutcome {
        model,
        converged: false,
        steps,
        epochs_completed,
        final_batch_accuracy: last_accuracy,
    })
}
