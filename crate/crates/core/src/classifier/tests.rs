use super::*;
use crate::projection::PseudoLabeledSet;
use crate::tensor::{sample_standard_normal, Matrix, Rng};

fn zeroed_weights(mut model: Classifier) -> Classifier {
    for p in model.params_mut() {
        if p.name.ends_with("weight") || p.name.ends_with("bias") {
            p.values.fill(0.0);
        }
    }
    model
}

#[test]
fn init_architecture_contract() {
    let model = init_model(&mut Rng::new(0), 4, 3).unwrap();
    let shapes: Vec<(usize, usize)> = model
        .layers
        .iter()
        .map(|l| (l.linear.weight.rows(), l.linear.weight.cols()))
        .collect();
    assert_eq!(shapes, vec![(4, 8), (8, 16), (16, 3)]);
    assert!(model.layers[0].activated);
    assert!(model.layers[1].activated);
    assert!(!model.layers[2].activated);
}

#[test]
fn init_deterministic() {
    let a = init_model(&mut Rng::new(9), 6, 4).unwrap();
    let b = init_model(&mut Rng::new(9), 6, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn init_weight_scale_is_fan_in() {
    let q = 256;
    let model = init_model(&mut Rng::new(1), q, 8).unwrap();
    let w = model.layers[0].linear.weight.data();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let std = (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64).sqrt();
    let expected = (2.0 / q as f64).sqrt();
    assert!(
        (std - expected).abs() <= 0.2 * expected,
        "std {std} vs expected {expected}"
    );
}

#[test]
fn zero_network_gives_uniform_softmax() {
    let model = zeroed_weights(init_model(&mut Rng::new(0), 5, 4).unwrap());
    let batch = sample_standard_normal(&mut Rng::new(3), 7, 5);
    let (logits, _) = model.forward_eval(&batch).unwrap();
    assert!(logits.data().iter().all(|v| *v == 0.0));
    let probs = softmax_rows(&logits);
    for r in 0..probs.rows() {
        for p in probs.row(r) {
            assert!((p - 0.25).abs() <= 1e-15);
        }
    }
}

#[test]
fn train_mode_normalizes_each_feature() {
    let mut model = init_model(&mut Rng::new(2), 6, 3).unwrap();
    // Scale the batch so first-layer pre-norm variances dwarf the batch-norm
    // epsilon; deeper layers re-enter at unit scale, where the epsilon
    // smoothing is visible, so they are checked against the exact identity
    // var(xhat) = sigma^2 / (sigma^2 + eps).
    let mut batch = sample_standard_normal(&mut Rng::new(4), 16, 6);
    for v in batch.data_mut() {
        *v *= 1e3;
    }
    let (_, cache) = model.forward_train(&batch).unwrap();
    let mut layer_input = batch.clone();
    for (layer_idx, (lc, layer)) in cache.layers.iter().zip(&model.layers).enumerate() {
        let rows = lc.bn_out.rows();
        let mut z = layer_input.matmul(&layer.linear.weight).unwrap();
        for r in 0..rows {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.linear.bias) {
                *v += b;
            }
        }
        for j in 0..lc.bn_out.cols() {
            // gamma=1, beta=0 at init, so bn_out equals xhat here.
            let mean: f64 = (0..rows).map(|r| lc.bn_out.get(r, j)).sum::<f64>() / rows as f64;
            let var: f64 = (0..rows)
                .map(|r| {
                    let d = lc.bn_out.get(r, j) - mean;
                    d * d
                })
                .sum::<f64>()
                / rows as f64;
            assert!(
                mean.abs() <= 1e-6,
                "layer {layer_idx} feature {j} mean {mean}"
            );
            let z_mean: f64 = (0..rows).map(|r| z.get(r, j)).sum::<f64>() / rows as f64;
            let z_var: f64 = (0..rows)
                .map(|r| {
                    let d = z.get(r, j) - z_mean;
                    d * d
                })
                .sum::<f64>()
                / rows as f64;
            let expected = z_var / (z_var + BATCH_NORM_EPSILON);
            assert!(
                (var - expected).abs() <= 1e-9,
                "layer {layer_idx} feature {j}: var {var} vs identity {expected}"
            );
            if layer_idx == 0 {
                // Large input scale makes the epsilon negligible here.
                assert!((var - 1.0).abs() <= 1e-6, "feature {j} var {var}");
            }
        }
        // Next layer's input is this layer's activation output.
        layer_input = lc.bn_out.clone();
        if layer.activated {
            for v in layer_input.data_mut() {
                if *v <= 0.0 {
                    *v *= LEAKY_RELU_SLOPE;
                }
            }
        }
    }
}

#[test]
fn argmax_ties_resolve_to_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
    assert_eq!(argmax(&[0.5]), 0);
}

#[test]
fn softmax_rows_sum_to_one() {
    let logits = sample_standard_normal(&mut Rng::new(5), 10, 7);
    let probs = softmax_rows(&logits);
    for r in 0..probs.rows() {
        let total: f64 = probs.row(r).iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn uniform_prediction_loss_is_log_m() {
    let logits = Matrix::zeros(5, 4);
    let loss = mean_cross_entropy(&logits, &[0, 1, 2, 3, 0]).unwrap();
    assert!((loss - 4.0_f64.ln()).abs() <= 1e-12);
}

#[test]
fn loss_rejects_out_of_range_labels() {
    let logits = Matrix::zeros(2, 3);
    assert!(mean_cross_entropy(&logits, &[0, 3]).is_err());
}

#[test]
fn train_forward_requires_two_rows() {
    let mut model = init_model(&mut Rng::new(0), 4, 2).unwrap();
    let single = Matrix::zeros(1, 4);
    assert!(model.forward_train(&single).is_err());
    assert!(model.forward_eval(&single).is_ok());
}

#[test]
fn non_finite_input_is_a_data_error() {
    let mut model = init_model(&mut Rng::new(0), 4, 2).unwrap();
    let mut batch = Matrix::zeros(2, 4);
    batch.set(1, 2, f64::NAN);
    assert!(matches!(
        model.forward_train(&batch),
        Err(crate::error::Error::Data(_))
    ));
}

#[test]
fn eval_forward_is_pure_and_repeatable() {
    let mut model = init_model(&mut Rng::new(8), 5, 3).unwrap();
    // Move running stats off their initial values first.
    let warm = sample_standard_normal(&mut Rng::new(11), 12, 5);
    model.forward_train(&warm).unwrap();

    let before = model.clone();
    let batch = sample_standard_normal(&mut Rng::new(12), 6, 5);
    let (a, _) = model.forward_eval(&batch).unwrap();
    let (b, _) = model.forward_eval(&batch).unwrap();
    assert_eq!(a, b);
    assert_eq!(model, before, "eval forward must not mutate the model");
}

// ---------------------------------------------------------------------
// Gradient checking against central finite differences.
// ---------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;

// Components below ~1e-6 sit at the central-difference noise floor
// (eps * |loss| / 2h ~ 5e-12); the floored denominator makes the
// comparison absolute there.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn loss_at(model: &Classifier, batch: &Matrix, labels: &[usize], train_stats: bool) -> f64 {
    if train_stats {
        model.loss_with_batch_stats(batch, labels).unwrap()
    } else {
        model.loss_with_running_stats(batch, labels).unwrap()
    }
}

/// Checks every parameter gradient and the input gradient of one instance.
pub(crate) fn check_gradients_once(seed: u64, train_stats: bool) -> f64 {
    let q = 5;
    let classes = 3;
    let rows = 6;
    let mut rng = Rng::new(seed);
    let mut model = init_model(&mut rng, q, classes).unwrap();
    // Make the running statistics non-trivial so the eval path is exercised
    // away from its (0, 1) initialization.
    let warm = sample_standard_normal(&mut rng, 10, q);
    model.forward_train(&warm).unwrap();

    let batch = sample_standard_normal(&mut rng, rows, q);
    let labels: Vec<usize> = (0..rows)
        .map(|_| rng.next_below(classes as u64) as usize)
        .collect();

    let grads = if train_stats {
        model
            .clone()
            .loss_and_grad_train(&batch, &labels)
            .unwrap()
            .1
    } else {
        model.loss_and_grad_eval(&batch, &labels).unwrap().1
    };

    let mut worst = 0.0_f64;

    // Parameters.
    let grad_slices: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();
    for (tensor_idx, tensor) in grad_slices.iter().enumerate() {
        for (value_idx, &analytic) in tensor.iter().enumerate() {
            let mut plus = model.clone();
            plus.params_mut()[tensor_idx].values[value_idx] += FD_STEP;
            let mut minus = model.clone();
            minus.params_mut()[tensor_idx].values[value_idx] -= FD_STEP;
            let numeric = (loss_at(&plus, &batch, &labels, train_stats)
                - loss_at(&minus, &batch, &labels, train_stats))
                / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }

    // Input.
    for r in 0..rows {
        for c in 0..q {
            let mut plus = batch.clone();
            plus.set(r, c, plus.get(r, c) + FD_STEP);
            let mut minus = batch.clone();
            minus.set(r, c, minus.get(r, c) - FD_STEP);
            let numeric = (loss_at(&model, &plus, &labels, train_stats)
                - loss_at(&model, &minus, &labels, train_stats))
                / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads.input.get(r, c), numeric));
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_train_mode() {
    for seed in 0..3 {
        let worst = check_gradients_once(seed, true);
        assert!(worst <= FD_TOLERANCE, "seed {seed}: worst rel err {worst}");
    }
}

#[test]
fn gradients_match_finite_differences_eval_mode() {
    for seed in 0..3 {
        let worst = check_gradients_once(seed, false);
        assert!(worst <= FD_TOLERANCE, "seed {seed}: worst rel err {worst}");
    }
}

// ---------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------

#[test]
fn adam_first_step_closed_form() {
    let (mut m, mut v, mut x) = (0.0, 0.0, 1.0);
    let bias1 = 1.0 - ADAM_BETA1;
    let bias2 = 1.0 - ADAM_BETA2;
    adam::adam_update_value(&mut m, &mut v, bias1, bias2, &mut x, 1.0, 1e-3);
    let expected = 1.0 - 1e-3 / (1.0 + ADAM_EPSILON);
    assert!((x - expected).abs() <= 1e-15, "{x} vs {expected}");
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut model = init_model(&mut Rng::new(3), 4, 2).unwrap();
    let before = model.clone();
    let zero_grads = Gradients {
        layers: model
            .layers
            .iter()
            .map(|l| LayerGradients {
                weight: Matrix::zeros(l.linear.weight.rows(), l.linear.weight.cols()),
                bias: vec![0.0; l.linear.bias.len()],
                gamma: vec![0.0; l.norm.gamma.len()],
                beta: vec![0.0; l.norm.beta.len()],
            })
            .collect(),
        input: Matrix::zeros(1, 4),
    };
    let mut state = AdamState::new(&model);
    adam_step(&mut model, &zero_grads, &mut state, 1e-3, 0.0).unwrap();
    assert_eq!(model, before);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_descends_a_scalar_quadratic() {
    // f(x) = (x - 3)^2, f'(x) = 2 (x - 3); 100 steps from x = 0.
    let f = |x: f64| (x - 3.0) * (x - 3.0);
    let (mut m, mut v, mut x) = (0.0, 0.0, 0.0);
    let initial = f(x);
    for t in 1..=100 {
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        let g = 2.0 * (x - 3.0);
        adam::adam_update_value(&mut m, &mut v, bias1, bias2, &mut x, g, 1e-1);
        assert!(x.is_finite());
    }
    assert!(
        f(x) < initial,
        "loss did not decrease: {} -> {}",
        initial,
        f(x)
    );
}

// ---------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------

/// Two well-separated point clouds labeled as two pseudo-classes.
fn separable_toy_set(per_class: usize, seed: u64) -> PseudoLabeledSet {
    let mut rng = Rng::new(seed);
    let n = per_class * 2;
    let mut features = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let mut source_index = Vec::with_capacity(n);
    for class in 0..2 {
        let center = if class == 0 { 5.0 } else { -5.0 };
        for i in 0..per_class {
            let r = class * per_class + i;
            features.set(r, 0, center + 0.5 * rng.next_normal());
            features.set(r, 1, center + 0.5 * rng.next_normal());
            labels.push(class);
            source_index.push(i);
        }
    }
    PseudoLabeledSet {
        features,
        labels,
        source_index,
        m_count: 2,
        n_samples: per_class,
    }
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        accuracy_threshold: 0.9,
        learning_rate: 1e-2,
        weight_decay: 0.0,
        batch_size: 16,
        max_epochs: 2,
        shuffle_seed: 7,
    }
}

#[test]
fn training_converges_on_separable_toy_set() {
    let set = separable_toy_set(64, 1);
    let outcome = train(&set, &toy_config(), &mut Rng::new(0)).unwrap();
    assert!(
        outcome.converged,
        "did not reach 0.9 within 2 epochs (final accuracy {})",
        outcome.final_batch_accuracy
    );
    assert!(outcome.final_batch_accuracy >= 0.9);
}

#[test]
fn training_stops_at_first_qualifying_batch() {
    // With two classes any healthy batch clears a 1% threshold immediately,
    // so exactly one optimizer step must run.
    let set = separable_toy_set(64, 2);
    let config = TrainConfig {
        accuracy_threshold: 0.01,
        ..toy_config()
    };
    let outcome = train(&set, &config, &mut Rng::new(0)).unwrap();
    assert!(outcome.converged);
    assert_eq!(outcome.steps, 1);
}

#[test]
fn training_is_deterministic() {
    let set = separable_toy_set(32, 3);
    let a = train(&set, &toy_config(), &mut Rng::new(5)).unwrap();
    let b = train(&set, &toy_config(), &mut Rng::new(5)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.steps, b.steps);
}

#[test]
fn training_flags_non_convergence_at_epoch_cap() {
    // Random labels cannot be learned to 99.9% in one epoch.
    let mut set = separable_toy_set(32, 4);
    let mut rng = Rng::new(99);
    for l in set.labels.iter_mut() {
        *l = rng.next_below(2) as usize;
    }
    let config = TrainConfig {
        accuracy_threshold: 0.999,
        max_epochs: 1,
        ..toy_config()
    };
    let outcome = train(&set, &config, &mut Rng::new(0)).unwrap();
    assert!(!outcome.converged);
    assert_eq!(outcome.epochs_completed, 1);
}

#[test]
fn train_config_validation() {
    let set = separable_toy_set(8, 5);
    for bad in [
        TrainConfig {
            accuracy_threshold: 0.0,
            ..toy_config()
        },
        TrainConfig {
            accuracy_threshold: 1.0,
            ..toy_config()
        },
        TrainConfig {
            learning_rate: 0.0,
            ..toy_config()
        },
        TrainConfig {
            batch_size: 1,
            ..toy_config()
        },
        TrainConfig {
            max_epochs: 0,
            ..toy_config()
        },
    ] {
        assert!(train(&set, &bad, &mut Rng::new(0)).is_err());
    }
}

// ---------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let set = separable_toy_set(32, 6);
    let outcome = train(&set, &toy_config(), &mut Rng::new(2)).unwrap();
    let dir = std::env::temp_dir().join(format!("outrider-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    save_checkpoint(&outcome.model, 0xdead_beef_cafe_f00d, &path).unwrap();
    let (loaded, hash) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, outcome.model);
    assert_eq!(hash, 0xdead_beef_cafe_f00d);
    std::fs::remove_dir_all(&dir).ok();
}
