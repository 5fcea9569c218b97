//! Minibatch training loop with seeded shuffling, validation-based model
//! selection, and early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layer::{LayerSpec, ParamGrads};
use super::model::{Mode, Model};
use super::optim::{optimizer_step, OptState, OptimKind};
use super::NnError;
use crate::rng::{derive_seed, seeded_rng};
use crate::tensor::Tensor;

const SHUFFLE_TAG: u64 = 0x7368_7566;
const DROPOUT_TAG: u64 = 0x6472_6f70;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimKind,
    pub learning_rate: f64,
    pub seed: u64,
    /// Early-stop after this many epochs without validation improvement.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            optimizer: OptimKind::Adam,
            learning_rate: 1e-3,
            seed: 42,
            patience: 10,
        }
    }
}

/// Classification target (class index) or regression target (tensor).
#[derive(Clone, Debug)]
pub enum Target {
    Class(usize),
    Values(Tensor),
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub input: Tensor,
    pub target: Target,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Train `model` on `train_data`, tracking `val_data` each epoch.
///
/// Deterministic given the config seed. When validation data is present the
/// parameters with the best validation loss are returned; otherwise the
/// final parameters. Cross-entropy requires a trailing softmax layer and is
/// computed from the pre-softmax logits with max subtraction.
pub fn train(
    model: Model,
    train_data: &[Sample],
    val_data: &[Sample],
    cfg: &TrainConfig,
    loss: LossKind,
) -> Result<(Model, Vec<EpochStats>), NnError> {
    if train_data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    validate_targets(&model, train_data, loss)?;
    validate_targets(&model, val_data, loss)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.learning_rate < 0.0 {
        return Err(NnError::BadSpec {
            layer: 0,
            detail: "train config needs positive epochs and batch size and lr >= 0".into(),
        });
    }

    let mut model = model;
    let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
    let mut opt = OptState::new(cfg.optimizer, &sizes);
    let mut shuffle_rng = seeded_rng(derive_seed(cfg.seed, SHUFFLE_TAG));
    let dropout_base = derive_seed(cfg.seed, DROPOUT_TAG);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut stale_epochs = 0usize;
    let mut forward_counter = 0u64;
    // Per-sample losses accumulate into dataset order so the epoch mean does
    // not depend on the shuffle.
    let mut sample_losses = vec![0.0f64; train_data.len()];

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut correct = 0usize;

        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad_sums: Vec<Option<ParamGrads>> = Vec::new();
            for &idx in batch {
                let sample = &train_data[idx];
                let mode = Mode::Train {
                    dropout_seed: derive_seed(dropout_base, forward_counter),
                };
                forward_counter += 1;
                let cache = model.forward(&sample.input, mode)?;
                let (loss_value, grads) = match loss {
                    LossKind::CrossEntropy => {
                        let Target::Class(class) = sample.target else {
                            unreachable!("validated above")
                        };
                        let logits = &cache.activations[model.n_layers() - 1];
                        let value = cross_entropy_from_logits(logits, class);
                        // d(loss)/d(logits) = softmax(logits) - onehot; skip
                        // the softmax layer in backprop.
                        let out = cache.output();
                        if out.data()[class]
                            >= out
                                .data()
                                .iter()
                                .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
                        {
                            correct += 1;
                        }
                        let mut g = out.data().to_vec();
                        g[class] -= 1.0;
                        let g = Tensor::new(out.shape().to_vec(), g);
                        let (grads, _) =
                            model.backward_from(&cache, model.n_layers() - 2, g)?;
                        (value, grads)
                    }
                    LossKind::Mse => {
                        let Target::Values(ref target) = sample.target else {
                            unreachable!("validated above")
                        };
                        let out = cache.output();
                        let n = out.numel() as f64;
                        let value = out.sq_distance(target) / n;
                        let g = Tensor::new(
                            out.shape().to_vec(),
                            out.data()
                                .iter()
                                .zip(target.data())
                                .map(|(o, t)| 2.0 * (o - t) / n)
                                .collect(),
                        );
                        let (grads, _) = model.backward(&cache, &g)?;
                        (value, grads)
                    }
                };
                if !loss_value.is_finite() {
                    return Err(NnError::NanLoss {
                        epoch,
                        batch: batch_no,
                    });
                }
                sample_losses[idx] = loss_value;
                accumulate(&mut grad_sums, grads);
            }
            scale_grads(&mut grad_sums, 1.0 / batch.len() as f64);
            let flat_refs = Model::flatten_grads(&grad_sums);
            let grads_owned: Vec<Tensor> = flat_refs.into_iter().cloned().collect();
            let grad_refs: Vec<&Tensor> = grads_owned.iter().collect();
            let mut params = model.params_mut();
            optimizer_step(&mut opt, &mut params, &grad_refs, cfg.learning_rate)?;
        }

        let train_loss = sample_losses.iter().sum::<f64>() / train_data.len() as f64;
        let train_accuracy = match loss {
            LossKind::CrossEntropy => Some(correct as f64 / train_data.len() as f64),
            LossKind::Mse => None,
        };
        let (val_loss, val_accuracy) = if val_data.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, val_data, loss)?;
            (Some(l), a)
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });

        if let Some(vl) = val_loss {
            let improved = best.as_ref().map_or(true, |(b, _)| vl < *b);
            if improved {
                best = Some((vl, model.params().into_iter().cloned().collect()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, params)) = best {
        for (dst, src) in model.params_mut().into_iter().zip(params) {
            *dst = src;
        }
    }
    Ok((model, history))
}

/// Mean loss (and accuracy, for classification) over a dataset in
/// inference mode.
pub fn evaluate(
    model: &Model,
    data: &[Sample],
    loss: LossKind,
) -> Result<(f64, Option<f64>), NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for sample in data {
        let cache = model.forward(&sample.input, Mode::Infer)?;
        match (&sample.target, loss) {
            (Target::Class(class), LossKind::CrossEntropy) => {
                let logits = &cache.activations[model.n_layers() - 1];
                total += cross_entropy_from_logits(logits, *class);
                let out = cache.output();
                let argmax = argmax(out.data());
                if argmax == *class {
                    correct += 1;
                }
            }
            (Target::Values(target), LossKind::Mse) => {
                let out = cache.output();
                total += out.sq_distance(target) / out.numel() as f64;
            }
            _ => {
                return Err(NnError::TargetMismatch {
                    detail: "loss kind does not match sample targets".into(),
                })
            }
        }
    }
    let mean = total / data.len() as f64;
    let acc = match loss {
        LossKind::CrossEntropy => Some(correct as f64 / data.len() as f64),
        LossKind::Mse => None,
    };
    Ok((mean, acc))
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

/// `logsumexp(logits) - logits[class]`, max-subtracted for stability.
fn cross_entropy_from_logits(logits: &Tensor, class: usize) -> f64 {
    let max = logits.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max
        + logits
            .data()
            .iter()
            .map(|&v| (v - max).exp())
            .sum::<f64>()
            .ln();
    lse - logits.data()[class]
}

fn validate_targets(model: &Model, data: &[Sample], loss: LossKind) -> Result<(), NnError> {
    match loss {
        LossKind::CrossEntropy => {
            if !matches!(model.specs().last(), Some(LayerSpec::Softmax)) {
                return Err(NnError::MissingSoftmax);
            }
            let n_classes = model.output_shape()[0];
            for (i, s) in data.iter().enumerate() {
                match s.target {
                    Target::Class(c) if c < n_classes => {}
                    Target::Class(c) => {
                        return Err(NnError::BadLabel {
                            index: i,
                            label: c,
                            n_classes,
                        })
                    }
                    Target::Values(_) => {
                        return Err(NnError::TargetMismatch {
                            detail: format!("sample {i} has a tensor target under cross-entropy"),
                        })
                    }
                }
            }
        }
        LossKind::Mse => {
            for (i, s) in data.iter().enumerate() {
                match &s.target {
                    Target::Values(t) if t.shape() == model.output_shape() => {}
                    Target::Values(t) => {
                        return Err(NnError::TargetMismatch {
                            detail: format!(
                                "sample {i} target shape {:?} vs output {:?}",
                                t.shape(),
                                model.output_shape()
                            ),
                        })
                    }
                    Target::Class(_) => {
                        return Err(NnError::TargetMismatch {
                            detail: format!("sample {i} has a class target under mse"),
                        })
                    }
                }
            }
        }
    }
    Ok(())
}

fn accumulate(sums: &mut Vec<Option<ParamGrads>>, grads: Vec<Option<ParamGrads>>) {
    if sums.is_empty() {
        *sums = grads;
        return;
    }
    for (sum, g) in sums.iter_mut().zip(grads) {
        match (sum, g) {
            (Some(s), Some(g)) => {
                for (a, b) in s.weights.data_mut().iter_mut().zip(g.weights.data()) {
                    *a += b;
                }
                for (a, b) in s.bias.data_mut().iter_mut().zip(g.bias.data()) {
                    *a += b;
                }
            }
            (None, None) => {}
            _ => unreachable!("gradient structure varies between samples"),
        }
    }
}

fn scale_grads(sums: &mut [Option<ParamGrads>], factor: f64) {
    for g in sums.iter_mut().flatten() {
        g.weights.data_mut().iter_mut().for_each(|v| *v *= factor);
        g.bias.data_mut().iter_mut().for_each(|v| *v *= factor);
    }
}
