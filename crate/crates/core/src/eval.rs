//! Evaluation harness: classifier-based transfer strength/value and
//! autoencoder-embedding content preservation, comparing transfer output
//! against the mixing baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Waveform};
use crate::corpus::{self, ClipRole, CorpusError, LabeledClip, PairSpec};
use crate::dsp::{self, DspError, StftParams};
use crate::mix::{self, MixError};
use crate::nn::{
    self, EpochStats, LayerSpec, LossKind, Model, NnError, Sample, Target, TrainConfig,
};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::transfer::{self, TransferConfig, TransferError};

/// Classifier input grid (bins x frames x channels).
pub const CLASSIFIER_INPUT: [usize; 3] = [64, 44, 1];
/// Flatten width implied by the classifier stack on its 64x44 input.
pub const CLASSIFIER_FLATTEN: usize = 6656;
/// Autoencoder input grid.
pub const AE_INPUT: [usize; 3] = [60, 32, 2];
/// Encoder depth (layers up to and including the second pooling).
pub const AE_ENCODER_LAYERS: usize = 6;
/// Latent size 15*8*8.
pub const AE_LATENT: usize = 960;
/// Minimum clips per class for classifier/autoencoder training.
pub const MIN_CLIPS_PER_CLASS: usize = 10;

const SPLIT_TAG: u64 = 0x6576_6c73;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 classes, found {found}")]
    TooFewClasses { found: usize },
    #[error("class '{class}' has only {count} clips (minimum {min})")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },
    #[error("augmentation sources overlap the test split: {ids:?}")]
    TestLeakage { ids: Vec<String> },
    #[error("empty evaluation set")]
    EmptySet,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// The fixed audio-classifier stack: four valid 3x3 convolutions (32, 32,
/// 64, 64 channels), two poolings, dropout 0.15/0.2/0.5, a 6656-wide
/// flatten, and two dense layers.
pub fn classifier_specs(n_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2dValid { kh: 3, kw: 3, out_channels: 32 },
        LayerSpec::Relu,
        LayerSpec::Conv2dValid { kh: 3, kw: 3, out_channels: 32 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Dropout { rate: 0.15 },
        LayerSpec::Conv2dValid { kh: 3, kw: 3, out_channels: 64 },
        LayerSpec::Relu,
        LayerSpec::Conv2dValid { kh: 3, kw: 3, out_channels: 64 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 64 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { units: n_classes },
        LayerSpec::Softmax,
    ]
}

/// Encoder: two same-padded 3x3 convolutions (16, 8 channels), each pooled;
/// decoder: three same-padded convolutions (8, 16, 2 channels) with two 2x
/// upsamplings. The final activation is sigmoid by default; the literal
/// channel-softmax variant sits behind the flag.
pub fn autoencoder_specs(literal_softmax: bool) -> Vec<LayerSpec> {
    let mut specs = vec![
        LayerSpec::Conv2dSame { kh: 3, kw: 3, out_channels: 16 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv2dSame { kh: 3, kw: 3, out_channels: 8 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv2dSame { kh: 3, kw: 3, out_channels: 8 },
        LayerSpec::Relu,
        LayerSpec::Upsample2,
        LayerSpec::Conv2dSame { kh: 3, kw: 3, out_channels: 16 },
        LayerSpec::Relu,
        LayerSpec::Upsample2,
        LayerSpec::Conv2dSame { kh: 3, kw: 3, out_channels: 2 },
    ];
    specs.push(if literal_softmax {
        LayerSpec::Softmax
    } else {
        LayerSpec::Sigmoid
    });
    specs
}

/// Log-magnitude spectrogram resized to 64x44 and min-max normalized.
pub fn clip_to_classifier_input(w: &Waveform, p: &StftParams) -> Result<Tensor, EvalError> {
    let grid = dsp::log_magnitude(&dsp::stft(w, p)?);
    let t = dsp::resize_grid(&grid, CLASSIFIER_INPUT[0], CLASSIFIER_INPUT[1])?;
    Ok(t.reshaped(CLASSIFIER_INPUT.to_vec()))
}

/// Channel 1: log-magnitude resized to 60x32, normalized. Channel 2: the
/// temporal first difference of channel 1 (last column zero), rescaled to
/// [0, 1].
pub fn clip_to_autoencoder_input(w: &Waveform, p: &StftParams) -> Result<Tensor, EvalError> {
    let grid = dsp::log_magnitude(&dsp::stft(w, p)?);
    let base = dsp::resize_grid(&grid, AE_INPUT[0], AE_INPUT[1])?;
    let (rows, cols) = (AE_INPUT[0], AE_INPUT[1]);
    let b = base.data();
    let mut delta = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols - 1 {
            delta[r * cols + c] = b[r * cols + c + 1] - b[r * cols + c];
        }
    }
    dsp::min_max_normalize(&mut delta);
    let mut data = vec![0.0; rows * cols * 2];
    for r in 0..rows {
        for c in 0..cols {
            data[(r * cols + c) * 2] = b[r * cols + c];
            data[(r * cols + c) * 2 + 1] = delta[r * cols + c];
        }
    }
    Ok(Tensor::new(AE_INPUT.to_vec(), data))
}

/// A trained base classifier with its seeded split and held-out accuracy.
#[derive(Debug)]
pub struct ClassifierBundle {
    pub model: Model,
    pub p0: f64,
    pub history: Vec<EpochStats>,
    pub n_classes: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub test_ids: Vec<String>,
}

fn check_class_sizes(clips: &[LabeledClip]) -> Result<usize, EvalError> {
    let mut counts: std::collections::BTreeMap<usize, (String, usize)> = Default::default();
    for c in clips {
        let e = counts
            .entry(c.class_id)
            .or_insert_with(|| (c.class_name.clone(), 0));
        e.1 += 1;
    }
    if counts.len() < 2 {
        return Err(EvalError::TooFewClasses { found: counts.len() });
    }
    for (_, (name, count)) in &counts {
        if *count < MIN_CLIPS_PER_CLASS {
            return Err(EvalError::ClassTooSmall {
                class: name.clone(),
                count: *count,
                min: MIN_CLIPS_PER_CLASS,
            });
        }
    }
    Ok(counts.keys().max().unwrap() + 1)
}

fn classifier_samples(
    clips: &[LabeledClip],
    idx: &[usize],
    stft: &StftParams,
) -> Result<Vec<Sample>, EvalError> {
    idx.par_iter()
        .map(|&i| {
            Ok(Sample {
                input: clip_to_classifier_input(&clips[i].waveform, stft)?,
                target: Target::Class(clips[i].class_id),
            })
        })
        .collect()
}

/// Train the base classifier on a seeded 80/20 split (10% of the training
/// share held out for validation) and report held-out accuracy `P0`.
pub fn train_base_classifier(
    clips: &[LabeledClip],
    cfg: &TrainConfig,
    stft: &StftParams,
) -> Result<ClassifierBundle, EvalError> {
    let n_classes = check_class_sizes(clips)?;
    let indices: Vec<usize> = (0..clips.len()).collect();
    let (train_idx, val_idx, test_idx) =
        corpus::split(&indices, 0.8, 0.1, derive_seed(cfg.seed, SPLIT_TAG))?;
    let train = classifier_samples(clips, &train_idx, stft)?;
    let val = classifier_samples(clips, &val_idx, stft)?;
    let test = classifier_samples(clips, &test_idx, stft)?;
    let model = Model::new(classifier_specs(n_classes), CLASSIFIER_INPUT.to_vec(), cfg.seed)?;
    let (model, history) = nn::train(model, &train, &val, cfg, LossKind::CrossEntropy)?;
    let (_, acc) = nn::evaluate(&model, &test, LossKind::CrossEntropy)?;
    let test_ids = test_idx.iter().map(|&i| clips[i].id.clone()).collect();
    Ok(ClassifierBundle {
        model,
        p0: acc.unwrap(),
        history,
        n_classes,
        train_idx,
        val_idx,
        test_idx,
        test_ids,
    })
}

/// Which condition produced a generated clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Transfer,
    Mix,
}

/// A generated clip with its provenance.
#[derive(Clone, Debug)]
pub struct GeneratedRecord {
    pub waveform: Waveform,
    pub content_label: usize,
    pub style_label: usize,
    pub condition: Condition,
    pub content_source: String,
    pub style_source: String,
    pub config_echo: String,
}

/// Retraining outcome: the augmented classifier and its accuracy gain.
#[derive(Debug)]
pub struct AugmentedBundle {
    pub model: Model,
    pub p1: f64,
    /// `p1 - p0`, the augmentation value.
    pub value: f64,
    pub history: Vec<EpochStats>,
}

/// Retrain with the base training set plus the generated clips (labeled by
/// their content class), evaluating on the very same test split. Errors if
/// any generated clip's sources overlap the test split.
pub fn retrain_with_augmentation(
    clips: &[LabeledClip],
    base: &ClassifierBundle,
    dt: &[GeneratedRecord],
    cfg: &TrainConfig,
    stft: &StftParams,
) -> Result<AugmentedBundle, EvalError> {
    let test_ids: std::collections::HashSet<&str> =
        base.test_ids.iter().map(|s| s.as_str()).collect();
    let mut leaked: Vec<String> = dt
        .iter()
        .flat_map(|r| [r.content_source.as_str(), r.style_source.as_str()])
        .filter(|id| test_ids.contains(id))
        .map(|s| s.to_string())
        .collect();
    if !leaked.is_empty() {
        leaked.sort();
        leaked.dedup();
        return Err(EvalError::TestLeakage { ids: leaked });
    }

    let mut train = classifier_samples(clips, &base.train_idx, stft)?;
    let augmented: Vec<Sample> = dt
        .par_iter()
        .map(|r| {
            Ok(Sample {
                input: clip_to_classifier_input(&r.waveform, stft)?,
                target: Target::Class(r.content_label),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    train.extend(augmented);
    let val = classifier_samples(clips, &base.val_idx, stft)?;
    let test = classifier_samples(clips, &base.test_idx, stft)?;
    let model = Model::new(
        classifier_specs(base.n_classes),
        CLASSIFIER_INPUT.to_vec(),
        cfg.seed,
    )?;
    let (model, history) = nn::train(model, &train, &val, cfg, LossKind::CrossEntropy)?;
    let (_, acc) = nn::evaluate(&model, &test, LossKind::CrossEntropy)?;
    let p1 = acc.unwrap();
    Ok(AugmentedBundle {
        model,
        p1,
        value: p1 - base.p0,
        history,
    })
}

/// Fractions of clips whose predicted class equals the content label and
/// the style label, from one forward pass per clip.
pub fn condition_accuracy(
    model: &Model,
    set: &[GeneratedRecord],
    stft: &StftParams,
) -> Result<(f64, f64), EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let preds = predictions(model, set, stft)?;
    let content_hits = preds
        .iter()
        .zip(set)
        .filter(|(p, r)| **p == r.content_label)
        .count();
    let style_hits = preds
        .iter()
        .zip(set)
        .filter(|(p, r)| **p == r.style_label)
        .count();
    Ok((
        content_hits as f64 / set.len() as f64,
        style_hits as f64 / set.len() as f64,
    ))
}

/// Argmax class predictions for a generated set.
pub fn predictions(
    model: &Model,
    set: &[GeneratedRecord],
    stft: &StftParams,
) -> Result<Vec<usize>, EvalError> {
    set.par_iter()
        .map(|r| {
            let input = clip_to_classifier_input(&r.waveform, stft)?;
            let out = model.predict(&input)?;
            Ok(nn::argmax(out.data()))
        })
        .collect()
}

/// A trained autoencoder with its reconstruction-loss history.
#[derive(Debug)]
pub struct AeBundle {
    pub model: Model,
    pub history: Vec<EpochStats>,
}

/// Train the autoencoder (MSE reconstruction of the 60x32x2 inputs) on a
/// seeded 80/20 split.
pub fn train_autoencoder(
    clips: &[LabeledClip],
    cfg: &TrainConfig,
    stft: &StftParams,
    literal_softmax: bool,
) -> Result<AeBundle, EvalError> {
    check_class_sizes(clips)?;
    let indices: Vec<usize> = (0..clips.len()).collect();
    let (train_idx, val_idx, _test_idx) =
        corpus::split(&indices, 0.8, 0.1, derive_seed(cfg.seed, SPLIT_TAG))?;
    let to_samples = |idx: &[usize]| -> Result<Vec<Sample>, EvalError> {
        idx.par_iter()
            .map(|&i| {
                let t = clip_to_autoencoder_input(&clips[i].waveform, stft)?;
                Ok(Sample {
                    input: t.clone(),
                    target: Target::Values(t),
                })
            })
            .collect()
    };
    let train = to_samples(&train_idx)?;
    let val = to_samples(&val_idx)?;
    let model = Model::new(
        autoencoder_specs(literal_softmax),
        AE_INPUT.to_vec(),
        cfg.seed,
    )?;
    let (model, history) = nn::train(model, &train, &val, cfg, LossKind::Mse)?;
    Ok(AeBundle { model, history })
}

/// Flattened encoder latent (15x8x8 = 960 values) of a clip.
pub fn embed(ae: &AeBundle, w: &Waveform, stft: &StftParams) -> Result<Vec<f64>, EvalError> {
    let input = clip_to_autoencoder_input(w, stft)?;
    let cache = ae.model.forward(&input, nn::Mode::Infer)?;
    let latent = &cache.activations[AE_ENCODER_LAYERS];
    debug_assert_eq!(latent.numel(), AE_LATENT);
    Ok(latent.data().to_vec())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Embedding distances of generated clip `x` and baseline mix `z` to the
/// content and style clips, with baseline-normalized ratios. A zero
/// denominator flags the pair (ratio `None`, excluded from medians).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreservationRecord {
    pub d_x_xc: f64,
    pub d_x_xs: f64,
    pub d_z_xc: f64,
    pub d_z_xs: f64,
    pub ratio_content: Option<f64>,
    pub ratio_style: Option<f64>,
}

pub fn preservation_ratios(
    x: &Waveform,
    x_c: &Waveform,
    x_s: &Waveform,
    z: &Waveform,
    ae: &AeBundle,
    stft: &StftParams,
) -> Result<PreservationRecord, EvalError> {
    let ex = embed(ae, x, stft)?;
    let ec = embed(ae, x_c, stft)?;
    let es = embed(ae, x_s, stft)?;
    let ez = embed(ae, z, stft)?;
    let d_x_xc = euclidean(&ex, &ec);
    let d_x_xs = euclidean(&ex, &es);
    let d_z_xc = euclidean(&ez, &ec);
    let d_z_xs = euclidean(&ez, &es);
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    Ok(PreservationRecord {
        d_x_xc,
        d_x_xs,
        d_z_xc,
        d_z_xs,
        ratio_content: ratio(d_x_xc, d_z_xc),
        ratio_style: ratio(d_x_xs, d_z_xs),
    })
}

/// Median of a non-empty slice; NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Per-pair evaluation row (one generated transfer clip and one mix).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairEval {
    pub pair_index: usize,
    pub content_class: usize,
    pub style_class: usize,
    pub content_source: String,
    pub style_source: String,
    pub pred_transfer: usize,
    pub pred_mix: usize,
    pub transfer_content_ok: bool,
    pub transfer_style_ok: bool,
    pub mix_content_ok: bool,
    pub mix_style_ok: bool,
    pub d_x_xc: f64,
    pub d_x_xs: f64,
    pub d_z_xc: f64,
    pub d_z_xs: f64,
    pub ratio_content: Option<f64>,
    pub ratio_style: Option<f64>,
    pub first_total_loss: f64,
    pub final_total_loss: f64,
}

/// Aggregate experiment record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub p0: f64,
    pub p1: f64,
    pub value: f64,
    pub pt_content: f64,
    pub pt_style: f64,
    pub pm_content: f64,
    pub pm_style: f64,
    pub median_d_x_xc: f64,
    pub median_d_x_xs: f64,
    pub median_ratio_content: f64,
    pub median_ratio_style: f64,
    pub flagged_pairs: usize,
    pub pairs: Vec<PairEval>,
}

/// Generate the transfer clip and the mixed clip for one pair, with
/// per-pair seeds derived from the config seed and the pair index.
pub fn generate_pair(
    pair: &PairSpec,
    pair_index: usize,
    cfg: &TransferConfig,
    mix_gain_db: f64,
    stft: &StftParams,
) -> Result<(GeneratedRecord, GeneratedRecord, Vec<transfer::LossBreakdown>), EvalError> {
    let mut pair_cfg = cfg.clone();
    pair_cfg.seed = derive_seed(cfg.seed, pair_index as u64);
    let out = transfer::run_transfer(&pair.content, &pair.style, &pair_cfg, stft)?;
    let mixed = mix::mix(&pair.content, &pair.style, mix_gain_db)?;
    let dt = GeneratedRecord {
        waveform: out.generated,
        content_label: pair.content_class,
        style_label: pair.style_class,
        condition: Condition::Transfer,
        content_source: pair.content_source.clone(),
        style_source: pair.style_source.clone(),
        config_echo: serde_json::to_string(&pair_cfg).unwrap_or_default(),
    };
    let dm = GeneratedRecord {
        waveform: mixed.waveform,
        content_label: pair.content_class,
        style_label: pair.style_class,
        condition: Condition::Mix,
        content_source: pair.content_source.clone(),
        style_source: pair.style_source.clone(),
        config_echo: format!("{{\"style_gain_db\":{mix_gain_db}}}"),
    };
    Ok((dt, dm, out.trace))
}

/// Run transfer + mix over every pair (fanned out over worker threads,
/// gathered in pair order) and score each pair against the trained models.
pub fn evaluate_pairs(
    pairs: &[PairSpec],
    classifier: &ClassifierBundle,
    ae: &AeBundle,
    cfg: &TransferConfig,
    mix_gain_db: f64,
    stft: &StftParams,
) -> Result<(Vec<GeneratedRecord>, Vec<GeneratedRecord>, Vec<PairEval>), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let generated: Vec<(GeneratedRecord, GeneratedRecord, Vec<transfer::LossBreakdown>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate_pair(p, i, cfg, mix_gain_db, stft))
        .collect::<Result<_, _>>()?;

    let rows: Vec<PairEval> = generated
        .par_iter()
        .enumerate()
        .map(|(i, (dt, dm, trace))| {
            let pres = preservation_ratios(
                &dt.waveform,
                &pairs[i].content,
                &pairs[i].style,
                &dm.waveform,
                ae,
                stft,
            )?;
            let pt = nn::argmax(
                classifier
                    .model
                    .predict(&clip_to_classifier_input(&dt.waveform, stft)?)?
                    .data(),
            );
            let pm = nn::argmax(
                classifier
                    .model
                    .predict(&clip_to_classifier_input(&dm.waveform, stft)?)?
                    .data(),
            );
            Ok(PairEval {
                pair_index: i,
                content_class: pairs[i].content_class,
                style_class: pairs[i].style_class,
                content_source: pairs[i].content_source.clone(),
                style_source: pairs[i].style_source.clone(),
                pred_transfer: pt,
                pred_mix: pm,
                transfer_content_ok: pt == pairs[i].content_class,
                transfer_style_ok: pt == pairs[i].style_class,
                mix_content_ok: pm == pairs[i].content_class,
                mix_style_ok: pm == pairs[i].style_class,
                d_x_xc: pres.d_x_xc,
                d_x_xs: pres.d_x_xs,
                d_z_xc: pres.d_z_xc,
                d_z_xs: pres.d_z_xs,
                ratio_content: pres.ratio_content,
                ratio_style: pres.ratio_style,
                first_total_loss: trace.first().map(|l| l.total).unwrap_or(f64::NAN),
                final_total_loss: trace.last().map(|l| l.total).unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let (dt, dm) = generated.into_iter().map(|(a, b, _)| (a, b)).unzip();
    Ok((dt, dm, rows))
}

/// Assemble the full report: condition accuracies, preservation medians,
/// and the augmentation value from retraining.
pub fn build_report(
    clips: &[LabeledClip],
    classifier: &ClassifierBundle,
    dt: &[GeneratedRecord],
    dm: &[GeneratedRecord],
    rows: Vec<PairEval>,
    retrain_cfg: &TrainConfig,
    stft: &StftParams,
) -> Result<EvalReport, EvalError> {
    let (pt_content, pt_style) = condition_accuracy(&classifier.model, dt, stft)?;
    let (pm_content, pm_style) = condition_accuracy(&classifier.model, dm, stft)?;
    let augmented = retrain_with_augmentation(clips, classifier, dt, retrain_cfg, stft)?;
    let d_x_xc: Vec<f64> = rows.iter().map(|r| r.d_x_xc).collect();
    let d_x_xs: Vec<f64> = rows.iter().map(|r| r.d_x_xs).collect();
    let rc: Vec<f64> = rows.iter().filter_map(|r| r.ratio_content).collect();
    let rs: Vec<f64> = rows.iter().filter_map(|r| r.ratio_style).collect();
    let flagged = rows
        .iter()
        .filter(|r| r.ratio_content.is_none() || r.ratio_style.is_none())
        .count();
    Ok(EvalReport {
        p0: classifier.p0,
        p1: augmented.p1,
        value: augmented.value,
        pt_content,
        pt_style,
        pm_content,
        pm_style,
        median_d_x_xc: median(&d_x_xc),
        median_d_x_xs: median(&d_x_xs),
        median_ratio_content: median(&rc),
        median_ratio_style: median(&rs),
        flagged_pairs: flagged,
        pairs: rows,
    })
}

/// Foreground/background pools for pairing, excluding the classifier's test
/// clips so augmentation cannot leak into the held-out set.
pub fn pairing_pools(
    clips: &[LabeledClip],
    exclude_ids: &[String],
) -> (Vec<corpus::SourceClip>, Vec<corpus::SourceClip>) {
    let excluded: std::collections::HashSet<&str> =
        exclude_ids.iter().map(|s| s.as_str()).collect();
    let to_source = |c: &LabeledClip| corpus::SourceClip {
        id: c.id.clone(),
        class_id: c.class_id,
        class_name: c.class_name.clone(),
        waveform: c.waveform.clone(),
    };
    let fg = clips
        .iter()
        .filter(|c| c.role == ClipRole::Content && !excluded.contains(c.id.as_str()))
        .map(to_source)
        .collect();
    let bg = clips
        .iter()
        .filter(|c| c.role == ClipRole::Style && !excluded.contains(c.id.as_str()))
        .map(to_source)
        .collect();
    (fg, bg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SynthConfig;

    fn stft_params() -> StftParams {
        StftParams::default()
    }

    fn tiny_corpus() -> Vec<LabeledClip> {
        corpus::synth_corpus(&SynthConfig {
            clips_per_class: 10,
            seconds: 1.0,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn quick_train_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 11,
            patience: 50,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn classifier_flatten_is_exactly_6656() {
        let model = Model::new(classifier_specs(4), CLASSIFIER_INPUT.to_vec(), 1).unwrap();
        let flatten_idx = model
            .specs()
            .iter()
            .position(|s| matches!(s, LayerSpec::Flatten))
            .unwrap();
        assert_eq!(model.shape_into_layer(flatten_idx + 1), &[CLASSIFIER_FLATTEN]);
        // The documented conv/pool chain: 64x44 -> 62x42 -> 60x40 -> 30x20
        // -> 28x18 -> 26x16 -> 13x8, times 64 channels = 6656.
        assert_eq!(model.shape_into_layer(4), &[60, 40, 32]);
        assert_eq!(model.shape_into_layer(10), &[26, 16, 64]);
        assert_eq!(model.shape_into_layer(12), &[13, 8, 64]);
    }

    #[test]
    fn classifier_dropout_rates_are_wired_in_order() {
        let rates: Vec<f64> = classifier_specs(4)
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect();
        assert_eq!(rates, vec![0.15, 0.2, 0.5]);
    }

    #[test]
    fn autoencoder_latent_is_15x8x8_and_output_matches_input() {
        let model = Model::new(autoencoder_specs(false), AE_INPUT.to_vec(), 1).unwrap();
        assert_eq!(model.shape_into_layer(AE_ENCODER_LAYERS), &[15, 8, 8]);
        assert_eq!(model.output_shape(), &AE_INPUT);
        let literal = Model::new(autoencoder_specs(true), AE_INPUT.to_vec(), 1).unwrap();
        assert_eq!(literal.output_shape(), &AE_INPUT);
    }

    #[test]
    fn silence_maps_to_all_zero_classifier_grid() {
        let w = Waveform::new(vec![0.0; 22050], 22050).unwrap();
        let t = clip_to_classifier_input(&w, &stft_params()).unwrap();
        assert_eq!(t.shape(), &CLASSIFIER_INPUT);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn autoencoder_input_shape_and_delta_channel() {
        let w = Waveform::new(
            (0..22050)
                .map(|i| 0.5 * (std::f64::consts::TAU * 500.0 * i as f64 / 22050.0).sin())
                .collect(),
            22050,
        )
        .unwrap();
        let t = clip_to_autoencoder_input(&w, &stft_params()).unwrap();
        assert_eq!(t.shape(), &AE_INPUT);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // Constant magnitude -> constant delta channel (all zeros after the
        // degenerate min-max).
        let silence = Waveform::new(vec![0.0; 22050], 22050).unwrap();
        let ts = clip_to_autoencoder_input(&silence, &stft_params()).unwrap();
        let deltas: Vec<f64> = ts.data().iter().skip(1).step_by(2).copied().collect();
        assert_eq!(deltas.len(), AE_INPUT[0] * AE_INPUT[1]);
        assert!(deltas.iter().all(|&v| v == deltas[0]));
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let clips: Vec<LabeledClip> = tiny_corpus()
            .into_iter()
            .filter(|c| c.class_id == 0)
            .collect();
        assert!(matches!(
            train_base_classifier(&clips, &quick_train_cfg(1), &stft_params()),
            Err(EvalError::TooFewClasses { found: 1 })
        ));
    }

    #[test]
    fn undersized_class_is_rejected() {
        let mut clips = tiny_corpus();
        let small = clips.iter().position(|c| c.class_id == 1).unwrap();
        clips.remove(small);
        match train_base_classifier(&clips, &quick_train_cfg(1), &stft_params()) {
            Err(EvalError::ClassTooSmall { class, count, min }) => {
                assert_eq!(class, "pulses_1");
                assert_eq!(count, 9);
                assert_eq!(min, MIN_CLIPS_PER_CLASS);
            }
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn base_classifier_is_deterministic() {
        let clips = tiny_corpus();
        let a = train_base_classifier(&clips, &quick_train_cfg(1), &stft_params()).unwrap();
        let b = train_base_classifier(&clips, &quick_train_cfg(1), &stft_params()).unwrap();
        assert_eq!(a.p0.to_bits(), b.p0.to_bits());
        assert_eq!(a.test_idx, b.test_idx);
    }

    fn constant_predictor(class: usize, n_classes: usize) -> Model {
        let mut model = Model::new(
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: n_classes },
                LayerSpec::Softmax,
            ],
            CLASSIFIER_INPUT.to_vec(),
            3,
        )
        .unwrap();
        for p in model.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        // Bias one-hot: the model always predicts `class`.
        model.params_mut()[1].data_mut()[class] = 5.0;
        model
    }

    fn record_with(content: usize, style: usize, w: Waveform) -> GeneratedRecord {
        GeneratedRecord {
            waveform: w,
            content_label: content,
            style_label: style,
            condition: Condition::Transfer,
            content_source: "c".into(),
            style_source: "s".into(),
            config_echo: String::new(),
        }
    }

    #[test]
    fn clip_predicted_as_style_scores_zero_one() {
        let w = Waveform::new(vec![0.1; 22050], 22050).unwrap();
        let model = constant_predictor(2, 4);
        let set = vec![record_with(0, 2, w)];
        let (content_acc, style_acc) = condition_accuracy(&model, &set, &stft_params()).unwrap();
        assert_eq!((content_acc, style_acc), (0.0, 1.0));
    }

    #[test]
    fn condition_accuracy_matches_brute_recount() {
        let clips = tiny_corpus();
        let model = constant_predictor(1, 4);
        let set: Vec<GeneratedRecord> = clips
            .iter()
            .take(12)
            .enumerate()
            .map(|(i, c)| record_with(c.class_id, (c.class_id + 1 + i % 3) % 4, c.waveform.clone()))
            .collect();
        let (content_acc, style_acc) = condition_accuracy(&model, &set, &stft_params()).unwrap();
        let preds = predictions(&model, &set, &stft_params()).unwrap();
        let recount_content = set
            .iter()
            .zip(&preds)
            .filter(|(r, p)| r.content_label == **p)
            .count() as f64
            / set.len() as f64;
        let recount_style = set
            .iter()
            .zip(&preds)
            .filter(|(r, p)| r.style_label == **p)
            .count() as f64
            / set.len() as f64;
        assert_eq!(content_acc, recount_content);
        assert_eq!(style_acc, recount_style);
        assert!(matches!(
            condition_accuracy(&model, &[], &stft_params()),
            Err(EvalError::EmptySet)
        ));
    }

    #[test]
    fn leakage_is_detected() {
        let clips = tiny_corpus();
        let base = train_base_classifier(&clips, &quick_train_cfg(1), &stft_params()).unwrap();
        let leak_id = base.test_ids[0].clone();
        let mut rec = record_with(0, 2, clips[0].waveform.clone());
        rec.content_source = leak_id.clone();
        let err = retrain_with_augmentation(
            &clips,
            &base,
            &[rec],
            &quick_train_cfg(1),
            &stft_params(),
        )
        .unwrap_err();
        match err {
            EvalError::TestLeakage { ids } => assert_eq!(ids, vec![leak_id]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embeddings_have_latent_size_and_are_deterministic() {
        let clips = tiny_corpus();
        let ae = train_autoencoder(&clips, &quick_train_cfg(2), &stft_params(), false).unwrap();
        let e1 = embed(&ae, &clips[0].waveform, &stft_params()).unwrap();
        let e2 = embed(&ae, &clips[0].waveform, &stft_params()).unwrap();
        assert_eq!(e1.len(), AE_LATENT);
        assert_eq!(e1, e2);
        // Silence and a loud clip embed differently after training.
        let silence = Waveform::new(vec![0.0; clips[0].waveform.len()], 22050).unwrap();
        let es = embed(&ae, &silence, &stft_params()).unwrap();
        let el = embed(&ae, &clips[0].waveform, &stft_params()).unwrap();
        assert!(euclidean(&es, &el) > 0.0);
    }

    #[test]
    fn preservation_ratio_edge_cases() {
        let clips = tiny_corpus();
        let ae = train_autoencoder(&clips, &quick_train_cfg(1), &stft_params(), false).unwrap();
        let (c, s, z) = (
            &clips[0].waveform,
            &clips[25].waveform,
            &clips[30].waveform,
        );
        // x = x_c: content distance and ratio are zero.
        let r = preservation_ratios(c, c, s, z, &ae, &stft_params()).unwrap();
        assert_eq!(r.d_x_xc, 0.0);
        assert_eq!(r.ratio_content, Some(0.0));
        // x = z: both ratios are exactly one.
        let r = preservation_ratios(z, c, s, z, &ae, &stft_params()).unwrap();
        assert_eq!(r.ratio_content, Some(1.0));
        assert_eq!(r.ratio_style, Some(1.0));
        // Euclidean symmetry and triangle inequality on a clip triple.
        let (ec, es, ez) = (
            embed(&ae, c, &stft_params()).unwrap(),
            embed(&ae, s, &stft_params()).unwrap(),
            embed(&ae, z, &stft_params()).unwrap(),
        );
        assert_eq!(euclidean(&ec, &es), euclidean(&es, &ec));
        assert!(euclidean(&ec, &es) <= euclidean(&ec, &ez) + euclidean(&ez, &es) + 1e-12);
    }

    #[test]
    fn median_handles_even_odd_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
