//! Model container: shape-checked layer stacks, seeded initialization,
//! forward/backward passes, and the on-disk format.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::layer::{Aux, Layer, LayerSpec, ParamGrads};
use super::NnError;
use crate::rng::{derive_seed, seeded_rng};
use crate::tensor::Tensor;

const INIT_TAG: u64 = 0x6d6f_6465;
const MASK_TAG: u64 = 0x6d61_736b;

/// Forward pass behavior: dropout is active only in training mode, with
/// masks drawn deterministically from the given seed.
#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Infer,
    Train { dropout_seed: u64 },
}

/// Everything backward needs from a forward pass: the input to every layer
/// (plus the final output) and per-layer auxiliary state.
pub struct ForwardCache {
    /// `activations[i]` is the input to layer `i`; the last entry is the output.
    pub activations: Vec<Tensor>,
    pub(crate) aux: Vec<Aux>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("cache holds the output")
    }
}

/// An ordered stack of layers with parameters, validated at construction so
/// adjacent shapes compose.
#[derive(Clone, Debug)]
pub struct Model {
    specs: Vec<LayerSpec>,
    pub(crate) layers: Vec<Layer>,
    input_shape: Vec<usize>,
    /// `layer_shapes[i]` is the input shape of layer `i`; last is the output shape.
    layer_shapes: Vec<Vec<usize>>,
    seed: u64,
}

impl Model {
    /// Build a model from layer specs, validating the whole shape chain, and
    /// initialize parameters from `seed` (He-normal into ReLU, Glorot into
    /// sigmoid/softmax).
    pub fn new(specs: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64) -> Result<Model, NnError> {
        if specs.is_empty() {
            return Err(NnError::BadSpec {
                layer: 0,
                detail: "model needs at least one layer".into(),
            });
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, spec) in specs.iter().enumerate() {
            let out = spec.output_shape(i, shapes.last().unwrap())?;
            shapes.push(out);
        }
        let mut rng = seeded_rng(derive_seed(seed, INIT_TAG));
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let in_shape = &shapes[i];
            let layer = match *spec {
                LayerSpec::Conv2dValid { kh, kw, out_channels }
                | LayerSpec::Conv2dSame { kh, kw, out_channels } => {
                    let same = matches!(spec, LayerSpec::Conv2dSame { .. });
                    let in_c = in_shape[2];
                    let fan_in = kh * kw * in_c;
                    let fan_out = kh * kw * out_channels;
                    let std = init_std(&specs, i, fan_in, fan_out);
                    let weights = Tensor::from_fn(vec![kh, kw, in_c, out_channels], |_| {
                        std * rng.sample::<f64, _>(StandardNormal)
                    });
                    Layer::Conv2d {
                        same,
                        kh,
                        kw,
                        in_c,
                        out_c: out_channels,
                        weights,
                        bias: Tensor::zeros(vec![out_channels]),
                    }
                }
                LayerSpec::Conv1dValid { k, out_channels } => {
                    let in_c = in_shape[1];
                    let std = init_std(&specs, i, k * in_c, k * out_channels);
                    let weights = Tensor::from_fn(vec![k, in_c, out_channels], |_| {
                        std * rng.sample::<f64, _>(StandardNormal)
                    });
                    Layer::Conv1d {
                        k,
                        in_c,
                        out_c: out_channels,
                        weights,
                        bias: Tensor::zeros(vec![out_channels]),
                    }
                }
                LayerSpec::Dense { units } => {
                    let n_in = in_shape[0];
                    let std = init_std(&specs, i, n_in, units);
                    let weights = Tensor::from_fn(vec![n_in, units], |_| {
                        std * rng.sample::<f64, _>(StandardNormal)
                    });
                    Layer::Dense {
                        weights,
                        bias: Tensor::zeros(vec![units]),
                    }
                }
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Upsample2 => Layer::Upsample2,
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Softmax => Layer::Softmax,
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers.push(layer);
        }
        Ok(Model {
            specs,
            layers,
            input_shape,
            layer_shapes: shapes,
            seed,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layer_shapes.last().unwrap()
    }

    /// Input shape of layer `i` (the activation shape entering it).
    pub fn shape_into_layer(&self, i: usize) -> &[usize] {
        &self.layer_shapes[i]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<ForwardCache, NnError> {
        if input.shape() != self.input_shape {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: self.input_shape.clone(),
                actual: input.shape().to_vec(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = activations.last().unwrap();
            let mask = match (layer, mode) {
                (Layer::Dropout { rate }, Mode::Train { dropout_seed }) => {
                    let mut rng = seeded_rng(derive_seed(
                        derive_seed(dropout_seed, MASK_TAG),
                        i as u64,
                    ));
                    let keep = 1.0 / (1.0 - rate);
                    Some(
                        (0..x.numel())
                            .map(|_| if rng.gen::<f64>() < *rate { 0.0 } else { keep })
                            .collect(),
                    )
                }
                _ => None,
            };
            let (out, a) = layer.forward(x, &self.layer_shapes[i + 1], mask);
            activations.push(out);
            aux.push(a);
        }
        Ok(ForwardCache { activations, aux })
    }

    /// Inference-mode forward returning just the output.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward(input, Mode::Infer)?.activations.pop().unwrap())
    }

    /// Backpropagate `loss_grad` (gradient of a scalar loss in the output)
    /// through every layer. Returns per-layer parameter gradients (aligned
    /// with the layer list) and the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        loss_grad: &Tensor,
    ) -> Result<(Vec<Option<ParamGrads>>, Tensor), NnError> {
        if loss_grad.shape() != self.output_shape() {
            return Err(NnError::ShapeMismatch {
                layer: self.layers.len(),
                expected: self.output_shape().to_vec(),
                actual: loss_grad.shape().to_vec(),
            });
        }
        self.backward_from(cache, self.layers.len() - 1, loss_grad.clone())
    }

    /// Backpropagate starting below layer `start` (inclusive); `grad` is the
    /// gradient at the *output* of layer `start`.
    pub(crate) fn backward_from(
        &self,
        cache: &ForwardCache,
        start: usize,
        grad: Tensor,
    ) -> Result<(Vec<Option<ParamGrads>>, Tensor), NnError> {
        self.check_cache(cache)?;
        let mut grads: Vec<Option<ParamGrads>> = (0..self.layers.len()).map(|_| None).collect();
        let mut g = grad;
        for i in (0..=start).rev() {
            let (gi, pg) = self.layers[i].backward(
                &cache.activations[i],
                &cache.activations[i + 1],
                &cache.aux[i],
                &g,
            );
            grads[i] = pg;
            g = gi;
        }
        Ok((grads, g))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<(), NnError> {
        let ok = cache.activations.len() == self.layers.len() + 1
            && cache
                .activations
                .iter()
                .zip(&self.layer_shapes)
                .all(|(a, s)| a.shape() == &s[..]);
        if ok {
            Ok(())
        } else {
            Err(NnError::StaleCache)
        }
    }

    /// Parameter tensors (weights, bias alternating) in layer order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Flatten per-layer gradients into the same order as [`Model::params`].
    pub fn flatten_grads(grads: &[Option<ParamGrads>]) -> Vec<&Tensor> {
        grads
            .iter()
            .filter_map(|g| g.as_ref())
            .flat_map(|g| [&g.weights, &g.bias])
            .collect()
    }

    /// Write the model: a binary container (length-prefixed UTF-8 layer
    /// specs, then little-endian f64 parameter blocks in layer order) plus a
    /// `<path>.json` sidecar with shapes and the seed.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&(self.specs.len() as u32).to_le_bytes());
        for spec in &self.specs {
            let text = serde_json::to_string(spec).expect("layer specs serialize");
            buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
            buf.extend_from_slice(text.as_bytes());
        }
        for p in self.params() {
            for v in p.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
        f.write_all(&buf).map_err(|e| file_err(path, e))?;

        let sidecar = serde_json::json!({
            "input_shape": self.input_shape,
            "output_shape": self.output_shape(),
            "layer_shapes": self.layer_shapes,
            "seed": self.seed,
            "parameter_count": self.params().iter().map(|p| p.numel()).sum::<usize>(),
        });
        std::fs::write(
            sidecar_path(path),
            serde_json::to_string_pretty(&sidecar).unwrap(),
        )
        .map_err(|e| file_err(path, e))?;
        Ok(())
    }

    /// Load a model saved by [`Model::save`]; requires the JSON sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Model, NnError> {
        let path = path.as_ref();
        let sidecar: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(sidecar_path(path)).map_err(|e| file_err(path, e))?,
        )
        .map_err(|e| NnError::ModelFile {
            path: path.display().to_string(),
            detail: format!("bad sidecar: {e}"),
        })?;
        let input_shape: Vec<usize> =
            serde_json::from_value(sidecar["input_shape"].clone()).map_err(|e| NnError::ModelFile {
                path: path.display().to_string(),
                detail: format!("bad input_shape: {e}"),
            })?;
        let seed = sidecar["seed"].as_u64().unwrap_or(0);

        let mut f = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(|e| file_err(path, e))?;
        let bad = |detail: &str| NnError::ModelFile {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<std::ops::Range<usize>, NnError> {
            if *at + n > buf.len() {
                return Err(bad("truncated model file"));
            }
            let r = *at..*at + n;
            *at += n;
            Ok(r)
        };
        let n_specs = u32::from_le_bytes(buf[take(&mut at, 4)?].try_into().unwrap()) as usize;
        let mut specs = Vec::with_capacity(n_specs);
        for _ in 0..n_specs {
            let len = u32::from_le_bytes(buf[take(&mut at, 4)?].try_into().unwrap()) as usize;
            let text = std::str::from_utf8(&buf[take(&mut at, len)?])
                .map_err(|_| bad("spec header is not UTF-8"))?;
            specs.push(
                serde_json::from_str::<LayerSpec>(text)
                    .map_err(|_| bad("unparsable layer spec"))?,
            );
        }
        let mut model = Model::new(specs, input_shape, seed)?;
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v = f64::from_le_bytes(buf[take(&mut at, 8)?].try_into().unwrap());
            }
        }
        if at != buf.len() {
            return Err(bad("trailing bytes after parameter blocks"));
        }
        Ok(model)
    }
}

/// He-normal into ReLU, Glorot into sigmoid/softmax (scanning past pooling,
/// dropout, resizing layers to find the next activation).
fn init_std(specs: &[LayerSpec], at: usize, fan_in: usize, fan_out: usize) -> f64 {
    for spec in &specs[at + 1..] {
        match spec {
            LayerSpec::Relu => return (2.0 / fan_in as f64).sqrt(),
            LayerSpec::Sigmoid | LayerSpec::Softmax => {
                return (2.0 / (fan_in + fan_out) as f64).sqrt()
            }
            LayerSpec::MaxPool2 | LayerSpec::Upsample2 | LayerSpec::Dropout { .. }
            | LayerSpec::Flatten => continue,
            _ => break,
        }
    }
    (2.0 / fan_in as f64).sqrt()
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

fn file_err(path: &Path, e: std::io::Error) -> NnError {
    NnError::ModelFile {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}
