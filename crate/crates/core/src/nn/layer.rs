//! Layer kinds, their shape rules, and per-layer forward/backward passes.
//!
//! Convolutions run through im2col + gemm. Layout conventions: 3-d tensors
//! are `[height, width, channels]`, 2-d (conv1d) are `[time, channels]`,
//! conv2d weights are `[kh, kw, in_c, out_c]`, conv1d weights are
//! `[k, in_c, out_c]`, dense weights are `[n_in, n_out]`.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::tensor::{gemm_strided, matmul, Tensor};

/// Architecture description of one layer, without parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2dValid { kh: usize, kw: usize, out_channels: usize },
    Conv2dSame { kh: usize, kw: usize, out_channels: usize },
    Conv1dValid { k: usize, out_channels: usize },
    MaxPool2,
    Upsample2,
    Dense { units: usize },
    Relu,
    Sigmoid,
    Softmax,
    Dropout { rate: f64 },
    Flatten,
}

impl LayerSpec {
    /// Output shape for a given input shape, or why the layer cannot accept it.
    pub fn output_shape(&self, layer: usize, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = |detail: String| NnError::BadSpec { layer, detail };
        match *self {
            LayerSpec::Conv2dValid { kh, kw, out_channels } => {
                let [h, w, _c] = expect_3d(layer, input)?;
                if h < kh || w < kw {
                    return Err(bad(format!("input {input:?} smaller than {kh}x{kw} kernel")));
                }
                Ok(vec![h - kh + 1, w - kw + 1, out_channels])
            }
            LayerSpec::Conv2dSame { kh, kw, out_channels } => {
                let [h, w, _c] = expect_3d(layer, input)?;
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(bad(format!("same-padding needs odd kernel, got {kh}x{kw}")));
                }
                Ok(vec![h, w, out_channels])
            }
            LayerSpec::Conv1dValid { k, out_channels } => {
                if input.len() != 2 {
                    return Err(bad(format!("conv1d needs [time, channels], got {input:?}")));
                }
                if input[0] < k {
                    return Err(bad(format!("input {input:?} shorter than kernel {k}")));
                }
                Ok(vec![input[0] - k + 1, out_channels])
            }
            LayerSpec::MaxPool2 => {
                let [h, w, c] = expect_3d(layer, input)?;
                if h < 2 || w < 2 {
                    return Err(bad(format!("cannot pool {input:?}")));
                }
                Ok(vec![h / 2, w / 2, c])
            }
            LayerSpec::Upsample2 => {
                let [h, w, c] = expect_3d(layer, input)?;
                Ok(vec![h * 2, w * 2, c])
            }
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err(bad(format!("dense needs a flat input, got {input:?}")));
                }
                Ok(vec![units])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 && input.len() != 3 {
                    return Err(bad(format!(
                        "softmax expects a vector or [h,w,c] tensor, got {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(bad(format!("drop rate {rate} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2dValid { .. }
                | LayerSpec::Conv2dSame { .. }
                | LayerSpec::Conv1dValid { .. }
                | LayerSpec::Dense { .. }
        )
    }
}

fn expect_3d(layer: usize, input: &[usize]) -> Result<[usize; 3], NnError> {
    if input.len() == 3 {
        Ok([input[0], input[1], input[2]])
    } else {
        Err(NnError::BadSpec {
            layer,
            detail: format!("expected [h, w, c] input, got {input:?}"),
        })
    }
}

/// A layer with its parameters.
#[derive(Clone, Debug)]
pub(crate) enum Layer {
    Conv2d {
        same: bool,
        kh: usize,
        kw: usize,
        in_c: usize,
        out_c: usize,
        weights: Tensor,
        bias: Tensor,
    },
    Conv1d {
        k: usize,
        in_c: usize,
        out_c: usize,
        weights: Tensor,
        bias: Tensor,
    },
    MaxPool2,
    Upsample2,
    Dense {
        weights: Tensor,
        bias: Tensor,
    },
    Relu,
    Sigmoid,
    Softmax,
    Dropout {
        rate: f64,
    },
    Flatten,
}

/// Per-layer state captured during forward that backward needs.
#[derive(Clone, Debug)]
pub(crate) enum Aux {
    None,
    /// Inverted-dropout mask (0 or 1/(1-rate)).
    Mask(Vec<f64>),
    /// Flat input index of each pooled maximum.
    MaxIdx(Vec<usize>),
}

/// Gradients for one parameterized layer; shapes mirror the parameters.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub(crate) fn forward(
        &self,
        input: &Tensor,
        out_shape: &[usize],
        dropout_mask: Option<Vec<f64>>,
    ) -> (Tensor, Aux) {
        match self {
            Layer::Conv2d { same, kh, kw, in_c, out_c, weights, bias } => {
                let out = conv2d_forward(input, *same, *kh, *kw, *in_c, *out_c, weights, bias);
                debug_assert_eq!(out.shape(), out_shape);
                (out, Aux::None)
            }
            Layer::Conv1d { k, in_c, out_c, weights, bias } => {
                let out = conv1d_forward(input, *k, *in_c, *out_c, weights, bias);
                debug_assert_eq!(out.shape(), out_shape);
                (out, Aux::None)
            }
            Layer::MaxPool2 => maxpool2_forward(input),
            Layer::Upsample2 => (upsample2_forward(input), Aux::None),
            Layer::Dense { weights, bias } => {
                let n_in = weights.shape()[0];
                let n_out = weights.shape()[1];
                let mut out = bias.data().to_vec();
                gemm_strided(
                    1, n_in, n_out, 1.0,
                    input.data(), n_in as isize, 1,
                    weights.data(), n_out as isize, 1,
                    1.0,
                    &mut out, n_out as isize, 1,
                );
                (Tensor::new(vec![n_out], out), Aux::None)
            }
            Layer::Relu => (input.map(|v| v.max(0.0)), Aux::None),
            Layer::Sigmoid => (input.map(|v| 1.0 / (1.0 + (-v).exp())), Aux::None),
            Layer::Softmax => (softmax_forward(input), Aux::None),
            Layer::Dropout { rate } => match dropout_mask {
                Some(mask) => {
                    debug_assert_eq!(mask.len(), input.numel());
                    let data = input
                        .data()
                        .iter()
                        .zip(&mask)
                        .map(|(&v, &m)| v * m)
                        .collect();
                    (Tensor::new(input.shape().to_vec(), data), Aux::Mask(mask))
                }
                None => {
                    let _ = rate;
                    (input.clone(), Aux::None)
                }
            },
            Layer::Flatten => (input.clone().reshaped(vec![input.numel()]), Aux::None),
        }
    }

    /// Returns (input gradient, parameter gradients if any).
    pub(crate) fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        aux: &Aux,
        grad_out: &Tensor,
    ) -> (Tensor, Option<ParamGrads>) {
        match self {
            Layer::Conv2d { same, kh, kw, in_c, out_c, weights, .. } => {
                let (gi, gw, gb) =
                    conv2d_backward(input, *same, *kh, *kw, *in_c, *out_c, weights, grad_out);
                (gi, Some(ParamGrads { weights: gw, bias: gb }))
            }
            Layer::Conv1d { k, in_c, out_c, weights, .. } => {
                let (gi, gw, gb) = conv1d_backward(input, *k, *in_c, *out_c, weights, grad_out);
                (gi, Some(ParamGrads { weights: gw, bias: gb }))
            }
            Layer::MaxPool2 => {
                let Aux::MaxIdx(idx) = aux else {
                    unreachable!("maxpool backward without indices")
                };
                let mut gi = vec![0.0; input.numel()];
                for (o, &i) in idx.iter().enumerate() {
                    gi[i] += grad_out.data()[o];
                }
                (Tensor::new(input.shape().to_vec(), gi), None)
            }
            Layer::Upsample2 => (upsample2_backward(input.shape(), grad_out), None),
            Layer::Dense { weights, .. } => {
                let n_in = weights.shape()[0];
                let n_out = weights.shape()[1];
                let mut gw = vec![0.0; n_in * n_out];
                // outer product input (n_in x 1) * grad (1 x n_out)
                gemm_strided(
                    n_in, 1, n_out, 1.0,
                    input.data(), 1, 1,
                    grad_out.data(), n_out as isize, 1,
                    0.0,
                    &mut gw, n_out as isize, 1,
                );
                let mut gi = vec![0.0; n_in];
                gemm_strided(
                    n_in, n_out, 1, 1.0,
                    weights.data(), n_out as isize, 1,
                    grad_out.data(), 1, 1,
                    0.0,
                    &mut gi, 1, 1,
                );
                (
                    Tensor::new(vec![n_in], gi),
                    Some(ParamGrads {
                        weights: Tensor::new(vec![n_in, n_out], gw),
                        bias: Tensor::new(vec![n_out], grad_out.data().to_vec()),
                    }),
                )
            }
            Layer::Relu => {
                let gi = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                (Tensor::new(input.shape().to_vec(), gi), None)
            }
            Layer::Sigmoid => {
                let gi = output
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect();
                (Tensor::new(input.shape().to_vec(), gi), None)
            }
            Layer::Softmax => (softmax_backward(output, grad_out), None),
            Layer::Dropout { .. } => match aux {
                Aux::Mask(mask) => {
                    let gi = grad_out
                        .data()
                        .iter()
                        .zip(mask)
                        .map(|(&g, &m)| g * m)
                        .collect();
                    (Tensor::new(input.shape().to_vec(), gi), None)
                }
                _ => (grad_out.clone(), None),
            },
            Layer::Flatten => (grad_out.clone().reshaped(input.shape().to_vec()), None),
        }
    }

    pub(crate) fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2d { weights, bias, .. }
            | Layer::Conv1d { weights, bias, .. }
            | Layer::Dense { weights, bias } => Some((weights, bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv2d { weights, bias, .. }
            | Layer::Conv1d { weights, bias, .. }
            | Layer::Dense { weights, bias } => Some((weights, bias)),
            _ => None,
        }
    }
}

fn pad_input(input: &Tensor, ph: usize, pw: usize, in_c: usize) -> (Vec<f64>, usize, usize) {
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut padded = vec![0.0; hp * wp * in_c];
    for i in 0..h {
        let src = &input.data()[i * w * in_c..(i + 1) * w * in_c];
        let dst = ((i + ph) * wp + pw) * in_c;
        padded[dst..dst + w * in_c].copy_from_slice(src);
    }
    (padded, hp, wp)
}

fn build_patches(
    data: &[f64],
    h: usize,
    w: usize,
    in_c: usize,
    kh: usize,
    kw: usize,
) -> (Vec<f64>, usize, usize, usize) {
    let ho = h - kh + 1;
    let wo = w - kw + 1;
    let k = kh * kw * in_c;
    let mut patches = vec![0.0; ho * wo * k];
    for i in 0..ho {
        for j in 0..wo {
            let row = (i * wo + j) * k;
            for di in 0..kh {
                let src = ((i + di) * w + j) * in_c;
                let dst = row + di * kw * in_c;
                patches[dst..dst + kw * in_c].copy_from_slice(&data[src..src + kw * in_c]);
            }
        }
    }
    (patches, ho, wo, k)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward(
    input: &Tensor,
    same: bool,
    kh: usize,
    kw: usize,
    in_c: usize,
    out_c: usize,
    weights: &Tensor,
    bias: &Tensor,
) -> Tensor {
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let (data, hp, wp);
    if same {
        let (p, a, b) = pad_input(input, (kh - 1) / 2, (kw - 1) / 2, in_c);
        data = p;
        hp = a;
        wp = b;
    } else {
        data = input.data().to_vec();
        hp = h;
        wp = w;
    }
    let (patches, ho, wo, k) = build_patches(&data, hp, wp, in_c, kh, kw);
    let m = ho * wo;
    let mut out = vec![0.0; m * out_c];
    matmul(m, k, out_c, &patches, weights.data(), &mut out);
    for row in out.chunks_exact_mut(out_c) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::new(vec![ho, wo, out_c], out)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    input: &Tensor,
    same: bool,
    kh: usize,
    kw: usize,
    in_c: usize,
    out_c: usize,
    weights: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let (ph, pw) = if same { ((kh - 1) / 2, (kw - 1) / 2) } else { (0, 0) };
    let (data, hp, wp);
    if same {
        let (p, a, b) = pad_input(input, ph, pw, in_c);
        data = p;
        hp = a;
        wp = b;
    } else {
        data = input.data().to_vec();
        hp = h;
        wp = w;
    }
    let (patches, ho, wo, k) = build_patches(&data, hp, wp, in_c, kh, kw);
    let m = ho * wo;

    let mut gb = vec![0.0; out_c];
    for row in grad_out.data().chunks_exact(out_c) {
        for (g, r) in gb.iter_mut().zip(row) {
            *g += r;
        }
    }

    // dW = patches^T (k x m) * grad (m x out_c)
    let mut gw = vec![0.0; k * out_c];
    gemm_strided(
        k, m, out_c, 1.0,
        &patches, 1, k as isize,
        grad_out.data(), out_c as isize, 1,
        0.0,
        &mut gw, out_c as isize, 1,
    );

    // dPatches = grad (m x out_c) * W^T (out_c x k)
    let mut gpatches = vec![0.0; m * k];
    gemm_strided(
        m, out_c, k, 1.0,
        grad_out.data(), out_c as isize, 1,
        weights.data(), 1, out_c as isize,
        0.0,
        &mut gpatches, k as isize, 1,
    );

    // col2im scatter-add into the (padded) input gradient.
    let mut gpad = vec![0.0; hp * wp * in_c];
    for i in 0..ho {
        for j in 0..wo {
            let row = (i * wo + j) * k;
            for di in 0..kh {
                let dst = ((i + di) * wp + j) * in_c;
                let src = row + di * kw * in_c;
                for x in 0..kw * in_c {
                    gpad[dst + x] += gpatches[src + x];
                }
            }
        }
    }
    let gi = if same {
        let mut g = vec![0.0; h * w * in_c];
        for i in 0..h {
            let src = ((i + ph) * wp + pw) * in_c;
            g[i * w * in_c..(i + 1) * w * in_c].copy_from_slice(&gpad[src..src + w * in_c]);
        }
        g
    } else {
        gpad
    };
    (
        Tensor::new(vec![h, w, in_c], gi),
        Tensor::new(vec![kh, kw, in_c, out_c], gw),
        Tensor::new(vec![out_c], gb),
    )
}

fn conv1d_forward(
    input: &Tensor,
    k: usize,
    in_c: usize,
    out_c: usize,
    weights: &Tensor,
    bias: &Tensor,
) -> Tensor {
    let t = input.shape()[0];
    let to = t - k + 1;
    let kk = k * in_c;
    // Patch rows overlap in the input buffer; a strided view avoids the copy.
    let mut out = vec![0.0; to * out_c];
    gemm_strided(
        to, kk, out_c, 1.0,
        input.data(), in_c as isize, 1,
        weights.data(), out_c as isize, 1,
        0.0,
        &mut out, out_c as isize, 1,
    );
    for row in out.chunks_exact_mut(out_c) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::new(vec![to, out_c], out)
}

fn conv1d_backward(
    input: &Tensor,
    k: usize,
    in_c: usize,
    out_c: usize,
    weights: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let t = input.shape()[0];
    let to = t - k + 1;
    let kk = k * in_c;

    let mut gb = vec![0.0; out_c];
    for row in grad_out.data().chunks_exact(out_c) {
        for (g, r) in gb.iter_mut().zip(row) {
            *g += r;
        }
    }

    let mut gw = vec![0.0; kk * out_c];
    gemm_strided(
        kk, to, out_c, 1.0,
        input.data(), 1, in_c as isize,
        grad_out.data(), out_c as isize, 1,
        0.0,
        &mut gw, out_c as isize, 1,
    );

    let mut gpatches = vec![0.0; to * kk];
    gemm_strided(
        to, out_c, kk, 1.0,
        grad_out.data(), out_c as isize, 1,
        weights.data(), 1, out_c as isize,
        0.0,
        &mut gpatches, kk as isize, 1,
    );
    let mut gi = vec![0.0; t * in_c];
    for r in 0..to {
        let row = r * kk;
        let dst = r * in_c;
        for x in 0..kk {
            gi[dst + x] += gpatches[row + x];
        }
    }
    (
        Tensor::new(vec![t, in_c], gi),
        Tensor::new(vec![k, in_c, out_c], gw),
        Tensor::new(vec![out_c], gb),
    )
}

fn maxpool2_forward(input: &Tensor) -> (Tensor, Aux) {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo * c];
    let mut idx = vec![0usize; ho * wo * c];
    let data = input.data();
    for i in 0..ho {
        for j in 0..wo {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for di in 0..2 {
                    for dj in 0..2 {
                        let at = ((2 * i + di) * w + (2 * j + dj)) * c + ch;
                        if data[at] > best {
                            best = data[at];
                            best_at = at;
                        }
                    }
                }
                let o = (i * wo + j) * c + ch;
                out[o] = best;
                idx[o] = best_at;
            }
        }
    }
    (Tensor::new(vec![ho, wo, c], out), Aux::MaxIdx(idx))
}

fn upsample2_forward(input: &Tensor) -> Tensor {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let mut out = vec![0.0; 4 * h * w * c];
    let (wo, data) = (2 * w, input.data());
    for i in 0..2 * h {
        for j in 0..wo {
            let src = ((i / 2) * w + j / 2) * c;
            let dst = (i * wo + j) * c;
            out[dst..dst + c].copy_from_slice(&data[src..src + c]);
        }
    }
    Tensor::new(vec![2 * h, 2 * w, c], out)
}

fn upsample2_backward(in_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let wo = 2 * w;
    let mut gi = vec![0.0; h * w * c];
    let g = grad_out.data();
    for i in 0..2 * h {
        for j in 0..wo {
            let dst = ((i / 2) * w + j / 2) * c;
            let src = (i * wo + j) * c;
            for ch in 0..c {
                gi[dst + ch] += g[src + ch];
            }
        }
    }
    Tensor::new(vec![h, w, c], gi)
}

/// Stable softmax over the last axis (the whole vector for 1-d input,
/// channels for [h, w, c] input).
fn softmax_forward(input: &Tensor) -> Tensor {
    let group = *input.shape().last().unwrap();
    let mut out = input.data().to_vec();
    for chunk in out.chunks_exact_mut(group) {
        let max = chunk.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in chunk.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

fn softmax_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let group = *output.shape().last().unwrap();
    let mut gi = vec![0.0; output.numel()];
    for (g_chunk, (y_chunk, go_chunk)) in gi
        .chunks_exact_mut(group)
        .zip(output.data().chunks_exact(group).zip(grad_out.data().chunks_exact(group)))
    {
        let dot: f64 = y_chunk.iter().zip(go_chunk).map(|(y, g)| y * g).sum();
        for ((gi, &y), &g) in g_chunk.iter_mut().zip(y_chunk).zip(go_chunk) {
            *gi = y * (g - dot);
        }
    }
    Tensor::new(output.shape().to_vec(), gi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_all_ones_kernel_sums_window() {
        let input = Tensor::new(vec![3, 3, 1], vec![1.0; 9]);
        let weights = Tensor::new(vec![3, 3, 1, 1], vec![1.0; 9]);
        let bias = Tensor::zeros(vec![1]);
        let out = conv2d_forward(&input, false, 3, 3, 1, 1, &weights, &bias);
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn conv2d_same_preserves_shape() {
        let input = Tensor::from_fn(vec![4, 5, 2], |i| i as f64 * 0.1);
        let weights = Tensor::from_fn(vec![3, 3, 2, 3], |i| (i % 7) as f64 * 0.01);
        let bias = Tensor::zeros(vec![3]);
        let out = conv2d_forward(&input, true, 3, 3, 2, 3, &weights, &bias);
        assert_eq!(out.shape(), &[4, 5, 3]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let out = softmax_forward(&Tensor::new(vec![2], vec![0.0, 0.0]));
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one_and_is_positive() {
        let out = softmax_forward(&Tensor::new(vec![4], vec![-30.0, 0.0, 5.0, 100.0]));
        let sum: f64 = out.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(out.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn maxpool_routes_gradient_to_single_positions() {
        let input = Tensor::new(
            vec![2, 4, 1],
            vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 9.0],
        );
        let (out, aux) = maxpool2_forward(&input);
        assert_eq!(out.data(), &[5.0, 9.0]);
        let layer = Layer::MaxPool2;
        let g = Tensor::new(vec![1, 2, 1], vec![1.0, 1.0]);
        let (gi, _) = layer.backward(&input, &out, &aux, &g);
        // Each incoming gradient lands on exactly one input position.
        let total: f64 = gi.data().iter().sum();
        assert_eq!(total, 2.0);
        assert_eq!(gi.data().iter().filter(|&&v| v != 0.0).count(), 2);
        // Tie in the second window resolves to the first maximum scanned.
        assert_eq!(gi.data()[6], 1.0);
        assert_eq!(gi.data()[7], 0.0);
    }

    #[test]
    fn upsample_is_nearest_neighbor() {
        let input = Tensor::new(vec![1, 2, 1], vec![1.0, 2.0]);
        let out = upsample2_forward(&input);
        assert_eq!(out.shape(), &[2, 4, 1]);
        assert_eq!(out.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn shape_rules_match_conv_arithmetic() {
        let spec = LayerSpec::Conv2dValid { kh: 3, kw: 3, out_channels: 8 };
        assert_eq!(spec.output_shape(0, &[64, 44, 1]).unwrap(), vec![62, 42, 8]);
        let pool = LayerSpec::MaxPool2;
        assert_eq!(pool.output_shape(0, &[13, 9, 4]).unwrap(), vec![6, 4, 4]);
        let up = LayerSpec::Upsample2;
        assert_eq!(up.output_shape(0, &[15, 8, 8]).unwrap(), vec![30, 16, 8]);
        assert!(LayerSpec::Dense { units: 3 }.output_shape(0, &[2, 2, 1]).is_err());
    }
}
