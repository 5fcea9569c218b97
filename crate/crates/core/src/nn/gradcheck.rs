//! Central-difference verification of analytic gradients.

use rand::seq::SliceRandom;

use super::model::{Mode, Model};
use super::NnError;
use crate::rng::seeded_rng;
use crate::tensor::Tensor;

/// A scalar loss of the model output with a known exact gradient.
pub trait ScalarLoss {
    fn value(&self, output: &Tensor) -> f64;
    fn grad(&self, output: &Tensor) -> Tensor;
}

/// `0.5 * sum((out - target)^2)`.
pub struct SquaredErrorLoss {
    pub target: Tensor,
}

impl ScalarLoss for SquaredErrorLoss {
    fn value(&self, output: &Tensor) -> f64 {
        0.5 * output.sq_distance(&self.target)
    }
    fn grad(&self, output: &Tensor) -> Tensor {
        Tensor::new(
            output.shape().to_vec(),
            output
                .data()
                .iter()
                .zip(self.target.data())
                .map(|(o, t)| o - t)
                .collect(),
        )
    }
}

/// `sum(weights * out)`; linear, so its gradient is exact everywhere.
pub struct WeightedSumLoss {
    pub weights: Tensor,
}

impl ScalarLoss for WeightedSumLoss {
    fn value(&self, output: &Tensor) -> f64 {
        output
            .data()
            .iter()
            .zip(self.weights.data())
            .map(|(o, w)| o * w)
            .sum()
    }
    fn grad(&self, _output: &Tensor) -> Tensor {
        self.weights.clone()
    }
}

/// Number of coordinates sampled per check.
const SAMPLE_COORDS: usize = 120;

/// Compare analytic parameter/input gradients against central differences
/// over a seeded random subsample of coordinates; returns the maximum
/// relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
///
/// `mode` is reused for every evaluation, so training-mode dropout masks
/// stay fixed throughout the check.
pub fn finite_diff_check(
    model: &mut Model,
    input: &Tensor,
    loss: &dyn ScalarLoss,
    h: f64,
    mode: Mode,
    coord_seed: u64,
) -> Result<f64, NnError> {
    assert!(h > 0.0);
    let cache = model.forward(input, mode)?;
    let loss_grad = loss.grad(cache.output());
    let (param_grads, input_grad) = model.backward(&cache, &loss_grad)?;
    let flat = Model::flatten_grads(&param_grads);
    let analytic: Vec<Vec<f64>> = flat
        .iter()
        .map(|t| t.data().to_vec())
        .chain(std::iter::once(input_grad.data().to_vec()))
        .collect();

    // Coordinate space: every parameter entry plus every input entry. The
    // input occupies the final slot.
    let n_params = analytic.len() - 1;
    let mut coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(p, g)| (0..g.len()).map(move |e| (p, e)))
        .collect();
    let mut rng = seeded_rng(coord_seed);
    coords.shuffle(&mut rng);
    coords.truncate(SAMPLE_COORDS.min(coords.len()));

    let mut max_rel = 0.0f64;
    let mut x = input.clone();
    for (p, e) in coords {
        let eval = |model: &Model, x: &Tensor| -> Result<f64, NnError> {
            Ok(loss.value(model.forward(x, mode)?.output()))
        };
        let (plus, minus) = if p < n_params {
            let orig = {
                let mut params = model.params_mut();
                let v = params[p].data_mut();
                let orig = v[e];
                v[e] = orig + h;
                orig
            };
            let plus = eval(model, &x)?;
            {
                let mut params = model.params_mut();
                params[p].data_mut()[e] = orig - h;
            }
            let minus = eval(model, &x)?;
            {
                let mut params = model.params_mut();
                params[p].data_mut()[e] = orig;
            }
            (plus, minus)
        } else {
            let orig = x.data()[e];
            x.data_mut()[e] = orig + h;
            let plus = eval(model, &x)?;
            x.data_mut()[e] = orig - h;
            let minus = eval(model, &x)?;
            x.data_mut()[e] = orig;
            (plus, minus)
        };
        let numeric = (plus - minus) / (2.0 * h);
        let exact = analytic[p][e];
        let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
