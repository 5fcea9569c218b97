//! Environment style transfer on log-magnitude spectrograms.
//!
//! A single wide layer of frozen random 1-d convolutions (frequency bins as
//! input channels, filters sliding along time) turns a spectrogram into
//! activations `F`. Content is matched through `F` directly and style
//! through the Gram matrix `G = F F^T`; the optimized grid minimizes
//!
//! ```text
//! total = alpha * ||F(x) - F(x_c)||^2 / N  +  ||G(x) - G(x_s)||_F^2 / N
//! ```
//!
//! with `N` the number of activation nodes. The optimization variable is the
//! log-magnitude grid itself, driven by Adam; the result is inverted to
//! audio with Griffin-Lim.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Waveform};
use crate::dsp::{self, Domain, DspError, MagnitudeGrid, StftParams};
use crate::nn::AdamMoments;
use crate::rng::{derive_seed, seeded_rng};
use crate::tensor::{gemm_strided, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

const NET_TAG: u64 = 0x6e65_74;
const NOISE_TAG: u64 = 0x6e6f_6973;
const GL_TAG: u64 = 0x676c;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("spectrogram has {frames} frames, fewer than the filter width {width}")]
    TooFewFrames { frames: usize, width: usize },
    #[error("transfer operates on log-domain grids")]
    ExpectedLogDomain,
    #[error("bad transfer config: {0}")]
    BadConfig(String),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        trace: Vec<LossBreakdown>,
    },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Starting point for the optimized grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Start from the content grid (the high-alpha limit is then trivial).
    Content,
    /// Seeded Gaussian noise matched to the style grid's mean/std
    /// (texture-synthesis mode).
    Noise,
}

/// Hyperparameters of one transfer run. A single master seed derives the
/// filter, noise-init, and Griffin-Lim streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    /// Content-loss weight.
    pub alpha: f64,
    pub n_filters: usize,
    /// Filter width in spectrogram frames.
    pub filter_width: usize,
    /// Adam iterations on the grid.
    pub iterations: usize,
    pub learning_rate: f64,
    pub init: InitKind,
    pub seed: u64,
    /// Griffin-Lim iterations when inverting the final grid.
    pub gl_iterations: usize,
    /// Layer index sets for content and style; this artifact has a single
    /// layer, so both must be `[0]`.
    pub content_layers: Vec<usize>,
    pub style_layers: Vec<usize>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            alpha: 0.2,
            n_filters: 4096,
            filter_width: 11,
            iterations: 300,
            learning_rate: 0.05,
            init: InitKind::Content,
            seed: 42,
            gl_iterations: 100,
            content_layers: vec![0],
            style_layers: vec![0],
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<(), TransferError> {
        if self.n_filters == 0 || self.filter_width == 0 {
            return Err(TransferError::BadConfig(
                "n_filters and filter_width must be positive".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(TransferError::BadConfig("iterations must be >= 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(TransferError::BadConfig(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.gl_iterations == 0 {
            return Err(TransferError::BadConfig("gl_iterations must be >= 1".into()));
        }
        if self.content_layers != [0] || self.style_layers != [0] {
            return Err(TransferError::BadConfig(
                "single-layer network: content_layers and style_layers must be [0]".into(),
            ));
        }
        Ok(())
    }
}

/// Frozen random single-layer convolutional filter bank.
/// Shape `[n_filters, filter_width, n_bins]`; never trained.
#[derive(Clone, Debug)]
pub struct RandomConvNet {
    pub filters: Tensor,
    pub n_filters: usize,
    pub filter_width: usize,
    pub n_bins: usize,
    pub seed: u64,
}

/// Draw the filter bank: i.i.d. normal with std `sqrt(2/(width*n_bins))`,
/// seeded from the config's master seed.
pub fn init_random_net(cfg: &TransferConfig, n_bins: usize) -> RandomConvNet {
    let std = (2.0 / (cfg.filter_width * n_bins) as f64).sqrt();
    let mut rng = seeded_rng(derive_seed(cfg.seed, NET_TAG));
    let filters = Tensor::from_fn(vec![cfg.n_filters, cfg.filter_width, n_bins], |_| {
        std * rng.sample::<f64, _>(StandardNormal)
    });
    RandomConvNet {
        filters,
        n_filters: cfg.n_filters,
        filter_width: cfg.filter_width,
        n_bins,
        seed: cfg.seed,
    }
}

/// Post-ReLU activations of the random layer: `n_filters x n_positions`,
/// positions being valid time offsets.
#[derive(Clone, Debug)]
pub struct ActivationMap {
    /// Row-major `n_filters x n_positions`.
    pub values: Vec<f64>,
    pub n_filters: usize,
    pub n_positions: usize,
}

impl ActivationMap {
    /// Total node count `N`.
    pub fn n_nodes(&self) -> usize {
        self.n_filters * self.n_positions
    }
}

/// Filter-by-filter co-activation matrix `F F^T / n_positions`.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    /// Row-major `n x n`, symmetric positive semidefinite.
    pub values: Vec<f64>,
    pub n: usize,
}

/// Joint loss value; `total = alpha * content + style` holds exactly.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub content: f64,
    pub style: f64,
}

/// 1-d valid convolution along time (bins as channels) followed by ReLU.
pub fn extract_features(
    net: &RandomConvNet,
    spec: &MagnitudeGrid,
) -> Result<ActivationMap, TransferError> {
    if spec.domain != Domain::Log {
        return Err(TransferError::ExpectedLogDomain);
    }
    if spec.n_bins != net.n_bins {
        return Err(TransferError::ShapeMismatch {
            detail: format!(
                "grid has {} bins, filters expect {}",
                spec.n_bins, net.n_bins
            ),
        });
    }
    if spec.n_frames < net.filter_width {
        return Err(TransferError::TooFewFrames {
            frames: spec.n_frames,
            width: net.filter_width,
        });
    }
    let engine = Engine::new(net, spec.n_frames);
    Ok(ActivationMap {
        values: engine.activations(spec.frame_major()),
        n_filters: net.n_filters,
        n_positions: engine.n_pos,
    })
}

/// Gram statistics of an activation map.
pub fn gram(f: &ActivationMap) -> GramMatrix {
    GramMatrix {
        values: gram_values(&f.values, f.n_filters, f.n_positions),
        n: f.n_filters,
    }
}

fn gram_values(act: &[f64], n_filters: usize, n_pos: usize) -> Vec<f64> {
    let mut g = vec![0.0; n_filters * n_filters];
    gemm_strided(
        n_filters,
        n_pos,
        n_filters,
        1.0 / n_pos as f64,
        act,
        n_pos as isize,
        1,
        act,
        1,
        n_pos as isize,
        0.0,
        &mut g,
        n_filters as isize,
        1,
    );
    g
}

/// The two-fold loss of a candidate grid `x` against content `x_c` and
/// style `x_s`.
pub fn transfer_loss(
    x: &MagnitudeGrid,
    x_c: &MagnitudeGrid,
    x_s: &MagnitudeGrid,
    net: &RandomConvNet,
    cfg: &TransferConfig,
) -> Result<LossBreakdown, TransferError> {
    let (engine, f_c, g_s) = setup(x, x_c, x_s, net, cfg)?;
    Ok(engine.loss(x.frame_major(), &f_c, &g_s, cfg.alpha, None))
}

/// Gradient of the total loss with respect to `x`, same (bins x frames)
/// shape as the grid. The ReLU subgradient at zero is taken as zero.
pub fn transfer_grad(
    x: &MagnitudeGrid,
    x_c: &MagnitudeGrid,
    x_s: &MagnitudeGrid,
    net: &RandomConvNet,
    cfg: &TransferConfig,
) -> Result<Tensor, TransferError> {
    let (engine, f_c, g_s) = setup(x, x_c, x_s, net, cfg)?;
    let mut grad_fm = vec![0.0; x.n_bins * x.n_frames];
    engine.loss(x.frame_major(), &f_c, &g_s, cfg.alpha, Some(&mut grad_fm));
    // Frame-major internal layout -> logical bins x frames tensor.
    let mut out = vec![0.0; x.n_bins * x.n_frames];
    for f in 0..x.n_frames {
        for b in 0..x.n_bins {
            out[b * x.n_frames + f] = grad_fm[f * x.n_bins + b];
        }
    }
    Ok(Tensor::new(vec![x.n_bins, x.n_frames], out))
}

fn setup<'a>(
    x: &MagnitudeGrid,
    x_c: &MagnitudeGrid,
    x_s: &MagnitudeGrid,
    net: &'a RandomConvNet,
    cfg: &TransferConfig,
) -> Result<(Engine<'a>, Vec<f64>, Vec<f64>), TransferError> {
    cfg.validate()?;
    for (name, g) in [("x", x), ("x_c", x_c), ("x_s", x_s)] {
        if g.domain != Domain::Log {
            return Err(TransferError::ExpectedLogDomain);
        }
        if g.n_bins != x.n_bins || g.n_frames != x.n_frames {
            return Err(TransferError::ShapeMismatch {
                detail: format!(
                    "{name} is {}x{}, expected {}x{}",
                    g.n_bins, g.n_frames, x.n_bins, x.n_frames
                ),
            });
        }
    }
    if x.n_bins != net.n_bins {
        return Err(TransferError::ShapeMismatch {
            detail: format!("grids have {} bins, filters expect {}", x.n_bins, net.n_bins),
        });
    }
    if x.n_frames < net.filter_width {
        return Err(TransferError::TooFewFrames {
            frames: x.n_frames,
            width: net.filter_width,
        });
    }
    let engine = Engine::new(net, x.n_frames);
    let f_c = engine.activations(x_c.frame_major());
    let f_s = engine.activations(x_s.frame_major());
    let g_s = gram_values(&f_s, net.n_filters, engine.n_pos);
    Ok((engine, f_c, g_s))
}

/// The gemm-backed feature/loss/gradient kernel for one grid geometry.
struct Engine<'a> {
    filters: &'a [f64],
    n_filters: usize,
    width: usize,
    n_bins: usize,
    n_pos: usize,
    k: usize,
}

impl<'a> Engine<'a> {
    fn new(net: &'a RandomConvNet, n_frames: usize) -> Self {
        Engine {
            filters: net.filters.data(),
            n_filters: net.n_filters,
            width: net.filter_width,
            n_bins: net.n_bins,
            n_pos: n_frames - net.filter_width + 1,
            k: net.filter_width * net.n_bins,
        }
    }

    /// `relu(W * patches)`. Patch columns are overlapping frame windows of
    /// the frame-major grid, expressed as gemm strides instead of a copy.
    fn activations(&self, x_fm: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.n_filters * self.n_pos];
        gemm_strided(
            self.n_filters,
            self.k,
            self.n_pos,
            1.0,
            self.filters,
            self.k as isize,
            1,
            x_fm,
            1,
            self.n_bins as isize,
            0.0,
            &mut act,
            self.n_pos as isize,
            1,
        );
        for v in &mut act {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        act
    }

    /// Loss (and, if requested, the frame-major gradient) at `x_fm`.
    fn loss(
        &self,
        x_fm: &[f64],
        f_c: &[f64],
        g_s: &[f64],
        alpha: f64,
        grad_out: Option<&mut Vec<f64>>,
    ) -> LossBreakdown {
        let act = self.activations(x_fm);
        let n = (self.n_filters * self.n_pos) as f64;

        let mut content = 0.0;
        for (a, c) in act.iter().zip(f_c) {
            let d = a - c;
            content += d * d;
        }
        content /= n;

        let g = gram_values(&act, self.n_filters, self.n_pos);
        let mut d_gram = vec![0.0; g.len()];
        let mut style = 0.0;
        for (i, (gv, sv)) in g.iter().zip(g_s).enumerate() {
            let d = gv - sv;
            d_gram[i] = d;
            style += d * d;
        }
        style /= n;

        let total = alpha * content + style;

        if let Some(gx) = grad_out {
            let nf = self.n_filters;
            let p = self.n_pos;
            // d(loss)/d(act): the content term plus the Gram chain rule
            // 4/(N*P) * (G - G_s) * F, then the ReLU mask.
            let mut d_act = vec![0.0; nf * p];
            let cscale = 2.0 * alpha / n;
            for i in 0..d_act.len() {
                d_act[i] = cscale * (act[i] - f_c[i]);
            }
            gemm_strided(
                nf,
                nf,
                p,
                4.0 / (n * p as f64),
                &d_gram,
                nf as isize,
                1,
                &act,
                p as isize,
                1,
                1.0,
                &mut d_act,
                p as isize,
                1,
            );
            for (d, a) in d_act.iter_mut().zip(&act) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            // dPatches^T = dAct^T * W, then scatter back onto the grid.
            let mut dpt = vec![0.0; p * self.k];
            gemm_strided(
                p,
                nf,
                self.k,
                1.0,
                &d_act,
                1,
                p as isize,
                self.filters,
                self.k as isize,
                1,
                0.0,
                &mut dpt,
                self.k as isize,
                1,
            );
            gx.iter_mut().for_each(|v| *v = 0.0);
            for pos in 0..p {
                let row = pos * self.k;
                for t in 0..self.width {
                    let dst = (pos + t) * self.n_bins;
                    let src = row + t * self.n_bins;
                    for b in 0..self.n_bins {
                        gx[dst + b] += dpt[src + b];
                    }
                }
            }
        }

        LossBreakdown {
            total,
            content,
            style,
        }
    }
}

/// Everything a transfer run produces.
#[derive(Clone, Debug)]
pub struct TransferOutput {
    pub generated: Waveform,
    /// The optimized log-magnitude grid.
    pub final_grid: MagnitudeGrid,
    /// `iterations + 1` entries: entry 0 is the loss of the initial grid,
    /// the last entry is the loss of the returned grid.
    pub trace: Vec<LossBreakdown>,
    pub gl_consistency: Vec<f64>,
}

/// Run the full transfer: spectrograms, seeded random network, Adam on the
/// log-magnitude grid, Griffin-Lim inversion. Deterministic given the
/// config seed.
pub fn run_transfer(
    content: &Waveform,
    style: &Waveform,
    cfg: &TransferConfig,
    stft_p: &StftParams,
) -> Result<TransferOutput, TransferError> {
    cfg.validate()?;
    if content.len() != style.len() || content.sample_rate() != style.sample_rate() {
        return Err(TransferError::ShapeMismatch {
            detail: format!(
                "content ({} samples @ {} Hz) vs style ({} samples @ {} Hz); standardize first",
                content.len(),
                content.sample_rate(),
                style.len(),
                style.sample_rate()
            ),
        });
    }
    let x_c = dsp::log_magnitude(&dsp::stft(content, stft_p)?);
    let x_s = dsp::log_magnitude(&dsp::stft(style, stft_p)?);
    let net = init_random_net(cfg, x_c.n_bins);
    if x_c.n_frames < cfg.filter_width {
        return Err(TransferError::TooFewFrames {
            frames: x_c.n_frames,
            width: cfg.filter_width,
        });
    }
    let engine = Engine::new(&net, x_c.n_frames);
    let f_c = engine.activations(x_c.frame_major());
    let f_s = engine.activations(x_s.frame_major());
    let g_s = gram_values(&f_s, net.n_filters, engine.n_pos);

    let mut x = match cfg.init {
        InitKind::Content => x_c.frame_major().to_vec(),
        InitKind::Noise => {
            let s = x_s.frame_major();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / s.len() as f64;
            let std = var.sqrt();
            let mut rng = seeded_rng(derive_seed(cfg.seed, NOISE_TAG));
            (0..s.len())
                .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };

    let mut adam = AdamMoments::new(x.len());
    let mut grad = vec![0.0; x.len()];
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..cfg.iterations {
        let loss = engine.loss(&x, &f_c, &g_s, cfg.alpha, Some(&mut grad));
        if !loss.total.is_finite() {
            return Err(TransferError::NonFiniteLoss {
                iteration: it,
                trace,
            });
        }
        trace.push(loss);
        adam.step(&mut x, &grad, cfg.learning_rate);
    }
    let final_loss = engine.loss(&x, &f_c, &g_s, cfg.alpha, None);
    if !final_loss.total.is_finite() {
        return Err(TransferError::NonFiniteLoss {
            iteration: cfg.iterations,
            trace,
        });
    }
    trace.push(final_loss);

    let final_grid = MagnitudeGrid::new(x, x_c.n_bins, x_c.n_frames, Domain::Log);
    let gl = dsp::griffin_lim(
        &final_grid.to_linear(),
        stft_p,
        cfg.gl_iterations,
        derive_seed(cfg.seed, GL_TAG),
        content.sample_rate(),
    )?;
    Ok(TransferOutput {
        generated: gl.waveform,
        final_grid,
        trace,
        gl_consistency: gl.consistency,
    })
}

/// One (width, pair) result of a filter-width sweep.
#[derive(Debug)]
pub struct WidthSweepRecord {
    pub width: usize,
    pub pair_index: usize,
    pub output: TransferOutput,
}

/// Re-run the transfer across filter widths with shared seeds. Jobs fan out
/// over worker threads; records come back in deterministic (width-major,
/// then pair) order.
pub fn filter_width_sweep(
    pairs: &[(Waveform, Waveform)],
    widths: &[usize],
    cfg: &TransferConfig,
    stft_p: &StftParams,
) -> Result<Vec<WidthSweepRecord>, TransferError> {
    if widths.is_empty() {
        return Err(TransferError::BadConfig("width grid is empty".into()));
    }
    let jobs: Vec<(usize, usize)> = widths
        .iter()
        .enumerate()
        .flat_map(|(wi, _)| (0..pairs.len()).map(move |pi| (wi, pi)))
        .collect();
    jobs.par_iter()
        .map(|&(wi, pi)| {
            let mut c = cfg.clone();
            c.filter_width = widths[wi];
            let output = run_transfer(&pairs[pi].0, &pairs[pi].1, &c, stft_p)?;
            Ok(WidthSweepRecord {
                width: widths[wi],
                pair_index: pi,
                output,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_bins: usize, n_frames: usize, f: impl Fn(usize, usize) -> f64) -> MagnitudeGrid {
        let mut data = vec![0.0; n_bins * n_frames];
        for fr in 0..n_frames {
            for b in 0..n_bins {
                data[fr * n_bins + b] = f(b, fr);
            }
        }
        MagnitudeGrid::new(data, n_bins, n_frames, Domain::Log)
    }

    fn small_cfg() -> TransferConfig {
        TransferConfig {
            n_filters: 24,
            filter_width: 3,
            iterations: 5,
            ..TransferConfig::default()
        }
    }

    #[test]
    fn same_config_gives_bit_identical_filters() {
        let cfg = small_cfg();
        let a = init_random_net(&cfg, 16);
        let b = init_random_net(&cfg, 16);
        assert_eq!(a.filters.data(), b.filters.data());
    }

    #[test]
    fn filter_tensor_has_expected_entry_count() {
        let cfg = TransferConfig {
            n_filters: 4096,
            filter_width: 11,
            ..TransferConfig::default()
        };
        let net = init_random_net(&cfg, 513);
        assert_eq!(net.filters.numel(), 4096 * 11 * 513);
    }

    #[test]
    fn empirical_filter_std_matches_target() {
        let cfg = TransferConfig {
            n_filters: 4096,
            filter_width: 5,
            ..TransferConfig::default()
        };
        let net = init_random_net(&cfg, 64);
        let data = net.filters.data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64;
        let target = (2.0f64 / (5.0 * 64.0)).sqrt();
        assert!(
            (var.sqrt() - target).abs() / target < 0.05,
            "std {} vs {target}",
            var.sqrt()
        );
    }

    #[test]
    fn zero_spectrogram_gives_zero_activations() {
        let cfg = small_cfg();
        let net = init_random_net(&cfg, 16);
        let f = extract_features(&net, &grid(16, 10, |_, _| 0.0)).unwrap();
        assert_eq!(f.n_positions, 8);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_filter_row_stays_silent() {
        let cfg = small_cfg();
        let mut net = init_random_net(&cfg, 16);
        let k = net.filter_width * net.n_bins;
        net.filters.data_mut()[..k].iter_mut().for_each(|v| *v = 0.0);
        let f = extract_features(&net, &grid(16, 12, |b, fr| (b + fr) as f64 * 0.1)).unwrap();
        assert!(f.values[..f.n_positions].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_one_filter_is_a_per_frame_dot_product() {
        let mut cfg = small_cfg();
        cfg.n_filters = 1;
        cfg.filter_width = 1;
        let mut net = init_random_net(&cfg, 4);
        let w = vec![0.5, -1.0, 2.0, 0.25];
        net.filters.data_mut().copy_from_slice(&w);
        let g = grid(4, 6, |b, fr| (b as f64 - 1.2) * (fr as f64 + 0.3));
        let f = extract_features(&net, &g).unwrap();
        assert_eq!(f.n_positions, 6);
        for fr in 0..6 {
            let dot: f64 = (0..4).map(|b| w[b] * g.at(b, fr)).sum();
            assert!((f.values[fr] - dot.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_frames_is_rejected() {
        let cfg = small_cfg();
        let net = init_random_net(&cfg, 16);
        assert!(matches!(
            extract_features(&net, &grid(16, 2, |_, _| 0.0)),
            Err(TransferError::TooFewFrames { frames: 2, width: 3 })
        ));
    }

    #[test]
    fn gram_of_zero_activations_is_zero() {
        let f = ActivationMap {
            values: vec![0.0; 6 * 4],
            n_filters: 6,
            n_positions: 4,
        };
        assert!(gram(&f).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_of_identity_activations_is_scaled_identity() {
        // Filter i active 1.0 at position i only, n_positions = n_filters.
        let n = 5;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        let g = gram(&ActivationMap {
            values,
            n_filters: n,
            n_positions: n,
        });
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 / n as f64 } else { 0.0 };
                assert_eq!(g.values[i * n + j], expect);
            }
        }
    }

    #[test]
    fn gram_matches_hand_product() {
        // F = {{1,2,3},{0,1,0}} -> F F^T / 3 = (1/3) {{14,2},{2,1}}
        let g = gram(&ActivationMap {
            values: vec![1.0, 2.0, 3.0, 0.0, 1.0, 0.0],
            n_filters: 2,
            n_positions: 3,
        });
        let expect = [14.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
        for (a, e) in g.values.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        use rand::Rng;
        let mut rng = seeded_rng(99);
        for _ in 0..5 {
            let n = 8;
            let p = 13;
            let f = ActivationMap {
                values: (0..n * p).map(|_| rng.gen_range(0.0..2.0)).collect(),
                n_filters: n,
                n_positions: p,
            };
            let g = gram(&f);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g.values[i * n + j], g.values[j * n + i]);
                }
            }
            // Cholesky of G + 1e-8 I must succeed for a PSD G.
            let mut a = g.values.clone();
            for i in 0..n {
                a[i * n + i] += 1e-8;
            }
            assert!(cholesky_ok(&mut a, n), "gram not PSD");
        }
    }

    fn cholesky_ok(a: &mut [f64], n: usize) -> bool {
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= a[i * n + k] * a[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return false;
                    }
                    a[i * n + i] = sum.sqrt();
                } else {
                    a[i * n + j] = sum / a[j * n + j];
                }
            }
        }
        true
    }

    fn three_grids() -> (MagnitudeGrid, MagnitudeGrid, MagnitudeGrid) {
        let x = grid(16, 12, |b, fr| ((b * 7 + fr * 3) % 11) as f64 * 0.2 - 0.8);
        let c = grid(16, 12, |b, fr| ((b * 5 + fr) % 13) as f64 * 0.15 - 0.6);
        let s = grid(16, 12, |b, fr| ((b + fr * 5) % 9) as f64 * 0.25 - 0.7);
        (x, c, s)
    }

    #[test]
    fn loss_is_zero_at_the_joint_fixed_point() {
        let cfg = small_cfg();
        let (x, _, _) = three_grids();
        let net = init_random_net(&cfg, 16);
        let l = transfer_loss(&x, &x, &x, &net, &cfg).unwrap();
        assert_eq!(l.total, 0.0);
        assert_eq!(l.content, 0.0);
        assert_eq!(l.style, 0.0);
        let g = transfer_grad(&x, &x, &x, &net, &cfg).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matching_content_leaves_pure_style_loss() {
        let cfg = small_cfg();
        let (x, _, s) = three_grids();
        let net = init_random_net(&cfg, 16);
        let l = transfer_loss(&x, &x, &s, &net, &cfg).unwrap();
        assert_eq!(l.content, 0.0);
        assert!(l.style > 0.0);
        assert_eq!(l.total, l.style);
    }

    #[test]
    fn alpha_zero_collapses_total_to_style() {
        let mut cfg = small_cfg();
        cfg.alpha = 0.0;
        let (x, c, s) = three_grids();
        let net = init_random_net(&cfg, 16);
        let l = transfer_loss(&x, &c, &s, &net, &cfg).unwrap();
        assert_eq!(l.total, l.style);
        assert!(l.content > 0.0);
    }

    #[test]
    fn loss_identity_holds_for_generic_alpha() {
        let mut cfg = small_cfg();
        cfg.alpha = 0.37;
        let (x, c, s) = three_grids();
        let net = init_random_net(&cfg, 16);
        let l = transfer_loss(&x, &c, &s, &net, &cfg).unwrap();
        assert!((l.total - (cfg.alpha * l.content + l.style)).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut cfg = small_cfg();
        cfg.alpha = 0.5;
        let (x, c, s) = three_grids();
        let net = init_random_net(&cfg, 16);
        let analytic = transfer_grad(&x, &c, &s, &net, &cfg).unwrap();

        let h = 1e-4;
        let mut rng = seeded_rng(5);
        let mut max_rel = 0.0f64;
        for _ in 0..120 {
            use rand::Rng;
            let b = rng.gen_range(0..16);
            let fr = rng.gen_range(0..12);
            let mut xp = x.clone();
            xp.set(b, fr, x.at(b, fr) + h);
            let lp = transfer_loss(&xp, &c, &s, &net, &cfg).unwrap().total;
            let mut xm = x.clone();
            xm.set(b, fr, x.at(b, fr) - h);
            let lm = transfer_loss(&xm, &c, &s, &net, &cfg).unwrap().total;
            let numeric = (lp - lm) / (2.0 * h);
            let exact = analytic.data()[b * 12 + fr];
            let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn content_gradient_component_is_linear_in_alpha() {
        let (x, c, s) = three_grids();
        let net = init_random_net(&small_cfg(), 16);
        let grad_at = |alpha: f64| {
            let mut cfg = small_cfg();
            cfg.alpha = alpha;
            transfer_grad(&x, &c, &s, &net, &cfg).unwrap()
        };
        let g0 = grad_at(0.0);
        let g1 = grad_at(1.0);
        let g2 = grad_at(2.0);
        for i in 0..g0.numel() {
            let content1 = g1.data()[i] - g0.data()[i];
            let content2 = g2.data()[i] - g0.data()[i];
            assert!(
                (content2 - 2.0 * content1).abs() < 1e-9,
                "component {i}: {content2} vs 2*{content1}"
            );
        }
    }

    fn test_wave(seed: u64, rate: u32, n: usize) -> Waveform {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let samples = (0..n)
            .map(|i| {
                0.4 * (2.0 * std::f64::consts::PI * 300.0 * i as f64 / rate as f64).sin()
                    + 0.2 * rng.gen_range(-1.0..1.0)
            })
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    fn run_cfg(iterations: usize, alpha: f64, init: InitKind) -> TransferConfig {
        TransferConfig {
            alpha,
            n_filters: 32,
            filter_width: 3,
            iterations,
            learning_rate: 0.05,
            init,
            seed: 77,
            gl_iterations: 8,
            ..TransferConfig::default()
        }
    }

    fn run_stft() -> StftParams {
        StftParams::new(256, 64).unwrap()
    }

    #[test]
    fn identical_content_and_style_is_a_fixed_point() {
        let w = test_wave(1, 8000, 4000);
        let out = run_transfer(&w, &w, &run_cfg(10, 0.2, InitKind::Content), &run_stft()).unwrap();
        assert_eq!(out.trace[0].total, 0.0);
        for l in &out.trace {
            assert!(l.total <= 1e-12, "loss left the fixed point: {}", l.total);
        }
    }

    #[test]
    fn longer_optimization_does_not_end_higher() {
        let c = test_wave(2, 8000, 4000);
        let s = test_wave(3, 8000, 4000);
        let p = run_stft();
        let short = run_transfer(&c, &s, &run_cfg(1, 0.2, InitKind::Noise), &p).unwrap();
        let long = run_transfer(&c, &s, &run_cfg(50, 0.2, InitKind::Noise), &p).unwrap();
        // Shared seeds: identical starting loss.
        assert_eq!(long.trace[0].total.to_bits(), short.trace[0].total.to_bits());
        assert!(long.trace.last().unwrap().total <= short.trace.last().unwrap().total);
        assert!(long.trace.last().unwrap().total <= long.trace[0].total);
        // total = alpha*content + style at every recorded iteration.
        for l in &long.trace {
            assert!((l.total - (0.2 * l.content + l.style)).abs() < 1e-9);
        }
    }

    #[test]
    fn high_alpha_hugs_the_content_grid() {
        let c = test_wave(4, 8000, 4000);
        let s = test_wave(5, 8000, 4000);
        let p = run_stft();
        let content_grid = dsp::log_magnitude(&dsp::stft(&c, &p).unwrap());
        let strong = run_transfer(&c, &s, &run_cfg(40, 1e6, InitKind::Content), &p).unwrap();
        let loose = run_transfer(&c, &s, &run_cfg(40, 0.2, InitKind::Noise), &p).unwrap();
        let d_strong = strong.final_grid.frobenius_distance(&content_grid);
        let d_loose = loose.final_grid.frobenius_distance(&content_grid);
        assert!(
            d_strong < d_loose,
            "alpha=1e6 distance {d_strong} vs noise-init {d_loose}"
        );
    }

    #[test]
    fn run_transfer_is_deterministic() {
        let c = test_wave(6, 8000, 4000);
        let s = test_wave(7, 8000, 4000);
        let p = run_stft();
        let a = run_transfer(&c, &s, &run_cfg(5, 0.2, InitKind::Noise), &p).unwrap();
        let b = run_transfer(&c, &s, &run_cfg(5, 0.2, InitKind::Noise), &p).unwrap();
        assert_eq!(a.generated.samples(), b.generated.samples());
        assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.total.to_bits(), y.total.to_bits());
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let c = test_wave(8, 8000, 4000);
        let s = test_wave(9, 8000, 3999);
        assert!(matches!(
            run_transfer(&c, &s, &run_cfg(2, 0.2, InitKind::Content), &run_stft()),
            Err(TransferError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn singleton_width_sweep_equals_direct_run() {
        let c = test_wave(10, 8000, 4000);
        let s = test_wave(11, 8000, 4000);
        let p = run_stft();
        let cfg = run_cfg(4, 0.2, InitKind::Content);
        let direct = run_transfer(&c, &s, &cfg, &p).unwrap();
        let sweep = filter_width_sweep(&[(c, s)], &[cfg.filter_width], &cfg, &p).unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(
            sweep[0].output.generated.samples(),
            direct.generated.samples()
        );
    }

    #[test]
    fn width_sweep_bookkeeping_and_determinism() {
        let pairs: Vec<(Waveform, Waveform)> = (0..2)
            .map(|i| (test_wave(20 + i, 8000, 4000), test_wave(30 + i, 8000, 4000)))
            .collect();
        let p = run_stft();
        let cfg = run_cfg(2, 0.2, InitKind::Content);
        let a = filter_width_sweep(&pairs, &[2, 4], &cfg, &p).unwrap();
        assert_eq!(a.len(), 4);
        let order: Vec<(usize, usize)> = a.iter().map(|r| (r.width, r.pair_index)).collect();
        assert_eq!(order, vec![(2, 0), (2, 1), (4, 0), (4, 1)]);
        let b = filter_width_sweep(&pairs, &[2, 4], &cfg, &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                x.output.generated.samples(),
                y.output.generated.samples()
            );
        }
    }
}
