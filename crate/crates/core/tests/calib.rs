//! Temporary calibration probes (deleted before release).
use std::time::Instant;

use soundstyle::corpus::{self, SynthConfig};
use soundstyle::dsp::StftParams;
use soundstyle::eval;
use soundstyle::nn::TrainConfig;
use soundstyle::transfer::{self, InitKind, TransferConfig};

fn corpus_default() -> Vec<corpus::LabeledClip> {
    corpus::synth_corpus(&SynthConfig::default()).unwrap()
}

#[test]
#[ignore]
fn calib_classifier() {
    let clips = corpus_default();
    for epochs in [12, 18] {
        let cfg = TrainConfig { epochs, batch_size: 16, learning_rate: 1e-3, seed: 21, patience: 10, ..TrainConfig::default() };
        let t = Instant::now();
        let b = eval::train_base_classifier(&clips, &cfg, &StftParams::default()).unwrap();
        println!("epochs={epochs}: P0={:.4} in {:.1}s, history={} val_acc_last={:?}", b.p0, t.elapsed().as_secs_f64(), b.history.len(), b.history.last().map(|h| h.val_accuracy));
    }
}

#[test]
#[ignore]
fn calib_autoencoder() {
    let clips = corpus_default();
    let cfg = TrainConfig { epochs: 12, batch_size: 16, learning_rate: 1e-3, seed: 31, patience: 12, ..TrainConfig::default() };
    let t = Instant::now();
    let ae = eval::train_autoencoder(&clips, &cfg, &StftParams::default(), false).unwrap();
    let h = &ae.history;
    println!("AE: mse {} -> {} in {:.1}s ({} epochs)", h[0].train_loss, h.last().unwrap().train_loss, t.elapsed().as_secs_f64(), h.len());
}

#[test]
#[ignore]
fn calib_transfer_speed() {
    let clips = corpus_default();
    let (fg, bg) = eval::pairing_pools(&clips, &[]);
    let pairs = corpus::make_pairs(&fg, &bg, 2, 5, 22050, 4.0).unwrap();
    let stft = StftParams::new(512, 256).unwrap();
    let cfg = TransferConfig { n_filters: 512, filter_width: 11, iterations: 300, alpha: 0.2, init: InitKind::Noise, seed: 9, gl_iterations: 30, ..TransferConfig::default() };
    let t = Instant::now();
    let out = transfer::run_transfer(&pairs[0].content, &pairs[0].style, &cfg, &stft).unwrap();
    let dt = t.elapsed().as_secs_f64();
    println!("512f/300it: {:.1}s  loss {} -> {} (ratio {:.4})", dt, out.trace[0].total, out.trace.last().unwrap().total, out.trace.last().unwrap().total / out.trace[0].total);
    let cfg2 = TransferConfig { iterations: 100, init: InitKind::Content, ..cfg.clone() };
    let t = Instant::now();
    let out2 = transfer::run_transfer(&pairs[0].content, &pairs[0].style, &cfg2, &stft).unwrap();
    println!("512f/100it content-init: {:.1}s loss {} -> {}", t.elapsed().as_secs_f64(), out2.trace[0].total, out2.trace.last().unwrap().total);
}

#[test]
#[ignore]
fn calib_c6_c7() {
    let clips = corpus_default();
    let stft = StftParams::new(512, 256).unwrap();
    let clf_cfg = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 1e-3, seed: 21, patience: 10, ..TrainConfig::default() };
    let ae_cfg = TrainConfig { epochs: 12, batch_size: 16, learning_rate: 1e-3, seed: 31, patience: 12, ..TrainConfig::default() };
    let classifier = eval::train_base_classifier(&clips, &clf_cfg, &StftParams::default()).unwrap();
    let ae = eval::train_autoencoder(&clips, &ae_cfg, &StftParams::default(), false).unwrap();
    let (fg, bg) = eval::pairing_pools(&clips, &classifier.test_ids);
    let pairs = corpus::make_pairs(&fg, &bg, 10, 5, 22050, 4.0).unwrap();

    // c6 probe: noise init across the alpha grid, shared seeds.
    let mut medians = Vec::new();
    for alpha in [0.0, 0.1, 0.2, 0.5, 0.9] {
        let cfg = TransferConfig { alpha, n_filters: 512, filter_width: 11, iterations: 120, learning_rate: 0.05, init: InitKind::Noise, seed: 9, gl_iterations: 40, ..TransferConfig::default() };
        let t = Instant::now();
        let (_, _, rows) = eval::evaluate_pairs(&pairs, &classifier, &ae, &cfg, 0.0, &stft).unwrap();
        let d: Vec<f64> = rows.iter().map(|r| r.d_x_xc).collect();
        let m = eval::median(&d);
        println!("alpha={alpha}: median d(x,xc) = {m:.4} ({:.0}s)", t.elapsed().as_secs_f64());
        medians.push(m);
    }
    println!("medians: {medians:?}");

    // c7 probe: content init at alpha 0.2.
    let cfg = TransferConfig { alpha: 0.2, n_filters: 512, filter_width: 11, iterations: 100, learning_rate: 0.05, init: InitKind::Content, seed: 9, gl_iterations: 40, ..TransferConfig::default() };
    let t = Instant::now();
    let (_, _, rows) = eval::evaluate_pairs(&pairs, &classifier, &ae, &cfg, 0.0, &stft).unwrap();
    let rc: Vec<f64> = rows.iter().filter_map(|r| r.ratio_content).collect();
    let rs: Vec<f64> = rows.iter().filter_map(|r| r.ratio_style).collect();
    println!("c7 ({:.0}s): median ratio_content={:.4} ratio_style={:.4}", t.elapsed().as_secs_f64(), eval::median(&rc), eval::median(&rs));
    let tc = rows.iter().filter(|r| r.transfer_content_ok).count();
    let mc = rows.iter().filter(|r| r.mix_content_ok).count();
    println!("c8 probe: transfer content acc {}/10 vs mix {}/10", tc, mc);
}

#[test]
#[ignore]
fn calib_c7_deeper() {
    let clips = corpus_default();
    let stft = StftParams::new(512, 256).unwrap();
    let clf_cfg = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 1e-3, seed: 21, patience: 10, ..TrainConfig::default() };
    let ae_cfg = TrainConfig { epochs: 12, batch_size: 16, learning_rate: 1e-3, seed: 31, patience: 12, ..TrainConfig::default() };
    let classifier = eval::train_base_classifier(&clips, &clf_cfg, &StftParams::default()).unwrap();
    let ae = eval::train_autoencoder(&clips, &ae_cfg, &StftParams::default(), false).unwrap();
    let (fg, bg) = eval::pairing_pools(&clips, &classifier.test_ids);
    let pairs = corpus::make_pairs(&fg, &bg, 10, 5, 22050, 4.0).unwrap();

    for init in [InitKind::Content, InitKind::Noise] {
        let cfg = TransferConfig { alpha: 0.2, n_filters: 512, filter_width: 11, iterations: 300, learning_rate: 0.05, init, seed: 9, gl_iterations: 100, ..TransferConfig::default() };
        let t = Instant::now();
        let (_, _, rows) = eval::evaluate_pairs(&pairs, &classifier, &ae, &cfg, 0.0, &stft).unwrap();
        let rc: Vec<f64> = rows.iter().filter_map(|r| r.ratio_content).collect();
        let rs: Vec<f64> = rows.iter().filter_map(|r| r.ratio_style).collect();
        let below_c = rc.iter().filter(|&&r| r < 1.0).count();
        let below_s = rs.iter().filter(|&&r| r < 1.0).count();
        println!("init={init:?} ({:.0}s): median rc={:.4} ({below_c}/10 below 1) rs={:.4} ({below_s}/10 below 1)", t.elapsed().as_secs_f64(), eval::median(&rc), eval::median(&rs));
        let tc = rows.iter().filter(|r| r.transfer_content_ok).count();
        let mc = rows.iter().filter(|r| r.mix_content_ok).count();
        println!("  content acc: transfer {tc}/10 vs mix {mc}/10; d_x_xc median {:.3} d_x_xs median {:.3}", eval::median(&rows.iter().map(|r| r.d_x_xc).collect::<Vec<_>>()), eval::median(&rows.iter().map(|r| r.d_x_xs).collect::<Vec<_>>()));
    }
}

#[test]
#[ignore]
fn calib_diag() {
    use soundstyle::dsp;
    let clips = corpus_default();
    let stft = StftParams::new(512, 256).unwrap();
    let ae_cfg = TrainConfig { epochs: 12, batch_size: 16, learning_rate: 1e-3, seed: 31, patience: 12, ..TrainConfig::default() };
    let ae = eval::train_autoencoder(&clips, &ae_cfg, &StftParams::default(), false).unwrap();
    let (fg, bg) = eval::pairing_pools(&clips, &[]);
    let pairs = corpus::make_pairs(&fg, &bg, 3, 5, 22050, 4.0).unwrap();
    let p = &pairs[0];

    let xc_grid = dsp::log_magnitude(&dsp::stft(&p.content, &stft).unwrap());
    let xs_grid = dsp::log_magnitude(&dsp::stft(&p.style, &stft).unwrap());
    let e_c = eval::embed(&ae, &p.content, &StftParams::default()).unwrap();
    let e_s = eval::embed(&ae, &p.style, &StftParams::default()).unwrap();

    // GL noise floor: invert the style's own magnitude and see how far the
    // result embeds from the original style clip.
    let gl_style = dsp::griffin_lim(&xs_grid.to_linear(), &stft, 100, 7, 22050).unwrap();
    let e_gls = eval::embed(&ae, &gl_style.waveform, &StftParams::default()).unwrap();
    println!("GL floor: consistency {:.4}, d(gl(style), style) = {:.3}, ref d(c,s) = {:.3}",
        gl_style.consistency.last().unwrap(), eval::euclidean(&e_gls, &e_s), eval::euclidean(&e_c, &e_s));

    let mixed = soundstyle::mix::mix(&p.content, &p.style, 0.0).unwrap();
    let e_z = eval::embed(&ae, &mixed.waveform, &StftParams::default()).unwrap();
    println!("mix: d(z,c) = {:.3}, d(z,s) = {:.3}", eval::euclidean(&e_z, &e_c), eval::euclidean(&e_z, &e_s));

    for (nf, iters, lr) in [(512usize, 300usize, 0.05), (2048, 300, 0.05), (512, 300, 0.02)] {
        let cfg = TransferConfig { alpha: 0.2, n_filters: nf, filter_width: 11, iterations: iters, learning_rate: lr, init: InitKind::Content, seed: 9, gl_iterations: 100, ..TransferConfig::default() };
        let out = soundstyle::transfer::run_transfer(&p.content, &p.style, &cfg, &stft).unwrap();
        let e_x = eval::embed(&ae, &out.generated, &StftParams::default()).unwrap();
        let l = out.trace.last().unwrap();
        println!("nf={nf} it={iters} lr={lr}: loss c={:.2} s={:.2} | grid d(x,xc)={:.1} d(x,xs)={:.1} | gl_c={:.3} | emb d(x,c)={:.3} d(x,s)={:.3}",
            l.content, l.style,
            out.final_grid.frobenius_distance(&xc_grid), out.final_grid.frobenius_distance(&xs_grid),
            out.gl_consistency.last().unwrap(),
            eval::euclidean(&e_x, &e_c), eval::euclidean(&e_x, &e_s));
    }
}
