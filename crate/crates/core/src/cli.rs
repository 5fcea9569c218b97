//! Command-line entry point orchestrating every pipeline stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Every artifact-producing run writes a `manifest.json` (resolved config,
//! seeds, version, output names) into its run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::audio;
use crate::config::RunConfig;
use crate::corpus::{self, ClipRole, LabeledClip};
use crate::dsp::StftParams;
use crate::eval::{self, AeBundle, ClassifierBundle};
use crate::mix;
use crate::nn::{Model, NnError};
use crate::report::{self, Manifest, SweepRow};
use crate::transfer::{self, TransferError};
use crate::{Error, Result, Waveform};

/// Environment variable naming the UrbanSound8K root directory.
pub const DATASET_ROOT_ENV: &str = "URBANSOUND8K_ROOT";

#[derive(Parser, Debug)]
#[command(
    name = "soundstyle",
    version,
    about = "Acoustic environment transfer, mixing baseline, and evaluation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the labeled synthetic corpus (WAV files + labels.csv).
    SynthCorpus {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse UrbanSound8K metadata and, when audio is available,
    /// reconstruct the per-source recordings.
    Ingest {
        /// Metadata CSV (defaults to the config's corpus.metadata_csv).
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Audio root with fold1..fold10 (defaults to config, then
        /// $URBANSOUND8K_ROOT).
        #[arg(long)]
        audio_root: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw cross-class content/style pairs from a corpus directory.
    Pairs {
        #[arg(long)]
        corpus: PathBuf,
        /// Overrides eval.pair_count.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transfer the style clip's texture onto the content clip.
    Transfer {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export the final log-magnitude grid as CSV.
        #[arg(long)]
        emit_grid: bool,
    },
    /// Overlay the style clip onto the content clip (the baseline).
    Mix {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        /// Overrides mix.gain_db.
        #[arg(long)]
        gain_db: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the base audio classifier on a corpus directory.
    TrainClassifier {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the embedding autoencoder on a corpus directory.
    TrainAutoencoder {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full evaluation: transfer + mix per pair, classifier accuracies,
    /// embedding distances, and the retraining value.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory written by train-classifier (otherwise trains in-run).
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Directory written by train-autoencoder (otherwise trains in-run).
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the generated transfer/mix clips.
        #[arg(long)]
        emit_wavs: bool,
    },
    /// Evaluate across the alpha grid, reusing pairs and seeds.
    SweepAlpha {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate across the filter-width grid, reusing pairs and seeds.
    SweepWidth {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate sweep CSVs into per-setting summary tables.
    Report {
        /// One or more consolidated sweep CSVs.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse the process arguments and run; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_numerical(&e) {
                3
            } else {
                2
            }
        }
    }
}

fn is_numerical(e: &Error) -> bool {
    let nn = |n: &NnError| {
        matches!(
            n,
            NnError::NanLoss { .. } | NnError::NonFiniteGradient { .. }
        )
    };
    let tr = |t: &TransferError| matches!(t, TransferError::NonFiniteLoss { .. });
    match e {
        Error::Nn(n) => nn(n),
        Error::Transfer(t) => tr(t),
        Error::Eval(eval::EvalError::Nn(n)) => nn(n),
        Error::Eval(eval::EvalError::Transfer(t)) => tr(t),
        _ => false,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthCorpus { config, out } => synth_corpus(config, out),
        Command::Ingest {
            metadata,
            audio_root,
            config,
            out,
        } => ingest(metadata, audio_root, config, out),
        Command::Pairs {
            corpus,
            count,
            config,
            out,
        } => pairs_cmd(corpus, count, config, out),
        Command::Transfer {
            content,
            style,
            config,
            out,
            emit_grid,
        } => transfer_cmd(content, style, config, out, emit_grid),
        Command::Mix {
            content,
            style,
            gain_db,
            config,
            out,
        } => mix_cmd(content, style, gain_db, config, out),
        Command::TrainClassifier { corpus, config, out } => train_classifier(corpus, config, out),
        Command::TrainAutoencoder { corpus, config, out } => train_autoencoder(corpus, config, out),
        Command::Evaluate {
            corpus,
            classifier,
            autoencoder,
            config,
            out,
            emit_wavs,
        } => evaluate(corpus, classifier, autoencoder, config, out, emit_wavs),
        Command::SweepAlpha {
            corpus,
            classifier,
            autoencoder,
            config,
            out,
        } => sweep(corpus, classifier, autoencoder, config, out, SweepKind::Alpha),
        Command::SweepWidth {
            corpus,
            classifier,
            autoencoder,
            config,
            out,
        } => sweep(corpus, classifier, autoencoder, config, out, SweepKind::Width),
        Command::Report { input, out } => report_cmd(input, out),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Default run directory: `runs/<command>-<unix seconds>-<seed>`.
fn run_dir(out: Option<PathBuf>, command: &str, seed: u64) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        PathBuf::from("runs").join(format!("{command}-{ts}-{seed}"))
    });
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_standardized(path: &Path, cfg: &RunConfig) -> Result<Waveform> {
    let w = audio::read_wav(path)?;
    Ok(audio::standardize(
        &w,
        cfg.audio.sample_rate,
        cfg.audio.seconds,
    )?)
}

fn synth_corpus(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "synth-corpus", cfg.corpus.synth.seed)?;
    let clips = corpus::synth_corpus(&cfg.corpus.synth)?;
    let mut manifest = Manifest::new("synth-corpus", &cfg);
    let labels_path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&labels_path)?;
    w.write_record(["file", "class_id", "class_name", "role"])?;
    for clip in &clips {
        let file = format!("{}.wav", clip.id);
        audio::write_wav(dir.join(&file), &clip.waveform)?;
        w.write_record([
            file.as_str(),
            &clip.class_id.to_string(),
            &clip.class_name,
            match clip.role {
                ClipRole::Content => "content",
                ClipRole::Style => "style",
            },
        ])?;
        manifest.push_output(&file);
    }
    w.flush()?;
    manifest.push_output(&labels_path);
    manifest.extra = serde_json::json!({ "clips": clips.len() });
    manifest.write(&dir)?;
    println!("wrote {} clips to {}", clips.len(), dir.display());
    Ok(())
}

fn ingest(
    metadata: Option<PathBuf>,
    audio_root: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let metadata = metadata
        .or_else(|| cfg.corpus.metadata_csv.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("ingest needs --metadata or corpus.metadata_csv".into()))?;
    let dir = run_dir(out, "ingest", 0)?;
    let records = corpus::parse_metadata(&metadata)?;
    let counts = corpus::class_salience_counts(&records);
    let (fg_groups, bg_groups) = corpus::group_recordings(&records);

    let counts_path = dir.join("counts.csv");
    let mut w = csv::Writer::from_path(&counts_path)?;
    w.write_record(["class", "foreground", "background", "total"])?;
    for (class, (fg, bg)) in &counts {
        w.write_record([
            class.as_str(),
            &fg.to_string(),
            &bg.to_string(),
            &(fg + bg).to_string(),
        ])?;
    }
    w.flush()?;

    let mut manifest = Manifest::new("ingest", &cfg);
    manifest.push_output(&counts_path);
    let mut extra = serde_json::json!({
        "records": records.len(),
        "foreground_recordings": fg_groups.len(),
        "background_recordings": bg_groups.len(),
    });

    let root = audio_root
        .or_else(|| cfg.corpus.audio_root.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var(DATASET_ROOT_ENV).ok().map(PathBuf::from));
    if let Some(root) = root.filter(|r| r.exists()) {
        let report = corpus::reconstruct_recordings(&records, &root)?;
        let recs_path = dir.join("recordings.csv");
        let mut w = csv::Writer::from_path(&recs_path)?;
        w.write_record(["source_id", "salience", "class_id", "class_name", "n_clips", "seconds"])?;
        for rec in report.foreground.iter().chain(&report.background) {
            let file = format!("rec_{}_{}.wav", rec.salience, rec.source_id);
            audio::write_wav(dir.join(&file), &clamp_wave(&rec.waveform))?;
            w.write_record([
                rec.source_id.as_str(),
                &rec.salience.to_string(),
                &rec.class_id.to_string(),
                &rec.class_name,
                &rec.n_clips.to_string(),
                &format!("{}", rec.waveform.duration()),
            ])?;
            manifest.push_output(&file);
        }
        w.flush()?;
        manifest.push_output(&recs_path);
        extra["reconstructed_foreground"] = report.foreground.len().into();
        extra["reconstructed_background"] = report.background.len().into();
        extra["skipped_clips"] = report.skipped_clips.into();
    }
    manifest.extra = extra;
    manifest.write(&dir)?;
    println!(
        "{} records, {} foreground / {} background recordings",
        records.len(),
        fg_groups.len(),
        bg_groups.len()
    );
    Ok(())
}

fn clamp_wave(w: &Waveform) -> Waveform {
    Waveform::new(
        w.samples().iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        w.sample_rate(),
    )
    .unwrap()
}

fn pairs_cmd(
    corpus_dir: PathBuf,
    count: Option<usize>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "pairs", cfg.eval.pair_seed)?;
    let clips = corpus::load_labeled_corpus(&corpus_dir)?;
    let (fg, bg) = eval::pairing_pools(&clips, &[]);
    let n = count.unwrap_or(cfg.eval.pair_count);
    let pairs = corpus::make_pairs(
        &fg,
        &bg,
        n,
        cfg.eval.pair_seed,
        cfg.audio.sample_rate,
        cfg.audio.seconds,
    )?;
    let mut manifest = Manifest::new("pairs", &cfg);
    let csv_path = dir.join("pairs.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "index",
        "content_source",
        "style_source",
        "content_class",
        "style_class",
        "content_offset",
        "style_offset",
    ])?;
    for (i, p) in pairs.iter().enumerate() {
        let cf = format!("pair{i:03}_content.wav");
        let sf = format!("pair{i:03}_style.wav");
        audio::write_wav(dir.join(&cf), &p.content)?;
        audio::write_wav(dir.join(&sf), &p.style)?;
        w.write_record([
            i.to_string().as_str(),
            &p.content_source,
            &p.style_source,
            &p.content_class.to_string(),
            &p.style_class.to_string(),
            &format!("{}", p.content_offset),
            &format!("{}", p.style_offset),
        ])?;
        manifest.push_output(&cf);
        manifest.push_output(&sf);
    }
    w.flush()?;
    manifest.push_output(&csv_path);
    manifest.write(&dir)?;
    println!("wrote {} pairs to {}", pairs.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct TransferRunRecord<'a> {
    config: &'a RunConfig,
    elapsed_seconds: f64,
    trace: &'a [transfer::LossBreakdown],
    gl_consistency: &'a [f64],
}

fn transfer_cmd(
    content: PathBuf,
    style: PathBuf,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    emit_grid: bool,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "transfer", cfg.transfer.seed)?;
    let c = load_standardized(&content, &cfg)?;
    let s = load_standardized(&style, &cfg)?;
    let t0 = Instant::now();
    let output = transfer::run_transfer(&c, &s, &cfg.transfer, &cfg.stft_params()?)?;
    let elapsed = t0.elapsed().as_secs_f64();

    let wav_path = dir.join("generated.wav");
    audio::write_wav(&wav_path, &output.generated)?;
    let record = TransferRunRecord {
        config: &cfg,
        elapsed_seconds: elapsed,
        trace: &output.trace,
        gl_consistency: &output.gl_consistency,
    };
    let json_path = dir.join("run.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&record)?)?;
    let mut manifest = Manifest::new("transfer", &cfg);
    manifest.push_output(&wav_path);
    manifest.push_output(&json_path);
    if emit_grid {
        let grid_path = dir.join("grid.csv");
        report::write_grid_csv(&grid_path, &output.final_grid)?;
        manifest.push_output(&grid_path);
    }
    manifest.write(&dir)?;
    println!(
        "transfer done in {elapsed:.2}s; final loss {}",
        output.trace.last().map(|l| l.total).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn mix_cmd(
    content: PathBuf,
    style: PathBuf,
    gain_db: Option<f64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "mix", 0)?;
    let c = load_standardized(&content, &cfg)?;
    let s = load_standardized(&style, &cfg)?;
    let gain = gain_db.unwrap_or(cfg.mix.gain_db);
    let outcome = mix::mix(&c, &s, gain)?;
    let wav_path = dir.join("mixed.wav");
    audio::write_wav(&wav_path, &outcome.waveform)?;
    let json_path = dir.join("run.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "config": &cfg,
            "style_gain_db": gain,
            "both_silent": outcome.both_silent,
        }))?,
    )?;
    let mut manifest = Manifest::new("mix", &cfg);
    manifest.push_output(&wav_path);
    manifest.push_output(&json_path);
    manifest.write(&dir)?;
    println!("mixed to {}", wav_path.display());
    Ok(())
}

/// Metadata stored next to a trained classifier so later runs can reuse the
/// exact split and held-out accuracy.
#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    p0: f64,
    n_classes: usize,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    test_idx: Vec<usize>,
    test_ids: Vec<String>,
    corpus_ids: Vec<String>,
}

fn train_classifier(corpus_dir: PathBuf, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "train-classifier", cfg.train.classifier.seed)?;
    let clips = corpus::load_labeled_corpus(&corpus_dir)?;
    let stft = cfg.stft_params()?;
    let bundle = eval::train_base_classifier(&clips, &cfg.train.classifier, &stft)?;
    let model_path = dir.join("classifier.bin");
    bundle.model.save(&model_path)?;
    let meta = ClassifierMeta {
        p0: bundle.p0,
        n_classes: bundle.n_classes,
        train_idx: bundle.train_idx.clone(),
        val_idx: bundle.val_idx.clone(),
        test_idx: bundle.test_idx.clone(),
        test_ids: bundle.test_ids.clone(),
        corpus_ids: clips.iter().map(|c| c.id.clone()).collect(),
    };
    std::fs::write(dir.join("classifier.meta.json"), serde_json::to_string_pretty(&meta)?)?;
    report::write_history_csv(&dir.join("history.csv"), &bundle.history)?;
    let mut manifest = Manifest::new("train-classifier", &cfg);
    manifest.push_output(&model_path);
    manifest.push_output("classifier.meta.json");
    manifest.push_output("history.csv");
    manifest.extra = serde_json::json!({ "p0": bundle.p0, "epochs_run": bundle.history.len() });
    manifest.write(&dir)?;
    println!("P0 = {:.4} ({} epochs)", bundle.p0, bundle.history.len());
    Ok(())
}

fn load_classifier(dir: &Path, clips: &[LabeledClip]) -> Result<ClassifierBundle> {
    let meta: ClassifierMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join("classifier.meta.json"))?)?;
    let ids: Vec<String> = clips.iter().map(|c| c.id.clone()).collect();
    if ids != meta.corpus_ids {
        return Err(Error::Config(format!(
            "classifier in {} was trained on a different corpus",
            dir.display()
        )));
    }
    let model = Model::load(dir.join("classifier.bin"))?;
    Ok(ClassifierBundle {
        model,
        p0: meta.p0,
        history: Vec::new(),
        n_classes: meta.n_classes,
        train_idx: meta.train_idx,
        val_idx: meta.val_idx,
        test_idx: meta.test_idx,
        test_ids: meta.test_ids,
    })
}

fn train_autoencoder(corpus_dir: PathBuf, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "train-autoencoder", cfg.train.autoencoder.seed)?;
    let clips = corpus::load_labeled_corpus(&corpus_dir)?;
    let stft = cfg.stft_params()?;
    let bundle = eval::train_autoencoder(
        &clips,
        &cfg.train.autoencoder,
        &stft,
        cfg.eval.literal_softmax_decoder,
    )?;
    let model_path = dir.join("autoencoder.bin");
    bundle.model.save(&model_path)?;
    report::write_history_csv(&dir.join("history.csv"), &bundle.history)?;
    let mut manifest = Manifest::new("train-autoencoder", &cfg);
    manifest.push_output(&model_path);
    manifest.push_output("history.csv");
    let (first, last) = (
        bundle.history.first().map(|e| e.train_loss),
        bundle.history.last().map(|e| e.train_loss),
    );
    manifest.extra = serde_json::json!({ "first_train_mse": first, "final_train_mse": last });
    manifest.write(&dir)?;
    println!(
        "autoencoder trained: mse {} -> {}",
        first.unwrap_or(f64::NAN),
        last.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_autoencoder(dir: &Path) -> Result<AeBundle> {
    Ok(AeBundle {
        model: Model::load(dir.join("autoencoder.bin"))?,
        history: Vec::new(),
    })
}

struct Prepared {
    clips: Vec<LabeledClip>,
    classifier: ClassifierBundle,
    autoencoder: AeBundle,
    pairs: Vec<corpus::PairSpec>,
    stft: StftParams,
}

fn prepare(
    corpus_dir: &Path,
    classifier_dir: &Option<PathBuf>,
    autoencoder_dir: &Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<Prepared> {
    let clips = corpus::load_labeled_corpus(corpus_dir)?;
    let stft = cfg.stft_params()?;
    let classifier = match classifier_dir {
        Some(dir) => load_classifier(dir, &clips)?,
        None => eval::train_base_classifier(&clips, &cfg.train.classifier, &stft)?,
    };
    let autoencoder = match autoencoder_dir {
        Some(dir) => load_autoencoder(dir)?,
        None => eval::train_autoencoder(
            &clips,
            &cfg.train.autoencoder,
            &stft,
            cfg.eval.literal_softmax_decoder,
        )?,
    };
    let (fg, bg) = eval::pairing_pools(&clips, &classifier.test_ids);
    let pairs = corpus::make_pairs(
        &fg,
        &bg,
        cfg.eval.pair_count,
        cfg.eval.pair_seed,
        cfg.audio.sample_rate,
        cfg.audio.seconds,
    )?;
    Ok(Prepared {
        clips,
        classifier,
        autoencoder,
        pairs,
        stft,
    })
}

#[derive(Serialize)]
struct EvalSummary {
    p0: f64,
    p1: f64,
    value: f64,
    pt_content: f64,
    pt_style: f64,
    pm_content: f64,
    pm_style: f64,
    median_d_x_xc: f64,
    median_d_x_xs: f64,
    median_ratio_content: f64,
    median_ratio_style: f64,
    flagged_pairs: usize,
    n_pairs: usize,
}

fn evaluate(
    corpus_dir: PathBuf,
    classifier_dir: Option<PathBuf>,
    autoencoder_dir: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    emit_wavs: bool,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let dir = run_dir(out, "evaluate", cfg.transfer.seed)?;
    let prep = prepare(&corpus_dir, &classifier_dir, &autoencoder_dir, &cfg)?;
    let (dt, dm, rows) = eval::evaluate_pairs(
        &prep.pairs,
        &prep.classifier,
        &prep.autoencoder,
        &cfg.transfer,
        cfg.mix.gain_db,
        &prep.stft,
    )?;
    let report_data = eval::build_report(
        &prep.clips,
        &prep.classifier,
        &dt,
        &dm,
        rows,
        &cfg.train.classifier,
        &prep.stft,
    )?;

    let csv_path = dir.join("report.csv");
    report::write_eval_csv(&csv_path, &report_data)?;
    let summary = EvalSummary {
        p0: report_data.p0,
        p1: report_data.p1,
        value: report_data.value,
        pt_content: report_data.pt_content,
        pt_style: report_data.pt_style,
        pm_content: report_data.pm_content,
        pm_style: report_data.pm_style,
        median_d_x_xc: report_data.median_d_x_xc,
        median_d_x_xs: report_data.median_d_x_xs,
        median_ratio_content: report_data.median_ratio_content,
        median_ratio_style: report_data.median_ratio_style,
        flagged_pairs: report_data.flagged_pairs,
        n_pairs: report_data.pairs.len(),
    };
    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    let mut manifest = Manifest::new("evaluate", &cfg);
    manifest.push_output(&csv_path);
    manifest.push_output(&summary_path);
    if emit_wavs {
        for (i, rec) in dt.iter().enumerate() {
            let f = format!("pair{i:03}_transfer.wav");
            audio::write_wav(dir.join(&f), &rec.waveform)?;
            manifest.push_output(&f);
        }
        for (i, rec) in dm.iter().enumerate() {
            let f = format!("pair{i:03}_mix.wav");
            audio::write_wav(dir.join(&f), &rec.waveform)?;
            manifest.push_output(&f);
        }
    }
    manifest.write(&dir)?;
    println!(
        "P0={:.4} P1={:.4} value={:+.4} Pt=({:.3},{:.3}) Pm=({:.3},{:.3}) ratios=({:.3},{:.3})",
        summary.p0,
        summary.p1,
        summary.value,
        summary.pt_content,
        summary.pt_style,
        summary.pm_content,
        summary.pm_style,
        summary.median_ratio_content,
        summary.median_ratio_style,
    );
    Ok(())
}

enum SweepKind {
    Alpha,
    Width,
}

fn sweep(
    corpus_dir: PathBuf,
    classifier_dir: Option<PathBuf>,
    autoencoder_dir: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    kind: SweepKind,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let (name, dir) = match kind {
        SweepKind::Alpha => ("sweep-alpha", run_dir(out, "sweep-alpha", cfg.transfer.seed)?),
        SweepKind::Width => ("sweep-width", run_dir(out, "sweep-width", cfg.transfer.seed)?),
    };
    let prep = prepare(&corpus_dir, &classifier_dir, &autoencoder_dir, &cfg)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    match kind {
        SweepKind::Alpha => {
            for &alpha in &cfg.eval.alpha_grid {
                let mut tcfg = cfg.transfer.clone();
                tcfg.alpha = alpha;
                let (_, _, evals) = eval::evaluate_pairs(
                    &prep.pairs,
                    &prep.classifier,
                    &prep.autoencoder,
                    &tcfg,
                    cfg.mix.gain_db,
                    &prep.stft,
                )?;
                rows.extend(evals.into_iter().map(|row| SweepRow {
                    setting: "alpha".into(),
                    value: alpha,
                    row,
                }));
            }
        }
        SweepKind::Width => {
            for &width in &cfg.eval.width_grid {
                let mut tcfg = cfg.transfer.clone();
                tcfg.filter_width = width;
                let (_, _, evals) = eval::evaluate_pairs(
                    &prep.pairs,
                    &prep.classifier,
                    &prep.autoencoder,
                    &tcfg,
                    cfg.mix.gain_db,
                    &prep.stft,
                )?;
                rows.extend(evals.into_iter().map(|row| SweepRow {
                    setting: "width".into(),
                    value: width as f64,
                    row,
                }));
            }
        }
    }
    let sweep_path = dir.join("sweep.csv");
    report::write_sweep_csv(&sweep_path, &rows)?;
    let summary_path = dir.join("summary.csv");
    report::write_sweep_summary_csv(&summary_path, &report::summarize_sweep(&rows))?;
    let mut manifest = Manifest::new(name, &cfg);
    manifest.push_output(&sweep_path);
    manifest.push_output(&summary_path);
    manifest.extra = serde_json::json!({ "rows": rows.len(), "p0": prep.classifier.p0 });
    manifest.write(&dir)?;
    println!("{name}: {} rows -> {}", rows.len(), sweep_path.display());
    Ok(())
}

fn report_cmd(inputs: Vec<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::default();
    let dir = run_dir(out, "report", 0)?;
    let mut rows = Vec::new();
    for input in &inputs {
        rows.extend(report::read_sweep_csv(input)?);
    }
    if rows.is_empty() {
        return Err(Error::Config("no rows in the given sweep CSVs".into()));
    }
    let summary_path = dir.join("summary.csv");
    report::write_sweep_summary_csv(&summary_path, &report::summarize_sweep(&rows))?;
    let mut manifest = Manifest::new("report", &cfg);
    manifest.push_output(&summary_path);
    manifest.extra = serde_json::json!({ "inputs": inputs.len(), "rows": rows.len() });
    manifest.write(&dir)?;
    println!("aggregated {} rows -> {}", rows.len(), summary_path.display());
    Ok(())
}
