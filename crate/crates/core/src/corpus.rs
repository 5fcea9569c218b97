//! Dataset handling: UrbanSound8K metadata, salience-based recording
//! reconstruction, cross-class pairing, seeded splits, and a synthetic
//! desk-scale corpus whose classes are separable by construction.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError, Waveform};
use crate::rng::{derive_seed, seeded_rng};

pub const FOREGROUND: u8 = 1;
pub const BACKGROUND: u8 = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("metadata is missing required column '{0}'")]
    MissingColumn(String),
    #[error("metadata row at line {line}: {detail}")]
    BadRow { line: u64, detail: String },
    #[error("labels file {0} not found")]
    MissingLabels(String),
    #[error("insufficient material: {0}")]
    InsufficientMaterial(String),
    #[error("degenerate corpus config: {0}")]
    DegenerateConfig(String),
    #[error("split fractions must lie in (0, 1)")]
    BadFraction,
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the UrbanSound8K metadata table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub slice_file_name: String,
    /// Source recording id (`fsID`).
    pub fs_id: String,
    /// Start/end seconds within the source recording.
    pub start: f64,
    pub end: f64,
    /// 1 = foreground, 2 = background.
    pub salience: u8,
    pub fold: u8,
    pub class_id: usize,
    pub class_name: String,
}

const REQUIRED_COLUMNS: [&str; 8] = [
    "slice_file_name",
    "fsID",
    "start",
    "end",
    "salience",
    "fold",
    "classID",
    "class",
];

/// Parse the UrbanSound8K metadata CSV.
pub fn parse_metadata(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>, CorpusError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let mut col = BTreeMap::new();
    for name in REQUIRED_COLUMNS {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
        col.insert(name, idx);
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| row.get(col[name]).unwrap_or("").to_string();
        let parse_f64 = |name: &str| -> Result<f64, CorpusError> {
            field(name).parse().map_err(|_| CorpusError::BadRow {
                line,
                detail: format!("cannot parse {name}='{}' as a number", field(name)),
            })
        };
        let parse_int = |name: &str| -> Result<u64, CorpusError> {
            field(name).parse().map_err(|_| CorpusError::BadRow {
                line,
                detail: format!("cannot parse {name}='{}' as an integer", field(name)),
            })
        };
        let salience = parse_int("salience")? as u8;
        if salience != FOREGROUND && salience != BACKGROUND {
            return Err(CorpusError::BadRow {
                line,
                detail: format!("salience must be 1 or 2, got {salience}"),
            });
        }
        let start = parse_f64("start")?;
        let end = parse_f64("end")?;
        if end <= start {
            return Err(CorpusError::BadRow {
                line,
                detail: format!("end {end} not after start {start}"),
            });
        }
        records.push(ClipRecord {
            slice_file_name: field("slice_file_name"),
            fs_id: field("fsID"),
            start,
            end,
            salience,
            fold: parse_int("fold")? as u8,
            class_id: parse_int("classID")? as usize,
            class_name: field("class"),
        });
    }
    Ok(records)
}

/// Per-class (foreground, background) clip counts.
pub fn class_salience_counts(records: &[ClipRecord]) -> BTreeMap<String, (usize, usize)> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = counts.entry(r.class_name.clone()).or_default();
        if r.salience == FOREGROUND {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    counts
}

/// Clips grouped by (source recording, salience), sorted by start time.
#[derive(Clone, Debug)]
pub struct RecordingGroup {
    pub source_id: String,
    pub salience: u8,
    pub class_id: usize,
    pub class_name: String,
    pub clips: Vec<ClipRecord>,
}

/// Group the metadata into per-recording clip lists, keyed by
/// (source id, salience); foreground groups first, then background.
pub fn group_recordings(records: &[ClipRecord]) -> (Vec<RecordingGroup>, Vec<RecordingGroup>) {
    let mut map: BTreeMap<(String, u8), Vec<ClipRecord>> = BTreeMap::new();
    for r in records {
        map.entry((r.fs_id.clone(), r.salience))
            .or_default()
            .push(r.clone());
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for ((source_id, salience), mut clips) in map {
        clips.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
        let group = RecordingGroup {
            source_id,
            salience,
            class_id: clips[0].class_id,
            class_name: clips[0].class_name.clone(),
            clips,
        };
        if salience == FOREGROUND {
            fg.push(group);
        } else {
            bg.push(group);
        }
    }
    (fg, bg)
}

/// A reconstructed recording: its clips concatenated in annotation order,
/// resampled to the canonical rate.
#[derive(Clone, Debug)]
pub struct Recording {
    pub source_id: String,
    pub salience: u8,
    pub class_id: usize,
    pub class_name: String,
    pub waveform: Waveform,
    pub n_clips: usize,
}

#[derive(Debug, Default)]
pub struct ReconstructionReport {
    pub foreground: Vec<Recording>,
    pub background: Vec<Recording>,
    /// Clips whose audio could not be read (missing or undecodable files).
    pub skipped_clips: usize,
    pub skip_reasons: Vec<String>,
}

/// Load and butt-join each group's clips. Unreadable clips are skipped and
/// counted; audio files are expected at `root/fold{N}/{slice_file_name}`.
pub fn reconstruct_recordings(
    records: &[ClipRecord],
    audio_root: impl AsRef<Path>,
) -> Result<ReconstructionReport, CorpusError> {
    let root = audio_root.as_ref();
    let (fg, bg) = group_recordings(records);
    let mut report = ReconstructionReport::default();
    for (groups, out_fg) in [(fg, true), (bg, false)] {
        for group in groups {
            let mut samples: Vec<f64> = Vec::new();
            let mut n_clips = 0usize;
            for clip in &group.clips {
                let path = root
                    .join(format!("fold{}", clip.fold))
                    .join(&clip.slice_file_name);
                match audio::read_wav(&path)
                    .and_then(|w| audio::resample(&w, audio::CANONICAL_RATE))
                {
                    Ok(w) => {
                        samples.extend_from_slice(w.samples());
                        n_clips += 1;
                    }
                    Err(e) => {
                        report.skipped_clips += 1;
                        if report.skip_reasons.len() < 32 {
                            report.skip_reasons.push(e.to_string());
                        }
                    }
                }
            }
            if n_clips == 0 {
                continue;
            }
            let rec = Recording {
                source_id: group.source_id,
                salience: group.salience,
                class_id: group.class_id,
                class_name: group.class_name,
                waveform: Waveform::new(samples, audio::CANONICAL_RATE)?,
                n_clips,
            };
            if out_fg {
                report.foreground.push(rec);
            } else {
                report.background.push(rec);
            }
        }
    }
    Ok(report)
}

/// Audio available for pairing: a recording or a labeled clip.
#[derive(Clone, Debug)]
pub struct SourceClip {
    pub id: String,
    pub class_id: usize,
    pub class_name: String,
    pub waveform: Waveform,
}

/// A content/style pair cut to the canonical window.
#[derive(Clone, Debug)]
pub struct PairSpec {
    pub content: Waveform,
    pub style: Waveform,
    pub content_class: usize,
    pub style_class: usize,
    pub content_class_name: String,
    pub style_class_name: String,
    pub content_source: String,
    pub style_source: String,
    /// Window offsets within the sources, in seconds.
    pub content_offset: f64,
    pub style_offset: f64,
    pub seed: u64,
}

/// Draw `n` cross-class (foreground window, background window) pairs with a
/// seeded RNG. Windows are cut at seeded random offsets and standardized to
/// `(rate, seconds)`; duplicate (window, window) combinations are rejected.
pub fn make_pairs(
    foreground: &[SourceClip],
    background: &[SourceClip],
    n: usize,
    seed: u64,
    rate: u32,
    seconds: f64,
) -> Result<Vec<PairSpec>, CorpusError> {
    if foreground.is_empty() || background.is_empty() {
        return Err(CorpusError::InsufficientMaterial(
            "need at least one foreground and one background source".into(),
        ));
    }
    let cross_possible = foreground
        .iter()
        .any(|f| background.iter().any(|b| b.class_id != f.class_id));
    if !cross_possible {
        return Err(CorpusError::InsufficientMaterial(
            "no cross-class combination exists".into(),
        ));
    }
    let mut rng = seeded_rng(derive_seed(seed, 0x7061_6972));
    let mut seen: HashSet<(usize, usize, usize, usize)> = HashSet::new();
    let mut pairs = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let max_attempts = 200 * n.max(1) + 1000;
    while pairs.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CorpusError::InsufficientMaterial(format!(
                "could not draw {n} distinct cross-class pairs (got {})",
                pairs.len()
            )));
        }
        let fi = rng.gen_range(0..foreground.len());
        let bi = rng.gen_range(0..background.len());
        if foreground[fi].class_id == background[bi].class_id {
            continue;
        }
        let (c_wave, c_off) = cut_window(&foreground[fi].waveform, seconds, &mut rng);
        let (s_wave, s_off) = cut_window(&background[bi].waveform, seconds, &mut rng);
        if !seen.insert((fi, c_off, bi, s_off)) {
            continue;
        }
        let fg = &foreground[fi];
        let bg = &background[bi];
        pairs.push(PairSpec {
            content: audio::standardize(&c_wave, rate, seconds)?,
            style: audio::standardize(&s_wave, rate, seconds)?,
            content_class: fg.class_id,
            style_class: bg.class_id,
            content_class_name: fg.class_name.clone(),
            style_class_name: bg.class_name.clone(),
            content_source: fg.id.clone(),
            style_source: bg.id.clone(),
            content_offset: c_off as f64 / fg.waveform.sample_rate() as f64,
            style_offset: s_off as f64 / bg.waveform.sample_rate() as f64,
            seed,
        });
    }
    Ok(pairs)
}

fn cut_window(w: &Waveform, seconds: f64, rng: &mut impl Rng) -> (Waveform, usize) {
    let win = (w.sample_rate() as f64 * seconds).round() as usize;
    if w.len() <= win || win == 0 {
        return (w.clone(), 0);
    }
    let offset = rng.gen_range(0..=w.len() - win);
    (
        Waveform::new(w.samples()[offset..offset + win].to_vec(), w.sample_rate()).unwrap(),
        offset,
    )
}

/// Seeded shuffle-then-partition into (train, val, test); `val_frac_of_train`
/// is taken out of the training share.
pub fn split<T: Clone>(
    items: &[T],
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    if items.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(0.0 < train_frac && train_frac < 1.0 && 0.0 < val_frac_of_train && val_frac_of_train < 1.0)
    {
        return Err(CorpusError::BadFraction);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut seeded_rng(derive_seed(seed, 0x7370_6c69)));
    let n_train_total = (items.len() as f64 * train_frac).round() as usize;
    let n_val = (n_train_total as f64 * val_frac_of_train).round() as usize;
    let n_train = n_train_total - n_val;
    let pick = |r: std::ops::Range<usize>| r.map(|i| items[order[i]].clone()).collect::<Vec<_>>();
    Ok((
        pick(0..n_train),
        pick(n_train..n_train_total),
        pick(n_train_total..items.len()),
    ))
}

/// Role a synthetic clip plays in pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipRole {
    Content,
    Style,
}

#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub id: String,
    pub class_id: usize,
    pub class_name: String,
    pub role: ClipRole,
    pub waveform: Waveform,
}

/// Synthetic corpus geometry. Content classes are pulse trains of harmonic
/// tone bursts (class-distinct fundamental and repetition rate); style
/// classes are band-limited noise textures with slow amplitude modulation
/// (class-distinct bands). Classes are separable by spectral centroid plus
/// pulse rate by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub content_classes: usize,
    pub style_classes: usize,
    pub clips_per_class: usize,
    pub sample_rate: u32,
    pub seconds: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            content_classes: 2,
            style_classes: 2,
            clips_per_class: 30,
            sample_rate: audio::CANONICAL_RATE,
            seconds: audio::CANONICAL_SECONDS,
            seed: 7,
        }
    }
}

/// Generate the labeled synthetic corpus; bit-identical for equal configs.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<LabeledClip>, CorpusError> {
    if cfg.content_classes < 2 || cfg.style_classes < 2 {
        return Err(CorpusError::DegenerateConfig(
            "need at least 2 content and 2 style classes".into(),
        ));
    }
    if cfg.clips_per_class == 0 {
        return Err(CorpusError::DegenerateConfig("clips_per_class is zero".into()));
    }
    if cfg.sample_rate == 0 || cfg.seconds <= 0.0 {
        return Err(CorpusError::DegenerateConfig(
            "sample rate and duration must be positive".into(),
        ));
    }
    let n_samples = (cfg.sample_rate as f64 * cfg.seconds).round() as usize;
    if n_samples < 256 {
        return Err(CorpusError::DegenerateConfig("clips are too short".into()));
    }
    let mut clips = Vec::with_capacity((cfg.content_classes + cfg.style_classes) * cfg.clips_per_class);
    let mut global = 0u64;
    for k in 0..cfg.content_classes {
        let name = format!("pulses_{k}");
        for i in 0..cfg.clips_per_class {
            let mut rng = seeded_rng(derive_seed(cfg.seed, global));
            global += 1;
            let w = content_clip(cfg, k, n_samples, &mut rng);
            clips.push(LabeledClip {
                id: format!("{name}_{i:03}"),
                class_id: k,
                class_name: name.clone(),
                role: ClipRole::Content,
                waveform: w,
            });
        }
    }
    for k in 0..cfg.style_classes {
        let name = format!("texture_{k}");
        for i in 0..cfg.clips_per_class {
            let mut rng = seeded_rng(derive_seed(cfg.seed, global));
            global += 1;
            let w = style_clip(cfg, k, n_samples, &mut rng);
            clips.push(LabeledClip {
                id: format!("{name}_{i:03}"),
                class_id: cfg.content_classes + k,
                class_name: name.clone(),
                role: ClipRole::Style,
                waveform: w,
            });
        }
    }
    Ok(clips)
}

/// Pulse train of decaying harmonic tone bursts.
fn content_clip(cfg: &SynthConfig, class: usize, n: usize, rng: &mut impl Rng) -> Waveform {
    let rate = cfg.sample_rate as f64;
    let nyq = rate / 2.0;
    // Highest harmonic stays below 0.85 * Nyquist.
    let base_f0 = (340.0 * 5.2f64.powi(class as i32)).min(0.85 * nyq / 3.0);
    let base_pulse = 2.5 + 2.2 * class as f64;
    let f0 = base_f0 * (1.0 + rng.gen_range(-0.05..0.05));
    let pulse_rate = base_pulse * (1.0 + rng.gen_range(-0.1..0.1));
    let tau = 0.06 * (1.0 + rng.gen_range(-0.2..0.2));
    let mut samples = vec![0.0f64; n];
    let period = 1.0 / pulse_rate;
    let burst_len = ((5.0 * tau) * rate) as usize;
    let harmonics = [1.0, 0.5, 0.25];
    let mut t0 = rng.gen_range(0.0..period * 0.5);
    while t0 < cfg.seconds {
        let start = (t0 * rate) as usize;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for i in start..(start + burst_len).min(n) {
            let t = (i - start) as f64 / rate;
            let env = (-t / tau).exp();
            let mut v = 0.0;
            for (h, amp) in harmonics.iter().enumerate() {
                v += amp
                    * (std::f64::consts::TAU * f0 * (h + 1) as f64 * t + phase * (h + 1) as f64)
                        .sin();
            }
            samples[i] += env * v;
        }
        t0 += period * (1.0 + rng.gen_range(-0.15..0.15));
    }
    normalize_peak(&mut samples, 0.7);
    Waveform::new(samples, cfg.sample_rate).unwrap()
}

/// Band-limited noise with slow amplitude modulation, synthesized in the
/// frequency domain for exact band control.
fn style_clip(cfg: &SynthConfig, class: usize, n: usize, rng: &mut impl Rng) -> Waveform {
    let rate = cfg.sample_rate as f64;
    let nyq = rate / 2.0;
    let lo_edge = 100.0;
    let ratio = (0.9 * nyq / lo_edge).powf(1.0 / cfg.style_classes as f64);
    let lo = lo_edge * ratio.powi(class as i32) * (1.0 + rng.gen_range(-0.1..0.1));
    let hi = (lo * ratio.powf(0.85)).min(0.95 * nyq);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let klo = ((lo * n as f64 / rate).ceil() as usize).max(1);
    let khi = ((hi * n as f64 / rate).floor() as usize).min(n / 2 - 1);
    for k in klo..=khi {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        spectrum[k] = Complex64::new(re, im);
        spectrum[n - k] = spectrum[k].conj();
    }
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let am_freq = rng.gen_range(0.3..0.8);
    let am_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut samples: Vec<f64> = spectrum
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let t = i as f64 / rate;
            c.re * (0.85 + 0.15 * (std::f64::consts::TAU * am_freq * t + am_phase).sin())
        })
        .collect();
    normalize_peak(&mut samples, 0.6);
    Waveform::new(samples, cfg.sample_rate).unwrap()
}

fn normalize_peak(samples: &mut [f64], peak: f64) {
    let max = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max > 0.0 {
        let scale = peak / max;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
}

/// Read a corpus directory written by the CLI (`labels.csv` + WAV files).
pub fn load_labeled_corpus(dir: impl AsRef<Path>) -> Result<Vec<LabeledClip>, CorpusError> {
    let dir = dir.as_ref();
    let labels = dir.join("labels.csv");
    if !labels.exists() {
        return Err(CorpusError::MissingLabels(labels.display().to_string()));
    }
    let mut reader = csv::Reader::from_path(&labels)?;
    let mut clips = Vec::new();
    for row in reader.deserialize() {
        let row: LabelRow = row?;
        let waveform = audio::read_wav(dir.join(&row.file))?;
        clips.push(LabeledClip {
            id: row
                .file
                .trim_end_matches(".wav")
                .to_string(),
            class_id: row.class_id,
            class_name: row.class_name,
            role: match row.role.as_str() {
                "content" => ClipRole::Content,
                _ => ClipRole::Style,
            },
            waveform,
        });
    }
    Ok(clips)
}

#[derive(Deserialize)]
struct LabelRow {
    file: String,
    class_id: usize,
    class_name: String,
    role: String,
}
