//! CSV/JSON artifact writers and the per-run manifest.
//!
//! CSV content is a pure function of the results (no timestamps, no
//! absolute paths), so identical runs produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dsp::MagnitudeGrid;
use crate::eval::{EvalReport, PairEval};
use crate::nn::EpochStats;

/// What every artifact-producing run records about itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Fully-resolved configuration, defaults included.
    pub config: RunConfig,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn push_output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(
            path.as_ref()
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.as_ref().display().to_string()),
        );
    }

    pub fn write(&self, dir: &Path) -> crate::Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per pair: ids, condition outcomes, distances, ratios.
pub fn write_eval_csv(path: &Path, report: &EvalReport) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PAIR_COLUMNS)?;
    for r in &report.pairs {
        w.write_record(pair_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

const PAIR_COLUMNS: [&str; 19] = [
    "pair_index",
    "content_class",
    "style_class",
    "content_source",
    "style_source",
    "pred_transfer",
    "pred_mix",
    "transfer_content_ok",
    "transfer_style_ok",
    "mix_content_ok",
    "mix_style_ok",
    "d_x_xc",
    "d_x_xs",
    "d_z_xc",
    "d_z_xs",
    "ratio_content",
    "ratio_style",
    "first_total_loss",
    "final_total_loss",
];

fn pair_fields(r: &PairEval) -> Vec<String> {
    vec![
        r.pair_index.to_string(),
        r.content_class.to_string(),
        r.style_class.to_string(),
        r.content_source.clone(),
        r.style_source.clone(),
        r.pred_transfer.to_string(),
        r.pred_mix.to_string(),
        r.transfer_content_ok.to_string(),
        r.transfer_style_ok.to_string(),
        r.mix_content_ok.to_string(),
        r.mix_style_ok.to_string(),
        fmt_f64(r.d_x_xc),
        fmt_f64(r.d_x_xs),
        fmt_f64(r.d_z_xc),
        fmt_f64(r.d_z_xs),
        fmt_opt(r.ratio_content),
        fmt_opt(r.ratio_style),
        fmt_f64(r.first_total_loss),
        fmt_f64(r.final_total_loss),
    ]
}

/// Consolidated sweep row: an evaluation row tagged with its setting.
#[derive(Clone, Debug)]
pub struct SweepRow {
    /// "alpha" or "width".
    pub setting: String,
    pub value: f64,
    pub row: PairEval,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut cols = vec!["setting", "value"];
    cols.extend(PAIR_COLUMNS);
    w.write_record(&cols)?;
    for r in rows {
        let mut fields = vec![r.setting.clone(), fmt_f64(r.value)];
        fields.extend(pair_fields(&r.row));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-setting aggregate of a sweep, the table behind the summary plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub setting: String,
    pub value: f64,
    pub n_pairs: usize,
    pub transfer_content_accuracy: f64,
    pub transfer_style_accuracy: f64,
    pub mix_content_accuracy: f64,
    pub mix_style_accuracy: f64,
    pub median_d_x_xc: f64,
    pub median_d_x_xs: f64,
    pub median_ratio_content: f64,
    pub median_ratio_style: f64,
}

/// Group sweep rows by (setting, value) and aggregate, in first-seen order.
pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(String, u64)> = Vec::new();
    for r in rows {
        let key = (r.setting.clone(), r.value.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(setting, bits)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| &r.setting == setting && r.value.to_bits() == *bits)
                .collect();
            let n = group.len();
            let frac = |f: &dyn Fn(&PairEval) -> bool| {
                group.iter().filter(|r| f(&r.row)).count() as f64 / n as f64
            };
            let collect = |f: &dyn Fn(&PairEval) -> f64| -> Vec<f64> {
                group.iter().map(|r| f(&r.row)).collect()
            };
            let ratios_c: Vec<f64> = group.iter().filter_map(|r| r.row.ratio_content).collect();
            let ratios_s: Vec<f64> = group.iter().filter_map(|r| r.row.ratio_style).collect();
            SweepSummary {
                setting: setting.clone(),
                value: f64::from_bits(*bits),
                n_pairs: n,
                transfer_content_accuracy: frac(&|r| r.transfer_content_ok),
                transfer_style_accuracy: frac(&|r| r.transfer_style_ok),
                mix_content_accuracy: frac(&|r| r.mix_content_ok),
                mix_style_accuracy: frac(&|r| r.mix_style_ok),
                median_d_x_xc: crate::eval::median(&collect(&|r| r.d_x_xc)),
                median_d_x_xs: crate::eval::median(&collect(&|r| r.d_x_xs)),
                median_ratio_content: crate::eval::median(&ratios_c),
                median_ratio_style: crate::eval::median(&ratios_s),
            }
        })
        .collect()
}

pub fn write_sweep_summary_csv(path: &Path, summaries: &[SweepSummary]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "setting",
        "value",
        "n_pairs",
        "transfer_content_accuracy",
        "transfer_style_accuracy",
        "mix_content_accuracy",
        "mix_style_accuracy",
        "median_d_x_xc",
        "median_d_x_xs",
        "median_ratio_content",
        "median_ratio_style",
    ])?;
    for s in summaries {
        w.write_record([
            s.setting.clone(),
            fmt_f64(s.value),
            s.n_pairs.to_string(),
            fmt_f64(s.transfer_content_accuracy),
            fmt_f64(s.transfer_style_accuracy),
            fmt_f64(s.mix_content_accuracy),
            fmt_f64(s.mix_style_accuracy),
            fmt_f64(s.median_d_x_xc),
            fmt_f64(s.median_d_x_xs),
            fmt_f64(s.median_ratio_content),
            fmt_f64(s.median_ratio_style),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a consolidated sweep CSV (the inverse of [`write_sweep_csv`]).
pub fn read_sweep_csv(path: &Path) -> crate::Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |name: &str| idx(name).and_then(|i| record.get(i)).unwrap_or("");
        let f = |name: &str| get(name).parse::<f64>().unwrap_or(f64::NAN);
        let opt = |name: &str| get(name).parse::<f64>().ok();
        let u = |name: &str| get(name).parse::<usize>().unwrap_or(0);
        let b = |name: &str| get(name) == "true";
        rows.push(SweepRow {
            setting: get("setting").to_string(),
            value: f("value"),
            row: PairEval {
                pair_index: u("pair_index"),
                content_class: u("content_class"),
                style_class: u("style_class"),
                content_source: get("content_source").to_string(),
                style_source: get("style_source").to_string(),
                pred_transfer: u("pred_transfer"),
                pred_mix: u("pred_mix"),
                transfer_content_ok: b("transfer_content_ok"),
                transfer_style_ok: b("transfer_style_ok"),
                mix_content_ok: b("mix_content_ok"),
                mix_style_ok: b("mix_style_ok"),
                d_x_xc: f("d_x_xc"),
                d_x_xs: f("d_x_xs"),
                d_z_xc: f("d_z_xc"),
                d_z_xs: f("d_z_xs"),
                ratio_content: opt("ratio_content"),
                ratio_style: opt("ratio_style"),
                first_total_loss: f("first_total_loss"),
                final_total_loss: f("final_total_loss"),
            },
        });
    }
    Ok(rows)
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            fmt_f64(e.train_loss),
            fmt_opt(e.train_accuracy),
            fmt_opt(e.val_loss),
            fmt_opt(e.val_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Export a grid as CSV with bins as rows and frames as columns.
pub fn write_grid_csv(path: &Path, grid: &MagnitudeGrid) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in 0..grid.n_bins {
        let row: Vec<String> = (0..grid.n_frames)
            .map(|f| fmt_f64(grid.at(b, f)))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
