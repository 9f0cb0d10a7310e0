//! Metrics files and the summaries derived from them.
//!
//! A run writes three CSV files with fixed headers:
//!
//! * `batches.csv`: one row per evaluation batch;
//! * `windows.csv`: one row per stream window;
//! * `events.csv`: one row per drift detection.
//!
//! `report` turns them into `series.csv` (one row per window),
//! `detections.csv` (one marker row per detection) and a text summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::BinaryMetrics;
use crate::error::{Error, Result};
use crate::metric::DistanceMetric;

pub const BATCHES_FILE: &str = "batches.csv";
pub const WINDOWS_FILE: &str = "windows.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

pub const BATCH_HEADER: &[&str] = &[
    "batch_index",
    "window_index",
    "end_record",
    "tp",
    "fp",
    "fn",
    "tn",
    "precision",
    "recall",
    "f_score",
];
pub const WINDOW_HEADER: &[&str] = &[
    "window_index",
    "start_record",
    "end_record",
    "metric",
    "kl_score",
    "theta_kl",
    "drift_detected",
    "in_smoothing",
    "model_count",
    "general_memory_size",
    "precision",
    "recall",
    "f_score",
];
pub const EVENT_HEADER: &[&str] = &[
    "window_index",
    "metric",
    "kl_score",
    "theta_kl",
    "updated_models",
    "skipped_models",
    "spawned_model",
    "model_count",
];
pub const SERIES_HEADER: &[&str] = &[
    "window_index",
    "f_score",
    "precision",
    "recall",
    "kl_score",
    "theta_kl",
    "drift_marker",
    "model_count",
];
pub const DETECTION_HEADER: &[&str] = &["window_index", "kl_score", "theta_kl"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub batch_index: usize,
    pub window_index: usize,
    /// Stream index one past the batch's last record.
    pub end_record: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl BatchRow {
    pub fn new(
        batch_index: usize,
        window_index: usize,
        end_record: usize,
        m: &BinaryMetrics,
    ) -> Self {
        Self {
            batch_index,
            window_index,
            end_record,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            tn: m.tn,
            precision: m.precision(),
            recall: m.recall(),
            f_score: m.f_score(),
        }
    }

    pub fn metrics(&self) -> BinaryMetrics {
        BinaryMetrics {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_index: usize,
    pub start_record: usize,
    pub end_record: usize,
    pub metric: DistanceMetric,
    /// Empty when the window was not scored.
    pub kl_score: Option<f64>,
    pub theta_kl: Option<f64>,
    pub drift_detected: bool,
    pub in_smoothing: bool,
    pub model_count: usize,
    pub general_memory_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub window_index: usize,
    pub metric: DistanceMetric,
    pub kl_score: f64,
    pub theta_kl: f64,
    pub updated_models: usize,
    pub skipped_models: usize,
    pub spawned_model: Option<u64>,
    pub model_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub batches: Vec<BatchRow>,
    pub windows: Vec<WindowRow>,
    pub events: Vec<EventRow>,
}

fn write_rows<W: Write, T: Serialize>(writer: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses rows, insisting on the exact header.
pub fn read_rows<R: Read, T: DeserializeOwned>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let found = r.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Metrics(format!(
            "unexpected header `{}`, expected `{}`",
            found.iter().collect::<Vec<_>>().join(","),
            header.join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<File> {
    Ok(File::create(dir.join(name))?)
}

impl MetricsLog {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(create(dir, BATCHES_FILE)?, BATCH_HEADER, &self.batches)?;
        write_rows(create(dir, WINDOWS_FILE)?, WINDOW_HEADER, &self.windows)?;
        write_rows(create(dir, EVENTS_FILE)?, EVENT_HEADER, &self.events)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<File> {
            File::open(dir.join(name)).map_err(|e| Error::Metrics(format!("{name}: {e}")))
        };
        Ok(Self {
            batches: read_rows(open(BATCHES_FILE)?, BATCH_HEADER)?,
            windows: read_rows(open(WINDOWS_FILE)?, WINDOW_HEADER)?,
            events: read_rows(open(EVENTS_FILE)?, EVENT_HEADER)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub window_index: usize,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub kl_score: Option<f64>,
    pub theta_kl: Option<f64>,
    /// 1 on windows where drift was detected.
    pub drift_marker: u8,
    pub model_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub window_index: usize,
    pub kl_score: Option<f64>,
    pub theta_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub series: Vec<SeriesRow>,
    pub detections: Vec<DetectionRow>,
    pub summary: String,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn report(log: &MetricsLog) -> Report {
    let series: Vec<SeriesRow> = log
        .windows
        .iter()
        .map(|w| SeriesRow {
            window_index: w.window_index,
            f_score: w.f_score,
            precision: w.precision,
            recall: w.recall,
            kl_score: w.kl_score,
            theta_kl: w.theta_kl,
            drift_marker: w.drift_detected as u8,
            model_count: w.model_count,
        })
        .collect();
    let detections: Vec<DetectionRow> = log
        .windows
        .iter()
        .filter(|w| w.drift_detected)
        .map(|w| DetectionRow {
            window_index: w.window_index,
            kl_score: w.kl_score,
            theta_kl: w.theta_kl,
        })
        .collect();

    let pooled = log
        .batches
        .iter()
        .fold(BinaryMetrics::default(), |mut acc, b| {
            let m = b.metrics();
            acc.tp += m.tp;
            acc.fp += m.fp;
            acc.fn_ += m.fn_;
            acc.tn += m.tn;
            acc
        });
    let mut summary = String::new();
    let _ = writeln!(summary, "windows            {}", log.windows.len());
    let _ = writeln!(summary, "batches            {}", log.batches.len());
    let _ = writeln!(summary, "detections         {}", detections.len());
    let _ = writeln!(summary, "events             {}", log.events.len());
    let _ = writeln!(
        summary,
        "final model count  {}",
        log.windows.last().map_or(0, |w| w.model_count)
    );
    let _ = writeln!(
        summary,
        "mean batch f-score {}",
        fmt_opt(mean(log.batches.iter().map(|b| b.f_score)))
    );
    let _ = writeln!(
        summary,
        "pooled p / r / f   {:.4} / {:.4} / {:.4}",
        pooled.precision(),
        pooled.recall(),
        pooled.f_score()
    );
    if !detections.is_empty() {
        let list: Vec<String> = detections
            .iter()
            .map(|d| d.window_index.to_string())
            .collect();
        let _ = writeln!(summary, "detected at        {}", list.join(" "));
    }
    Report {
        series,
        detections,
        summary,
    }
}

impl Report {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(create(dir, SERIES_FILE)?, SERIES_HEADER, &self.series)?;
        write_rows(
            create(dir, DETECTIONS_FILE)?,
            DETECTION_HEADER,
            &self.detections,
        )?;
        std::fs::write(dir.join(SUMMARY_FILE), &self.summary)?;
        Ok(())
    }
}
