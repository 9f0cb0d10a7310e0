//! The windowed stream loop: predict, evaluate, route, detect, adapt.

use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, LogisticClassifier};
use crate::config::{RunConfig, RunMode};
use crate::detector::DriftDetector;
use crate::ensemble::{AdaptationReport, BinaryMetrics, Ensemble};
use crate::error::{Error, Result};
use crate::io::ingest;
use crate::metric::NormalizationState;
use crate::report::{BatchRow, EventRow, MetricsLog, WindowRow};
use crate::types::{Label, Record};

const CHECKPOINT_VERSION: u32 = 1;

/// Complete state of a run; serializing it is the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "C: Classifier")]
pub struct Engine<C> {
    config: RunConfig,
    stream_len: usize,
    ensemble: Ensemble<C>,
    detector: Option<DriftDetector>,
    norm: NormalizationState,
    next_record: usize,
    window_index: usize,
    batch_index: usize,
    pending: Vec<(Record, Option<Label>)>,
    log: MetricsLog,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "C: Classifier")]
struct Checkpoint<C> {
    version: u32,
    engine: Engine<C>,
}

impl<C: Classifier> Engine<C> {
    /// Trains the initial models and calibrates the detector on the first
    /// segment of `records`.
    pub fn start(
        config: RunConfig,
        prototype: C,
        records: &[Record],
        truth: &[Option<Label>],
    ) -> Result<Self> {
        config.validate()?;
        check_stream(&config, records, truth)?;
        let initial = config.initial_len(records.len());
        if initial < 2 {
            return Err(Error::EmptyWindow("initial training segment"));
        }
        let mut norm = NormalizationState::default();
        let detector = match config.mode {
            RunMode::BaselineStatic => None,
            _ => Some(DriftDetector::new(
                config.detector.clone(),
                records[..initial]
                    .iter()
                    .map(|r| r.vector.clone())
                    .collect(),
                &mut norm,
            )?),
        };

        let mut ensemble = Ensemble::new(
            config.ensemble,
            config.band_settings(),
            prototype,
            config.seed,
        )?;
        let chunk = initial.div_ceil(config.initial_models);
        for (k, part) in records[..initial].chunks(chunk).enumerate() {
            let offset = k * chunk;
            let (train, labels): (Vec<Record>, Vec<Label>) = part
                .iter()
                .enumerate()
                .filter_map(|(i, r)| Some((r.clone(), truth[offset + i].or(r.oracle_label())?)))
                .unzip();
            if train.len() < 2 {
                continue;
            }
            ensemble.add_model(train, &labels, 0, &mut norm)?;
        }
        if ensemble.is_empty() {
            return Err(Error::Config(
                "the initial segment holds no labeled records".into(),
            ));
        }
        info!(
            "trained {} initial models on {initial} records, theta_kl {:?}",
            ensemble.len(),
            detector.as_ref().map(|d| d.theta_kl())
        );
        Ok(Self {
            config,
            stream_len: records.len(),
            ensemble,
            detector,
            norm,
            next_record: initial,
            window_index: 0,
            batch_index: 0,
            pending: Vec::new(),
            log: MetricsLog::default(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble<C> {
        &self.ensemble
    }

    pub fn detector(&self) -> Option<&DriftDetector> {
        self.detector.as_ref()
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn into_log(self) -> MetricsLog {
        self.log
    }

    pub fn is_finished(&self) -> bool {
        self.next_record >= self.stream_len && self.pending.is_empty()
    }

    pub fn windows_done(&self) -> usize {
        self.window_index
    }

    fn flush_batch(&mut self, window_index: usize, end_record: usize) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let (records, truth): (Vec<Record>, Vec<Option<Label>>) =
            std::mem::take(&mut self.pending).into_iter().unzip();
        if let Some(eval) = self.ensemble.evaluate(&records, &truth)? {
            self.log.batches.push(BatchRow::new(
                self.batch_index,
                window_index,
                end_record,
                &eval.ensemble,
            ));
            self.batch_index += 1;
        }
        Ok(())
    }

    /// Processes the next window. Returns false once the stream is done.
    pub fn step(&mut self, records: &[Record], truth: &[Option<Label>]) -> Result<bool> {
        if records.len() != self.stream_len {
            return Err(Error::Checkpoint(format!(
                "stream has {} records, the run expects {}",
                records.len(),
                self.stream_len
            )));
        }
        if self.next_record >= self.stream_len {
            let end = self.stream_len;
            self.flush_batch(self.window_index.saturating_sub(1), end)?;
            return Ok(false);
        }
        let size = self.config.detector.stream_window_size;
        let start = self.next_record;
        let end = (start + size).min(self.stream_len);
        let window_index = self.window_index;
        let adaptive = self.config.mode == RunMode::FullAdaptive;

        let mut window_metrics = BinaryMetrics::default();
        for i in start..end {
            let mut record = records[i].clone();
            let prediction = self.ensemble.predict(&record.vector)?;
            record.predicted_label = Some(prediction.label);
            if let Some(t) = truth[i].or(record.oracle_label()) {
                window_metrics.record(prediction.label, t);
            }
            if adaptive {
                self.ensemble.route(&record)?;
            }
            self.pending.push((record, truth[i]));
            if self.pending.len() == self.config.eval_batch {
                self.flush_batch(window_index, i + 1)?;
            }
        }

        let full = end - start == size;
        let mut row = WindowRow {
            window_index,
            start_record: start,
            end_record: end,
            metric: self.config.detector.metric,
            kl_score: None,
            theta_kl: None,
            drift_detected: false,
            in_smoothing: false,
            model_count: 0,
            general_memory_size: 0,
            precision: window_metrics.precision(),
            recall: window_metrics.recall(),
            f_score: window_metrics.f_score(),
        };
        if let (Some(detector), true) = (self.detector.as_mut(), full) {
            let vectors: Vec<&[f64]> = records[start..end]
                .iter()
                .map(|r| r.vector.as_slice())
                .collect();
            let verdict = detector.process_window(&vectors, &mut self.norm)?;
            row.kl_score = Some(verdict.kl_score);
            row.theta_kl = Some(verdict.theta_kl);
            row.drift_detected = verdict.drift_detected;
            row.in_smoothing = verdict.in_smoothing;
            if verdict.drift_detected {
                info!(
                    "window {window_index}: drift, kl {:.4} > {:.4}",
                    verdict.kl_score, verdict.theta_kl
                );
            }
            // the smoothing windows that follow a detection belong to the
            // same drift event and are adapted on as well
            if verdict.drift_detected || (adaptive && verdict.in_smoothing) {
                let report = if adaptive {
                    self.ensemble.adapt(window_index, &mut self.norm)?
                } else {
                    AdaptationReport::default()
                };
                self.log.events.push(EventRow {
                    window_index,
                    metric: self.config.detector.metric,
                    kl_score: verdict.kl_score,
                    theta_kl: verdict.theta_kl,
                    updated_models: report.updated.len(),
                    skipped_models: report.skipped.len(),
                    spawned_model: report.spawned,
                    model_count: self.ensemble.len(),
                });
            }
        }
        row.model_count = self.ensemble.len();
        row.general_memory_size = self.ensemble.general.len();
        self.log.windows.push(row);
        self.next_record = end;
        self.window_index += 1;
        if end == self.stream_len {
            self.flush_batch(window_index, end)?;
        }
        Ok(true)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(&CheckpointRef {
            version: CHECKPOINT_VERSION,
            engine: self,
        })?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_json(&fs::read_to_string(path)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let cp: Checkpoint<C> = serde_json::from_str(text)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                cp.version
            )));
        }
        let e = cp.engine;
        if e.next_record > e.stream_len || e.pending.len() >= e.config.eval_batch.max(1) {
            return Err(Error::Checkpoint("inconsistent progress counters".into()));
        }
        e.config.validate()?;
        Ok(e)
    }

    /// Fails unless `config` describes the same run as the checkpoint.
    pub fn check_compatible(&self, config: &RunConfig) -> Result<()> {
        let neutral = |c: &RunConfig| RunConfig {
            input: Default::default(),
            output_dir: Default::default(),
            checkpoint_every: 0,
            checkpoint_path: None,
            ..c.clone()
        };
        if neutral(&self.config) != neutral(config) {
            return Err(Error::Checkpoint(
                "configuration differs from the checkpointed run".into(),
            ));
        }
        Ok(())
    }

    /// Runs to the end of the stream, checkpointing as configured.
    pub fn run_to_end(&mut self, records: &[Record], truth: &[Option<Label>]) -> Result<()> {
        let every = self.config.checkpoint_every;
        let path = self.config.checkpoint_file();
        while self.step(records, truth)? {
            if every > 0 && self.window_index.is_multiple_of(every) {
                self.save_checkpoint(&path)?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
#[serde(bound = "C: Classifier")]
struct CheckpointRef<'a, C> {
    version: u32,
    engine: &'a Engine<C>,
}

fn check_stream(config: &RunConfig, records: &[Record], truth: &[Option<Label>]) -> Result<()> {
    if records.len() != truth.len() {
        return Err(Error::Config(format!(
            "{} records but {} truth entries",
            records.len(),
            truth.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| r.dim() != config.dimension) {
        return Err(Error::DimensionMismatch {
            expected: config.dimension,
            actual: r.dim(),
        });
    }
    Ok(())
}

/// Runs a whole in-memory stream with the reference classifier.
pub fn run_records(
    config: &RunConfig,
    records: &[Record],
    truth: &[Option<Label>],
) -> Result<Engine<LogisticClassifier>> {
    let mut engine = Engine::start(
        config.clone(),
        LogisticClassifier::new(config.classifier),
        records,
        truth,
    )?;
    engine.run_to_end(records, truth)?;
    Ok(engine)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub windows: usize,
    pub detections: usize,
    pub models: usize,
    pub malformed: usize,
}

/// Reads the configured input, runs it (optionally from a checkpoint) and
/// writes the metrics files into the output directory.
pub fn run(config: &RunConfig, resume: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let input = ingest(&config.input, config.dimension)?;
    let mut engine = match resume {
        Some(path) => {
            let mut engine = Engine::<LogisticClassifier>::load_checkpoint(path)?;
            engine.check_compatible(config)?;
            engine.config = config.clone();
            info!("resuming at window {}", engine.window_index);
            engine
        }
        None => Engine::start(
            config.clone(),
            LogisticClassifier::new(config.classifier),
            &input.records,
            &input.truth,
        )?,
    };
    engine.run_to_end(&input.records, &input.truth)?;
    engine.log.write_dir(&config.output_dir)?;
    Ok(RunSummary {
        windows: engine.log.windows.len(),
        detections: engine
            .log
            .windows
            .iter()
            .filter(|w| w.drift_detected)
            .count(),
        models: engine.ensemble.len(),
        malformed: input.malformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, StreamSpec};

    fn small_config(mode: RunMode) -> RunConfig {
        let mut c = RunConfig {
            dimension: 8,
            mode,
            seed: 3,
            ..RunConfig::default()
        };
        c.detector.stream_window_size = 200;
        c
    }

    fn stream(len: usize) -> (Vec<Record>, Vec<Option<Label>>) {
        let s = generate(&StreamSpec {
            dimension: 8,
            length: len,
            noise_fraction: 0.5,
            offset: 6.0,
            seed: 9,
            ..StreamSpec::default()
        })
        .unwrap();
        (s.records, s.truth.into_iter().map(Some).collect())
    }

    #[test]
    fn baseline_keeps_the_initial_models() {
        let (records, truth) = stream(3000);
        let engine = run_records(&small_config(RunMode::BaselineStatic), &records, &truth).unwrap();
        assert!(engine.detector().is_none());
        assert_eq!(engine.ensemble().len(), 3);
        assert!(engine
            .ensemble()
            .models
            .iter()
            .all(|m| m.updated_at == 0 && m.memory.is_empty()));
        let log = engine.log();
        // 2700 records after the initial 300: 13 full windows and one of 100
        assert_eq!(log.windows.len(), 14);
        assert_eq!(log.batches.len(), 27);
        assert_eq!(log.batches.last().unwrap().end_record, 3000);
        assert!(log.windows.iter().all(|w| w.kl_score.is_none()));
    }

    #[test]
    fn stationary_stream_triggers_no_adaptation() {
        let (records, truth) = stream(6000);
        let engine = run_records(&small_config(RunMode::FullAdaptive), &records, &truth).unwrap();
        assert!(engine.log().events.is_empty(), "{:?}", engine.log().events);
        assert_eq!(engine.ensemble().len(), 3);
    }

    #[test]
    fn runs_without_any_ground_truth() {
        let (records, _) = stream(2000);
        let hidden = vec![None; records.len()];
        let engine = run_records(&small_config(RunMode::FullAdaptive), &records, &hidden).unwrap();
        // evaluation falls back to the oracle-labeled records
        let evaluated: usize = engine
            .log()
            .batches
            .iter()
            .map(|b| b.metrics().total())
            .sum();
        let oracle = records[200..].iter().filter(|r| r.is_oracle()).count();
        assert_eq!(evaluated, oracle);
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let (records, truth) = stream(3000);
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(RunMode::FullAdaptive);
        config.checkpoint_every = 4;
        config.checkpoint_path = Some(dir.path().join("cp.json"));
        let full = run_records(&config, &records, &truth).unwrap();

        let mut partial = Engine::start(
            config.clone(),
            LogisticClassifier::new(config.classifier),
            &records,
            &truth,
        )
        .unwrap();
        for _ in 0..4 {
            partial.step(&records, &truth).unwrap();
        }
        partial
            .save_checkpoint(&dir.path().join("mid.json"))
            .unwrap();
        let mut resumed =
            Engine::<LogisticClassifier>::load_checkpoint(&dir.path().join("mid.json")).unwrap();
        assert_eq!(resumed, partial);
        resumed.run_to_end(&records, &truth).unwrap();
        assert_eq!(resumed.log(), full.log());
    }

    #[test]
    fn incompatible_checkpoint_is_refused() {
        let (records, truth) = stream(1500);
        let config = small_config(RunMode::DetectOnly);
        let engine = Engine::start(
            config.clone(),
            LogisticClassifier::default(),
            &records,
            &truth,
        )
        .unwrap();
        let mut other = config.clone();
        other.detector.rho = 0.7;
        assert!(engine.check_compatible(&other).is_err());
        let mut moved = config.clone();
        moved.output_dir = "elsewhere".into();
        assert!(engine.check_compatible(&moved).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (records, truth) = stream(500);
        let mut config = small_config(RunMode::DetectOnly);
        config.dimension = 9;
        assert!(matches!(
            run_records(&config, &records, &truth),
            Err(Error::DimensionMismatch {
                expected: 9,
                actual: 8
            })
        ));
    }
}
