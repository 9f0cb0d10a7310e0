//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::LogisticConfig;
use crate::detector::DetectorConfig;
use crate::ensemble::{BandSettings, EnsembleConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Initial models only; predict and evaluate.
    BaselineStatic,
    /// Adds drift detection without adapting.
    DetectOnly,
    #[default]
    FullAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub dimension: usize,
    pub mode: RunMode,
    pub seed: u64,
    /// Share of the stream used for initial training and calibration.
    pub initial_fraction: f64,
    pub initial_max: usize,
    /// Number of models the initial segment is split into.
    pub initial_models: usize,
    pub eval_batch: usize,
    /// Checkpoint every this many windows; 0 disables checkpoints.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub detector: DetectorConfig,
    pub ensemble: EnsembleConfig,
    pub classifier: LogisticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("stream.jsonl"),
            output_dir: PathBuf::from("out"),
            dimension: 300,
            mode: RunMode::FullAdaptive,
            seed: 0,
            initial_fraction: 0.1,
            initial_max: 5000,
            initial_models: 3,
            eval_batch: 100,
            checkpoint_every: 0,
            checkpoint_path: None,
            detector: DetectorConfig::default(),
            ensemble: EnsembleConfig::default(),
            classifier: LogisticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        // relative paths are taken relative to the config file
        if let Some(dir) = path.parent() {
            for p in [&mut config.input, &mut config.output_dir] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(p) = config.checkpoint_path.as_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "initial_fraction must lie in (0, 1], got {}",
                self.initial_fraction
            )));
        }
        if self.initial_max == 0 || self.initial_models == 0 || self.eval_batch == 0 {
            return Err(Error::Config(
                "initial_max, initial_models and eval_batch must be positive".into(),
            ));
        }
        let c = &self.classifier;
        if !(c.learning_rate > 0.0 && c.learning_rate.is_finite())
            || !(c.l2 >= 0.0 && c.l2.is_finite())
        {
            return Err(Error::Config(
                "classifier learning_rate and l2 are invalid".into(),
            ));
        }
        self.detector.validate()?;
        self.ensemble.validate()
    }

    pub fn band_settings(&self) -> BandSettings {
        BandSettings {
            metric: self.detector.metric,
            rho: self.detector.rho,
            eps_band: self.detector.eps_band,
            histogram_bins: self.detector.histogram_bins,
        }
    }

    pub fn checkpoint_file(&self) -> PathBuf {
        self.checkpoint_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoint.json"))
    }

    /// Number of records used for initial training out of `total`.
    pub fn initial_len(&self, total: usize) -> usize {
        ((total as f64 * self.initial_fraction).ceil() as usize)
            .min(self.initial_max)
            .min(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::SelectionPolicy;
    use crate::metric::DistanceMetric;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml(
            r#"
            input = "s.jsonl"
            dimension = 10
            mode = "detect_only"

            [detector]
            metric = "l1"
            rho = 0.7

            [ensemble]
            prediction_policy = { kind = "k_nearest_centroid", k = 2 }
            lambda = { mode = "raw", value = 0.4 }
            "#,
        )
        .unwrap();
        assert_eq!(c.mode, RunMode::DetectOnly);
        assert_eq!(c.detector.metric, DistanceMetric::L1);
        assert_eq!(c.detector.rho, 0.7);
        assert_eq!(c.detector.stream_window_size, 1000);
        assert_eq!(
            c.ensemble.prediction_policy,
            SelectionPolicy::KNearestCentroid { k: 2 }
        );
        assert_eq!(c.ensemble.min_spawn, 200);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "dimension = 0",
            "initial_fraction = 0.0",
            "[detector]\nrho = 1.5",
            "[ensemble]\ntheta_w = 1.0",
            "unknown_key = 3",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn initial_segment_size() {
        let c = RunConfig::default();
        assert_eq!(c.initial_len(20_000), 2000);
        assert_eq!(c.initial_len(100_000), 5000);
        assert_eq!(c.initial_len(5), 1);
        assert_eq!(c.initial_len(0), 0);
    }
}
