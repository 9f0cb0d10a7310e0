//! Unsupervised virtual-drift detection.
//!
//! The detector holds a reference ("model") window. Each incoming stream
//! window is measured against the reference centroid, and the two distance
//! distributions are compared with a smoothed KL divergence resolved on the
//! reference ρ-band. A detection re-bases the reference on the triggering
//! window; the next `smoothing_windows` windows are blended into it and can
//! never fire.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::{
    compute_band, DistanceDistribution, Histogram, RhoBand, DEFAULT_BINS, DEFAULT_EPS_BAND,
};
use crate::error::{Error, Result};
use crate::metric::{DistanceMetric, NormalizationState};
use crate::types::centroid;

/// KL divergence `Σ p_a ln(p_a / p_b)` over the bins in `range`, in nats.
///
/// Both inputs are restricted to `range`. Zero bins in either histogram are
/// replaced by the smallest nonzero mass found in the pair, then each side is
/// renormalized over the range.
pub fn kl_divergence(p_a: &[f64], p_b: &[f64], range: Range<usize>) -> Result<f64> {
    if p_a.len() != p_b.len() {
        return Err(Error::BinCountMismatch(p_a.len(), p_b.len()));
    }
    if let Some(&bad) = p_a
        .iter()
        .chain(p_b)
        .find(|m| !(m.is_finite() && **m >= 0.0))
    {
        return Err(Error::InvalidMass(bad));
    }
    let range = range.start.min(p_a.len())..range.end.min(p_a.len());
    let a = &p_a[range.clone()];
    let b = &p_b[range];
    let eps = a
        .iter()
        .chain(b)
        .copied()
        .filter(|m| *m > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !eps.is_finite() {
        return Err(Error::NoComparableMass);
    }
    let fill = |m: f64| if m > 0.0 { m } else { eps };
    let za: f64 = a.iter().map(|m| fill(*m)).sum();
    let zb: f64 = b.iter().map(|m| fill(*m)).sum();
    let kl = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let pa = fill(*x) / za;
            let pb = fill(*y) / zb;
            pa * (pa / pb).ln()
        })
        .sum::<f64>();
    // rounding can leave tiny negatives for identical inputs
    Ok(kl.max(0.0))
}

/// Bins of a `[lo, hi]` histogram that overlap the band.
pub fn band_bins(band: &RhoBand, hist: &Histogram) -> Range<usize> {
    let bins = hist.bins();
    let width = (hist.hi - hist.lo) / bins as f64;
    let start = (((band.delta_l - hist.lo) / width).floor().max(0.0) as usize).min(bins);
    let end = (((band.delta_h - hist.lo) / width).ceil().max(0.0) as usize).min(bins);
    if start < end {
        start..end
    } else {
        start.min(bins.saturating_sub(1))..(start + 1).min(bins)
    }
}

/// Histogram resolved on the band: one bin below `delta_l`, `bins` equal
/// bins across the band, one bin above `delta_h`.
pub fn band_profile(distances: &[f64], band: &RhoBand, bins: usize) -> Vec<f64> {
    let mut masses = Vec::with_capacity(bins + 2);
    if distances.is_empty() {
        masses.resize(bins + 2, 0.0);
        return masses;
    }
    let unit = 1.0 / distances.len() as f64;
    let below = distances.iter().filter(|d| **d <= band.delta_l).count() as f64 * unit;
    let above = distances.iter().filter(|d| **d >= band.delta_h).count() as f64 * unit;
    let inner: Vec<f64> = distances
        .iter()
        .copied()
        .filter(|d| band.contains(*d))
        .collect();
    let mut h = Histogram::over(&inner, bins, band.delta_l, band.delta_h);
    let scale = inner.len() as f64 * unit;
    h.masses.iter_mut().for_each(|m| *m *= scale);
    masses.push(below);
    masses.extend(h.masses);
    masses.push(above);
    masses
}

/// KL score of a stream window against a model distribution and its band.
pub fn score_window(
    model: &DistanceDistribution,
    band: &RhoBand,
    stream: &[f64],
    bins: usize,
) -> Result<f64> {
    let p_a = band_profile(&model.samples, band, bins);
    let p_b = band_profile(stream, band, bins);
    let n = p_a.len();
    kl_divergence(&p_a, &p_b, 0..n)
}

/// How the KL threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Threshold {
    Fixed {
        value: f64,
    },
    /// `margin` times the `quantile` of KL scores between bootstrap copies
    /// of the reference and bootstrap windows drawn from it. Recomputed
    /// whenever a smoothing period ends.
    Calibrated {
        quantile: f64,
        margin: f64,
        resamples: usize,
    },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Calibrated {
            quantile: 0.99,
            margin: 1.2,
            resamples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub rho: f64,
    pub threshold: Threshold,
    /// Windows blended into the reference after a detection (w_L).
    pub smoothing_windows: usize,
    pub stream_window_size: usize,
    pub metric: DistanceMetric,
    /// Bins across the band used for the KL comparison.
    pub kl_bins: usize,
    pub histogram_bins: usize,
    pub eps_band: f64,
    /// Maximum number of reference vectors retained (oldest dropped).
    pub reference_capacity: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            threshold: Threshold::default(),
            smoothing_windows: 2,
            stream_window_size: 1000,
            metric: DistanceMetric::Cosine,
            kl_bins: 20,
            histogram_bins: DEFAULT_BINS,
            eps_band: DEFAULT_EPS_BAND,
            reference_capacity: 5000,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidRho(self.rho));
        }
        match self.threshold {
            Threshold::Fixed { value } if !(value > 0.0) => {
                return Err(Error::Config(format!(
                    "theta_kl must be positive, got {value}"
                )))
            }
            Threshold::Calibrated {
                quantile,
                margin,
                resamples,
            } if !(quantile > 0.0 && quantile <= 1.0) || !(margin > 0.0) || resamples == 0 => {
                return Err(Error::Config("invalid threshold calibration".into()))
            }
            _ => {}
        }
        if self.stream_window_size < 2 {
            return Err(Error::Config(
                "stream_window_size must be at least 2".into(),
            ));
        }
        if self.kl_bins == 0 || self.histogram_bins == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        if self.reference_capacity < 2 {
            return Err(Error::Config(
                "reference_capacity must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftVerdict {
    pub window_index: usize,
    pub kl_score: f64,
    pub theta_kl: f64,
    pub drift_detected: bool,
    pub in_smoothing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    pub window_index: usize,
    pub smoothing_remaining: usize,
    pub detections: usize,
}

/// The model window the stream is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    vectors: Vec<Vec<f64>>,
    centroid: Vec<f64>,
    raw: Vec<f64>,
}

impl Reference {
    pub fn new(vectors: Vec<Vec<f64>>, metric: DistanceMetric) -> Result<Self> {
        let c = centroid(vectors.iter().map(Vec::as_slice))?;
        let raw = vectors
            .iter()
            .map(|v| metric.raw(v, &c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vectors,
            centroid: c,
            raw,
        })
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn distribution(
        &self,
        metric: DistanceMetric,
        norm: &NormalizationState,
        bins: usize,
    ) -> Result<DistanceDistribution> {
        let d = self
            .raw
            .iter()
            .map(|r| metric.normalize(*r, norm))
            .collect();
        DistanceDistribution::from_distances(d, bins)
    }

    fn extend(
        &mut self,
        more: Vec<Vec<f64>>,
        capacity: usize,
        metric: DistanceMetric,
    ) -> Result<()> {
        let mut vectors = std::mem::take(&mut self.vectors);
        vectors.extend(more);
        if vectors.len() > capacity {
            vectors.drain(..vectors.len() - capacity);
        }
        *self = Reference::new(vectors, metric)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDetector {
    config: DetectorConfig,
    theta_kl: f64,
    reference: Reference,
    state: DetectorState,
}

impl DriftDetector {
    /// Builds a detector on an initial reference window, calibrating the
    /// threshold on it when configured to.
    pub fn new(
        config: DetectorConfig,
        reference: Vec<Vec<f64>>,
        norm: &mut NormalizationState,
    ) -> Result<Self> {
        config.validate()?;
        let mut reference = reference;
        if reference.len() > config.reference_capacity {
            reference.drain(..reference.len() - config.reference_capacity);
        }
        let reference = Reference::new(reference, config.metric)?;
        reference.raw.iter().for_each(|r| norm.observe(*r));
        let theta_kl = threshold_for(&config, &reference, norm, config.seed)?;
        Ok(Self {
            config,
            theta_kl,
            reference,
            state: DetectorState::default(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn theta_kl(&self) -> f64 {
        self.theta_kl
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    /// Current model distribution and band under `norm`.
    pub fn model_band(&self, norm: &NormalizationState) -> Result<(DistanceDistribution, RhoBand)> {
        let dist =
            self.reference
                .distribution(self.config.metric, norm, self.config.histogram_bins)?;
        let band = compute_band(&dist, self.config.rho, self.config.eps_band)?;
        Ok((dist, band))
    }

    /// Scores one stream window and updates the smoothing state.
    pub fn process_window(
        &mut self,
        window: &[&[f64]],
        norm: &mut NormalizationState,
    ) -> Result<DriftVerdict> {
        if window.len() < 2 {
            return Err(Error::EmptyWindow("stream window"));
        }
        let metric = self.config.metric;
        let raw = window
            .iter()
            .map(|v| metric.raw(v, &self.reference.centroid))
            .collect::<Result<Vec<_>>>()?;
        raw.iter().for_each(|r| norm.observe(*r));
        let frozen = *norm;
        let stream: Vec<f64> = raw.iter().map(|r| metric.normalize(*r, &frozen)).collect();
        let (dist, band) = self.model_band(&frozen)?;
        let kl_score = score_window(&dist, &band, &stream, self.config.kl_bins)?;

        let window_index = self.state.window_index;
        self.state.window_index += 1;
        let owned = || window.iter().map(|v| v.to_vec()).collect::<Vec<_>>();

        if self.state.smoothing_remaining > 0 {
            self.state.smoothing_remaining -= 1;
            self.reference
                .extend(owned(), self.config.reference_capacity, metric)?;
            if self.state.smoothing_remaining == 0 {
                // the blended reference is final; its size differs from the
                // one the threshold was calibrated on
                let seed = self.config.seed
                    ^ (window_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                self.theta_kl = threshold_for(&self.config, &self.reference, &frozen, seed)?;
            }
            return Ok(DriftVerdict {
                window_index,
                kl_score,
                theta_kl: self.theta_kl,
                drift_detected: false,
                in_smoothing: true,
            });
        }

        let drift_detected = kl_score > self.theta_kl;
        if drift_detected {
            self.state.detections += 1;
            self.state.smoothing_remaining = self.config.smoothing_windows;
            self.reference = Reference::new(owned(), metric)?;
        }
        Ok(DriftVerdict {
            window_index,
            kl_score,
            theta_kl: self.theta_kl,
            drift_detected,
            in_smoothing: false,
        })
    }
}

/// Null distribution of the KL score: both the reference and the window are
/// bootstrapped from the reference distances, so the threshold reflects
/// the sampling noise of each side.
fn calibrate(
    dist: &DistanceDistribution,
    config: &DetectorConfig,
    quantile: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let band = compute_band(dist, config.rho, config.eps_band)?;
    let n = dist.len();
    let size = config.stream_window_size.min(n).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(resamples);
    let mut reference = vec![0.0; n];
    let mut window = vec![0.0; size];
    for _ in 0..resamples {
        for s in reference.iter_mut() {
            *s = dist.samples[rng.random_range(0..n)];
        }
        for s in window.iter_mut() {
            *s = dist.samples[rng.random_range(0..n)];
        }
        let p_a = band_profile(&reference, &band, config.kl_bins);
        let p_b = band_profile(&window, &band, config.kl_bins);
        scores.push(kl_divergence(&p_a, &p_b, 0..p_a.len())?);
    }
    Ok(quantile_of(&mut scores, quantile))
}

fn threshold_for(
    config: &DetectorConfig,
    reference: &Reference,
    norm: &NormalizationState,
    seed: u64,
) -> Result<f64> {
    match config.threshold {
        Threshold::Fixed { value } => Ok(value),
        Threshold::Calibrated {
            quantile,
            margin,
            resamples,
        } => {
            let dist = reference.distribution(config.metric, norm, config.histogram_bins)?;
            Ok(margin * calibrate(&dist, config, quantile, resamples, seed)?)
        }
    }
}

/// Linear-interpolated sample quantile.
pub fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}
