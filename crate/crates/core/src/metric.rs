//! Normalized distance metrics on embedding vectors.
//!
//! Every metric maps a pair of vectors into `[0, 1]`. Cosine distance is
//! `(1 - cos) / 2`, which is bounded by construction. The L1 and L2 norms
//! are unbounded, so they are divided by the largest raw distance observed
//! so far on the stream (see [`NormalizationState`]) and clamped to 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Cosine,
    L1,
    L2,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [
        DistanceMetric::Cosine,
        DistanceMetric::L1,
        DistanceMetric::L2,
    ];

    /// Whether the metric needs a running bound to land in `[0, 1]`.
    pub fn needs_bound(self) -> bool {
        !matches!(self, DistanceMetric::Cosine)
    }

    /// Distance before normalization. For cosine this is already in `[0, 1]`.
    pub fn raw(self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        Ok(match self {
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::ZeroVector);
                }
                let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
                if a == b {
                    0.0
                } else {
                    (1.0 - cos) / 2.0
                }
            }
            DistanceMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            DistanceMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        })
    }

    /// Normalized distance in `[0, 1]` under the given bound.
    pub fn distance(self, a: &[f64], b: &[f64], norm: &NormalizationState) -> Result<f64> {
        let raw = self.raw(a, b)?;
        Ok(self.normalize(raw, norm))
    }

    pub fn normalize(self, raw: f64, norm: &NormalizationState) -> f64 {
        match self {
            DistanceMetric::Cosine => raw,
            DistanceMetric::L1 | DistanceMetric::L2 => norm.scale(raw),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::L1 => "l1",
            DistanceMetric::L2 => "l2",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(DistanceMetric::Cosine),
            "l1" => Ok(DistanceMetric::L1),
            "l2" => Ok(DistanceMetric::L2),
            other => Err(Error::Config(format!("unknown distance metric `{other}`"))),
        }
    }
}

/// Running upper bound used to map L1/L2 norms into `[0, 1]`.
///
/// The bound only grows. Callers snapshot it (it is `Copy`) whenever two
/// sets of distances must be normalized consistently.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizationState {
    max_raw: f64,
}

impl NormalizationState {
    pub const fn with_bound(max_raw: f64) -> Self {
        Self {
            max_raw: if max_raw > 0.0 { max_raw } else { 0.0 },
        }
    }

    pub fn bound(&self) -> f64 {
        self.max_raw
    }

    pub fn observe(&mut self, raw: f64) {
        if raw.is_finite() && raw > self.max_raw {
            self.max_raw = raw;
        }
    }

    pub fn scale(&self, raw: f64) -> f64 {
        if self.max_raw <= 0.0 {
            return if raw > 0.0 { 1.0 } else { 0.0 };
        }
        (raw / self.max_raw).clamp(0.0, 1.0)
    }
}
