//! Weak supervision of memory contents from sparse oracle labels.
//!
//! Each unlabeled record is weighted by its distance to the nearest
//! oracle-labeled record: `w = exp(alpha * d) * [y_pred == y_oracle]`.
//!
//! With `alpha = ln(theta_w) / lambda` the weight is exactly 1 at distance 0
//! and exactly `theta_w` at distance `lambda`. The older form
//! `alpha = -ln(theta_w / lambda)` does not reach `theta_w` at `lambda`; it is
//! kept behind [`WeightLaw::Literal`] for comparison runs only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Minkowski};
use crate::metric::{DistanceMetric, NormalizationState};
use crate::types::{Label, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    Oracle,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub record: Record,
    pub weight: f64,
    pub source: WeightSource,
}

impl WeightedSample {
    pub fn oracle(record: Record) -> Self {
        Self {
            record,
            weight: 1.0,
            source: WeightSource::Oracle,
        }
    }

    /// Training label: the oracle label when present, else the prediction.
    pub fn label(&self) -> Option<Label> {
        self.record.oracle_label().or(self.record.predicted_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightLaw {
    /// `alpha = ln(theta_w) / lambda`.
    #[default]
    Anchored,
    /// `alpha = -ln(theta_w / lambda)`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub theta_w: f64,
    pub lambda: f64,
    pub law: WeightLaw,
}

impl WeightParams {
    pub fn new(theta_w: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            theta_w,
            lambda,
            law: WeightLaw::Anchored,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_w > 0.0 && self.theta_w < 1.0) {
            return Err(Error::Config(format!(
                "theta_w must lie in (0, 1), got {}",
                self.theta_w
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        match self.law {
            WeightLaw::Anchored => self.theta_w.ln() / self.lambda,
            WeightLaw::Literal => -(self.theta_w / self.lambda).ln(),
        }
    }

    /// Decay factor at distance `d`, before the agreement indicator.
    pub fn decay(&self, d: f64) -> f64 {
        (self.alpha() * d).exp()
    }
}

/// Nearest-neighbour index over the oracle-labeled records of a memory.
#[derive(Debug, Clone)]
pub struct OracleIndex {
    tree: KdTree,
    labels: Vec<Label>,
    originals: Vec<Vec<f64>>,
    metric: DistanceMetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMatch {
    pub index: usize,
    pub label: Label,
    pub distance: f64,
}

impl OracleIndex {
    /// Indexes the oracle-labeled records among `records`.
    ///
    /// Cosine distance is monotone in the Euclidean distance between
    /// unit-normalized vectors, so cosine queries run on a normalized L2 tree.
    pub fn build<'a, I>(records: I, metric: DistanceMetric) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Record>,
    {
        let mut labels = Vec::new();
        let mut originals = Vec::new();
        for r in records {
            if let Some(label) = r.oracle_label() {
                labels.push(label);
                originals.push(r.vector.clone());
            }
        }
        let (points, norm) = match metric {
            DistanceMetric::Cosine => (
                originals
                    .iter()
                    .map(|v| unit(v))
                    .collect::<Result<Vec<_>>>()?,
                Minkowski::L2,
            ),
            DistanceMetric::L1 => (originals.clone(), Minkowski::L1),
            DistanceMetric::L2 => (originals.clone(), Minkowski::L2),
        };
        let tree = KdTree::build(points, norm).ok_or(Error::NoOracleRecords)?;
        Ok(Self {
            tree,
            labels,
            originals,
            metric,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// Closest oracle record to `x`, with its normalized distance.
    pub fn nearest(&self, x: &[f64], norm: &NormalizationState) -> Result<OracleMatch> {
        let query = match self.metric {
            DistanceMetric::Cosine => unit(x)?,
            _ => x.to_vec(),
        };
        if query.len() != self.originals[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.originals[0].len(),
                actual: query.len(),
            });
        }
        let hit = self.tree.nearest(&query);
        let distance = self.metric.distance(x, &self.originals[hit.index], norm)?;
        Ok(OracleMatch {
            index: hit.index,
            label: self.labels[hit.index],
            distance,
        })
    }
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Weighs one non-oracle record against its nearest oracle neighbour.
pub fn weigh_sample(
    x: &Record,
    index: &OracleIndex,
    params: &WeightParams,
    norm: &NormalizationState,
) -> Result<WeightedSample> {
    let predicted = x
        .predicted_label
        .ok_or_else(|| Error::MissingPrediction(x.id.clone()))?;
    let hit = index.nearest(&x.vector, norm)?;
    let weight = if predicted == hit.label {
        params.decay(hit.distance)
    } else {
        0.0
    };
    Ok(WeightedSample {
        record: x.clone(),
        weight,
        source: WeightSource::Weak,
    })
}

/// Weighs a whole memory. Oracle records pass through with weight 1.
pub fn weigh_memory<'a, I>(
    records: I,
    index: &OracleIndex,
    params: &WeightParams,
    norm: &NormalizationState,
) -> Result<Vec<WeightedSample>>
where
    I: IntoIterator<Item = &'a Record>,
{
    records
        .into_iter()
        .map(|r| {
            if r.is_oracle() {
                Ok(WeightedSample::oracle(r.clone()))
            } else {
                weigh_sample(r, index, params, norm)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(id: &str, v: &[f64], label: Label) -> Record {
        Record::new(id, v.to_vec(), 0).with_oracle(Some(label))
    }

    fn weak(id: &str, v: &[f64], pred: Label) -> Record {
        let mut r = Record::new(id, v.to_vec(), 0);
        r.predicted_label = Some(pred);
        r
    }

    const NORM: NormalizationState = NormalizationState::with_bound(10.0);

    #[test]
    fn weight_law_anchors() {
        let p = WeightParams::new(0.01, 0.2).unwrap();
        assert_eq!(p.decay(0.0), 1.0);
        assert!((p.decay(0.2) - 0.01).abs() < 1e-12);
        let hand = (0.01f64.ln() / 0.2 * 0.1).exp();
        assert!((p.decay(0.1) - hand).abs() < 1e-15);
        assert!((p.decay(0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn literal_law_misses_the_anchor() {
        let p = WeightParams {
            law: WeightLaw::Literal,
            ..WeightParams::new(0.01, 0.2).unwrap()
        };
        assert!((p.decay(0.2) - 0.01).abs() > 0.1);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(WeightParams::new(0.0, 0.2).is_err());
        assert!(WeightParams::new(1.0, 0.2).is_err());
        assert!(WeightParams::new(0.01, 0.0).is_err());
    }

    #[test]
    fn no_oracle_records_is_an_error() {
        let rs = [weak("a", &[1.0], Label::Positive)];
        assert!(matches!(
            OracleIndex::build(&rs, DistanceMetric::L2),
            Err(Error::NoOracleRecords)
        ));
    }

    #[test]
    fn single_oracle_answers_every_query() {
        let rs = [oracle("o", &[1.0, 1.0], Label::Negative)];
        let idx = OracleIndex::build(&rs, DistanceMetric::L1).unwrap();
        for q in [[0.0, 5.0], [1.0, 1.0], [-3.0, 2.0]] {
            assert_eq!(idx.nearest(&q, &NORM).unwrap().index, 0);
        }
        assert_eq!(idx.nearest(&[1.0, 1.0], &NORM).unwrap().distance, 0.0);
    }

    #[test]
    fn disagreement_zeroes_the_weight() {
        let rs = [oracle("o", &[1.0, 0.0], Label::Positive)];
        let idx = OracleIndex::build(&rs, DistanceMetric::Cosine).unwrap();
        let p = WeightParams::new(0.01, 0.2).unwrap();
        let s = weigh_sample(&weak("x", &[1.0, 0.0], Label::Negative), &idx, &p, &NORM).unwrap();
        assert_eq!(s.weight, 0.0);
        let s = weigh_sample(&weak("x", &[2.0, 0.0], Label::Positive), &idx, &p, &NORM).unwrap();
        assert_eq!(s.weight, 1.0);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let rs = [oracle("o", &[1.0], Label::Positive)];
        let idx = OracleIndex::build(&rs, DistanceMetric::L2).unwrap();
        let p = WeightParams::new(0.01, 0.2).unwrap();
        let r = Record::new("x", vec![1.0], 0);
        assert!(matches!(
            weigh_sample(&r, &idx, &p, &NORM),
            Err(Error::MissingPrediction(_))
        ));
    }

    #[test]
    fn all_oracle_memory_weighs_one() {
        let rs: Vec<Record> = (0..5)
            .map(|i| oracle(&i.to_string(), &[i as f64, 1.0], Label::Positive))
            .collect();
        let idx = OracleIndex::build(&rs, DistanceMetric::L2).unwrap();
        let p = WeightParams::new(0.01, 0.2).unwrap();
        let w = weigh_memory(&rs, &idx, &p, &NORM).unwrap();
        assert!(w
            .iter()
            .all(|s| s.weight == 1.0 && s.source == WeightSource::Oracle));
    }

    #[test]
    fn exact_duplicates_weigh_one() {
        let mut rs = vec![
            oracle("a", &[1.0, 2.0], Label::Positive),
            oracle("b", &[-1.0, 0.5], Label::Negative),
        ];
        rs.push(weak("a2", &[1.0, 2.0], Label::Positive));
        rs.push(weak("b2", &[-1.0, 0.5], Label::Negative));
        for metric in DistanceMetric::ALL {
            let idx = OracleIndex::build(&rs, metric).unwrap();
            let p = WeightParams::new(0.01, 0.2).unwrap();
            let w = weigh_memory(&rs, &idx, &p, &NORM).unwrap();
            assert!(w.iter().all(|s| s.weight == 1.0), "{metric}");
        }
    }

    #[test]
    fn mixed_memory_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = [Label::Negative, Label::Positive];
        let rs: Vec<Record> = (0..400)
            .map(|i| {
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let label = labels[rng.random_range(0..2)];
                if i % 10 == 0 {
                    oracle(&i.to_string(), &v, label)
                } else {
                    weak(&i.to_string(), &v, label)
                }
            })
            .collect();
        let norm = NormalizationState::with_bound(4.0);
        let p = WeightParams::new(0.05, 0.3).unwrap();
        for metric in DistanceMetric::ALL {
            let idx = OracleIndex::build(&rs, metric).unwrap();
            let got = weigh_memory(&rs, &idx, &p, &norm).unwrap();
            for (r, s) in rs.iter().zip(&got) {
                let expected = if r.is_oracle() {
                    1.0
                } else {
                    let (mut best, mut lab) = (f64::INFINITY, Label::Negative);
                    for o in rs.iter().filter(|o| o.is_oracle()) {
                        let d = metric.distance(&r.vector, &o.vector, &norm).unwrap();
                        if d < best {
                            best = d;
                            lab = o.oracle_label().unwrap();
                        }
                    }
                    if Some(lab) == r.predicted_label {
                        (0.05f64.ln() / 0.3 * best).exp()
                    } else {
                        0.0
                    }
                };
                assert!(
                    (s.weight - expected).abs() < 1e-12,
                    "{metric}: {} vs {expected}",
                    s.weight
                );
            }
        }
    }
}
