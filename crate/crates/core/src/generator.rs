//! Synthetic drifting streams with hidden ground truth.
//!
//! Every record is drawn from its own RNG stream (`set_stream(index)`), so
//! any index range can be generated independently and the output is
//! bit-identical for a given spec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::ensemble::mix_seed;
use crate::error::{Error, Result};
use crate::types::{Label, Record};

pub const DEFAULT_ORACLE_FRACTION: f64 = 0.05;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.94;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    /// Explicit mean; when absent the mean is a seeded random direction
    /// scaled to `radius`.
    pub mean: Option<Vec<f64>>,
    pub radius: f64,
    /// Per-coordinate standard deviation.
    pub sigma: f64,
    pub label: Label,
    /// Relative share among clusters.
    pub weight: f64,
    pub oracle_fraction: Option<f64>,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            mean: None,
            radius: 5.0,
            sigma: 1.0,
            label: Label::Positive,
            weight: 1.0,
            oracle_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on `[-scale, scale]` per coordinate.
    Uniform,
    StudentT {
        dof: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub distribution: NoiseKind,
    pub scale: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            distribution: NoiseKind::Gaussian,
            scale: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// Step translation from the onset on; labels unchanged.
    VirtualShift,
    /// Relabels the target; vectors unchanged.
    RealBoundaryFlip,
    /// Translation ramped linearly over `duration` records.
    Gradual,
    /// Step translation together with a label flip.
    Sudden,
    /// Translation switched on and off every `period` records.
    Cyclic,
    /// Translation for `duration` records, then back to normal.
    Flash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTarget {
    All,
    Noise,
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub kind: DriftKind,
    pub onset: usize,
    /// Translation length in units of the source's sigma.
    #[serde(default)]
    pub magnitude: f64,
    /// Ramp length, flash length or flip length (0 means permanent).
    #[serde(default)]
    pub duration: usize,
    #[serde(default)]
    pub period: usize,
    #[serde(default = "all_target")]
    pub target: DriftTarget,
}

fn all_target() -> DriftTarget {
    DriftTarget::All
}

impl DriftEvent {
    fn applies(&self, source: Source) -> bool {
        match (self.target, source) {
            (DriftTarget::All, _) => true,
            (DriftTarget::Noise, Source::Noise) => true,
            (DriftTarget::Cluster(a), Source::Cluster(b)) => a == b,
            _ => false,
        }
    }

    /// Fraction of the translation active at `index`.
    fn shift_factor(&self, index: usize) -> f64 {
        if index < self.onset {
            return 0.0;
        }
        let t = index - self.onset;
        match self.kind {
            DriftKind::RealBoundaryFlip => 0.0,
            DriftKind::VirtualShift | DriftKind::Sudden => 1.0,
            DriftKind::Gradual => ((t + 1) as f64 / self.duration as f64).min(1.0),
            DriftKind::Cyclic => {
                if (t / self.period).is_multiple_of(2) {
                    1.0
                } else {
                    0.0
                }
            }
            DriftKind::Flash => {
                if t < self.duration {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn flips(&self, index: usize) -> bool {
        match self.kind {
            DriftKind::Sudden => index >= self.onset,
            DriftKind::RealBoundaryFlip => {
                index >= self.onset && (self.duration == 0 || index - self.onset < self.duration)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    pub dimension: usize,
    pub length: usize,
    pub clusters: Vec<ClusterSpec>,
    pub noise: NoiseSpec,
    pub noise_fraction: f64,
    pub oracle_fraction: f64,
    /// Length of a common offset added to every mean and to the noise
    /// center, along a seeded direction.
    pub offset: f64,
    pub drifts: Vec<DriftEvent>,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            dimension: 300,
            length: 10_000,
            clusters: vec![
                ClusterSpec::default(),
                ClusterSpec {
                    label: Label::Negative,
                    ..ClusterSpec::default()
                },
            ],
            noise: NoiseSpec::default(),
            noise_fraction: DEFAULT_NOISE_FRACTION,
            oracle_fraction: DEFAULT_ORACLE_FRACTION,
            offset: 0.0,
            drifts: Vec::new(),
            seed: 0,
        }
    }
}

fn fraction(name: &str, v: f64, upper_open: bool) -> Result<()> {
    let ok = v >= 0.0 && if upper_open { v < 1.0 } else { v <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} out of range: {v}")))
    }
}

impl StreamSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StreamSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.clusters.is_empty() {
            return Err(Error::Config("at least one cluster is required".into()));
        }
        fraction("noise_fraction", self.noise_fraction, true)?;
        fraction("oracle_fraction", self.oracle_fraction, false)?;
        if !self.offset.is_finite() {
            return Err(Error::Config("offset must be finite".into()));
        }
        if !(self.noise.scale > 0.0 && self.noise.scale.is_finite()) {
            return Err(Error::Config("noise scale must be positive".into()));
        }
        if let NoiseKind::StudentT { dof } = self.noise.distribution {
            if !(dof > 0.0 && dof.is_finite()) {
                return Err(Error::Config("student-t dof must be positive".into()));
            }
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if let Some(mean) = &c.mean {
                if mean.len() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        actual: mean.len(),
                    });
                }
                if mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("cluster {i}: mean must be finite")));
                }
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::Config(format!(
                    "cluster {i}: sigma must be positive"
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!(
                    "cluster {i}: weight must be positive"
                )));
            }
            if !c.radius.is_finite() {
                return Err(Error::Config(format!("cluster {i}: radius must be finite")));
            }
            if let Some(f) = c.oracle_fraction {
                fraction("oracle_fraction", f, false)?;
            }
        }
        for (i, d) in self.drifts.iter().enumerate() {
            if d.onset >= self.length {
                return Err(Error::Config(format!(
                    "drift {i}: onset {} is beyond the stream length {}",
                    d.onset, self.length
                )));
            }
            if !d.magnitude.is_finite() {
                return Err(Error::Config(format!(
                    "drift {i}: magnitude must be finite"
                )));
            }
            if let DriftTarget::Cluster(c) = d.target {
                if c >= self.clusters.len() {
                    return Err(Error::Config(format!("drift {i}: no cluster {c}")));
                }
            }
            match d.kind {
                DriftKind::Gradual | DriftKind::Flash if d.duration == 0 => {
                    return Err(Error::Config(format!(
                        "drift {i}: duration must be positive"
                    )))
                }
                DriftKind::Cyclic if d.period == 0 => {
                    return Err(Error::Config(format!("drift {i}: period must be positive")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Which component produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Noise,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStream {
    pub records: Vec<Record>,
    /// Ground truth per record; never copied into the records themselves.
    pub truth: Vec<Label>,
    pub sources: Vec<Source>,
}

/// Fixed geometry of a spec: means, noise center and drift directions.
#[derive(Debug, Clone)]
pub struct StreamLayout {
    pub means: Vec<Vec<f64>>,
    pub noise_center: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

fn unit_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

const LAYOUT_STREAM: u64 = 0x5EED_0000;

impl StreamLayout {
    pub fn new(spec: &StreamSpec) -> Self {
        let n = spec.dimension;
        let base = unit_direction(n, mix_seed(spec.seed, 0, LAYOUT_STREAM));
        let noise_center: Vec<f64> = base.iter().map(|b| b * spec.offset).collect();
        let means = spec
            .clusters
            .iter()
            .enumerate()
            .map(|(k, c)| match &c.mean {
                Some(m) => m.iter().zip(&noise_center).map(|(a, b)| a + b).collect(),
                None => unit_direction(n, mix_seed(spec.seed, k + 1, LAYOUT_STREAM))
                    .iter()
                    .zip(&noise_center)
                    .map(|(d, b)| d * c.radius + b)
                    .collect(),
            })
            .collect();
        let directions = (0..spec.drifts.len())
            .map(|e| unit_direction(n, mix_seed(spec.seed, e, LAYOUT_STREAM + 1)))
            .collect();
        Self {
            means,
            noise_center,
            directions,
        }
    }
}

fn source_sigma(spec: &StreamSpec, source: Source) -> f64 {
    match source {
        Source::Noise => spec.noise.scale,
        Source::Cluster(k) => spec.clusters[k].sigma,
    }
}

/// Generates record `index`; returns the record, its truth and its source.
pub fn generate_one(
    spec: &StreamSpec,
    layout: &StreamLayout,
    index: usize,
) -> (Record, Label, Source) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let n = spec.dimension;

    let u: f64 = rng.random();
    let source = if u < spec.noise_fraction {
        Source::Noise
    } else {
        let total: f64 = spec.clusters.iter().map(|c| c.weight).sum();
        let mut pick = (u - spec.noise_fraction) / (1.0 - spec.noise_fraction) * total;
        let mut chosen = spec.clusters.len() - 1;
        for (k, c) in spec.clusters.iter().enumerate() {
            if pick < c.weight {
                chosen = k;
                break;
            }
            pick -= c.weight;
        }
        Source::Cluster(chosen)
    };

    let mut vector: Vec<f64> = match source {
        Source::Cluster(k) => {
            let sigma = spec.clusters[k].sigma;
            layout.means[k]
                .iter()
                .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        Source::Noise => {
            let s = spec.noise.scale;
            let raw: Vec<f64> = match spec.noise.distribution {
                NoiseKind::Gaussian => (0..n)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
                NoiseKind::Uniform => (0..n).map(|_| rng.random_range(-s..=s)).collect(),
                NoiseKind::StudentT { dof } => {
                    let t = StudentT::new(dof).expect("validated dof");
                    (0..n).map(|_| s * t.sample(&mut rng)).collect()
                }
            };
            raw.into_iter()
                .zip(&layout.noise_center)
                .map(|(v, c)| v + c)
                .collect()
        }
    };

    let mut truth = match source {
        Source::Noise => Label::Negative,
        Source::Cluster(k) => spec.clusters[k].label,
    };
    let sigma = source_sigma(spec, source);
    for (event, dir) in spec.drifts.iter().zip(&layout.directions) {
        if !event.applies(source) {
            continue;
        }
        let f = event.shift_factor(index);
        if f != 0.0 {
            let len = f * event.magnitude * sigma;
            vector.iter_mut().zip(dir).for_each(|(v, d)| *v += len * d);
        }
        if event.flips(index) {
            truth = truth.flipped();
        }
    }

    let oracle_fraction = match source {
        Source::Cluster(k) => spec.clusters[k]
            .oracle_fraction
            .unwrap_or(spec.oracle_fraction),
        Source::Noise => spec.oracle_fraction,
    };
    let revealed = rng.random::<f64>() < oracle_fraction;
    let record = Record::new(format!("r{index}"), vector, index as u64)
        .with_oracle(revealed.then_some(truth));
    (record, truth, source)
}

pub fn generate(spec: &StreamSpec) -> Result<GeneratedStream> {
    spec.validate()?;
    let layout = StreamLayout::new(spec);
    let mut out = GeneratedStream {
        records: Vec::with_capacity(spec.length),
        truth: Vec::with_capacity(spec.length),
        sources: Vec::with_capacity(spec.length),
    };
    for i in 0..spec.length {
        let (r, t, s) = generate_one(spec, &layout, i);
        out.records.push(r);
        out.truth.push(t);
        out.sources.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(length: usize) -> StreamSpec {
        StreamSpec {
            dimension: 10,
            length,
            noise_fraction: 0.5,
            seed: 17,
            ..StreamSpec::default()
        }
    }

    fn mean_of(
        stream: &GeneratedStream,
        range: std::ops::Range<usize>,
        source: Source,
    ) -> Vec<f64> {
        let picked: Vec<&[f64]> = range
            .filter(|&i| stream.sources[i] == source)
            .map(|i| stream.records[i].vector.as_slice())
            .collect();
        crate::types::centroid(picked).unwrap()
    }

    #[test]
    fn deterministic_and_index_addressable() {
        let spec = small(500);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        let layout = StreamLayout::new(&spec);
        let (r, t, _) = generate_one(&spec, &layout, 321);
        assert_eq!(r, a.records[321]);
        assert_eq!(t, a.truth[321]);
    }

    #[test]
    fn fractions_match_spec() {
        let spec = StreamSpec {
            length: 20_000,
            dimension: 4,
            noise_fraction: 0.94,
            ..StreamSpec::default()
        };
        let s = generate(&spec).unwrap();
        let n = s.records.len() as f64;
        let noise = s.sources.iter().filter(|x| **x == Source::Noise).count() as f64 / n;
        assert!((noise - 0.94).abs() < 0.01, "{noise}");
        let pos = s.truth.iter().filter(|l| l.is_positive()).count() as f64 / n;
        assert!((pos - 0.03).abs() < 0.01, "{pos}");
        let oracle = s.records.iter().filter(|r| r.is_oracle()).count() as f64 / n;
        assert!((oracle - 0.05).abs() < 0.01, "{oracle}");
        for (r, t) in s.records.iter().zip(&s.truth) {
            if let Some(o) = r.oracle_label() {
                assert_eq!(o, *t);
            }
        }
    }

    #[test]
    fn virtual_shift_moves_mean_without_relabeling() {
        let mut spec = small(20_000);
        spec.drifts.push(DriftEvent {
            kind: DriftKind::VirtualShift,
            onset: 10_000,
            magnitude: 3.0,
            duration: 0,
            period: 0,
            target: DriftTarget::Cluster(0),
        });
        let plain = generate(&small(20_000)).unwrap();
        let s = generate(&spec).unwrap();
        assert_eq!(s.truth, plain.truth);
        let layout = StreamLayout::new(&spec);
        let after = mean_of(&s, 10_000..20_000, Source::Cluster(0));
        let moved: f64 = after
            .iter()
            .zip(&layout.means[0])
            .zip(&layout.directions[0])
            .map(|((a, m), d)| (a - m) * d)
            .sum();
        // projection of the shift on its direction, within sampling error
        assert!((moved - 3.0).abs() < 0.1, "{moved}");
        for i in 0..10_000 {
            assert_eq!(s.records[i], plain.records[i]);
        }
    }

    #[test]
    fn boundary_flip_changes_labels_only() {
        let mut spec = small(3000);
        spec.drifts.push(DriftEvent {
            kind: DriftKind::RealBoundaryFlip,
            onset: 1000,
            magnitude: 0.0,
            duration: 0,
            period: 0,
            target: DriftTarget::Cluster(0),
        });
        let plain = generate(&small(3000)).unwrap();
        let s = generate(&spec).unwrap();
        for i in 0..3000 {
            assert_eq!(s.records[i].vector, plain.records[i].vector);
            let flipped = i >= 1000 && s.sources[i] == Source::Cluster(0);
            if flipped {
                assert_eq!(s.truth[i], plain.truth[i].flipped());
            } else {
                assert_eq!(s.truth[i], plain.truth[i]);
            }
        }
    }

    #[test]
    fn temporal_profiles() {
        let ev = |kind, duration, period| DriftEvent {
            kind,
            onset: 100,
            magnitude: 1.0,
            duration,
            period,
            target: DriftTarget::All,
        };
        let g = ev(DriftKind::Gradual, 10, 0);
        assert_eq!(g.shift_factor(99), 0.0);
        assert!((g.shift_factor(104) - 0.5).abs() < 1e-12);
        assert_eq!(g.shift_factor(500), 1.0);
        let f = ev(DriftKind::Flash, 5, 0);
        assert_eq!(f.shift_factor(104), 1.0);
        assert_eq!(f.shift_factor(105), 0.0);
        let c = ev(DriftKind::Cyclic, 0, 10);
        assert_eq!(c.shift_factor(105), 1.0);
        assert_eq!(c.shift_factor(115), 0.0);
        assert_eq!(c.shift_factor(125), 1.0);
        let s = ev(DriftKind::Sudden, 0, 0);
        assert!(s.flips(100) && !s.flips(99));
        assert_eq!(s.shift_factor(100), 1.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = small(100);
        spec.drifts.push(DriftEvent {
            kind: DriftKind::VirtualShift,
            onset: 100,
            magnitude: 1.0,
            duration: 0,
            period: 0,
            target: DriftTarget::All,
        });
        assert!(generate(&spec).is_err());
        let mut spec = small(100);
        spec.noise_fraction = 1.0;
        assert!(spec.validate().is_err());
        let mut spec = small(100);
        spec.clusters[0].mean = Some(vec![0.0; 3]);
        assert!(spec.validate().is_err());
        let mut spec = small(100);
        spec.clusters.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_toml_round_trip() {
        let mut spec = small(100);
        spec.drifts.push(DriftEvent {
            kind: DriftKind::Flash,
            onset: 10,
            magnitude: 2.0,
            duration: 5,
            period: 0,
            target: DriftTarget::Cluster(1),
        });
        spec.noise.distribution = NoiseKind::StudentT { dof: 2.0 };
        let text = spec.to_toml().unwrap();
        assert_eq!(StreamSpec::from_toml(&text).unwrap(), spec);
        let parsed = StreamSpec::from_toml(
            r#"
            dimension = 4
            length = 50
            [[clusters]]
            label = 1
            [[drifts]]
            kind = "virtual_shift"
            onset = 20
            magnitude = 3.0
            target = "noise"
            "#,
        )
        .unwrap();
        assert_eq!(parsed.drifts[0].target, DriftTarget::Noise);
        assert_eq!(parsed.clusters[0].label, Label::Positive);
    }

    #[test]
    fn heavy_tail_noise_is_finite() {
        let mut spec = small(2000);
        spec.noise.distribution = NoiseKind::StudentT { dof: 1.5 };
        let s = generate(&spec).unwrap();
        assert!(s
            .records
            .iter()
            .all(|r| r.vector.iter().all(|v| v.is_finite())));
    }
}
