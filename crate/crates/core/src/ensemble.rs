//! The evolving collection of classifiers: selection, voting, evaluation
//! and drift adaptation.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::band::{compute_band, fit_distribution, RhoBand, DEFAULT_BINS, DEFAULT_EPS_BAND};
use crate::classifier::{Classifier, Prediction, TrainingExample};
use crate::error::{Error, Result};
use crate::memory::{route_point, BandedModel, BoundedMemory, LambdaMode, ModelId, RoutingOutcome};
use crate::metric::{DistanceMetric, NormalizationState};
use crate::types::{centroid, Label, Record};
use crate::weak::{weigh_memory, OracleIndex, WeightLaw, WeightParams, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Models created or updated at the latest adaptation.
    Recent,
    TopPerforming {
        m: usize,
    },
    /// Top `m` among the recent models.
    RecentTopPerforming {
        m: usize,
    },
    KNearestCentroid {
        k: usize,
    },
    RhoBandContaining,
    /// Models whose band or generalization shell contains the point.
    ShellContaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Unweighted,
    #[default]
    Performance,
}

/// Parameters of every band fit the ensemble performs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSettings {
    pub metric: DistanceMetric,
    pub rho: f64,
    pub eps_band: f64,
    pub histogram_bins: usize,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::Cosine,
            rho: 0.5,
            eps_band: DEFAULT_EPS_BAND,
            histogram_bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub prediction_policy: SelectionPolicy,
    pub routing_policy: SelectionPolicy,
    pub weighting: Weighting,
    pub lambda: LambdaMode,
    pub theta_w: f64,
    pub weight_law: WeightLaw,
    pub memory_capacity: usize,
    pub general_capacity: usize,
    /// Most recent records kept in a model's data window after an update.
    pub window_capacity: usize,
    pub min_spawn: usize,
    pub min_spawn_oracle: usize,
    /// Class assigned when the aggregate score is exactly 0.5.
    pub tie_label: Label,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            prediction_policy: SelectionPolicy::KNearestCentroid { k: 5 },
            routing_policy: SelectionPolicy::ShellContaining,
            weighting: Weighting::Performance,
            lambda: LambdaMode::Offset,
            theta_w: 0.01,
            weight_law: WeightLaw::Anchored,
            memory_capacity: crate::memory::DEFAULT_MEMORY_CAPACITY,
            general_capacity: crate::memory::DEFAULT_MEMORY_CAPACITY,
            window_capacity: 5000,
            min_spawn: 200,
            min_spawn_oracle: 20,
            tie_label: Label::Negative,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        WeightParams {
            theta_w: self.theta_w,
            lambda: 1.0,
            law: self.weight_law,
        }
        .validate()?;
        for policy in [self.prediction_policy, self.routing_policy] {
            match policy {
                SelectionPolicy::TopPerforming { m }
                | SelectionPolicy::RecentTopPerforming { m }
                    if m == 0 =>
                {
                    return Err(Error::Config("selection size m must be positive".into()))
                }
                SelectionPolicy::KNearestCentroid { k: 0 } => {
                    return Err(Error::Config("selection size k must be positive".into()))
                }
                _ => {}
            }
        }
        if let LambdaMode::Raw { value } = self.lambda {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Config(format!(
                    "raw lambda must lie in (0, 1], got {value}"
                )));
            }
        }
        if self.memory_capacity == 0 || self.general_capacity == 0 || self.window_capacity == 0 {
            return Err(Error::Config(
                "memory and window capacities must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Confusion counts of a binary classification batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl BinaryMetrics {
    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut m = Self::default();
        for (p, t) in pairs {
            m.record(p, t);
        }
        m
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// True when at least one positive was predicted.
    pub fn precision_defined(&self) -> bool {
        self.tp + self.fp > 0
    }

    /// `tp / (tp + fp)`; 1 when nothing was predicted positive and nothing
    /// was missed, 0 when positives were missed.
    pub fn precision(&self) -> f64 {
        match self.tp + self.fp {
            0 if self.fn_ == 0 => 1.0,
            0 => 0.0,
            n => self.tp as f64 / n as f64,
        }
    }

    /// `tp / (tp + fn)`; 1 when there were no positives and none predicted.
    pub fn recall(&self) -> f64 {
        match self.tp + self.fn_ {
            0 if self.fp == 0 => 1.0,
            0 => 0.0,
            n => self.tp as f64 / n as f64,
        }
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "C: Classifier")]
pub struct ModelEntry<C> {
    pub id: ModelId,
    pub classifier: C,
    pub data_window: Vec<Record>,
    pub centroid: Vec<f64>,
    /// Normalization snapshot the band was fitted under.
    pub norm: NormalizationState,
    pub metric: DistanceMetric,
    pub mu: f64,
    pub sigma: f64,
    pub band: RhoBand,
    pub memory: BoundedMemory,
    pub perf_history: Vec<f64>,
    pub created_at: usize,
    pub updated_at: usize,
}

impl<C: Classifier> ModelEntry<C> {
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.metric.distance(x, &self.centroid, &self.norm)
    }

    /// Latest performance, 0 before any evaluation.
    pub fn performance(&self) -> f64 {
        self.perf_history.last().copied().unwrap_or(0.0)
    }

    pub fn last_touched(&self) -> usize {
        self.created_at.max(self.updated_at)
    }

    /// Refits centroid, distribution and band over window ∪ memory.
    pub fn recompute_band(
        &mut self,
        settings: &BandSettings,
        norm: &mut NormalizationState,
    ) -> Result<RhoBand> {
        let fit = Geometry::fit(
            self.data_window
                .iter()
                .chain(self.memory.iter())
                .map(|r| r.vector.as_slice()),
            settings,
            norm,
        )?;
        fit.apply(self);
        Ok(self.band)
    }
}

impl<C: Classifier> BandedModel for ModelEntry<C> {
    fn model_id(&self) -> ModelId {
        self.id
    }

    fn distance_to(&self, x: &[f64]) -> Result<f64> {
        self.distance(x)
    }

    fn band(&self) -> &RhoBand {
        &self.band
    }

    fn memory_mut(&mut self) -> &mut BoundedMemory {
        &mut self.memory
    }
}

struct Geometry {
    centroid: Vec<f64>,
    norm: NormalizationState,
    mu: f64,
    sigma: f64,
    band: RhoBand,
}

impl Geometry {
    fn fit<'a, I>(
        vectors: I,
        settings: &BandSettings,
        norm: &mut NormalizationState,
    ) -> Result<Self>
    where
        I: Iterator<Item = &'a [f64]> + Clone,
    {
        let c = centroid(vectors.clone())?;
        if settings.metric.needs_bound() {
            for v in vectors.clone() {
                norm.observe(settings.metric.raw(v, &c)?);
            }
        }
        let snapshot = *norm;
        let dist = fit_distribution(
            vectors,
            &c,
            settings.metric,
            &snapshot,
            settings.histogram_bins,
        )?;
        let band = compute_band(&dist, settings.rho, settings.eps_band)?;
        Ok(Self {
            centroid: c,
            norm: snapshot,
            mu: dist.mu,
            sigma: dist.sigma,
            band,
        })
    }

    fn apply<C>(self, model: &mut ModelEntry<C>) {
        model.centroid = self.centroid;
        model.norm = self.norm;
        model.mu = self.mu;
        model.sigma = self.sigma;
        model.band = self.band;
    }
}

/// Deterministic per-task seed; no RNG state has to survive a checkpoint.
pub fn mix_seed(seed: u64, window_index: usize, model_id: ModelId) -> u64 {
    let mut z = seed
        ^ (window_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ model_id.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `f_k / Σ f`, uniform when every score is zero.
pub fn performance_weights(perf: &[f64]) -> Vec<f64> {
    let total: f64 = perf.iter().sum();
    if total > 0.0 {
        perf.iter().map(|f| f / total).collect()
    } else {
        vec![1.0 / perf.len() as f64; perf.len()]
    }
}

fn threshold(score: f64, tie: Label) -> Label {
    if score == 0.5 {
        tie
    } else {
        Label::from_score(score)
    }
}

/// Weighted mean of member scores.
pub fn aggregate(scores: &[f64], weights: &[f64], tie: Label) -> Result<Prediction> {
    if scores.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let score: f64 = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
    let score = score.clamp(0.0, 1.0);
    Ok(Prediction {
        label: threshold(score, tie),
        score,
    })
}

fn to_examples(samples: &[WeightedSample]) -> Vec<TrainingExample<'_>> {
    samples
        .iter()
        .filter_map(|s| {
            Some(TrainingExample {
                vector: &s.record.vector,
                label: s.label()?,
                weight: s.weight,
            })
        })
        .collect()
}

/// f-score of `classifier` on the oracle-labeled samples it was trained on.
fn oracle_f_score<C: Classifier>(classifier: &C, samples: &[WeightedSample]) -> f64 {
    BinaryMetrics::from_pairs(samples.iter().filter_map(|s| {
        let truth = s.record.oracle_label()?;
        Some((classifier.predict(&s.record.vector).label, truth))
    }))
    .f_score()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub updated: Vec<ModelId>,
    pub skipped: Vec<ModelId>,
    pub spawned: Option<ModelId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEvaluation {
    pub ensemble: BinaryMetrics,
    pub per_model: Vec<(ModelId, BinaryMetrics)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "C: Classifier")]
pub struct Ensemble<C> {
    pub config: EnsembleConfig,
    pub settings: BandSettings,
    pub models: Vec<ModelEntry<C>>,
    pub general: BoundedMemory,
    prototype: C,
    next_id: ModelId,
    /// Window index of the latest adaptation; models touched since then
    /// count as recent.
    recent_since: usize,
    seed: u64,
}

impl<C: Classifier> Ensemble<C> {
    pub fn new(
        config: EnsembleConfig,
        settings: BandSettings,
        prototype: C,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            general: BoundedMemory::new(config.general_capacity),
            config,
            settings,
            models: Vec::new(),
            prototype,
            next_id: 0,
            recent_since: 0,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model(&self, id: ModelId) -> Option<&ModelEntry<C>> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Trains a fresh model on explicitly labeled records.
    pub fn add_model(
        &mut self,
        records: Vec<Record>,
        labels: &[Label],
        window_index: usize,
        norm: &mut NormalizationState,
    ) -> Result<ModelId> {
        if records.is_empty() {
            return Err(Error::EmptyWindow("model training set"));
        }
        if records.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} records but {} labels",
                records.len(),
                labels.len()
            )));
        }
        let id = self.next_id;
        let mut classifier = self.prototype.clone();
        let examples: Vec<TrainingExample<'_>> = records
            .iter()
            .zip(labels)
            .map(|(r, l)| TrainingExample {
                vector: &r.vector,
                label: *l,
                weight: 1.0,
            })
            .collect();
        classifier.train(&examples, mix_seed(self.seed, window_index, id));
        let perf = BinaryMetrics::from_pairs(
            records
                .iter()
                .zip(labels)
                .map(|(r, l)| (classifier.predict(&r.vector).label, *l)),
        )
        .f_score();
        self.push_model(classifier, records, perf, window_index, norm)
    }

    fn push_model(
        &mut self,
        classifier: C,
        data_window: Vec<Record>,
        perf: f64,
        window_index: usize,
        norm: &mut NormalizationState,
    ) -> Result<ModelId> {
        let fit = Geometry::fit(
            data_window.iter().map(|r| r.vector.as_slice()),
            &self.settings,
            norm,
        )?;
        let id = self.next_id;
        self.next_id += 1;
        self.models.push(ModelEntry {
            id,
            classifier,
            data_window,
            centroid: fit.centroid,
            norm: fit.norm,
            metric: self.settings.metric,
            mu: fit.mu,
            sigma: fit.sigma,
            band: fit.band,
            memory: BoundedMemory::new(self.config.memory_capacity),
            perf_history: vec![perf],
            created_at: window_index,
            updated_at: window_index,
        });
        Ok(id)
    }

    /// Indices of the models chosen by `policy` for `x`, in policy order.
    pub fn select(&self, policy: SelectionPolicy, x: &[f64]) -> Result<Vec<usize>> {
        let recent = || -> Vec<usize> {
            (0..self.models.len())
                .filter(|&i| self.models[i].last_touched() >= self.recent_since)
                .collect()
        };
        let top = |mut idx: Vec<usize>, m: usize| -> Vec<usize> {
            idx.sort_by(|&a, &b| {
                self.models[b]
                    .performance()
                    .total_cmp(&self.models[a].performance())
                    .then(a.cmp(&b))
            });
            idx.truncate(m);
            idx
        };
        Ok(match policy {
            SelectionPolicy::Recent => recent(),
            SelectionPolicy::TopPerforming { m } => top((0..self.models.len()).collect(), m),
            SelectionPolicy::RecentTopPerforming { m } => top(recent(), m),
            SelectionPolicy::KNearestCentroid { k } => {
                let mut d = self
                    .models
                    .iter()
                    .enumerate()
                    .map(|(i, m)| Ok((m.distance(x)?, i)))
                    .collect::<Result<Vec<_>>>()?;
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|(_, i)| i).collect()
            }
            SelectionPolicy::RhoBandContaining => {
                let mut out = Vec::new();
                for (i, m) in self.models.iter().enumerate() {
                    if m.band.contains(m.distance(x)?) {
                        out.push(i);
                    }
                }
                out
            }
            SelectionPolicy::ShellContaining => {
                let mut out = Vec::new();
                for (i, m) in self.models.iter().enumerate() {
                    let d = m.distance(x)?;
                    if m.band.contains(d) || self.config.lambda.in_shell(&m.band, d) {
                        out.push(i);
                    }
                }
                out
            }
        })
    }

    /// Aggregated prediction of the models at `indices`.
    pub fn predict_with(
        &self,
        indices: &[usize],
        x: &[f64],
        weighting: Weighting,
    ) -> Result<Prediction> {
        let scores: Vec<f64> = indices
            .iter()
            .map(|&i| self.models[i].classifier.predict(x).score)
            .collect();
        let weights = match weighting {
            Weighting::Unweighted => vec![1.0 / indices.len().max(1) as f64; indices.len()],
            Weighting::Performance => {
                let perf: Vec<f64> = indices
                    .iter()
                    .map(|&i| self.models[i].performance())
                    .collect();
                performance_weights(&perf)
            }
        };
        aggregate(&scores, &weights, self.config.tie_label)
    }

    /// Prediction under the configured policy, falling back to every model
    /// when the policy selects none.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if self.models.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let mut indices = self.select(self.config.prediction_policy, x)?;
        if indices.is_empty() {
            indices = (0..self.models.len()).collect();
        }
        self.predict_with(&indices, x, self.config.weighting)
    }

    /// Routes a record into model memories and the general memory.
    pub fn route(&mut self, record: &Record) -> Result<RoutingOutcome> {
        let selected = self.select(self.config.routing_policy, &record.vector)?;
        route_point(
            record,
            &mut self.models,
            &selected,
            &mut self.general,
            self.config.lambda,
        )
    }

    /// Scores a labeled batch for the ensemble and every model, appending
    /// each model's f-score to its history. Records without a label are
    /// ignored; an unlabeled batch leaves the histories untouched.
    pub fn evaluate(
        &mut self,
        records: &[Record],
        truth: &[Option<Label>],
    ) -> Result<Option<BatchEvaluation>> {
        let labeled: Vec<(&Record, Label)> = records
            .iter()
            .zip(truth)
            .filter_map(|(r, t)| Some((r, t.or(r.oracle_label())?)))
            .collect();
        if labeled.is_empty() {
            return Ok(None);
        }
        let ensemble = BinaryMetrics::from_pairs(
            labeled
                .iter()
                .map(|(r, t)| {
                    r.predicted_label
                        .map(|p| (p, *t))
                        .ok_or_else(|| Error::MissingPrediction(r.id.clone()))
                })
                .collect::<Result<Vec<_>>>()?,
        );
        let mut per_model = Vec::with_capacity(self.models.len());
        for m in &mut self.models {
            let metrics = BinaryMetrics::from_pairs(
                labeled
                    .iter()
                    .map(|(r, t)| (m.classifier.predict(&r.vector).label, *t)),
            );
            m.perf_history.push(metrics.f_score());
            per_model.push((m.id, metrics));
        }
        Ok(Some(BatchEvaluation {
            ensemble,
            per_model,
        }))
    }

    /// Retrains models from their weighted memories and spawns a model from
    /// the general memory when it has grown large enough.
    pub fn adapt(
        &mut self,
        window_index: usize,
        norm: &mut NormalizationState,
    ) -> Result<AdaptationReport> {
        let mut report = AdaptationReport::default();
        let settings = self.settings;
        for i in 0..self.models.len() {
            let id = self.models[i].id;
            if self.models[i].memory.oracle_count() == 0 {
                if !self.models[i].memory.is_empty() {
                    self.models[i].recompute_band(&settings, norm)?;
                }
                info!("model {id}: memory has no oracle records, skipped");
                report.skipped.push(id);
                continue;
            }
            let seed = mix_seed(self.seed, window_index, id);
            let config = self.config;
            let model = &mut self.models[i];
            let params = WeightParams {
                theta_w: config.theta_w,
                lambda: config.lambda.weight_distance(&model.band).max(f64::EPSILON),
                law: config.weight_law,
            };
            let index = OracleIndex::build(model.memory.iter(), settings.metric)?;
            let samples = weigh_memory(model.memory.iter(), &index, &params, &model.norm)?;
            model.classifier.train(&to_examples(&samples), seed);
            model
                .perf_history
                .push(oracle_f_score(&model.classifier, &samples));

            let mut window = std::mem::take(&mut model.data_window);
            window.extend(model.memory.drain());
            let excess = window.len().saturating_sub(config.window_capacity);
            window.drain(..excess);
            model.data_window = window;
            model.recompute_band(&settings, norm)?;
            model.updated_at = window_index;
            debug!(
                "model {id}: retrained on {} samples, band {:?}",
                samples.len(),
                model.band
            );
            report.updated.push(id);
        }

        let oracle = self.general.oracle_count();
        if self.general.len() >= self.config.min_spawn
            && oracle >= self.config.min_spawn_oracle.max(1)
        {
            let records = self.general.drain();
            let mut probe = *norm;
            let fit = Geometry::fit(
                records.iter().map(|r| r.vector.as_slice()),
                &settings,
                &mut probe,
            )?;
            let params = WeightParams {
                theta_w: self.config.theta_w,
                lambda: self
                    .config
                    .lambda
                    .weight_distance(&fit.band)
                    .max(f64::EPSILON),
                law: self.config.weight_law,
            };
            let index = OracleIndex::build(records.iter(), settings.metric)?;
            let samples = weigh_memory(records.iter(), &index, &params, &fit.norm)?;
            let id = self.next_id;
            let mut classifier = self.prototype.clone();
            classifier.train(
                &to_examples(&samples),
                mix_seed(self.seed, window_index, id),
            );
            let perf = oracle_f_score(&classifier, &samples);
            self.push_model(classifier, records, perf, window_index, norm)?;
            info!(
                "spawned model {id} from {} general-memory records",
                samples.len()
            );
            report.spawned = Some(id);
        }
        self.recent_since = window_index;
        Ok(report)
    }
}
