//! Pluggable binary classifiers with per-sample training weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::types::Label;

#[derive(Debug, Clone, Copy)]
pub struct TrainingExample<'a> {
    pub vector: &'a [f64],
    pub label: Label,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Probability-like score of the positive class, in `[0, 1]`.
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Self {
            label: Label::from_score(score),
            score,
        }
    }
}

/// Contract for models managed by the ensemble.
///
/// `train` may be called repeatedly; implementations update their current
/// state (warm start). Examples with zero weight must not influence the fit.
pub trait Classifier: Clone + Send + Sync + Serialize + DeserializeOwned {
    fn train(&mut self, examples: &[TrainingExample<'_>], seed: u64);
    fn predict(&self, x: &[f64]) -> Prediction;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            l2: 1e-4,
        }
    }
}

/// Weighted logistic regression trained by shuffled SGD.
///
/// Inputs are centered and scaled with statistics taken from the first
/// training call; later calls reuse them so that warm starts stay
/// comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    config: LogisticConfig,
    weights: Vec<f64>,
    bias: f64,
    center: Vec<f64>,
    scale: f64,
}

impl LogisticClassifier {
    pub fn new(config: LogisticConfig) -> Self {
        Self {
            config,
            weights: Vec::new(),
            bias: 0.0,
            center: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn is_trained(&self) -> bool {
        !self.weights.is_empty()
    }

    fn standardize(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.center)
                .map(|(v, c)| (v - c) / self.scale),
        );
    }

    fn init(&mut self, examples: &[TrainingExample<'_>]) {
        let dim = examples[0].vector.len();
        let total: f64 = examples.iter().map(|e| e.weight).sum();
        let mut center = vec![0.0; dim];
        for e in examples {
            for (c, v) in center.iter_mut().zip(e.vector) {
                *c += e.weight * v;
            }
        }
        center.iter_mut().for_each(|c| *c /= total);
        let ms = examples
            .iter()
            .map(|e| {
                e.weight
                    * e.vector
                        .iter()
                        .zip(&center)
                        .map(|(v, c)| (v - c) * (v - c))
                        .sum::<f64>()
            })
            .sum::<f64>()
            / total;
        self.scale = if ms > 0.0 { ms.sqrt() } else { 1.0 };
        self.center = center;
        self.weights = vec![0.0; dim];
        self.bias = 0.0;
    }
}

impl Default for LogisticClassifier {
    fn default() -> Self {
        Self::new(LogisticConfig::default())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Classifier for LogisticClassifier {
    fn train(&mut self, examples: &[TrainingExample<'_>], seed: u64) {
        let usable: Vec<TrainingExample<'_>> = examples
            .iter()
            .copied()
            .filter(|e| e.weight > 0.0 && e.weight.is_finite())
            .collect();
        if usable.is_empty() {
            return;
        }
        if !self.is_trained() {
            self.init(&usable);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..usable.len()).collect();
        let mut x = Vec::with_capacity(self.weights.len());
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let lr = self.config.learning_rate / (1.0 + epoch as f64 * 0.1);
            for &i in &order {
                let e = &usable[i];
                self.standardize(e.vector, &mut x);
                let z = self.bias + self.weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                let g = e.weight * (sigmoid(z) - e.label.target());
                for (w, v) in self.weights.iter_mut().zip(&x) {
                    *w -= lr * (g * v + self.config.l2 * *w);
                }
                self.bias -= lr * g;
            }
        }
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        if !self.is_trained() {
            return Prediction::from_score(0.5);
        }
        let z = self.bias
            + x.iter()
                .zip(&self.center)
                .zip(&self.weights)
                .map(|((v, c), w)| w * (v - c) / self.scale)
                .sum::<f64>();
        Prediction::from_score(sigmoid(z))
    }
}
