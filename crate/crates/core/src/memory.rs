//! Routing of incoming points into model memories and the general memory.
//!
//! For every consulted model the point's distance to that model's centroid
//! decides its fate:
//!
//! * strictly inside the ρ-band: stored in the model memory;
//! * in the generalization shell `[delta_h, boundary)`: stored in the model
//!   memory as well;
//! * a point that lands inside no consulted band goes to the general memory,
//!   so shell points reach the general memory too unless another model
//!   already claims them in-band.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::band::RhoBand;
use crate::error::Result;
use crate::types::Record;

pub type ModelId = u64;

pub const DEFAULT_MEMORY_CAPACITY: usize = 10_000;

/// FIFO store with a hard capacity; the oldest record is evicted first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedMemory {
    records: VecDeque<Record>,
    capacity: usize,
}

impl BoundedMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            records: VecDeque::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, record: Record) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Record> + Clone {
        self.records.iter()
    }

    pub fn oracle_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_oracle()).count()
    }

    pub fn drain(&mut self) -> Vec<Record> {
        self.records.drain(..).collect()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }
}

/// How far beyond `delta_h` a model still absorbs points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    /// Shell of the band's own width: boundary `delta_h + (delta_h - delta_l)`.
    Offset,
    /// Absolute boundary on the normalized distance.
    Raw { value: f64 },
}

impl LambdaMode {
    /// Outer edge of the generalization shell, at most 1.
    pub fn boundary(&self, band: &RhoBand) -> f64 {
        match *self {
            LambdaMode::Offset => (band.delta_h + band.width()).min(1.0),
            LambdaMode::Raw { value } => value.min(1.0),
        }
    }

    /// Distance at which weak-supervision weights reach `theta_w`.
    pub fn weight_distance(&self, band: &RhoBand) -> f64 {
        match *self {
            LambdaMode::Offset => band.width(),
            LambdaMode::Raw { value } => value,
        }
    }

    pub fn in_shell(&self, band: &RhoBand, d: f64) -> bool {
        band.delta_h <= d && d < self.boundary(band)
    }
}

/// A model that can take part in routing.
pub trait BandedModel {
    fn model_id(&self) -> ModelId;
    /// Normalized distance from `x` to the model centroid.
    fn distance_to(&self, x: &[f64]) -> Result<f64>;
    fn band(&self) -> &RhoBand;
    fn memory_mut(&mut self) -> &mut BoundedMemory;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    /// Models whose band strictly contains the point.
    pub in_band: Vec<ModelId>,
    /// Models that took the point through their generalization shell.
    pub shell: Vec<ModelId>,
    pub general: bool,
}

impl RoutingOutcome {
    pub fn memories(&self) -> usize {
        self.in_band.len() + self.shell.len() + self.general as usize
    }
}

/// Routes `x` through the models at `selected` (indices into `models`).
pub fn route_point<M: BandedModel>(
    x: &Record,
    models: &mut [M],
    selected: &[usize],
    general: &mut BoundedMemory,
    lambda: LambdaMode,
) -> Result<RoutingOutcome> {
    let mut outcome = RoutingOutcome::default();
    for &i in selected {
        let model = &mut models[i];
        let d = model.distance_to(&x.vector)?;
        let band = *model.band();
        if band.contains(d) {
            model.memory_mut().push(x.clone());
            outcome.in_band.push(model.model_id());
        } else if lambda.in_shell(&band, d) {
            model.memory_mut().push(x.clone());
            outcome.shell.push(model.model_id());
        }
    }
    if outcome.in_band.is_empty() {
        general.push(x.clone());
        outcome.general = true;
    }
    Ok(outcome)
}
