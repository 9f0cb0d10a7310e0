//! Records, labels and windows shared by every stage of the engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class of a record: event-relevant or irrelevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_score(score: f64) -> Self {
        // an aggregate score of exactly 0.5 resolves to the negative class
        if score > 0.5 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    /// Regression target used by the classifiers.
    pub fn target(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        match label {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// One embedded stream sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub vector: Vec<f64>,
    oracle_label: Option<Label>,
    pub predicted_label: Option<Label>,
    pub timestamp: u64,
}

impl Record {
    pub fn new(id: impl Into<String>, vector: Vec<f64>, timestamp: u64) -> Self {
        Self {
            id: id.into(),
            vector,
            oracle_label: None,
            predicted_label: None,
            timestamp,
        }
    }

    pub fn with_oracle(mut self, label: Option<Label>) -> Self {
        self.oracle_label = label;
        self
    }

    pub fn oracle_label(&self) -> Option<Label> {
        self.oracle_label
    }

    pub fn is_oracle(&self) -> bool {
        self.oracle_label.is_some()
    }

    /// Sets the oracle label. Once set it can never be replaced.
    pub fn set_oracle_label(&mut self, label: Label) -> Result<()> {
        match self.oracle_label {
            Some(_) => Err(Error::OracleLabelSet(self.id.clone())),
            None => {
                self.oracle_label = Some(label);
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// A contiguous slice of the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub records: Vec<Record>,
    pub start_index: usize,
    pub end_index: usize,
}

impl Window {
    pub fn new(records: Vec<Record>, start_index: usize) -> Self {
        let end_index = start_index + records.len();
        Self {
            records,
            start_index,
            end_index,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn centroid(&self) -> Result<Vec<f64>> {
        centroid(self.records.iter().map(|r| r.vector.as_slice()))
    }
}

/// Arithmetic mean of a set of equal-length vectors.
pub fn centroid<'a, I>(vectors: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyWindow("centroid"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for v in iter {
        if v.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: v.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: &[f64]) -> Record {
        Record::new("x", v.to_vec(), 0)
    }

    #[test]
    fn centroid_of_two_points() {
        let w = Window::new(vec![rec(&[0.0, 0.0]), rec(&[2.0, 2.0])], 0);
        assert_eq!(w.centroid().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn centroid_of_single_point() {
        let w = Window::new(vec![rec(&[3.5, -1.0, 2.0])], 0);
        assert_eq!(w.centroid().unwrap(), vec![3.5, -1.0, 2.0]);
    }

    #[test]
    fn centroid_of_empty_window_fails() {
        let w = Window::new(vec![], 0);
        assert!(matches!(w.centroid(), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn centroid_rejects_ragged_vectors() {
        let a = [1.0, 2.0];
        let b = [1.0];
        assert!(matches!(
            centroid([&a[..], &b[..]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn oracle_label_is_write_once() {
        let mut r = rec(&[1.0]);
        r.set_oracle_label(Label::Positive).unwrap();
        assert!(r.set_oracle_label(Label::Negative).is_err());
        assert_eq!(r.oracle_label(), Some(Label::Positive));
    }

    #[test]
    fn tie_score_is_negative() {
        assert_eq!(Label::from_score(0.5), Label::Negative);
        assert_eq!(Label::from_score(0.5000001), Label::Positive);
    }

    #[test]
    fn label_serializes_as_bit() {
        assert_eq!(serde_json::to_string(&Label::Positive).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Label>("0").unwrap(), Label::Negative);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }
}
