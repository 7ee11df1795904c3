use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ProbSeq;
use crate::types::Label;

/// Ground-truth class for every timestep of one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeq {
    labels: Vec<Label>,
}

impl LabelSeq {
    pub fn new(labels: Vec<Label>) -> Self {
        LabelSeq { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, t: usize) -> Label {
        self.labels[t]
    }
}

impl FromIterator<Label> for LabelSeq {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSeq::new(iter.into_iter().collect())
    }
}

/// Per-class multipliers on the negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub content_weight: f64,
    pub whitespace_weight: f64,
}

impl Default for LossConfig {
    /// A mislabeled content element costs 66% of a mislabeled separator.
    fn default() -> Self {
        LossConfig {
            content_weight: 0.66,
            whitespace_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn weight(&self, label: Label) -> f64 {
        match label {
            Label::Content => self.content_weight,
            Label::Whitespace => self.whitespace_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.content_weight > 0.0 && self.whitespace_weight > 0.0) {
            return Err(invalid("class weights must be positive"));
        }
        Ok(())
    }
}

/// Lower bound applied to the true-class probability before the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Class-weighted cross-entropy averaged over timesteps:
/// `(1/T) Σ_t weight(y_t) · -ln max(p_t[y_t], 1e-12)`.
pub fn weighted_bce(probs: &ProbSeq, labels: &LabelSeq, w: &LossConfig) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(invalid(format!(
            "{} probability rows but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(invalid("cannot compute the loss of an empty sequence"));
    }
    let total: f64 = probs
        .rows()
        .iter()
        .zip(labels.labels())
        .map(|(p, &y)| -w.weight(y) * p[y.index()].max(PROB_CLAMP).ln())
        .sum();
    Ok(total / probs.len() as f64)
}
