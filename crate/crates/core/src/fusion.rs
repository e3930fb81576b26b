//! Combining the skeleton (RNN) and video (CNN) streams: confidence voting
//! with trust weights, and feature concatenation for an SVM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{argmax, Tensor};

/// A probability vector with its argmax label and the winning probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub label: usize,
    pub confidence: f64,
}

impl Prediction {
    pub fn from_probs(probs: Tensor) -> Result<Self> {
        if probs.ndim() != 1 || probs.is_empty() {
            return Err(Error::InvalidArgument(format!("prediction must be a non-empty vector, got {:?}", probs.shape())));
        }
        let total = probs.sum();
        if (total - 1.0).abs() > 1e-9 || probs.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        let label = argmax(probs.data());
        let confidence = probs.data()[label];
        Ok(Prediction { probs, label, confidence })
    }

    /// One prediction per row of a `[n × K]` probability matrix.
    pub fn from_rows(probs: &Tensor) -> Result<Vec<Self>> {
        (0..probs.rows())
            .map(|r| Prediction::from_probs(Tensor::new(vec![probs.cols()], probs.row(r).to_vec())?))
            .collect()
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustWeights {
    pub w_r: f64,
    pub w_c: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        TrustWeights { w_r: 1.0, w_c: 1.0 }
    }
}

impl TrustWeights {
    pub fn new(w_r: f64, w_c: f64) -> Result<Self> {
        if !(w_r > 0.0 && w_c > 0.0) {
            return Err(Error::InvalidArgument(format!("trust weights must be positive, got {w_r}, {w_c}")));
        }
        Ok(TrustWeights { w_r, w_c })
    }
}

/// The RNN prediction wins only if `w_r·conf_r > w_c·conf_c`; ties go to the CNN.
pub fn decision_fuse(w: TrustWeights, rnn: &Prediction, cnn: &Prediction) -> Result<Prediction> {
    if rnn.classes() != cnn.classes() {
        return Err(Error::shape("decision_fuse", rnn.probs.shape(), cnn.probs.shape()));
    }
    Ok(if w.w_r * rnn.confidence > w.w_c * cnn.confidence {
        rnn.clone()
    } else {
        cnn.clone()
    })
}

/// Grid of CNN trust weights tried by [`search_trust_weights`]: 100 values
/// log-spaced over `[0.1, 10]`, plus the starting point 1.0.
pub fn trust_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..100).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 99.0)).collect();
    grid.push(1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn fused_accuracy(w: TrustWeights, rnn: &[Prediction], cnn: &[Prediction], labels: &[usize]) -> Result<f64> {
    let mut correct = 0;
    for ((r, c), &y) in rnn.iter().zip(cnn).zip(labels) {
        if decision_fuse(w, r, c)?.label == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Picks `w_c` (with `w_r = 1`) maximizing validation accuracy; the lowest
/// `w_c` wins ties. Returns the weights and their validation accuracy.
pub fn search_trust_weights(rnn: &[Prediction], cnn: &[Prediction], labels: &[usize]) -> Result<(TrustWeights, f64)> {
    if labels.is_empty() {
        return Err(Error::Empty("validation set for trust-weight search".into()));
    }
    if rnn.len() != labels.len() || cnn.len() != labels.len() {
        return Err(Error::shape("search_trust_weights", &[rnn.len(), cnn.len()], &[labels.len()]));
    }
    let mut best: Option<(TrustWeights, f64)> = None;
    for w_c in trust_grid() {
        let w = TrustWeights { w_r: 1.0, w_c };
        let acc = fused_accuracy(w, rnn, cnn, labels)?;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((w, acc));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Row-wise `[rnn | cnn]` concatenation followed by L2 normalization.
pub fn feature_fuse(rnn: &Tensor, cnn: &Tensor) -> Result<Tensor> {
    if rnn.ndim() != 2 || cnn.ndim() != 2 || rnn.rows() != cnn.rows() {
        return Err(Error::shape("feature_fuse", rnn.shape(), cnn.shape()));
    }
    Ok(rnn.concat_last(cnn)?.l2_normalize())
}
