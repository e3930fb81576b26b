//! Feature taps and the two fusion pipelines.

use serde::{Deserialize, Serialize};
use twostream_core::conv3d::clip_average;
use twostream_core::data::{Dataset, Split};
use twostream_core::fusion::{decision_fuse, feature_fuse, search_trust_weights, Prediction, TrustWeights};
use twostream_core::heads::LinearSvm;
use twostream_core::{Error, Result, Tensor};

use crate::model::{Model, Net};
use crate::train::{confusion_accuracy, confusion_matrix, predict_probs, video_clips, Evaluation};

/// SVM `C` values tried on the validation split.
pub const SVM_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 8.0, 100.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    /// Extra fully-connected layer of a recurrent model.
    RnnFc,
    /// First fully-connected layer of a C3D model, averaged over clips.
    CnnFc6,
}

impl Tap {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rnn_fc" => Ok(Tap::RnnFc),
            "cnn_fc6" => Ok(Tap::CnnFc6),
            other => Err(Error::MissingTap(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tap::RnnFc => "rnn_fc",
            Tap::CnnFc6 => "cnn_fc6",
        }
    }
}

/// One feature row per sample in `indices`.
pub fn extract_features(model: &Model, data: &Dataset, indices: &[usize], tap: Tap) -> Result<Tensor> {
    if indices.is_empty() {
        return Err(Error::Empty("no samples to extract".into()));
    }
    match (&model.net, tap) {
        (Net::Sequence(m), Tap::RnnFc) => {
            let mut rows = Vec::new();
            let mut width = 0;
            for chunk in indices.chunks(64) {
                let seqs: Vec<Tensor> = chunk.iter().map(|&i| m.prepare(&data.samples[i].skeleton_steps())).collect();
                let t_max = seqs.iter().map(Tensor::rows).max().unwrap_or(0);
                let f = m.fc_features(&twostream_core::data::pad_sequences(&seqs, t_max)?)?;
                width = f.cols();
                rows.extend_from_slice(f.data());
            }
            Tensor::new(vec![indices.len(), width], rows)
        }
        (Net::Video(v), Tap::CnnFc6) => {
            let width = v.net.fc6_width();
            let mut rows = Vec::with_capacity(indices.len() * width);
            for &i in indices {
                let clips = video_clips(v, &data.samples[i].video)?;
                let (_, cache) = v.net.forward(&clips)?;
                let fc6 = cache.fc6();
                let per_clip: Vec<Tensor> = (0..fc6.rows())
                    .map(|r| Tensor::new(vec![width], fc6.row(r).to_vec()))
                    .collect::<Result<_>>()?;
                rows.extend_from_slice(clip_average(&per_clip)?.data());
            }
            Tensor::new(vec![indices.len(), width], rows)
        }
        (_, tap) => Err(Error::MissingTap(format!("{} on a {} model", tap.name(), model.spec.variant))),
    }
}

/// Test-split outcome of a fused pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub method: String,
    pub rnn_test_accuracy: f64,
    pub cnn_test_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Decision fusion only.
    pub trust_weights: Option<TrustWeights>,
    /// Feature fusion only.
    pub svm_c: Option<f64>,
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub rnn_confusion: Vec<Vec<usize>>,
    pub cnn_confusion: Vec<Vec<usize>>,
}

fn stream_eval(model: &Model, data: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    let probs = predict_probs(model, data, indices)?;
    Ok(Evaluation::from_probs(probs, indices.iter().map(|&i| data.samples[i].label).collect()))
}

fn predictions(probs: &Tensor) -> Result<Vec<Prediction>> {
    // Re-normalize so rounding in clip averaging cannot trip the sum check.
    let rows = Tensor::from_fn(probs.shape(), |i| {
        let r = i / probs.cols();
        probs.data()[i] / probs.row(r).iter().sum::<f64>()
    });
    Prediction::from_rows(&rows)
}

fn check_streams(rnn: &Model, cnn: &Model) -> Result<()> {
    if !matches!(rnn.net, Net::Sequence(_)) || !matches!(cnn.net, Net::Video(_)) {
        return Err(Error::InvalidArgument(format!(
            "fusion needs a recurrent and a video model, got {} and {}",
            rnn.spec.variant, cnn.spec.variant
        )));
    }
    if rnn.spec.classes != cnn.spec.classes {
        return Err(Error::shape("fusion", &[rnn.spec.classes], &[cnn.spec.classes]));
    }
    Ok(())
}

/// Trust weights searched on validation, applied to test.
pub fn decision_fusion(rnn: &Model, cnn: &Model, data: &Dataset, split: &Split) -> Result<FusionResult> {
    check_streams(rnn, cnn)?;
    let val_labels: Vec<usize> = split.val.iter().map(|&i| data.samples[i].label).collect();
    let val_r = predictions(&predict_probs(rnn, data, &split.val)?)?;
    let val_c = predictions(&predict_probs(cnn, data, &split.val)?)?;
    let (weights, val_accuracy) = search_trust_weights(&val_r, &val_c, &val_labels)?;

    let test_r = stream_eval(rnn, data, &split.test)?;
    let test_c = stream_eval(cnn, data, &split.test)?;
    let pr = predictions(&test_r.probs)?;
    let pc = predictions(&test_c.probs)?;
    let fused = pr
        .iter()
        .zip(&pc)
        .map(|(r, c)| decision_fuse(weights, r, c).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let confusion = confusion_matrix(&test_r.labels, &fused, data.classes);
    Ok(FusionResult {
        method: "decision".into(),
        rnn_test_accuracy: test_r.accuracy,
        cnn_test_accuracy: test_c.accuracy,
        val_accuracy,
        test_accuracy: confusion_accuracy(&confusion),
        trust_weights: Some(weights),
        svm_c: None,
        class_names: data.class_names(),
        confusion,
        rnn_confusion: test_r.confusion,
        cnn_confusion: test_c.confusion,
    })
}

fn fused_features(rnn: &Model, cnn: &Model, data: &Dataset, indices: &[usize]) -> Result<Tensor> {
    feature_fuse(
        &extract_features(rnn, data, indices, Tap::RnnFc)?,
        &extract_features(cnn, data, indices, Tap::CnnFc6)?,
    )
}

/// Concatenated, L2-normalized stream features classified by a linear SVM
/// whose `C` is picked on validation (lowest `C` wins ties).
pub fn feature_fusion(rnn: &Model, cnn: &Model, data: &Dataset, split: &Split) -> Result<FusionResult> {
    check_streams(rnn, cnn)?;
    let labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| data.samples[i].label).collect() };
    let train_x = fused_features(rnn, cnn, data, &split.train)?;
    let val_x = fused_features(rnn, cnn, data, &split.val)?;
    let test_x = fused_features(rnn, cnn, data, &split.test)?;
    let (train_y, val_y, test_y) = (labels(&split.train), labels(&split.val), labels(&split.test));

    let mut best: Option<(LinearSvm, f64, f64)> = None;
    for c in SVM_C_GRID {
        let (svm, _) = LinearSvm::train(&train_x, &train_y, data.classes, c)?;
        let (pred, _) = svm.predict(&val_x)?;
        let acc = confusion_accuracy(&confusion_matrix(&val_y, &pred, data.classes));
        if best.as_ref().is_none_or(|(_, _, b)| acc > *b) {
            best = Some((svm, c, acc));
        }
    }
    let (svm, c, val_accuracy) = best.expect("non-empty grid");
    let (pred, _) = svm.predict(&test_x)?;
    let confusion = confusion_matrix(&test_y, &pred, data.classes);
    let test_r = stream_eval(rnn, data, &split.test)?;
    let test_c = stream_eval(cnn, data, &split.test)?;
    Ok(FusionResult {
        method: "feature".into(),
        rnn_test_accuracy: test_r.accuracy,
        cnn_test_accuracy: test_c.accuracy,
        val_accuracy,
        test_accuracy: confusion_accuracy(&confusion),
        trust_weights: None,
        svm_c: Some(c),
        class_names: data.class_names(),
        confusion,
        rnn_confusion: test_r.confusion,
        cnn_confusion: test_c.confusion,
    })
}
