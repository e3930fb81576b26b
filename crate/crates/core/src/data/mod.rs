//! Paired skeleton/video samples, padding, subject/view splits and the
//! on-disk dataset layout.

mod store;
mod synth;

pub use store::{load_dataset, save_dataset, MANIFEST};
pub use synth::{generate_synthetic, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrent::SequenceBatch;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One recording captured in both modalities.
///
/// `skeleton` is `[T × J × 3]` joint coordinates (all persons' joints
/// concatenated along `J`); `video` is `[C × T × H × W]` with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub label: usize,
    pub subject: usize,
    pub view: usize,
    pub skeleton: Tensor,
    pub video: Tensor,
}

impl Sample {
    pub fn frames(&self) -> usize {
        self.skeleton.shape()[0]
    }

    /// Skeleton flattened to `[T × J·3]`.
    pub fn skeleton_steps(&self) -> Tensor {
        let t = self.frames();
        let width = self.skeleton.len() / t;
        self.skeleton.clone().reshape(&[t, width]).expect("skeleton volume")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|k| format!("class_{k}")).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            classes: self.classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Feature width of the flattened skeleton steps.
    pub fn skeleton_width(&self) -> usize {
        self.samples.first().map_or(0, |s| s.skeleton.len() / s.frames())
    }

    pub fn max_frames(&self) -> usize {
        self.samples.iter().map(Sample::frames).max().unwrap_or(0)
    }

    pub fn video_shape(&self) -> Option<[usize; 4]> {
        self.samples.first().map(|s| {
            let d = s.video.shape();
            [d[0], d[1], d[2], d[3]]
        })
    }
}

/// Zero-pads `[T_i × width]` sequences at the tail to `t_max` steps.
pub fn pad_sequences(seqs: &[Tensor], t_max: usize) -> Result<SequenceBatch> {
    let Some(first) = seqs.first() else {
        return Err(Error::Empty("no sequences to pad".into()));
    };
    if first.ndim() != 2 {
        return Err(Error::InvalidArgument(format!("sequence must be [T × width], got {:?}", first.shape())));
    }
    let width = first.cols();
    let mut data = vec![0.0; seqs.len() * t_max * width];
    let mut lengths = Vec::with_capacity(seqs.len());
    for (b, s) in seqs.iter().enumerate() {
        if s.ndim() != 2 || s.cols() != width {
            return Err(Error::shape("pad_sequences", s.shape(), &[s.shape()[0], width]));
        }
        let len = s.rows();
        if len > t_max {
            return Err(Error::TooLong { len, max: t_max });
        }
        data[b * t_max * width..b * t_max * width + len * width].copy_from_slice(s.data());
        lengths.push(len);
    }
    SequenceBatch::new(Tensor::new(vec![seqs.len(), t_max, width], data)?, lengths)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    CrossSubject,
    CrossView,
}

impl SplitMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross_subject" => Ok(SplitMode::CrossSubject),
            "cross_view" => Ok(SplitMode::CrossView),
            other => Err(Error::Config(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Fraction of training-side subjects held out for validation (rounded up).
    pub val_fraction: f64,
}

impl SplitSpec {
    pub fn new(mode: SplitMode) -> Self {
        SplitSpec { mode, val_fraction: 0.1 }
    }
}

/// Indices into the dataset's samples.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn distinct(values: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = values.collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Cross-subject: half of the subjects (after a seeded shuffle) form the
/// training side. Cross-view: one seeded view is the test view. Either way
/// the validation set is `ceil(val_fraction · training subjects)` subjects
/// carved out of the training side.
pub fn make_splits(dataset: &Dataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Split> {
    let subjects = distinct(dataset.samples.iter().map(|s| s.subject));
    let views = distinct(dataset.samples.iter().map(|s| s.view));
    if subjects.len() < 2 || views.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "splitting needs ≥ 2 subjects and ≥ 2 views, found {} and {}",
            subjects.len(),
            views.len()
        )));
    }
    let (train_side, test_view): (Vec<usize>, Option<usize>) = match spec.mode {
        SplitMode::CrossSubject => {
            let mut s = subjects.clone();
            rng.shuffle(&mut s);
            s.truncate(subjects.len() / 2);
            (s, None)
        }
        SplitMode::CrossView => {
            let mut v = views.clone();
            rng.shuffle(&mut v);
            let test = v[0];
            let mut s = distinct(dataset.samples.iter().filter(|x| x.view != test).map(|x| x.subject));
            rng.shuffle(&mut s);
            (s, Some(test))
        }
    };
    let n_val = ((train_side.len() as f64 * spec.val_fraction).ceil() as usize).max(1);
    if n_val >= train_side.len() {
        return Err(Error::InvalidArgument(format!(
            "{} training-side subjects leave none for training after {n_val} validation subjects",
            train_side.len()
        )));
    }
    let val_subjects = &train_side[train_side.len() - n_val..];
    let mut split = Split::default();
    for (i, s) in dataset.samples.iter().enumerate() {
        let on_train_side = match test_view {
            None => train_side.contains(&s.subject),
            Some(v) => s.view != v,
        };
        if !on_train_side {
            split.test.push(i);
        } else if val_subjects.contains(&s.subject) {
            split.val.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}
