//! Mini-batch training, evaluation and run reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use twostream_core::conv3d::{clip_average, clip_split, crop, Crop};
use twostream_core::data::{pad_sequences, Dataset, Split};
use twostream_core::heads::softmax_xent;
use twostream_core::normreg::Mode;
use twostream_core::optim::{Optimizer, OptimizerKind, Rmsprop, SgdHalving};
use twostream_core::recurrent::SequenceBatch;
use twostream_core::{Error, Module, Result, Rng, Tensor};

use crate::model::{InputNorm, InputNormKind, Model, Net, SeqClassifier, VideoClassifier};

/// Sequences per inference batch.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
    /// SGD only: validation evaluations without improvement before the rate halves.
    pub patience: usize,
    /// Optimizer steps between validation evaluations on the curve.
    pub eval_every: usize,
    /// Validation accuracy whose first crossing is reported as `steps_to_threshold`.
    pub threshold: f64,
    pub seed: u64,
    pub input_norm: InputNormKind,
    /// Before every evaluation, set batch-norm inference statistics to the
    /// training-split population statistics instead of the running averages.
    pub bn_population_stats: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            optimizer: OptimizerKind::Rmsprop,
            learning_rate: 0.001,
            decay: 0.9,
            momentum: 0.0,
            patience: 3,
            eval_every: 1,
            threshold: 0.6,
            seed: 42,
            input_norm: InputNormKind::Center,
            bn_population_stats: true,
        }
    }
}

impl TrainConfig {
    fn optimizer(&self) -> Result<Optimizer> {
        Ok(match self.optimizer {
            OptimizerKind::Rmsprop => {
                let mut o = Rmsprop::new(self.learning_rate, self.decay);
                o.momentum = self.momentum;
                Optimizer::Rmsprop(o)
            }
            OptimizerKind::Sgd => Optimizer::Sgd(SgdHalving::new(self.learning_rate, self.patience)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub accuracy: f64,
}

/// Everything about a run that is a deterministic function of its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub seed: u64,
    pub param_count: usize,
    pub epochs: usize,
    pub steps: usize,
    pub epoch_losses: Vec<f64>,
    pub val_accuracies: Vec<f64>,
    pub val_curve: Vec<CurvePoint>,
    pub threshold: f64,
    pub steps_to_threshold: Option<usize>,
    pub test_accuracy: f64,
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]` on the test split.
    pub confusion: Vec<Vec<usize>>,
}

/// Wall-clock measurements, kept apart from [`RunResult`] so that reruns compare equal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub step_seconds: Vec<f64>,
    pub mean_step_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `[n × K]` class probabilities.
    pub probs: Tensor,
    pub predicted: Vec<usize>,
    pub labels: Vec<usize>,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub fn confusion_matrix(labels: &[usize], predicted: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&y, &p) in labels.iter().zip(predicted) {
        m[y][p] += 1;
    }
    m
}

/// `trace / sum`, or 0 for an empty matrix.
pub fn confusion_accuracy(m: &[Vec<usize>]) -> f64 {
    let total: usize = m.iter().flatten().sum();
    let correct: usize = (0..m.len()).map(|k| m[k][k]).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// CSV with a header row of class names; row `i` holds true class `i`.
pub fn confusion_csv(m: &[Vec<usize>], class_names: &[String]) -> String {
    let mut out = format!("true\\predicted,{}\n", class_names.join(","));
    for (name, row) in class_names.iter().zip(m) {
        let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
        out.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    out
}

impl Evaluation {
    pub fn from_probs(probs: Tensor, labels: Vec<usize>) -> Self {
        let classes = probs.cols();
        let predicted = probs.argmax_rows();
        let confusion = confusion_matrix(&labels, &predicted, classes);
        let accuracy = confusion_accuracy(&confusion);
        Evaluation {
            probs,
            predicted,
            labels,
            accuracy,
            confusion,
        }
    }
}

fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    logits.softmax()
}

fn prepared(m: &SeqClassifier, data: &Dataset, indices: &[usize]) -> Vec<Tensor> {
    indices.iter().map(|&i| m.prepare(&data.samples[i].skeleton_steps())).collect()
}

fn padded(seqs: &[&Tensor]) -> Result<SequenceBatch> {
    let t_max = seqs.iter().map(|s| s.rows()).max().unwrap_or(0);
    let owned: Vec<Tensor> = seqs.iter().map(|&s| s.clone()).collect();
    pad_sequences(&owned, t_max)
}

fn seq_probs(m: &SeqClassifier, seqs: &[Tensor]) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(seqs.len() * m.classes());
    for chunk in seqs.chunks(EVAL_CHUNK) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let p = softmax_rows(&m.logits(&padded(&refs)?)?)?;
        rows.extend_from_slice(p.data());
    }
    Tensor::new(vec![seqs.len(), m.classes()], rows)
}

fn seq_accuracy(m: &mut SeqClassifier, cfg: &TrainConfig, train_x: &[Tensor], val_x: &[Tensor], labels: &[usize]) -> Result<f64> {
    if cfg.bn_population_stats {
        m.refresh_bn_statistics(train_x)?;
    }
    Ok(accuracy_of(&seq_probs(m, val_x)?, labels))
}

fn spatial_crop(v: &VideoClassifier, clip: Tensor, rng: Option<&mut Rng>) -> Result<Tensor> {
    let [_, _, h, w] = v.net.spec.input;
    if clip.shape()[2] == h && clip.shape()[3] == w {
        return Ok(clip);
    }
    let mode = match rng {
        Some(r) => Crop::Random(r),
        None => Crop::Center,
    };
    crop(&clip, h, w, mode)
}

fn stack_clips(clips: &[Tensor]) -> Result<Tensor> {
    let mut shape = vec![clips.len()];
    shape.extend_from_slice(clips[0].shape());
    let mut data = Vec::with_capacity(clips.len() * clips[0].len());
    for c in clips {
        data.extend_from_slice(c.data());
    }
    Tensor::new(shape, data)
}

/// Center-cropped clips of one video, stacked `[clips × c × t × h × w]`.
pub(crate) fn video_clips(v: &VideoClassifier, video: &Tensor) -> Result<Tensor> {
    let clips = clip_split(video, v.clip_len())?
        .into_iter()
        .map(|c| spatial_crop(v, c, None))
        .collect::<Result<Vec<_>>>()?;
    stack_clips(&clips)
}

fn video_probs(v: &VideoClassifier, data: &Dataset, indices: &[usize]) -> Result<Tensor> {
    let k = v.net.classes();
    let mut rows = Vec::with_capacity(indices.len() * k);
    for &i in indices {
        let clips = video_clips(v, &data.samples[i].video)?;
        let p = softmax_rows(&v.net.forward(&clips)?.0)?;
        let per_clip: Vec<Tensor> = (0..p.rows()).map(|r| Tensor::new(vec![k], p.row(r).to_vec())).collect::<Result<_>>()?;
        rows.extend_from_slice(clip_average(&per_clip)?.data());
    }
    Tensor::new(vec![indices.len(), k], rows)
}

/// Class probabilities for `indices` (clip-averaged for video models).
pub fn predict_probs(model: &Model, data: &Dataset, indices: &[usize]) -> Result<Tensor> {
    if indices.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    match &model.net {
        Net::Sequence(m) => seq_probs(m, &prepared(m, data, indices)),
        Net::Video(v) => video_probs(v, data, indices),
    }
}

pub fn evaluate(model: &Model, data: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    let probs = predict_probs(model, data, indices)?;
    let labels = indices.iter().map(|&i| data.samples[i].label).collect();
    Ok(Evaluation::from_probs(probs, labels))
}

/// Shuffled mini-batches; a trailing batch of one joins the previous batch
/// so batch normalization always sees at least two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size.max(1)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}

struct Progress<'a> {
    cfg: &'a TrainConfig,
    step: usize,
    epoch: usize,
    curve: Vec<CurvePoint>,
    reached: Option<usize>,
    step_seconds: Vec<f64>,
}

impl Progress<'_> {
    fn after_step(&mut self, loss: f64, started: Instant, val: impl FnOnce() -> Result<f64>) -> Result<()> {
        self.step_seconds.push(started.elapsed().as_secs_f64());
        self.step += 1;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                step: self.step,
                loss,
            });
        }
        if self.cfg.eval_every > 0 && self.step.is_multiple_of(self.cfg.eval_every) {
            let accuracy = val()?;
            self.curve.push(CurvePoint { step: self.step, accuracy });
            if self.reached.is_none() && accuracy >= self.cfg.threshold {
                self.reached = Some(self.step);
            }
        }
        Ok(())
    }
}

fn accuracy_of(probs: &Tensor, labels: &[usize]) -> f64 {
    let correct = probs.argmax_rows().iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len().max(1) as f64
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub result: RunResult,
    pub timings: Timings,
}

/// Trains `model` on `split.train`, tracking accuracy on `split.val`, and
/// reports test accuracy for the final weights.
pub fn train(model: &mut Model, data: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<TrainOutput> {
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(Error::Empty("train, validation and test splits must be non-empty".into()));
    }
    let clock = Instant::now();
    let root = Rng::new(cfg.seed);
    let mut order_rng = root.fork(2);
    let mut noise_rng = root.fork(3);
    let mut opt = cfg.optimizer()?;
    let val_labels: Vec<usize> = split.val.iter().map(|&i| data.samples[i].label).collect();
    let mut progress = Progress {
        cfg,
        step: 0,
        epoch: 0,
        curve: Vec::new(),
        reached: None,
        step_seconds: Vec::new(),
    };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut val_accuracies = Vec::with_capacity(cfg.epochs);

    match &mut model.net {
        Net::Sequence(m) => {
            let raw: Vec<Tensor> = split.train.iter().map(|&i| data.samples[i].skeleton_steps()).collect();
            if cfg.input_norm != InputNormKind::Raw {
                m.norm = InputNorm::fit(&raw, cfg.input_norm == InputNormKind::Center)?;
            }
            let train_x = prepared(m, data, &split.train);
            let train_y: Vec<usize> = split.train.iter().map(|&i| data.samples[i].label).collect();
            let val_x = prepared(m, data, &split.val);
            let mut order: Vec<usize> = (0..train_x.len()).collect();
            for epoch in 0..cfg.epochs {
                progress.epoch = epoch + 1;
                order_rng.shuffle(&mut order);
                let (mut loss_sum, mut seen) = (0.0, 0);
                for batch in batches(&order, cfg.batch_size) {
                    let started = Instant::now();
                    let xs: Vec<&Tensor> = batch.iter().map(|&i| &train_x[i]).collect();
                    let ys: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
                    let (logits, cache) = m.forward(&padded(&xs)?, Mode::Train, &mut noise_rng)?;
                    let (loss, grad) = softmax_xent(&logits, &ys)?;
                    if loss.is_finite() {
                        let grads = m.backward(&cache, &grad)?;
                        opt.step(m, &grads)?;
                    }
                    loss_sum += loss * batch.len() as f64;
                    seen += batch.len();
                    progress.after_step(loss, started, || seq_accuracy(m, cfg, &train_x, &val_x, &val_labels))?;
                }
                epoch_losses.push(loss_sum / seen as f64);
                let acc = seq_accuracy(m, cfg, &train_x, &val_x, &val_labels)?;
                val_accuracies.push(acc);
                opt.observe(acc);
            }
            if cfg.bn_population_stats {
                m.refresh_bn_statistics(&train_x)?;
            }
        }
        Net::Video(v) => {
            let mut clips = Vec::new();
            let mut clip_y = Vec::new();
            for &i in &split.train {
                for c in clip_split(&data.samples[i].video, v.clip_len())? {
                    clips.push(c);
                    clip_y.push(data.samples[i].label);
                }
            }
            let mut order: Vec<usize> = (0..clips.len()).collect();
            for epoch in 0..cfg.epochs {
                progress.epoch = epoch + 1;
                order_rng.shuffle(&mut order);
                let (mut loss_sum, mut seen) = (0.0, 0);
                for batch in batches(&order, cfg.batch_size) {
                    let started = Instant::now();
                    let xs = batch
                        .iter()
                        .map(|&i| spatial_crop(v, clips[i].clone(), Some(&mut noise_rng)))
                        .collect::<Result<Vec<_>>>()?;
                    let ys: Vec<usize> = batch.iter().map(|&i| clip_y[i]).collect();
                    let (logits, cache) = v.net.forward(&stack_clips(&xs)?)?;
                    let (loss, grad) = softmax_xent(&logits, &ys)?;
                    if loss.is_finite() {
                        let grads = v.net.backward(&cache, &grad)?;
                        opt.step(&mut v.net, &grads)?;
                    }
                    loss_sum += loss * batch.len() as f64;
                    seen += batch.len();
                    let snapshot: &VideoClassifier = v;
                    progress.after_step(loss, started, || {
                        Ok(accuracy_of(&video_probs(snapshot, data, &split.val)?, &val_labels))
                    })?;
                }
                epoch_losses.push(loss_sum / seen as f64);
                let acc = accuracy_of(&video_probs(v, data, &split.val)?, &val_labels);
                val_accuracies.push(acc);
                opt.observe(acc);
            }
        }
    }

    let test = evaluate(model, data, &split.test)?;
    let steps = progress.step;
    let mean_step_seconds = if steps == 0 {
        0.0
    } else {
        progress.step_seconds.iter().sum::<f64>() / steps as f64
    };
    Ok(TrainOutput {
        result: RunResult {
            model: model.spec.variant.name().to_string(),
            seed: cfg.seed,
            param_count: model.num_params(),
            epochs: cfg.epochs,
            steps,
            epoch_losses,
            val_accuracies,
            val_curve: progress.curve,
            threshold: cfg.threshold,
            steps_to_threshold: progress.reached,
            test_accuracy: test.accuracy,
            class_names: data.class_names(),
            confusion: test.confusion,
        },
        timings: Timings {
            step_seconds: progress.step_seconds,
            mean_step_seconds,
            total_seconds: clock.elapsed().as_secs_f64(),
        },
    })
}
