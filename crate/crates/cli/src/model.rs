//! The model ladder: named recurrent variants for skeletons and C3D variants for video.

use std::fmt;

use serde::{Deserialize, Serialize};
use twostream_core::conv3d::{C3d, C3dSpec};
use twostream_core::data::pad_sequences;
use twostream_core::heads::Dense;
use twostream_core::module::prefixed;
use twostream_core::normreg::{dropout, dropout_backward, BatchNorm, BnCache, DropoutConfig, Mode, KEEP_PROB};
use twostream_core::recurrent::{CellKind, RecurrentLayer, RecurrentStack, Sequence, SequenceBatch, StackCache};
use twostream_core::{Activation, Error, Module, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "RNN1")]
    Rnn1,
    #[serde(rename = "LSTM1")]
    Lstm1,
    #[serde(rename = "LSTM1-BN")]
    Lstm1Bn,
    #[serde(rename = "LSTM1-BN-DP")]
    Lstm1BnDp,
    #[serde(rename = "GRU1-BN-DP")]
    Gru1BnDp,
    #[serde(rename = "BI-GRU1-BN-DP")]
    BiGru1BnDp,
    #[serde(rename = "BI-GRU2-BN-DP")]
    BiGru2BnDp,
    #[serde(rename = "BI-GRU2-BN-DP-H")]
    BiGru2BnDpH,
    #[serde(rename = "C3D")]
    C3d,
    #[serde(rename = "C3D-DESK")]
    C3dDesk,
}

/// Layer recipe of a recurrent variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recipe {
    pub cell: CellKind,
    pub layers: usize,
    pub bidirectional: bool,
    pub batch_norm: bool,
    pub dropout: bool,
    pub hidden_fc: bool,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Rnn1,
        Variant::Lstm1,
        Variant::Lstm1Bn,
        Variant::Lstm1BnDp,
        Variant::Gru1BnDp,
        Variant::BiGru1BnDp,
        Variant::BiGru2BnDp,
        Variant::BiGru2BnDpH,
        Variant::C3d,
        Variant::C3dDesk,
    ];

    /// The recurrent rows, from the vanilla RNN up to the full model.
    pub const LADDER: [Variant; 8] = [
        Variant::Rnn1,
        Variant::Lstm1,
        Variant::Lstm1Bn,
        Variant::Lstm1BnDp,
        Variant::Gru1BnDp,
        Variant::BiGru1BnDp,
        Variant::BiGru2BnDp,
        Variant::BiGru2BnDpH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rnn1 => "RNN1",
            Variant::Lstm1 => "LSTM1",
            Variant::Lstm1Bn => "LSTM1-BN",
            Variant::Lstm1BnDp => "LSTM1-BN-DP",
            Variant::Gru1BnDp => "GRU1-BN-DP",
            Variant::BiGru1BnDp => "BI-GRU1-BN-DP",
            Variant::BiGru2BnDp => "BI-GRU2-BN-DP",
            Variant::BiGru2BnDpH => "BI-GRU2-BN-DP-H",
            Variant::C3d => "C3D",
            Variant::C3dDesk => "C3D-DESK",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownVariant(name.to_string()))
    }

    pub fn is_video(self) -> bool {
        matches!(self, Variant::C3d | Variant::C3dDesk)
    }

    /// `None` for the video variants.
    pub fn recipe(self) -> Option<Recipe> {
        let r = |cell, layers, bidirectional, batch_norm, dropout, hidden_fc| {
            Some(Recipe {
                cell,
                layers,
                bidirectional,
                batch_norm,
                dropout,
                hidden_fc,
            })
        };
        match self {
            Variant::Rnn1 => r(CellKind::Vanilla(Activation::Tanh), 1, false, false, false, false),
            Variant::Lstm1 => r(CellKind::Lstm, 1, false, false, false, false),
            Variant::Lstm1Bn => r(CellKind::Lstm, 1, false, true, false, false),
            Variant::Lstm1BnDp => r(CellKind::Lstm, 1, false, true, true, false),
            Variant::Gru1BnDp => r(CellKind::Gru, 1, false, true, true, false),
            Variant::BiGru1BnDp => r(CellKind::Gru, 1, true, true, true, false),
            Variant::BiGru2BnDp => r(CellKind::Gru, 2, true, true, true, false),
            Variant::BiGru2BnDpH => r(CellKind::Gru, 2, true, true, true, true),
            Variant::C3d | Variant::C3dDesk => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A ladder variant plus the widths it is instantiated with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub classes: usize,
    /// Flattened skeleton width `J·3`.
    pub input_width: usize,
    /// Units per recurrent direction.
    pub hidden: usize,
    /// Width of the extra fully-connected layer; `None` uses the recurrent output width.
    pub fc_hidden: Option<usize>,
    /// `[C, T, H, W]` of one clip for the desk C3D.
    pub clip: [usize; 4],
    /// Desk C3D layer list such as `conv8 pool1x2x2 fc64`; `None` keeps the default.
    pub c3d_layers: Option<String>,
}

impl ModelSpec {
    pub fn new(variant: Variant, classes: usize, input_width: usize) -> Self {
        ModelSpec {
            variant,
            classes,
            input_width,
            hidden: 32,
            fc_hidden: None,
            clip: [3, 8, 16, 16],
            c3d_layers: None,
        }
    }
}

/// Skeleton input preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputNormKind {
    /// Coordinates as generated.
    Raw,
    /// Per-coordinate standardization with training-split statistics.
    Standardize,
    /// First-frame centroid subtraction, then standardization.
    Center,
}

impl InputNormKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(InputNormKind::Raw),
            "standardize" => Some(InputNormKind::Standardize),
            "center" => Some(InputNormKind::Center),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputNormKind::Raw => "raw",
            InputNormKind::Standardize => "standardize",
            InputNormKind::Center => "center",
        }
    }
}

/// Per-coordinate standardization, optionally after subtracting each
/// sequence's first-frame joint centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct InputNorm {
    pub mean: Tensor,
    pub std: Tensor,
    pub center: bool,
}

impl InputNorm {
    pub fn identity(width: usize) -> Self {
        InputNorm {
            mean: Tensor::zeros(&[width]),
            std: Tensor::full(&[width], 1.0),
            center: false,
        }
    }

    fn center(steps: &Tensor) -> Tensor {
        let w = steps.cols();
        let joints = w / 3;
        let mut centroid = [0.0; 3];
        for (i, &v) in steps.row(0).iter().enumerate() {
            centroid[i % 3] += v / joints as f64;
        }
        Tensor::from_fn(steps.shape(), |i| steps.data()[i] - centroid[i % w % 3])
    }

    /// Fits mean and standard deviation over every valid step of `seqs`,
    /// after centering when `center` is set.
    pub fn fit(seqs: &[Tensor], center: bool) -> Result<Self> {
        let Some(first) = seqs.first() else {
            return Err(Error::Empty("no training sequences".into()));
        };
        let w = first.cols();
        let mut sum = vec![0.0; w];
        let mut sq = vec![0.0; w];
        let mut count = 0.0;
        for s in seqs {
            let c = if center { Self::center(s) } else { s.clone() };
            for r in 0..c.rows() {
                for (j, &v) in c.row(r).iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
                count += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / count - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        Ok(InputNorm {
            mean: Tensor::new(vec![w], mean)?,
            std: Tensor::new(vec![w], std)?,
            center,
        })
    }

    /// Centers (when enabled) and standardizes one `[T × width]` sequence.
    pub fn apply(&self, steps: &Tensor) -> Tensor {
        let c = if self.center { Self::center(steps) } else { steps.clone() };
        let w = c.cols();
        let (m, s) = (self.mean.data(), self.std.data());
        Tensor::from_fn(c.shape(), |i| (c.data()[i] - m[i % w]) / s[i % w])
    }
}

/// Recurrent stack → optional BN → optional dropout → optional ReLU layer → softmax layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqClassifier {
    pub norm: InputNorm,
    pub stack: RecurrentStack,
    pub bn: Option<BatchNorm>,
    pub keep_prob: Option<f64>,
    pub hidden: Option<Dense>,
    pub out: Dense,
}

#[derive(Clone, Debug)]
pub struct SeqCache {
    stack: StackCache,
    bn: Option<BnCache>,
    mask: Option<Tensor>,
    hidden: Option<twostream_core::heads::DenseCache>,
    out: twostream_core::heads::DenseCache,
}

impl SeqClassifier {
    pub fn new(recipe: Recipe, input: usize, hidden: usize, fc_hidden: Option<usize>, classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(recipe.layers);
        let mut width = input;
        for _ in 0..recipe.layers {
            let layer = RecurrentLayer::new(recipe.cell, width, hidden, recipe.bidirectional, rng);
            width = layer.output_dim();
            layers.push(layer);
        }
        let stack = RecurrentStack::new(layers)?;
        let bn = recipe.batch_norm.then(|| BatchNorm::new(width));
        let fc = recipe.hidden_fc.then(|| Dense::new(width, fc_hidden.unwrap_or(width), Activation::Relu, rng));
        let top = fc.as_ref().map_or(width, Dense::output_dim);
        Ok(SeqClassifier {
            norm: InputNorm::identity(input),
            stack,
            bn,
            keep_prob: recipe.dropout.then_some(KEEP_PROB),
            hidden: fc,
            out: Dense::new(top, classes, Activation::Identity, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        SeqClassifier {
            norm: self.norm.clone(),
            stack: self.stack.zeros_like(),
            bn: self.bn.as_ref().map(BatchNorm::zeros_like),
            keep_prob: self.keep_prob,
            hidden: self.hidden.as_ref().map(Dense::zeros_like),
            out: self.out.zeros_like(),
        }
    }

    pub fn classes(&self) -> usize {
        self.out.output_dim()
    }

    /// Normalized `[T × width]` sequence for a raw skeleton track.
    pub fn prepare(&self, steps: &Tensor) -> Tensor {
        self.norm.apply(steps)
    }

    /// Logits for a padded batch of prepared sequences.
    pub fn forward(&mut self, batch: &SequenceBatch, mode: Mode, rng: &mut Rng) -> Result<(Tensor, SeqCache)> {
        let input = Sequence::from_batch_major(batch.data(), batch.lengths().to_vec());
        let (_, last, stack) = self.stack.run(&input)?;
        let (mut x, bn) = match &mut self.bn {
            Some(bn) => {
                let (y, c) = bn.forward(&last, mode)?;
                (y, Some(c))
            }
            None => (last, None),
        };
        let mut mask = None;
        if let Some(keep) = self.keep_prob {
            let (y, m) = dropout(&x, &DropoutConfig::new(keep, mode)?, rng);
            x = y;
            mask = m;
        }
        let hidden = match &self.hidden {
            Some(fc) => {
                let (y, c) = fc.forward(&x)?;
                x = y;
                Some(c)
            }
            None => None,
        };
        let (logits, out) = self.out.forward(&x)?;
        Ok((logits, SeqCache { stack, bn, mask, hidden, out }))
    }

    /// Inference-mode representation feeding the softmax layer, and the logits.
    fn infer(&self, batch: &SequenceBatch) -> Result<(Tensor, Tensor)> {
        let input = Sequence::from_batch_major(batch.data(), batch.lengths().to_vec());
        let (_, mut x, _) = self.stack.run(&input)?;
        if let Some(bn) = &self.bn {
            x = bn.infer(&x)?;
        }
        if let Some(fc) = &self.hidden {
            x = fc.forward(&x)?.0;
        }
        let logits = self.out.forward(&x)?.0;
        Ok((x, logits))
    }

    /// Replaces the batch-norm running statistics with the population mean and
    /// biased variance of the top recurrent features over `seqs`. No-op
    /// without batch norm.
    pub fn refresh_bn_statistics(&mut self, seqs: &[Tensor]) -> Result<()> {
        let Some(bn) = &mut self.bn else {
            return Ok(());
        };
        if seqs.is_empty() {
            return Err(Error::Empty("no sequences for batch-norm statistics".into()));
        }
        let d = bn.dim();
        let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
        for chunk in seqs.chunks(64) {
            let t_max = chunk.iter().map(Tensor::rows).max().unwrap_or(0);
            let batch = pad_sequences(chunk, t_max)?;
            let input = Sequence::from_batch_major(batch.data(), batch.lengths().to_vec());
            let (_, last, _) = self.stack.run(&input)?;
            for r in 0..last.rows() {
                for (j, &v) in last.row(r).iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
        }
        let n = seqs.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0)).collect();
        bn.running_mean = Tensor::new(vec![d], mean)?;
        bn.running_var = Tensor::new(vec![d], var)?;
        Ok(())
    }

    pub fn logits(&self, batch: &SequenceBatch) -> Result<Tensor> {
        Ok(self.infer(batch)?.1)
    }

    /// Activations of the extra fully-connected layer (inference mode).
    pub fn fc_features(&self, batch: &SequenceBatch) -> Result<Tensor> {
        if self.hidden.is_none() {
            return Err(Error::MissingTap("rnn_fc".into()));
        }
        Ok(self.infer(batch)?.0)
    }

    pub fn backward(&self, cache: &SeqCache, grad_logits: &Tensor) -> Result<SeqClassifier> {
        let mut grads = self.zeros_like();
        let (g_out, mut g) = self.out.backward(&cache.out, grad_logits)?;
        grads.out = g_out;
        if let (Some(fc), Some(c)) = (&self.hidden, &cache.hidden) {
            let (gw, gx) = fc.backward(c, &g)?;
            grads.hidden = Some(gw);
            g = gx;
        }
        g = dropout_backward(&g, cache.mask.as_ref())?;
        if let (Some(bn), Some(c)) = (&self.bn, &cache.bn) {
            let bg = bn.backward(c, &g)?;
            let gbn = grads.bn.as_mut().expect("grads mirror the model");
            gbn.gamma = bg.gamma;
            gbn.beta = bg.beta;
            g = bg.x;
        }
        grads.stack = self.stack.backprop_last(&cache.stack, &g)?.0;
        Ok(grads)
    }
}

impl Module for SeqClassifier {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("rnn", self.stack.params());
        if let Some(bn) = &self.bn {
            out.extend(prefixed("bn", bn.params()));
        }
        if let Some(fc) = &self.hidden {
            out.extend(prefixed("fc", fc.params()));
        }
        out.extend(prefixed("out", self.out.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.stack.params_mut();
        if let Some(bn) = &mut self.bn {
            out.extend(bn.params_mut());
        }
        if let Some(fc) = &mut self.hidden {
            out.extend(fc.params_mut());
        }
        out.extend(self.out.params_mut());
        out
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(bn) = &self.bn {
            out.extend(prefixed("bn", bn.buffers()));
        }
        out.push(("input.mean".into(), &self.norm.mean));
        out.push(("input.std".into(), &self.norm.std));
        out
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.stack.params_mut();
        let mut running = Vec::new();
        if let Some(bn) = &mut self.bn {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
            running.push(&mut bn.running_mean);
            running.push(&mut bn.running_var);
        }
        if let Some(fc) = &mut self.hidden {
            out.extend(fc.params_mut());
        }
        out.extend(self.out.params_mut());
        out.extend(running);
        out.push(&mut self.norm.mean);
        out.push(&mut self.norm.std);
        out
    }
}

/// C3D applied clip by clip; video-level outputs are clip averages.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClassifier {
    pub net: C3d,
}

impl VideoClassifier {
    pub fn clip_len(&self) -> usize {
        self.net.spec.input[1]
    }
}

impl Module for VideoClassifier {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Net {
    Sequence(SeqClassifier),
    Video(VideoClassifier),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub net: Net,
}

impl Module for Model {
    fn params(&self) -> Vec<(String, &Tensor)> {
        match &self.net {
            Net::Sequence(m) => m.params(),
            Net::Video(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match &mut self.net {
            Net::Sequence(m) => m.params_mut(),
            Net::Video(m) => m.params_mut(),
        }
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        match &self.net {
            Net::Sequence(m) => m.buffers(),
            Net::Video(m) => m.buffers(),
        }
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match &mut self.net {
            Net::Sequence(m) => m.state_mut(),
            Net::Video(m) => m.state_mut(),
        }
    }
}

/// Instantiates a ladder variant with freshly initialized weights.
pub fn build_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    let net = match spec.variant {
        Variant::C3d => Net::Video(VideoClassifier {
            net: C3d::new(
                C3dSpec {
                    classes: spec.classes,
                    ..C3dSpec::full_scale()
                },
                rng,
            )?,
        }),
        Variant::C3dDesk => {
            let mut c3d = C3dSpec::desk(spec.clip, spec.classes);
            if let Some(layers) = &spec.c3d_layers {
                c3d.layers = C3dSpec::parse_layers(layers)?;
            }
            Net::Video(VideoClassifier { net: C3d::new(c3d, rng)? })
        }
        v => {
            let recipe = v.recipe().expect("recurrent variant");
            Net::Sequence(SeqClassifier::new(recipe, spec.input_width, spec.hidden, spec.fc_hidden, spec.classes, rng)?)
        }
    };
    Ok(Model { spec: spec.clone(), net })
}
