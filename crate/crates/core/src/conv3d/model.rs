//! Declarative C3D-style network specs and the trainable network built from them.

use std::fmt;

use crate::error::{Error, Result};
use crate::heads::{Dense, DenseCache};
use crate::module::{prefixed, Module};
use crate::rng::Rng;
use crate::tensor::{Activation, Tensor};

use super::ops::{Conv3d, Conv3dCache, MaxPool3d, PoolCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum C3dLayer {
    /// 3×3×3 same-padded convolution followed by ReLU.
    Conv(usize),
    Pool([usize; 3]),
    /// Fully-connected layer followed by ReLU.
    Fc(usize),
}

impl fmt::Display for C3dLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            C3dLayer::Conv(n) => write!(f, "conv{n}"),
            C3dLayer::Pool([t, h, w]) => write!(f, "pool{t}x{h}x{w}"),
            C3dLayer::Fc(n) => write!(f, "fc{n}"),
        }
    }
}

impl C3dLayer {
    pub fn parse(token: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad C3D layer `{token}` (expected convN, poolTxHxW or fcN)"));
        let num = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
        if let Some(rest) = token.strip_prefix("conv") {
            num(rest).map(C3dLayer::Conv).ok_or_else(bad)
        } else if let Some(rest) = token.strip_prefix("fc") {
            num(rest).map(C3dLayer::Fc).ok_or_else(bad)
        } else if let Some(rest) = token.strip_prefix("pool") {
            let parts: Vec<usize> = rest.split('x').map(num).collect::<Option<_>>().ok_or_else(bad)?;
            <[usize; 3]>::try_from(parts).map(C3dLayer::Pool).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

/// Input volume `[c, t, h, w]`, ordered layers, and the softmax width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct C3dSpec {
    pub input: [usize; 4],
    pub layers: Vec<C3dLayer>,
    pub classes: usize,
}

/// Activation shape after one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanStep {
    pub layer: C3dLayer,
    pub output: Vec<usize>,
    pub params: usize,
}

impl C3dSpec {
    /// Eight convolutions (64, 128, 256, 256, 512, 512, 512, 512 filters),
    /// five pools (the first 1×2×2), two 4096-unit fully-connected layers and
    /// 60 classes over `3×16×112×112` clips.
    pub fn full_scale() -> Self {
        use C3dLayer::*;
        C3dSpec {
            input: [3, 16, 112, 112],
            layers: vec![
                Conv(64),
                Pool([1, 2, 2]),
                Conv(128),
                Pool([2, 2, 2]),
                Conv(256),
                Conv(256),
                Pool([2, 2, 2]),
                Conv(512),
                Conv(512),
                Pool([2, 2, 2]),
                Conv(512),
                Conv(512),
                Pool([2, 2, 2]),
                Fc(4096),
                Fc(4096),
            ],
            classes: 60,
        }
    }

    /// Same layer kinds in the same order, narrow enough to train on a CPU.
    pub fn desk(input: [usize; 4], classes: usize) -> Self {
        use C3dLayer::*;
        C3dSpec {
            input,
            layers: vec![Conv(8), Pool([1, 2, 2]), Conv(16), Pool([2, 2, 2]), Fc(64), Fc(64)],
            classes,
        }
    }

    /// Parses a whitespace- or comma-separated layer list such as
    /// `conv8 pool1x2x2 conv16 pool2x2x2 fc64 fc64`.
    pub fn parse_layers(s: &str) -> Result<Vec<C3dLayer>> {
        s.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(C3dLayer::parse)
            .collect()
    }

    pub fn layers_string(&self) -> String {
        self.layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
    }

    /// Validates the layer list and returns the shape after every layer (batch axis omitted).
    pub fn plan(&self) -> Result<Vec<PlanStep>> {
        let invalid = |layer: usize, reason: String| Err(Error::Validation { layer, reason });
        if self.input.contains(&0) {
            return invalid(0, format!("input extents {:?} must be positive", self.input));
        }
        if self.classes < 2 {
            return invalid(self.layers.len(), format!("{} classes; need at least 2", self.classes));
        }
        let [mut c, t, h, w] = self.input;
        let mut ext = [t, h, w];
        let mut flat: Option<usize> = None;
        let mut steps = Vec::with_capacity(self.layers.len() + 1);
        for (i, &layer) in self.layers.iter().enumerate() {
            let step = match (layer, flat) {
                (C3dLayer::Conv(_) | C3dLayer::Pool(_), Some(_)) => {
                    return invalid(i, format!("{layer} after a fully-connected layer"));
                }
                (C3dLayer::Conv(f), None) => {
                    let params = f * c * 27 + f;
                    c = f;
                    PlanStep {
                        layer,
                        output: vec![c, ext[0], ext[1], ext[2]],
                        params,
                    }
                }
                (C3dLayer::Pool(win), None) => {
                    if win.contains(&0) {
                        return invalid(i, format!("{layer} has a zero window"));
                    }
                    ext = [0, 1, 2].map(|a| ext[a].div_ceil(win[a]));
                    PlanStep {
                        layer,
                        output: vec![c, ext[0], ext[1], ext[2]],
                        params: 0,
                    }
                }
                (C3dLayer::Fc(units), prev) => {
                    let fan_in = prev.unwrap_or(c * ext.iter().product::<usize>());
                    flat = Some(units);
                    PlanStep {
                        layer,
                        output: vec![units],
                        params: fan_in * units + units,
                    }
                }
            };
            steps.push(step);
        }
        let Some(last) = flat else {
            return invalid(self.layers.len(), "at least one fully-connected layer is required".into());
        };
        steps.push(PlanStep {
            layer: C3dLayer::Fc(self.classes),
            output: vec![self.classes],
            params: last * self.classes + self.classes,
        });
        Ok(steps)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.plan()?.iter().map(|s| s.params).sum())
    }

    /// Width of the first fully-connected layer.
    pub fn fc6_width(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            C3dLayer::Fc(n) => Some(*n),
            _ => None,
        })
    }
}

/// The network: convolutions and pools in spec order, hidden fully-connected
/// layers, and a linear output layer producing logits.
#[derive(Clone, Debug, PartialEq)]
pub struct C3d {
    pub spec: C3dSpec,
    pub convs: Vec<Conv3d>,
    pub fcs: Vec<Dense>,
    pub out: Dense,
}

#[derive(Clone, Debug)]
enum Stage {
    Conv(Conv3dCache, Tensor),
    Pool(MaxPool3d, PoolCache),
    Fc(DenseCache),
}

#[derive(Clone, Debug)]
pub struct C3dCache {
    stages: Vec<Stage>,
    conv_shape: Vec<usize>,
    fc6: Tensor,
    out: DenseCache,
}

impl C3dCache {
    /// Post-ReLU activations of the first fully-connected layer, `[n × fc6]`.
    pub fn fc6(&self) -> &Tensor {
        &self.fc6
    }
}

impl C3d {
    pub fn new(spec: C3dSpec, rng: &mut Rng) -> Result<Self> {
        spec.plan()?;
        let mut c = spec.input[0];
        let mut convs = Vec::new();
        let mut fcs = Vec::new();
        let mut flat = 0;
        for step in spec.plan()?.iter().take(spec.layers.len()) {
            match step.layer {
                C3dLayer::Conv(f) => {
                    convs.push(Conv3d::same(c, f, rng));
                    c = f;
                    flat = step.output.iter().product();
                }
                C3dLayer::Pool(_) => flat = step.output.iter().product(),
                C3dLayer::Fc(units) => {
                    fcs.push(Dense::new(flat, units, Activation::Relu, rng));
                    flat = units;
                }
            }
        }
        let out = Dense::new(flat, spec.classes, Activation::Identity, rng);
        Ok(C3d { spec, convs, fcs, out })
    }

    /// All-zero weights; every input then maps to a uniform softmax.
    pub fn zeros(spec: C3dSpec) -> Result<Self> {
        let mut rng = Rng::new(0);
        Ok(Self::new(spec, &mut rng)?.zeros_like())
    }

    pub fn zeros_like(&self) -> Self {
        C3d {
            spec: self.spec.clone(),
            convs: self.convs.iter().map(Conv3d::zeros_like).collect(),
            fcs: self.fcs.iter().map(Dense::zeros_like).collect(),
            out: self.out.zeros_like(),
        }
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn fc6_width(&self) -> usize {
        self.fcs[0].output_dim()
    }

    /// Logits `[n × K]` for clips `[n × c × t × h × w]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, C3dCache)> {
        let want = self.spec.input;
        if x.ndim() != 5 || x.shape()[1..] != want {
            return Err(Error::shape("c3d", x.shape(), &[0, want[0], want[1], want[2], want[3]]));
        }
        let n = x.shape()[0];
        let mut act = x.clone();
        let mut stages = Vec::with_capacity(self.spec.layers.len());
        let (mut conv_i, mut fc_i) = (0, 0);
        let mut conv_shape = Vec::new();
        let mut fc6 = None;
        for &layer in &self.spec.layers {
            match layer {
                C3dLayer::Conv(_) => {
                    let (mut y, cache) = self.convs[conv_i].forward(&act)?;
                    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    stages.push(Stage::Conv(cache, y.clone()));
                    act = y;
                    conv_i += 1;
                }
                C3dLayer::Pool(win) => {
                    let pool = MaxPool3d::new(win)?;
                    let (y, cache) = pool.forward(&act)?;
                    stages.push(Stage::Pool(pool, cache));
                    act = y;
                }
                C3dLayer::Fc(_) => {
                    if fc_i == 0 {
                        conv_shape = act.shape().to_vec();
                        let flat = act.len() / n;
                        act = act.reshape(&[n, flat])?;
                    }
                    let (y, cache) = self.fcs[fc_i].forward(&act)?;
                    if fc_i == 0 {
                        fc6 = Some(y.clone());
                    }
                    stages.push(Stage::Fc(cache));
                    act = y;
                    fc_i += 1;
                }
            }
        }
        let (logits, out) = self.out.forward(&act)?;
        let cache = C3dCache {
            stages,
            conv_shape,
            fc6: fc6.expect("validated spec has a fully-connected layer"),
            out,
        };
        Ok((logits, cache))
    }

    /// Parameter gradients for a gradient on the logits.
    pub fn backward(&self, cache: &C3dCache, grad_logits: &Tensor) -> Result<C3d> {
        let mut grads = self.zeros_like();
        let (g_out, mut g) = self.out.backward(&cache.out, grad_logits)?;
        grads.out = g_out;
        let mut conv_i = self.convs.len();
        let mut fc_i = self.fcs.len();
        for stage in cache.stages.iter().rev() {
            match stage {
                Stage::Fc(c) => {
                    fc_i -= 1;
                    let (gw, gx) = self.fcs[fc_i].backward(c, &g)?;
                    grads.fcs[fc_i] = gw;
                    g = gx;
                    if fc_i == 0 {
                        g = g.reshape(&cache.conv_shape)?;
                    }
                }
                Stage::Pool(pool, c) => g = pool.backward(c, &g)?,
                Stage::Conv(c, y) => {
                    conv_i -= 1;
                    for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                        if yv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    let cg = self.convs[conv_i].backward(c, &g, conv_i > 0)?;
                    grads.convs[conv_i].kernels = cg.kernels;
                    grads.convs[conv_i].bias = cg.bias;
                    if let Some(gx) = cg.x {
                        g = gx;
                    }
                }
            }
        }
        Ok(grads)
    }
}

impl Module for C3d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(prefixed(&format!("conv{}", i + 1), c.params()));
        }
        for (i, f) in self.fcs.iter().enumerate() {
            out.extend(prefixed(&format!("fc{}", i + 6), f.params()));
        }
        out.extend(prefixed("out", self.out.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in &mut self.convs {
            out.extend(c.params_mut());
        }
        for f in &mut self.fcs {
            out.extend(f.params_mut());
        }
        out.extend(self.out.params_mut());
        out
    }
}
