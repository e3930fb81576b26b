//! Single-step recurrent cells and their exact backward passes.
//!
//! Every cell reads the concatenation `[x_t ; h_{t-1}]` through a fused weight
//! matrix whose rows are grouped in gate blocks:
//!
//! * vanilla: `W[d × (i+d)]`
//! * LSTM: `W[4d × (i+d)]`, row blocks `i, f, o, ĉ`
//! * GRU: `W_gates[2d × (i+d)]`, row blocks `z, r`, plus `W_cand[d × (i+d)]`
//!
//! The block order is also the checkpoint order.

use crate::error::{Error, Result};
use crate::module::{glorot_uniform, Module};
use crate::rng::Rng;
use crate::tensor::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{sigmoid, Activation, Tensor};

/// Vanilla cell: `h_t = σ(W·[x_t; h_{t-1}] + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnCell {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

/// LSTM cell with fused gates in `i, f, o, ĉ` order.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub w: Tensor,
    pub b: Tensor,
}

/// GRU cell: update/reset gates in `z, r` order and a separate candidate map.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_gates: Tensor,
    pub w_cand: Tensor,
    pub b_gates: Tensor,
    pub b_cand: Tensor,
}

#[derive(Clone, Debug)]
pub struct RnnCache {
    xh: Vec<f64>,
    h: Vec<f64>,
    n: usize,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    xh: Vec<f64>,
    /// Post-activation gate values, `n × 4d`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    n: usize,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    xh: Vec<f64>,
    /// Post-activation `z, r`, `n × 2d`.
    zr: Vec<f64>,
    xrh: Vec<f64>,
    cand: Vec<f64>,
    n: usize,
}

/// The kind of cell a recurrent layer is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Vanilla(Activation),
    Lstm,
    Gru,
}

/// Any of the three cells.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Vanilla(RnnCell),
    Lstm(LstmCell),
    Gru(GruCell),
}

#[derive(Clone, Debug)]
pub enum StepCache {
    Vanilla(RnnCache),
    Lstm(LstmCache),
    Gru(GruCache),
}

fn check_inputs(op: &'static str, x: &Tensor, h: &Tensor, input: usize, hidden: usize) -> Result<usize> {
    let n = x.rows();
    if x.shape() != [n, input] {
        return Err(Error::shape(op, x.shape(), &[n, input]));
    }
    if h.shape() != [n, hidden] {
        return Err(Error::shape(op, h.shape(), &[n, hidden]));
    }
    Ok(n)
}

/// Row-wise `[a | b]` for `a: n×p`, `b: n×q`.
pub(crate) fn concat_cols(a: &[f64], p: usize, b: &[f64], q: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (p + q));
    for r in 0..n {
        out.extend_from_slice(&a[r * p..(r + 1) * p]);
        out.extend_from_slice(&b[r * q..(r + 1) * q]);
    }
    out
}

/// Inverse of [`concat_cols`].
pub(crate) fn split_cols(ab: &[f64], p: usize, q: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n * p);
    let mut b = Vec::with_capacity(n * q);
    for r in 0..n {
        let row = &ab[r * (p + q)..(r + 1) * (p + q)];
        a.extend_from_slice(&row[..p]);
        b.extend_from_slice(&row[p..]);
    }
    (a, b)
}

/// `xh · Wᵀ + b` for `xh: n × k`, `W: rows × k`.
fn affine(xh: &[f64], n: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (rows, k) = (w.rows(), w.cols());
    let mut out = Vec::with_capacity(n * rows);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    gemm_nt(n, k, rows, xh, w.data(), &mut out);
    out
}

/// Accumulates `∂W += daᵀ·xh`, `∂b += Σ da` and returns `da · W`.
fn affine_backward(da: &[f64], n: usize, xh: &[f64], w: &Tensor, gw: &mut Tensor, gb: &mut Tensor) -> Vec<f64> {
    let (rows, k) = (w.rows(), w.cols());
    gemm_tn(rows, n, k, da, xh, gw.data_mut());
    let gb = gb.data_mut();
    for r in 0..n {
        for (g, v) in gb.iter_mut().zip(&da[r * rows..(r + 1) * rows]) {
            *g += v;
        }
    }
    let mut dxh = vec![0.0; n * k];
    gemm_nn(n, rows, k, da, w.data(), &mut dxh);
    dxh
}

impl RnnCell {
    pub fn new(input: usize, hidden: usize, activation: Activation, rng: &mut Rng) -> Self {
        RnnCell {
            w: glorot_uniform(&[hidden, input + hidden], input + hidden, hidden, rng),
            b: Tensor::zeros(&[hidden]),
            activation,
        }
    }

    pub fn zeros(input: usize, hidden: usize, activation: Activation) -> Self {
        RnnCell {
            w: Tensor::zeros(&[hidden, input + hidden]),
            b: Tensor::zeros(&[hidden]),
            activation,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() - self.hidden_dim()
    }

    pub fn forward(&self, x: &Tensor, h_prev: &Tensor) -> Result<(Tensor, RnnCache)> {
        let (d, i) = (self.hidden_dim(), self.input_dim());
        let n = check_inputs("rnn_cell_forward", x, h_prev, i, d)?;
        let xh = concat_cols(x.data(), i, h_prev.data(), d, n);
        let mut h = affine(&xh, n, &self.w, &self.b);
        for v in h.iter_mut() {
            *v = self.activation.apply(*v);
        }
        let out = Tensor::new(vec![n, d], h.clone())?;
        Ok((out, RnnCache { xh, h, n }))
    }

    /// Accumulates parameter gradients into `grads`, returns `(∂x, ∂h_prev)`.
    pub fn backward(&self, cache: &RnnCache, grad_h: &Tensor, grads: &mut RnnCell) -> Result<(Tensor, Tensor)> {
        let (d, i, n) = (self.hidden_dim(), self.input_dim(), cache.n);
        if grad_h.shape() != [n, d] {
            return Err(Error::shape("rnn_cell_backward", grad_h.shape(), &[n, d]));
        }
        let da: Vec<f64> = grad_h
            .data()
            .iter()
            .zip(&cache.h)
            .map(|(g, &y)| g * self.activation.derivative_from_output(y))
            .collect();
        let dxh = affine_backward(&da, n, &cache.xh, &self.w, &mut grads.w, &mut grads.b);
        let (dx, dh) = split_cols(&dxh, i, d, n);
        Ok((Tensor::new(vec![n, i], dx)?, Tensor::new(vec![n, d], dh)?))
    }
}

impl LstmCell {
    /// Glorot weights, zero biases, forget-gate bias 1.
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmCell {
            w: glorot_uniform(&[4 * hidden, input + hidden], input + hidden, hidden, rng),
            b,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w: Tensor::zeros(&[4 * hidden, input + hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() - self.hidden_dim()
    }

    pub fn forward(&self, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor, LstmCache)> {
        let (d, i) = (self.hidden_dim(), self.input_dim());
        let n = check_inputs("lstm_cell_forward", x, h_prev, i, d)?;
        if c_prev.shape() != [n, d] {
            return Err(Error::shape("lstm_cell_forward", c_prev.shape(), &[n, d]));
        }
        let xh = concat_cols(x.data(), i, h_prev.data(), d, n);
        let mut gates = affine(&xh, n, &self.w, &self.b);
        let mut c = vec![0.0; n * d];
        let mut tanh_c = vec![0.0; n * d];
        let mut h = vec![0.0; n * d];
        for r in 0..n {
            let g = &mut gates[r * 4 * d..(r + 1) * 4 * d];
            for v in &mut g[..3 * d] {
                *v = sigmoid(*v);
            }
            for v in &mut g[3 * d..] {
                *v = v.tanh();
            }
            for j in 0..d {
                let (ig, fg, og, cand) = (g[j], g[d + j], g[2 * d + j], g[3 * d + j]);
                let idx = r * d + j;
                c[idx] = fg * c_prev.data()[idx] + ig * cand;
                tanh_c[idx] = c[idx].tanh();
                h[idx] = og * tanh_c[idx];
            }
        }
        let cache = LstmCache {
            xh,
            gates,
            c_prev: c_prev.data().to_vec(),
            tanh_c,
            n,
        };
        Ok((Tensor::new(vec![n, d], h)?, Tensor::new(vec![n, d], c)?, cache))
    }

    /// Returns `(∂x, ∂h_prev, ∂c_prev)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        grad_h: &Tensor,
        grad_c: &Tensor,
        grads: &mut LstmCell,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let (d, i, n) = (self.hidden_dim(), self.input_dim(), cache.n);
        for g in [grad_h, grad_c] {
            if g.shape() != [n, d] {
                return Err(Error::shape("lstm_cell_backward", g.shape(), &[n, d]));
            }
        }
        let mut da = vec![0.0; n * 4 * d];
        let mut dc_prev = vec![0.0; n * d];
        for r in 0..n {
            let g = &cache.gates[r * 4 * d..(r + 1) * 4 * d];
            let out = &mut da[r * 4 * d..(r + 1) * 4 * d];
            for j in 0..d {
                let idx = r * d + j;
                let (ig, fg, og, cand) = (g[j], g[d + j], g[2 * d + j], g[3 * d + j]);
                let tc = cache.tanh_c[idx];
                let dh = grad_h.data()[idx];
                let dc = grad_c.data()[idx] + dh * og * (1.0 - tc * tc);
                let d_o = dh * tc;
                let d_i = dc * cand;
                let d_f = dc * cache.c_prev[idx];
                let d_cand = dc * ig;
                dc_prev[idx] = dc * fg;
                out[j] = d_i * ig * (1.0 - ig);
                out[d + j] = d_f * fg * (1.0 - fg);
                out[2 * d + j] = d_o * og * (1.0 - og);
                out[3 * d + j] = d_cand * (1.0 - cand * cand);
            }
        }
        let dxh = affine_backward(&da, n, &cache.xh, &self.w, &mut grads.w, &mut grads.b);
        let (dx, dh) = split_cols(&dxh, i, d, n);
        Ok((
            Tensor::new(vec![n, i], dx)?,
            Tensor::new(vec![n, d], dh)?,
            Tensor::new(vec![n, d], dc_prev)?,
        ))
    }
}

impl GruCell {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        GruCell {
            w_gates: glorot_uniform(&[2 * hidden, input + hidden], input + hidden, hidden, rng),
            w_cand: glorot_uniform(&[hidden, input + hidden], input + hidden, hidden, rng),
            b_gates: Tensor::zeros(&[2 * hidden]),
            b_cand: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_gates: Tensor::zeros(&[2 * hidden, input + hidden]),
            w_cand: Tensor::zeros(&[hidden, input + hidden]),
            b_gates: Tensor::zeros(&[2 * hidden]),
            b_cand: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_cand.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_cand.cols() - self.hidden_dim()
    }

    pub fn forward(&self, x: &Tensor, h_prev: &Tensor) -> Result<(Tensor, GruCache)> {
        let (d, i) = (self.hidden_dim(), self.input_dim());
        let n = check_inputs("gru_cell_forward", x, h_prev, i, d)?;
        let hp = h_prev.data();
        let xh = concat_cols(x.data(), i, hp, d, n);
        let mut zr = affine(&xh, n, &self.w_gates, &self.b_gates);
        for v in zr.iter_mut() {
            *v = sigmoid(*v);
        }
        let mut rh = vec![0.0; n * d];
        for r in 0..n {
            for j in 0..d {
                rh[r * d + j] = zr[r * 2 * d + d + j] * hp[r * d + j];
            }
        }
        let xrh = concat_cols(x.data(), i, &rh, d, n);
        let mut cand = affine(&xrh, n, &self.w_cand, &self.b_cand);
        for v in cand.iter_mut() {
            *v = v.tanh();
        }
        let mut h = vec![0.0; n * d];
        for r in 0..n {
            for j in 0..d {
                let z = zr[r * 2 * d + j];
                let idx = r * d + j;
                h[idx] = z * hp[idx] + (1.0 - z) * cand[idx];
            }
        }
        let cache = GruCache { xh, zr, xrh, cand, n };
        Ok((Tensor::new(vec![n, d], h)?, cache))
    }

    /// Returns `(∂x, ∂h_prev)`.
    pub fn backward(&self, cache: &GruCache, grad_h: &Tensor, grads: &mut GruCell) -> Result<(Tensor, Tensor)> {
        let (d, i, n) = (self.hidden_dim(), self.input_dim(), cache.n);
        if grad_h.shape() != [n, d] {
            return Err(Error::shape("gru_cell_backward", grad_h.shape(), &[n, d]));
        }
        let gh = grad_h.data();
        let (_, h_prev) = split_cols(&cache.xh, i, d, n);
        let mut dh_prev = vec![0.0; n * d];
        let mut dz = vec![0.0; n * d];
        let mut d_cand_pre = vec![0.0; n * d];
        for idx in 0..n * d {
            let (r, j) = (idx / d, idx % d);
            let z = cache.zr[r * 2 * d + j];
            let c = cache.cand[idx];
            dz[idx] = gh[idx] * (h_prev[idx] - c);
            dh_prev[idx] = gh[idx] * z;
            d_cand_pre[idx] = gh[idx] * (1.0 - z) * (1.0 - c * c);
        }
        let dxrh = affine_backward(&d_cand_pre, n, &cache.xrh, &self.w_cand, &mut grads.w_cand, &mut grads.b_cand);
        let (mut dx, d_rh) = split_cols(&dxrh, i, d, n);

        let mut d_gates_pre = vec![0.0; n * 2 * d];
        for r in 0..n {
            for j in 0..d {
                let idx = r * d + j;
                let z = cache.zr[r * 2 * d + j];
                let rg = cache.zr[r * 2 * d + d + j];
                let dr = d_rh[idx] * h_prev[idx];
                dh_prev[idx] += d_rh[idx] * rg;
                d_gates_pre[r * 2 * d + j] = dz[idx] * z * (1.0 - z);
                d_gates_pre[r * 2 * d + d + j] = dr * rg * (1.0 - rg);
            }
        }
        let dxh = affine_backward(&d_gates_pre, n, &cache.xh, &self.w_gates, &mut grads.w_gates, &mut grads.b_gates);
        let (dx2, dh2) = split_cols(&dxh, i, d, n);
        for (a, b) in dx.iter_mut().zip(&dx2) {
            *a += b;
        }
        for (a, b) in dh_prev.iter_mut().zip(&dh2) {
            *a += b;
        }
        Ok((Tensor::new(vec![n, i], dx)?, Tensor::new(vec![n, d], dh_prev)?))
    }
}

impl Cell {
    pub fn new(kind: CellKind, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        match kind {
            CellKind::Vanilla(act) => Cell::Vanilla(RnnCell::new(input, hidden, act, rng)),
            CellKind::Lstm => Cell::Lstm(LstmCell::new(input, hidden, rng)),
            CellKind::Gru => Cell::Gru(GruCell::new(input, hidden, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Vanilla(c) => CellKind::Vanilla(c.activation),
            Cell::Lstm(_) => CellKind::Lstm,
            Cell::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Cell::Vanilla(c) => c.hidden_dim(),
            Cell::Lstm(c) => c.hidden_dim(),
            Cell::Gru(c) => c.hidden_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Cell::Vanilla(c) => c.input_dim(),
            Cell::Lstm(c) => c.input_dim(),
            Cell::Gru(c) => c.input_dim(),
        }
    }

    pub fn has_cell_state(&self) -> bool {
        matches!(self, Cell::Lstm(_))
    }

    /// Same structure with every parameter set to zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Cell {
        let (i, d) = (self.input_dim(), self.hidden_dim());
        match self {
            Cell::Vanilla(c) => Cell::Vanilla(RnnCell::zeros(i, d, c.activation)),
            Cell::Lstm(_) => Cell::Lstm(LstmCell::zeros(i, d)),
            Cell::Gru(_) => Cell::Gru(GruCell::zeros(i, d)),
        }
    }

    pub(crate) fn step(&self, x: &Tensor, h: &Tensor, c: Option<&Tensor>) -> Result<(Tensor, Option<Tensor>, StepCache)> {
        match self {
            Cell::Vanilla(cell) => {
                let (h, cache) = cell.forward(x, h)?;
                Ok((h, None, StepCache::Vanilla(cache)))
            }
            Cell::Lstm(cell) => {
                let c = c.ok_or_else(|| Error::Contract("LSTM step needs a cell state".into()))?;
                let (h, c, cache) = cell.forward(x, h, c)?;
                Ok((h, Some(c), StepCache::Lstm(cache)))
            }
            Cell::Gru(cell) => {
                let (h, cache) = cell.forward(x, h)?;
                Ok((h, None, StepCache::Gru(cache)))
            }
        }
    }

    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        grad_h: &Tensor,
        grad_c: Option<&Tensor>,
        grads: &mut Cell,
    ) -> Result<(Tensor, Tensor, Option<Tensor>)> {
        match (self, cache, grads) {
            (Cell::Vanilla(cell), StepCache::Vanilla(cache), Cell::Vanilla(g)) => {
                let (dx, dh) = cell.backward(cache, grad_h, g)?;
                Ok((dx, dh, None))
            }
            (Cell::Lstm(cell), StepCache::Lstm(cache), Cell::Lstm(g)) => {
                let zero;
                let grad_c = match grad_c {
                    Some(gc) => gc,
                    None => {
                        zero = grad_h.zeros_like();
                        &zero
                    }
                };
                let (dx, dh, dc) = cell.backward(cache, grad_h, grad_c, g)?;
                Ok((dx, dh, Some(dc)))
            }
            (Cell::Gru(cell), StepCache::Gru(cache), Cell::Gru(g)) => {
                let (dx, dh) = cell.backward(cache, grad_h, g)?;
                Ok((dx, dh, None))
            }
            _ => Err(Error::Contract("cell, cache and gradient kinds differ".into())),
        }
    }
}

impl Module for Cell {
    fn params(&self) -> Vec<(String, &Tensor)> {
        match self {
            Cell::Vanilla(c) => vec![("w".into(), &c.w), ("b".into(), &c.b)],
            Cell::Lstm(c) => vec![("w".into(), &c.w), ("b".into(), &c.b)],
            Cell::Gru(c) => vec![
                ("w_gates".into(), &c.w_gates),
                ("w_cand".into(), &c.w_cand),
                ("b_gates".into(), &c.b_gates),
                ("b_cand".into(), &c.b_cand),
            ],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Cell::Vanilla(c) => vec![&mut c.w, &mut c.b],
            Cell::Lstm(c) => vec![&mut c.w, &mut c.b],
            Cell::Gru(c) => vec![&mut c.w_gates, &mut c.w_cand, &mut c.b_gates, &mut c.b_cand],
        }
    }
}

/// Trainable parameter count of one cell, biases included.
pub fn cell_param_count(kind: CellKind, input: usize, hidden: usize) -> usize {
    let blocks = match kind {
        CellKind::Vanilla(_) => 1,
        CellKind::Lstm => 4,
        CellKind::Gru => 3,
    };
    blocks * hidden * (input + hidden) + blocks * hidden
}
