//! Unrolling cells over padded sequences, bidirectional layers, stacks and
//! backpropagation through time.
//!
//! A sample's state is frozen once its true length is exhausted: steps at or
//! beyond `lengths[b]` copy the previous state instead of applying the cell,
//! so padding never reaches the state, the outputs or the gradients. The
//! initial state is zero.

use crate::error::{Error, Result};
use crate::module::{prefixed, Module};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::cell::{Cell, CellKind, StepCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `t = 1 … T`
    Forward,
    /// `t = T … 1`
    Backward,
}

/// Padded batch `[n × T × i]` plus the true length of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    data: Tensor,
    lengths: Vec<usize>,
}

impl SequenceBatch {
    /// Validates lengths (`1 ≤ len ≤ T`) and that padded positions are zero.
    pub fn new(data: Tensor, lengths: Vec<usize>) -> Result<Self> {
        let &[n, t, i] = data.shape() else {
            return Err(Error::InvalidArgument(format!(
                "sequence batch must be [n × T × i], got {:?}",
                data.shape()
            )));
        };
        if lengths.len() != n {
            return Err(Error::shape("sequence_batch", &[lengths.len()], &[n]));
        }
        for (b, &len) in lengths.iter().enumerate() {
            if len == 0 || len > t {
                return Err(Error::InvalidArgument(format!(
                    "sample {b} has length {len}, expected 1..={t}"
                )));
            }
            let padded = &data.data()[(b * t + len) * i..(b + 1) * t * i];
            if padded.iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample {b} has nonzero values past its length {len}"
                )));
            }
        }
        Ok(SequenceBatch { data, lengths })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn batch_size(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub(crate) fn to_sequence(&self) -> Sequence {
        Sequence::from_batch_major(&self.data, self.lengths.clone())
    }
}

/// Time-major view used between layers: one `[n × width]` tensor per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub steps: Vec<Tensor>,
    pub lengths: Vec<usize>,
}

impl Sequence {
    pub fn from_batch_major(data: &Tensor, lengths: Vec<usize>) -> Sequence {
        let (n, t, w) = (data.shape()[0], data.shape()[1], data.shape()[2]);
        let steps = (0..t)
            .map(|s| {
                let mut step = Vec::with_capacity(n * w);
                for b in 0..n {
                    step.extend_from_slice(&data.data()[(b * t + s) * w..(b * t + s + 1) * w]);
                }
                Tensor::new(vec![n, w], step).expect("consistent step shape")
            })
            .collect();
        Sequence { steps, lengths }
    }

    /// Reassembles `[n × T × width]`.
    pub fn to_batch_major(&self) -> Tensor {
        let t = self.steps.len();
        let n = self.lengths.len();
        let w = self.steps.first().map_or(0, |s| s.cols());
        let mut out = vec![0.0; n * t * w];
        for (s, step) in self.steps.iter().enumerate() {
            for b in 0..n {
                out[(b * t + s) * w..(b * t + s + 1) * w].copy_from_slice(step.row(b));
            }
        }
        Tensor::new(vec![n, t, w], out).expect("consistent sequence shape")
    }

    pub fn width(&self) -> usize {
        self.steps.first().map_or(0, |s| s.cols())
    }

    fn batch_size(&self) -> usize {
        self.lengths.len()
    }
}

/// Everything [`bptt_backward`] needs from a forward unroll.
#[derive(Clone, Debug)]
pub struct UnrollCache {
    direction: Direction,
    lengths: Vec<usize>,
    /// Indexed by time position; `None` where no sample was active.
    steps: Vec<Option<StepCache>>,
    input_dim: usize,
    hidden_dim: usize,
}

#[derive(Clone, Debug)]
pub struct Unrolled {
    pub outputs: Sequence,
    pub last_valid: Tensor,
    pub cache: UnrollCache,
}

fn processing_order(direction: Direction, t: usize) -> Box<dyn Iterator<Item = usize>> {
    match direction {
        Direction::Forward => Box::new(0..t),
        Direction::Backward => Box::new((0..t).rev()),
    }
}

/// Rows `b` with `t < lengths[b]`.
fn active_rows(lengths: &[usize], t: usize) -> Vec<bool> {
    lengths.iter().map(|&len| t < len).collect()
}

/// Keeps `fresh` on active rows and `old` elsewhere.
fn select_rows(fresh: Tensor, old: &Tensor, active: &[bool]) -> Tensor {
    if active.iter().all(|&a| a) {
        return fresh;
    }
    let mut out = fresh;
    for (b, &a) in active.iter().enumerate() {
        if !a {
            out.row_mut(b).copy_from_slice(old.row(b));
        }
    }
    out
}

/// Zeroes inactive rows.
fn mask_rows(t: &Tensor, active: &[bool]) -> Tensor {
    let mut out = t.clone();
    for (b, &a) in active.iter().enumerate() {
        if !a {
            out.row_mut(b).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

pub(crate) fn unroll_sequence(cell: &Cell, input: &Sequence, direction: Direction) -> Result<Unrolled> {
    let (n, d, i) = (input.batch_size(), cell.hidden_dim(), cell.input_dim());
    let t_len = input.steps.len();
    if t_len == 0 {
        return Err(Error::Empty("sequence has no time steps".into()));
    }
    if input.width() != i {
        return Err(Error::shape("unroll", &[n, t_len, input.width()], &[n, t_len, i]));
    }
    let mut h = Tensor::zeros(&[n, d]);
    let mut c = cell.has_cell_state().then(|| Tensor::zeros(&[n, d]));
    let mut outputs: Vec<Option<Tensor>> = vec![None; t_len];
    let mut caches: Vec<Option<StepCache>> = vec![None; t_len];
    for t in processing_order(direction, t_len) {
        let active = active_rows(&input.lengths, t);
        if active.iter().any(|&a| a) {
            let (h_new, c_new, cache) = cell.step(&input.steps[t], &h, c.as_ref())?;
            h = select_rows(h_new, &h, &active);
            if let (Some(c_old), Some(c_new)) = (c.as_ref(), c_new) {
                c = Some(select_rows(c_new, c_old, &active));
            }
            caches[t] = Some(cache);
        }
        outputs[t] = Some(h.clone());
    }
    let last_valid = h;
    let outputs = Sequence {
        steps: outputs.into_iter().map(|o| o.expect("every step visited")).collect(),
        lengths: input.lengths.clone(),
    };
    Ok(Unrolled {
        outputs,
        last_valid,
        cache: UnrollCache {
            direction,
            lengths: input.lengths.clone(),
            steps: caches,
            input_dim: i,
            hidden_dim: d,
        },
    })
}

/// Backpropagation through time for one unrolled cell.
///
/// `grad_outputs` holds `∂L/∂outputs[t]` for every time position. Returns the
/// accumulated parameter gradients and `∂L/∂input[t]` per position; input
/// gradients at padded positions are exactly zero.
pub(crate) fn bptt_sequence(cell: &Cell, cache: &UnrollCache, grad_outputs: &[Tensor]) -> Result<(Cell, Vec<Tensor>)> {
    let t_len = cache.steps.len();
    let n = cache.lengths.len();
    let (d, i) = (cache.hidden_dim, cache.input_dim);
    if grad_outputs.len() != t_len {
        return Err(Error::shape("bptt_backward", &[grad_outputs.len()], &[t_len]));
    }
    for g in grad_outputs {
        if g.shape() != [n, d] {
            return Err(Error::shape("bptt_backward", g.shape(), &[n, d]));
        }
    }
    let mut grads = cell.zeros_like();
    let mut grad_inputs = vec![Tensor::zeros(&[n, i]); t_len];
    let mut carry_h = Tensor::zeros(&[n, d]);
    let mut carry_c = cell.has_cell_state().then(|| Tensor::zeros(&[n, d]));
    let order: Vec<usize> = processing_order(cache.direction, t_len).collect();
    for &t in order.iter().rev() {
        let mut dh = grad_outputs[t].clone();
        dh.add_assign(&carry_h)?;
        let Some(step_cache) = &cache.steps[t] else {
            // Every sample frozen: the gradient flows straight to the previous state.
            carry_h = dh;
            continue;
        };
        let active = active_rows(&cache.lengths, t);
        let dh_cell = mask_rows(&dh, &active);
        let dc_cell = carry_c.as_ref().map(|dc| mask_rows(dc, &active));
        let (dx, dh_prev, dc_prev) = cell.step_backward(step_cache, &dh_cell, dc_cell.as_ref(), &mut grads)?;
        carry_h = select_rows(dh_prev, &dh, &active);
        if let (Some(dc_old), Some(dc_prev)) = (carry_c.as_ref(), dc_prev) {
            carry_c = Some(select_rows(dc_prev, dc_old, &active));
        }
        grad_inputs[t] = mask_rows(&dx, &active);
    }
    Ok((grads, grad_inputs))
}

/// Runs `cell` over a padded batch in the given direction.
///
/// Returns outputs `[n × T × d]`, the state at each sample's final true step
/// (forward) or at step 1 (backward), and the cache for [`bptt_backward`].
pub fn unroll(cell: &Cell, batch: &SequenceBatch, direction: Direction) -> Result<(Tensor, Tensor, UnrollCache)> {
    let un = unroll_sequence(cell, &batch.to_sequence(), direction)?;
    Ok((un.outputs.to_batch_major(), un.last_valid, un.cache))
}

/// BPTT over a cache from [`unroll`]. `grad_outputs` is `[n × T × d]`.
///
/// Returns parameter gradients and the input gradient `[n × T × i]`.
pub fn bptt_backward(cell: &Cell, cache: &UnrollCache, grad_outputs: &Tensor) -> Result<(Cell, Tensor)> {
    let grad_seq = Sequence::from_batch_major(grad_outputs, cache.lengths.clone());
    let (grads, grad_inputs) = bptt_sequence(cell, cache, &grad_seq.steps)?;
    let seq = Sequence {
        steps: grad_inputs,
        lengths: cache.lengths.clone(),
    };
    Ok((grads, seq.to_batch_major()))
}

/// Gradient of `last_valid` expressed as a gradient on the output sequence.
///
/// Because states are frozen past each sample's length, `last_valid` equals
/// the output at the direction's final processed position.
pub(crate) fn last_valid_to_outputs(direction: Direction, t_len: usize, grad_last: &Tensor) -> Vec<Tensor> {
    let mut grads = vec![grad_last.zeros_like(); t_len];
    let idx = match direction {
        Direction::Forward => t_len - 1,
        Direction::Backward => 0,
    };
    grads[idx] = grad_last.clone();
    grads
}

/// One recurrent layer, optionally bidirectional.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentLayer {
    pub forward: Cell,
    pub backward: Option<Cell>,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    forward: UnrollCache,
    backward: Option<UnrollCache>,
}

impl RecurrentLayer {
    pub fn new(kind: CellKind, input: usize, hidden: usize, bidirectional: bool, rng: &mut Rng) -> Self {
        let forward = Cell::new(kind, input, hidden, rng);
        let backward = bidirectional.then(|| Cell::new(kind, input, hidden, rng));
        RecurrentLayer { forward, backward }
    }

    pub fn bidirectional(forward: Cell, backward: Cell) -> Result<Self> {
        if forward.hidden_dim() != backward.hidden_dim() || forward.input_dim() != backward.input_dim() {
            return Err(Error::shape(
                "bidirectional",
                &[forward.input_dim(), forward.hidden_dim()],
                &[backward.input_dim(), backward.hidden_dim()],
            ));
        }
        Ok(RecurrentLayer {
            forward,
            backward: Some(backward),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim() * if self.backward.is_some() { 2 } else { 1 }
    }

    pub fn zeros_like(&self) -> Self {
        RecurrentLayer {
            forward: self.forward.zeros_like(),
            backward: self.backward.as_ref().map(Cell::zeros_like),
        }
    }

    pub(crate) fn run(&self, input: &Sequence) -> Result<(Sequence, Tensor, LayerCache)> {
        let fwd = unroll_sequence(&self.forward, input, Direction::Forward)?;
        let Some(bwd_cell) = &self.backward else {
            let cache = LayerCache {
                forward: fwd.cache,
                backward: None,
            };
            return Ok((fwd.outputs, fwd.last_valid, cache));
        };
        let bwd = unroll_sequence(bwd_cell, input, Direction::Backward)?;
        let steps = fwd
            .outputs
            .steps
            .iter()
            .zip(&bwd.outputs.steps)
            .map(|(a, b)| a.concat_last(b))
            .collect::<Result<Vec<_>>>()?;
        let last_valid = fwd.last_valid.concat_last(&bwd.last_valid)?;
        let outputs = Sequence {
            steps,
            lengths: input.lengths.clone(),
        };
        let cache = LayerCache {
            forward: fwd.cache,
            backward: Some(bwd.cache),
        };
        Ok((outputs, last_valid, cache))
    }

    /// `grad_outputs[t]` is `[n × output_dim]`.
    pub(crate) fn backprop(&self, cache: &LayerCache, grad_outputs: &[Tensor]) -> Result<(RecurrentLayer, Vec<Tensor>)> {
        let (Some(bwd_cell), Some(bwd_cache)) = (&self.backward, &cache.backward) else {
            let (grads, gx) = bptt_sequence(&self.forward, &cache.forward, grad_outputs)?;
            return Ok((
                RecurrentLayer {
                    forward: grads,
                    backward: None,
                },
                gx,
            ));
        };
        let d = self.forward.hidden_dim();
        let n = cache.forward.lengths.len();
        let mut g_fwd = Vec::with_capacity(grad_outputs.len());
        let mut g_bwd = Vec::with_capacity(grad_outputs.len());
        for g in grad_outputs {
            let (a, b) = super::cell::split_cols(g.data(), d, d, n);
            g_fwd.push(Tensor::new(vec![n, d], a)?);
            g_bwd.push(Tensor::new(vec![n, d], b)?);
        }
        let (grads_f, mut gx) = bptt_sequence(&self.forward, &cache.forward, &g_fwd)?;
        let (grads_b, gx_b) = bptt_sequence(bwd_cell, bwd_cache, &g_bwd)?;
        for (a, b) in gx.iter_mut().zip(&gx_b) {
            a.add_assign(b)?;
        }
        Ok((
            RecurrentLayer {
                forward: grads_f,
                backward: Some(grads_b),
            },
            gx,
        ))
    }

    /// Maps a gradient on `last_valid` onto the output sequence.
    pub(crate) fn last_valid_grad(&self, t_len: usize, grad_last: &Tensor) -> Result<Vec<Tensor>> {
        if self.backward.is_none() {
            return Ok(last_valid_to_outputs(Direction::Forward, t_len, grad_last));
        }
        let d = self.forward.hidden_dim();
        let n = grad_last.rows();
        let (a, b) = super::cell::split_cols(grad_last.data(), d, d, n);
        let ga = last_valid_to_outputs(Direction::Forward, t_len, &Tensor::new(vec![n, d], a)?);
        let gb = last_valid_to_outputs(Direction::Backward, t_len, &Tensor::new(vec![n, d], b)?);
        ga.iter().zip(&gb).map(|(x, y)| x.concat_last(y)).collect()
    }
}

impl Module for RecurrentLayer {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("fwd", self.forward.params());
        if let Some(b) = &self.backward {
            out.extend(prefixed("bwd", b.params()));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.forward.params_mut();
        if let Some(b) = &mut self.backward {
            out.extend(b.params_mut());
        }
        out
    }
}

/// Runs a forward cell and a backward cell over the same batch.
///
/// Forward outputs occupy columns `[0, d)` and backward outputs `[d, 2d)`;
/// `last_valid` concatenates both directions' final states the same way.
pub fn bidirectional(cell_fwd: &Cell, cell_bwd: &Cell, batch: &SequenceBatch) -> Result<(Tensor, Tensor)> {
    let layer = RecurrentLayer::bidirectional(cell_fwd.clone(), cell_bwd.clone())?;
    let (out, last, _) = layer.run(&batch.to_sequence())?;
    Ok((out.to_batch_major(), last))
}

/// Stacked recurrent layers: layer `l` reads the full output sequence of layer `l − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentStack {
    pub layers: Vec<RecurrentLayer>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<LayerCache>,
    t_len: usize,
}

impl RecurrentStack {
    pub fn new(layers: Vec<RecurrentLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("recurrent stack needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Validation {
                    layer: l + 1,
                    reason: format!(
                        "expects input width {}, previous layer produces {}",
                        pair[1].input_dim(),
                        pair[0].output_dim()
                    ),
                });
            }
        }
        Ok(RecurrentStack { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty stack").output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        RecurrentStack {
            layers: self.layers.iter().map(RecurrentLayer::zeros_like).collect(),
        }
    }

    /// Returns every layer's output sequence, the top layer's `last_valid`, and the cache.
    pub fn run(&self, input: &Sequence) -> Result<(Vec<Sequence>, Tensor, StackCache)> {
        let mut outputs: Vec<Sequence> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut last = None;
        for layer in &self.layers {
            let src = outputs.last().unwrap_or(input);
            let (out, lv, cache) = layer.run(src)?;
            outputs.push(out);
            caches.push(cache);
            last = Some(lv);
        }
        let cache = StackCache {
            layers: caches,
            t_len: input.steps.len(),
        };
        Ok((outputs, last.expect("non-empty stack"), cache))
    }

    /// Backpropagates a gradient on the top layer's `last_valid`.
    pub fn backprop_last(&self, cache: &StackCache, grad_last: &Tensor) -> Result<(RecurrentStack, Vec<Tensor>)> {
        let top = self.layers.last().expect("non-empty stack");
        let grad_top = top.last_valid_grad(cache.t_len, grad_last)?;
        self.backprop(cache, grad_top)
    }

    /// Backpropagates a gradient on the top layer's whole output sequence.
    pub fn backprop(&self, cache: &StackCache, grad_top: Vec<Tensor>) -> Result<(RecurrentStack, Vec<Tensor>)> {
        let mut grad = grad_top;
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let (g, gx) = layer.backprop(lc, &grad)?;
            layer_grads.push(g);
            grad = gx;
        }
        layer_grads.reverse();
        Ok((RecurrentStack { layers: layer_grads }, grad))
    }
}

impl Module for RecurrentStack {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| prefixed(&l.to_string(), layer.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Runs a stack over a batch and returns each layer's output `[n × T × width]`.
pub fn stack(layers: &RecurrentStack, batch: &SequenceBatch) -> Result<Vec<Tensor>> {
    let (outputs, _, _) = layers.run(&batch.to_sequence())?;
    Ok(outputs.iter().map(Sequence::to_batch_major).collect())
}
