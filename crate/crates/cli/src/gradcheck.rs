//! Finite-difference checks of every layer's backward pass on small random shapes.

use std::collections::BTreeSet;

use serde::Serialize;
use twostream_core::conv3d::{Conv3d, MaxPool3d};
use twostream_core::gradcheck::{central_difference, compare, CheckOutcome, STEP, TOLERANCE};
use twostream_core::heads::{softmax_xent, svm_class_objective, svm_class_subgradient, Dense};
use twostream_core::normreg::{dropout, dropout_backward, BatchNorm, DropoutConfig, Mode};
use twostream_core::recurrent::{CellKind, RecurrentLayer, RecurrentStack, Sequence};
use twostream_core::{Activation, Module, Result, Rng, Tensor};

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<CheckOutcome>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn layer_types(&self) -> BTreeSet<String> {
        self.checks.iter().map(|c| c.layer.clone()).collect()
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max)
    }

    /// One line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<6} {:<14} {:<22} {:<16} max_rel_err={:.3e} worst={} (analytic {:.6e}, numeric {:.6e})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.layer,
                c.target,
                c.shape,
                c.max_relative_error,
                c.worst_index,
                c.analytic_at_worst,
                c.numeric_at_worst,
            ));
        }
        out
    }
}

struct Checker {
    checks: Vec<CheckOutcome>,
    /// Layer whose analytic gradients are deliberately scaled (negative control).
    corrupt: Option<String>,
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(ToString::to_string).collect::<Vec<_>>().join("x")
}

impl Checker {
    fn analytic(&self, layer: &str, g: &[f64]) -> Vec<f64> {
        if self.corrupt.as_deref() == Some(layer) {
            g.iter().map(|v| v * 1.01 + 1e-3).collect()
        } else {
            g.to_vec()
        }
    }

    /// Checks `∂f/∂x` at `x` against `analytic`.
    fn tensor(&mut self, layer: &str, target: &str, x: &Tensor, analytic: &Tensor, mut f: impl FnMut(&Tensor) -> f64) {
        let shape = x.shape().to_vec();
        let numeric = central_difference(x.data(), STEP, |p| {
            f(&Tensor::new(shape.clone(), p.to_vec()).expect("probe keeps the shape"))
        });
        let a = self.analytic(layer, analytic.data());
        self.checks.push(compare(layer, target, &shape_str(&shape), &a, &numeric, TOLERANCE));
    }

    /// Checks every parameter tensor of `model` against the matching tensor of `grads`.
    fn params<M: Module + Clone>(&mut self, layer: &str, model: &M, grads: &M, f: impl Fn(&M) -> f64) {
        let g = grads.params();
        for (j, (name, t)) in model.params().into_iter().enumerate() {
            let numeric = central_difference(t.data(), STEP, |p| {
                let mut m = model.clone();
                m.params_mut()[j].data_mut().copy_from_slice(p);
                f(&m)
            });
            let a = self.analytic(layer, g[j].1.data());
            self.checks.push(compare(layer, &name, &shape_str(t.shape()), &a, &numeric, TOLERANCE));
        }
    }
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Random `n × T × width` sequence with lengths `T, T−2, …` (at least 1) and zero padding.
fn random_sequence(n: usize, t: usize, width: usize, rng: &mut Rng) -> Sequence {
    let lengths: Vec<usize> = (0..n).map(|b| t.saturating_sub(2 * b).max(1)).collect();
    let steps = (0..t)
        .map(|s| {
            let mut step = random(&[n, width], rng);
            for (b, &len) in lengths.iter().enumerate() {
                if s >= len {
                    step.row_mut(b).iter_mut().for_each(|v| *v = 0.0);
                }
            }
            step
        })
        .collect();
    Sequence { steps, lengths }
}

fn flatten(seq: &Sequence) -> Tensor {
    let (t, n, w) = (seq.steps.len(), seq.lengths.len(), seq.width());
    let mut data = Vec::with_capacity(t * n * w);
    for s in &seq.steps {
        data.extend_from_slice(s.data());
    }
    Tensor::new(vec![t, n, w], data).expect("sequence extents")
}

fn unflatten(x: &Tensor, lengths: &[usize]) -> Sequence {
    let (t, n, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let steps = (0..t)
        .map(|s| Tensor::new(vec![n, w], x.data()[s * n * w..(s + 1) * n * w].to_vec()).expect("step extents"))
        .collect();
    Sequence {
        steps,
        lengths: lengths.to_vec(),
    }
}

/// One recurrent layer, loss `Σ_t r_t · h_t` over the whole output sequence.
fn check_recurrent(ck: &mut Checker, layer: &str, kind: CellKind, bidirectional: bool, rng: &mut Rng) -> Result<()> {
    let (n, t) = (2 + rng.below(2), 3 + rng.below(3));
    let (i, d) = (2 + rng.below(3), 2 + rng.below(3));
    let stack = RecurrentStack::new(vec![RecurrentLayer::new(kind, i, d, bidirectional, rng)])?;
    let input = random_sequence(n, t, i, rng);
    let proj: Vec<Tensor> = (0..t).map(|_| random(&[n, stack.output_dim()], rng)).collect();
    let loss = |s: &RecurrentStack, x: &Sequence| -> f64 {
        let (outs, _, _) = s.run(x).expect("valid shapes");
        outs[0].steps.iter().zip(&proj).map(|(h, r)| dot(h, r)).sum()
    };
    let (_, _, cache) = stack.run(&input)?;
    let (grads, gx) = stack.backprop(&cache, proj.clone())?;
    ck.params(layer, &stack, &grads, |s| loss(s, &input));
    let gx = flatten(&Sequence {
        steps: gx,
        lengths: input.lengths.clone(),
    });
    ck.tensor(layer, "input", &flatten(&input), &gx, |x| loss(&stack, &unflatten(x, &input.lengths)));
    Ok(())
}

/// LSTM under a bidirectional GRU, loss on the top layer's last valid state.
fn check_stacked(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (n, t, i, d) = (3, 4 + rng.below(2), 2 + rng.below(2), 2 + rng.below(2));
    let first = RecurrentLayer::new(CellKind::Lstm, i, d, false, rng);
    let second = RecurrentLayer::new(CellKind::Gru, d, d, true, rng);
    let stack = RecurrentStack::new(vec![first, second])?;
    let input = random_sequence(n, t, i, rng);
    let proj = random(&[n, stack.output_dim()], rng);
    let loss = |s: &RecurrentStack, x: &Sequence| dot(&s.run(x).expect("valid shapes").1, &proj);
    let (_, _, cache) = stack.run(&input)?;
    let (grads, gx) = stack.backprop_last(&cache, &proj)?;
    ck.params("stacked", &stack, &grads, |s| loss(s, &input));
    let gx = flatten(&Sequence {
        steps: gx,
        lengths: input.lengths.clone(),
    });
    ck.tensor("stacked", "input", &flatten(&input), &gx, |x| loss(&stack, &unflatten(x, &input.lengths)));
    Ok(())
}

fn check_batchnorm(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (n, d) = (3 + rng.below(4), 2 + rng.below(4));
    let mut bn = BatchNorm::new(d);
    bn.gamma = Tensor::from_fn(&[d], |_| rng.uniform_range(0.5, 1.5));
    bn.beta = random(&[d], rng);
    let x = random(&[n, d], rng);
    let proj = random(&[n, d], rng);
    let loss = |b: &BatchNorm, x: &Tensor| {
        let mut b = b.clone();
        dot(&b.forward(x, Mode::Train).expect("valid batch").0, &proj)
    };
    let (_, cache) = bn.clone().forward(&x, Mode::Train)?;
    let g = bn.backward(&cache, &proj)?;
    let mut grads = bn.zeros_like();
    grads.gamma = g.gamma;
    grads.beta = g.beta;
    ck.params("batchnorm", &bn, &grads, |b| loss(b, &x));
    ck.tensor("batchnorm", "input", &x, &g.x, |x| loss(&bn, x));
    Ok(())
}

fn check_dropout(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let x = random(&[3, 4], rng);
    let proj = random(&[3, 4], rng);
    let off = DropoutConfig::new(0.75, Mode::Inference)?;
    let mut unused = Rng::new(0);
    let g = dropout_backward(&proj, None)?;
    ck.tensor("dropout", "input (inference)", &x, &g, |x| dot(&dropout(x, &off, &mut unused).0, &proj));

    let on = DropoutConfig::new(0.75, Mode::Train)?;
    let (_, mask) = dropout(&x, &on, rng);
    let mask = mask.expect("train mode returns a mask");
    let g = dropout_backward(&proj, Some(&mask))?;
    ck.tensor("dropout", "input (fixed mask)", &x, &g, |x| dot(&x.mul(&mask).expect("same shape"), &proj));
    Ok(())
}

fn check_conv3d(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (c, f) = (1 + rng.below(2), 1 + rng.below(2));
    let conv = Conv3d::same(c, f, rng);
    let x = random(&[2, c, 3, 4, 4], rng);
    let (y, cache) = conv.forward(&x)?;
    let proj = random(y.shape(), rng);
    let loss = |m: &Conv3d, x: &Tensor| dot(&m.forward(x).expect("valid shapes").0, &proj);
    let g = conv.backward(&cache, &proj, true)?;
    let mut grads = conv.zeros_like();
    grads.kernels = g.kernels;
    grads.bias = g.bias;
    ck.params("conv3d", &conv, &grads, |m| loss(m, &x));
    ck.tensor("conv3d", "input", &x, &g.x.expect("requested"), |x| loss(&conv, x));
    Ok(())
}

fn check_maxpool(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let pool = MaxPool3d::new([1 + rng.below(2), 2, 2])?;
    let x = random(&[2, 2, 3, 5, 4], rng);
    let (y, cache) = pool.forward(&x)?;
    let proj = random(y.shape(), rng);
    let g = pool.backward(&cache, &proj)?;
    ck.tensor("maxpool3d", "input", &x, &g, |x| dot(&pool.forward(x).expect("valid shapes").0, &proj));
    Ok(())
}

fn check_dense(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (n, i, o) = (2 + rng.below(3), 2 + rng.below(4), 2 + rng.below(4));
    let fc = Dense::new(i, o, Activation::Tanh, rng);
    let x = random(&[n, i], rng);
    let proj = random(&[n, o], rng);
    let loss = |m: &Dense, x: &Tensor| dot(&m.forward(x).expect("valid shapes").0, &proj);
    let (_, cache) = fc.forward(&x)?;
    let (grads, gx) = fc.backward(&cache, &proj)?;
    ck.params("dense", &fc, &grads, |m| loss(m, &x));
    ck.tensor("dense", "input", &x, &gx, |x| loss(&fc, x));
    Ok(())
}

fn check_xent(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (n, k) = (2 + rng.below(4), 2 + rng.below(5));
    let logits = Tensor::from_fn(&[n, k], |_| rng.uniform_range(-3.0, 3.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let (_, g) = softmax_xent(&logits, &labels)?;
    ck.tensor("softmax_xent", "logits", &logits, &g, |z| softmax_xent(z, &labels).expect("valid labels").0);
    Ok(())
}

fn check_svm(ck: &mut Checker, rng: &mut Rng) -> Result<()> {
    let (n, d) = (6 + rng.below(5), 2 + rng.below(4));
    let features = random(&[n, d], rng);
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let lambda = 0.1;
    let w = random(&[d], rng);
    let b = rng.uniform_range(-0.5, 0.5);
    let (gw, gb) = svm_class_subgradient(w.data(), b, &features, &y, lambda);
    let gw = Tensor::new(vec![d], gw)?;
    ck.tensor("svm", "w", &w, &gw, |w| svm_class_objective(w.data(), b, &features, &y, lambda));
    let bt = Tensor::full(&[1], b);
    ck.tensor("svm", "b", &bt, &Tensor::full(&[1], gb), |b| {
        svm_class_objective(w.data(), b.data()[0], &features, &y, lambda)
    });
    Ok(())
}

/// Runs every check with fresh random shapes and weights drawn from `rng`.
pub fn gradcheck_all(rng: &mut Rng) -> Result<GradcheckReport> {
    gradcheck_with(rng, None)
}

/// Like [`gradcheck_all`]; when `corrupt` names a layer, that layer's
/// analytic gradients are perturbed before comparison.
pub fn gradcheck_with(rng: &mut Rng, corrupt: Option<&str>) -> Result<GradcheckReport> {
    let mut ck = Checker {
        checks: Vec::new(),
        corrupt: corrupt.map(str::to_string),
    };
    check_recurrent(&mut ck, "rnn", CellKind::Vanilla(Activation::Tanh), false, rng)?;
    check_recurrent(&mut ck, "lstm", CellKind::Lstm, false, rng)?;
    check_recurrent(&mut ck, "gru", CellKind::Gru, false, rng)?;
    check_recurrent(&mut ck, "bidirectional", CellKind::Gru, true, rng)?;
    check_stacked(&mut ck, rng)?;
    check_batchnorm(&mut ck, rng)?;
    check_dropout(&mut ck, rng)?;
    check_dense(&mut ck, rng)?;
    check_xent(&mut ck, rng)?;
    check_conv3d(&mut ck, rng)?;
    check_maxpool(&mut ck, rng)?;
    check_svm(&mut ck, rng)?;
    Ok(GradcheckReport {
        tolerance: TOLERANCE,
        checks: ck.checks,
    })
}
