//! Fully-connected layers, softmax cross-entropy and a one-vs-rest linear SVM.

use crate::error::{Error, Result};
use crate::module::{glorot_uniform, Module};
use crate::rng::Rng;
use crate::tensor::gemm::{dot, gemm_nn, gemm_tn};
use crate::tensor::{argmax, softmax_in_place, Activation, Tensor};

/// Affine map `y = act(x Wᵀ + b)` with `W: [out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Tensor,
    y: Tensor,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        Dense {
            w: glorot_uniform(&[output, input], input, output, rng),
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            w: self.w.zeros_like(),
            b: self.b.zeros_like(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        if x.ndim() != 2 || x.cols() != self.input_dim() {
            return Err(Error::shape("dense", x.shape(), self.w.shape()));
        }
        let mut y = x.matmul_t(&self.w)?;
        let out = self.output_dim();
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(self.b.data()) {
                *v = self.activation.apply(*v + b);
            }
        }
        debug_assert_eq!(y.cols(), out);
        let cache = DenseCache { x: x.clone(), y: y.clone() };
        Ok((y, cache))
    }

    /// Returns parameter gradients (same layout as `self`) and `∂L/∂x`.
    pub fn backward(&self, cache: &DenseCache, grad_y: &Tensor) -> Result<(Dense, Tensor)> {
        if grad_y.shape() != cache.y.shape() {
            return Err(Error::shape("dense_backward", grad_y.shape(), cache.y.shape()));
        }
        let (n, out, inp) = (grad_y.rows(), self.output_dim(), self.input_dim());
        let mut g_pre = grad_y.clone();
        for (g, &y) in g_pre.data_mut().iter_mut().zip(cache.y.data()) {
            *g *= self.activation.derivative_from_output(y);
        }
        let mut grads = self.zeros_like();
        gemm_tn(out, n, inp, g_pre.data(), cache.x.data(), grads.w.data_mut());
        grads.b = g_pre.sum_rows();
        let mut gx = vec![0.0; n * inp];
        gemm_nn(n, out, inp, g_pre.data(), self.w.data(), &mut gx);
        Ok((grads, Tensor::new(vec![n, inp], gx)?))
    }
}

impl Module for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot) / n`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.rows() != labels.len() {
        return Err(Error::shape("softmax_xent", logits.shape(), &[labels.len()]));
    }
    let (n, k) = (logits.rows(), logits.cols());
    if n == 0 {
        return Err(Error::Empty("softmax_xent on an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label: bad, classes: k });
    }
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for (r, &label) in labels.iter().enumerate() {
        let z = logits.row(r);
        let top = argmax(z);
        loss += if top == label {
            // ln(1 + Σ_{j≠y} e^{z_j − z_y}) keeps precision when the label wins by a lot.
            let rest: f64 = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != label)
                .map(|(_, &v)| (v - z[label]).exp())
                .sum();
            rest.ln_1p()
        } else {
            let m = z[top];
            let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            lse - z[label]
        };
        let g = grad.row_mut(r);
        softmax_in_place(g);
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok((loss / n as f64, grad))
}

pub const SVM_EPOCHS: usize = 200;

/// One-vs-rest linear SVM. `w: [K × d]`, `b: [K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    pub w: Tensor,
    pub b: Tensor,
    pub c: f64,
}

/// Per-class training trace, one entry per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SvmTrace {
    /// Objective of the kept (best so far) iterate.
    pub objectives: Vec<Vec<f64>>,
    /// Objective of the raw subgradient iterate, which can go up.
    pub raw: Vec<Vec<f64>>,
}

fn signs(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

/// `(λ/2)·(‖w‖² + b²) + (1/n)·Σ max(0, 1 − y(w·x + b))`, the per-class
/// objective scaled by `λ = 1/(C·n)`. The bias is treated as the weight of a
/// constant feature and is regularized with the rest.
pub fn svm_class_objective(w: &[f64], b: f64, features: &Tensor, y: &[f64], lambda: f64) -> f64 {
    let n = features.rows();
    let hinge: f64 = (0..n)
        .map(|i| (1.0 - y[i] * (dot(w, features.row(i)) + b)).max(0.0))
        .sum();
    0.5 * lambda * (dot(w, w) + b * b) + hinge / n as f64
}

/// Subgradient of [`svm_class_objective`] with respect to `(w, b)`.
pub fn svm_class_subgradient(w: &[f64], b: f64, features: &Tensor, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = features.rows();
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = lambda * b;
    for i in 0..n {
        let x = features.row(i);
        if y[i] * (dot(w, x) + b) < 1.0 {
            let s = y[i] / n as f64;
            for (g, xv) in gw.iter_mut().zip(x) {
                *g -= s * xv;
            }
            gb -= s;
        }
    }
    (gw, gb)
}

impl LinearSvm {
    pub fn zeros(classes: usize, dim: usize, c: f64) -> Self {
        LinearSvm {
            w: Tensor::zeros(&[classes, dim]),
            b: Tensor::zeros(&[classes]),
            c,
        }
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// Full-batch subgradient descent with step `1/(λt)`, `t = 1…200`,
    /// starting from zero. Deterministic; no sampling is involved.
    pub fn train(features: &Tensor, labels: &[usize], classes: usize, c: f64) -> Result<(Self, SvmTrace)> {
        if features.ndim() != 2 || features.rows() != labels.len() {
            return Err(Error::shape("svm_train", features.shape(), &[labels.len()]));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("SVM C must be positive, got {c}")));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument("SVM needs at least 2 classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label: bad, classes });
        }
        let (n, d) = (features.rows(), features.cols());
        if n < classes {
            return Err(Error::DegenerateData(format!("{n} samples for {classes} classes")));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::DegenerateData("training labels contain a single class".into()));
        }
        let lambda = 1.0 / (c * n as f64);
        let mut model = LinearSvm::zeros(classes, d, c);
        let mut trace = SvmTrace::default();
        for k in 0..classes {
            let y = signs(labels, k);
            let (w, b, objectives, raw) = Self::train_class(features, &y, lambda);
            model.w.row_mut(k).copy_from_slice(&w);
            model.b.data_mut()[k] = b;
            trace.objectives.push(objectives);
            trace.raw.push(raw);
        }
        Ok((model, trace))
    }

    /// Subgradient steps are not descent steps, so the best iterate seen is kept.
    fn train_class(features: &Tensor, y: &[f64], lambda: f64) -> (Vec<f64>, f64, Vec<f64>, Vec<f64>) {
        let d = features.cols();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut best = (w.clone(), b, svm_class_objective(&w, b, features, y, lambda));
        let mut objectives = Vec::with_capacity(SVM_EPOCHS);
        let mut raw = Vec::with_capacity(SVM_EPOCHS);
        for t in 1..=SVM_EPOCHS {
            let (gw, gb) = svm_class_subgradient(&w, b, features, y, lambda);
            let eta = 1.0 / (lambda * t as f64);
            for (wv, g) in w.iter_mut().zip(&gw) {
                *wv -= eta * g;
            }
            b -= eta * gb;
            let obj = svm_class_objective(&w, b, features, y, lambda);
            if obj < best.2 {
                best = (w.clone(), b, obj);
            }
            raw.push(obj);
            objectives.push(best.2);
        }
        (best.0, best.1, objectives, raw)
    }

    /// Per-class margins `x Wᵀ + b` and the argmax label (ties to the lower class).
    pub fn predict(&self, features: &Tensor) -> Result<(Vec<usize>, Tensor)> {
        if features.ndim() != 2 || features.cols() != self.dim() {
            return Err(Error::shape("svm_predict", features.shape(), self.w.shape()));
        }
        let mut margins = features.matmul_t(&self.w)?;
        for r in 0..margins.rows() {
            for (m, b) in margins.row_mut(r).iter_mut().zip(self.b.data()) {
                *m += b;
            }
        }
        Ok((margins.argmax_rows(), margins))
    }
}

impl Module for LinearSvm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, compare, STEP, TOLERANCE};

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
    }

    /// Two Gaussian blobs around ±(2, 2, …).
    fn blobs(n: usize, d: usize, rng: &mut Rng) -> (Tensor, Vec<usize>) {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Tensor::from_fn(&[n, d], |idx| {
            let centre = if labels[idx / d] == 0 { 2.0 } else { -2.0 };
            centre + 0.5 * rng.normal()
        });
        (x, labels)
    }

    #[test]
    fn identity_dense_passes_through() {
        let mut d = Dense::zeros(3, 3, Activation::Identity);
        d.w = Tensor::identity(3);
        let x = Tensor::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.0, -0.5]]);
        assert_eq!(d.forward(&x).unwrap().0, x);
        assert!(d.forward(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn full_width_softmax_head_shape() {
        let mut rng = Rng::new(0);
        let d = Dense::new(600, 60, Activation::Identity, &mut rng);
        let (y, _) = d.forward(&Tensor::zeros(&[2, 600])).unwrap();
        assert_eq!(y.shape(), &[2, 60]);
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = Rng::new(1);
        for act in [Activation::Identity, Activation::Relu, Activation::Tanh] {
            let dense = Dense::new(4, 3, act, &mut rng);
            let x = random(&[5, 4], &mut rng);
            let proj = random(&[5, 3], &mut rng);
            let loss = |d: &Dense, x: &Tensor| -> f64 {
                let (y, _) = d.forward(x).unwrap();
                y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = dense.forward(&x).unwrap();
            let (g, gx) = dense.backward(&cache, &proj).unwrap();
            let nx = central_difference(x.data(), STEP, |v| loss(&dense, &Tensor::new(vec![5, 4], v.to_vec()).unwrap()));
            assert!(compare("dense", "x", "", gx.data(), &nx, TOLERANCE).passed);
            let nw = central_difference(dense.w.data(), STEP, |v| {
                let mut p = dense.clone();
                p.w.data_mut().copy_from_slice(v);
                loss(&p, &x)
            });
            assert!(compare("dense", "w", "", g.w.data(), &nw, TOLERANCE).passed);
            let nb = central_difference(dense.b.data(), STEP, |v| {
                let mut p = dense.clone();
                p.b.data_mut().copy_from_slice(v);
                loss(&p, &x)
            });
            assert!(compare("dense", "b", "", g.b.data(), &nb, TOLERANCE).passed);
        }
    }

    #[test]
    fn xent_closed_forms() {
        let (loss, _) = softmax_xent(&Tensor::zeros(&[3, 60]), &[0, 17, 59]).unwrap();
        assert!((loss - 60f64.ln()).abs() < 1e-12);
        assert!((loss - 4.0943).abs() < 1e-4);

        let mut z = Tensor::zeros(&[1, 6]);
        z.data_mut()[2] = 50.0;
        let (loss, _) = softmax_xent(&z, &[2]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-20);

        assert!(matches!(
            softmax_xent(&Tensor::zeros(&[1, 3]), &[3]),
            Err(Error::Label { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn xent_gradient_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let z = Tensor::from_fn(&[4, 5], |_| rng.uniform_range(-3.0, 3.0));
        let labels = [0, 3, 4, 3];
        let (_, g) = softmax_xent(&z, &labels).unwrap();
        let num = central_difference(z.data(), STEP, |v| {
            softmax_xent(&Tensor::new(vec![4, 5], v.to_vec()).unwrap(), &labels).unwrap().0
        });
        assert!(compare("xent", "logits", "", g.data(), &num, 1e-5).passed);
        for r in 0..4 {
            assert!(g.row(r).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn svm_separates_blobs() {
        let mut rng = Rng::new(3);
        let (x, labels) = blobs(40, 3, &mut rng);
        let (svm, _) = LinearSvm::train(&x, &labels, 2, 8.0).unwrap();
        let (pred, _) = svm.predict(&x).unwrap();
        assert_eq!(pred, labels);
    }

    #[test]
    fn svm_objective_never_increases() {
        let mut rng = Rng::new(4);
        let x = random(&[60, 5], &mut rng);
        let labels: Vec<usize> = (0..60).map(|_| rng.below(3)).collect();
        let (_, trace) = LinearSvm::train(&x, &labels, 3, 8.0).unwrap();
        for (obj, raw) in trace.objectives.iter().zip(&trace.raw) {
            assert_eq!(obj.len(), SVM_EPOCHS);
            assert!(obj.windows(2).all(|w| w[1] <= w[0]));
            let low = raw.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(*obj.last().unwrap(), low);
            // The objective at w = 0 is exactly 1.
            assert!(*obj.last().unwrap() < 1.0);
        }
    }

    #[test]
    fn svm_small_c_shrinks_weights() {
        let mut rng = Rng::new(5);
        let (x, labels) = blobs(30, 4, &mut rng);
        let norm = |c: f64| {
            let (svm, _) = LinearSvm::train(&x, &labels, 2, c).unwrap();
            svm.w.data().iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let (tiny, big) = (norm(1e-6), norm(8.0));
        assert!(tiny < 1e-3 * big);
    }

    #[test]
    fn svm_duplicated_data_with_half_c_is_unchanged() {
        let mut rng = Rng::new(6);
        let x = random(&[24, 3], &mut rng);
        let labels: Vec<usize> = (0..24).map(|i| i % 3).collect();
        let mut doubled = x.data().to_vec();
        doubled.extend_from_slice(x.data());
        let x2 = Tensor::new(vec![48, 3], doubled).unwrap();
        let labels2: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let (a, _) = LinearSvm::train(&x, &labels, 3, 8.0).unwrap();
        let (b, _) = LinearSvm::train(&x2, &labels2, 3, 4.0).unwrap();
        assert!(a.w.max_abs_diff(&b.w) <= 1e-8);
        assert!(a.b.max_abs_diff(&b.b) <= 1e-8);
    }

    #[test]
    fn svm_predict_rules() {
        let svm = LinearSvm::zeros(4, 3, 1.0);
        let mut rng = Rng::new(7);
        let x = random(&[5, 3], &mut rng);
        assert_eq!(svm.predict(&x).unwrap().0, vec![0; 5]);
        assert!(svm.predict(&Tensor::zeros(&[1, 2])).is_err());

        let svm = LinearSvm {
            w: random(&[4, 3], &mut rng),
            b: random(&[4], &mut rng),
            c: 1.0,
        };
        let (_, m1) = svm.predict(&x).unwrap();
        let (_, m2) = svm.predict(&x.scale(2.0)).unwrap();
        for r in 0..5 {
            for k in 0..4 {
                let b = svm.b.data()[k];
                assert!((m2.row(r)[k] - (2.0 * (m1.row(r)[k] - b) + b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn svm_rejects_degenerate_input() {
        let x = Tensor::zeros(&[4, 2]);
        assert!(matches!(LinearSvm::train(&x, &[1, 1, 1, 1], 2, 1.0), Err(Error::DegenerateData(_))));
        assert!(LinearSvm::train(&x, &[0, 1, 0, 1], 2, 0.0).is_err());
        assert!(LinearSvm::train(&Tensor::zeros(&[2, 2]), &[0, 1], 3, 1.0).is_err());
    }

    #[test]
    fn svm_subgradient_matches_finite_differences_off_kinks() {
        let mut rng = Rng::new(8);
        let x = random(&[10, 3], &mut rng);
        let y: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = vec![0.3, -0.7, 0.2];
        let b = 0.1;
        let (gw, gb) = svm_class_subgradient(&w, b, &x, &y, 0.05);
        let mut wb = w.clone();
        wb.push(b);
        let num = central_difference(&wb, STEP, |v| svm_class_objective(&v[..3], v[3], &x, &y, 0.05));
        let mut analytic = gw;
        analytic.push(gb);
        assert!(compare("svm", "wb", "", &analytic, &num, TOLERANCE).passed);
    }
}
