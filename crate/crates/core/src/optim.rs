//! RMSprop and plain SGD with learning-rate halving on stalled validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::module::Module;
use crate::tensor::Tensor;

pub const RMSPROP_EPSILON: f64 = 1e-8;

fn check_pairs(params: &[&mut Tensor], grads: &[&Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("optimizer", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("optimizer", p.shape(), g.shape()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rmsprop {
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
    acc: Vec<Tensor>,
    velocity: Vec<Tensor>,
}

impl Default for Rmsprop {
    /// Learning rate 0.001, decay 0.9, no momentum.
    fn default() -> Self {
        Rmsprop::new(0.001, 0.9)
    }
}

impl Rmsprop {
    pub fn new(learning_rate: f64, decay: f64) -> Self {
        Rmsprop {
            learning_rate,
            decay,
            momentum: 0.0,
            acc: Vec::new(),
            velocity: Vec::new(),
        }
    }

    /// Squared-gradient accumulators, one per parameter tensor (empty before the first step).
    pub fn accumulators(&self) -> &[Tensor] {
        &self.acc
    }

    /// `acc ← ρ·acc + (1−ρ)·g²;  p ← p − lr·g/√(acc + 1e-8)`.
    pub fn step_tensors(&mut self, mut params: Vec<&mut Tensor>, grads: Vec<&Tensor>) -> Result<()> {
        check_pairs(&params, &grads)?;
        if self.acc.is_empty() {
            self.acc = grads.iter().map(|g| g.zeros_like()).collect();
            self.velocity = grads.iter().map(|g| g.zeros_like()).collect();
        } else if self.acc.len() != grads.len() {
            return Err(Error::shape("rmsprop", &[self.acc.len()], &[grads.len()]));
        }
        let (rho, lr, mu) = (self.decay, self.learning_rate, self.momentum);
        for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let acc = self.acc[i].data_mut();
            let vel = self.velocity[i].data_mut();
            for (j, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                acc[j] = rho * acc[j] + (1.0 - rho) * gv * gv;
                let step = lr * gv / (acc[j] + RMSPROP_EPSILON).sqrt();
                vel[j] = mu * vel[j] + step;
                *pv -= vel[j];
            }
        }
        Ok(())
    }

    pub fn step<M: Module>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let g: Vec<&Tensor> = grads.params().into_iter().map(|(_, t)| t).collect();
        self.step_tensors(model.params_mut(), g)
    }
}

/// Vanilla SGD whose learning rate halves after `patience` consecutive
/// validation evaluations without improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdHalving {
    pub learning_rate: f64,
    pub patience: usize,
    best: Option<f64>,
    stalled: usize,
}

impl SgdHalving {
    pub fn new(learning_rate: f64, patience: usize) -> Result<Self> {
        if !(learning_rate > 0.0) || patience == 0 {
            return Err(Error::InvalidArgument(format!(
                "SGD needs a positive learning rate and patience, got {learning_rate} and {patience}"
            )));
        }
        Ok(SgdHalving {
            learning_rate,
            patience,
            best: None,
            stalled: 0,
        })
    }

    pub fn step_tensors(&mut self, mut params: Vec<&mut Tensor>, grads: Vec<&Tensor>) -> Result<()> {
        check_pairs(&params, &grads)?;
        for (p, g) in params.iter_mut().zip(&grads) {
            for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= self.learning_rate * gv;
            }
        }
        Ok(())
    }

    pub fn step<M: Module>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let g: Vec<&Tensor> = grads.params().into_iter().map(|(_, t)| t).collect();
        self.step_tensors(model.params_mut(), g)
    }

    /// Records a validation score (higher is better). Returns true if the
    /// learning rate was halved. The first call only sets the baseline.
    pub fn observe(&mut self, score: f64) -> bool {
        match self.best {
            Some(best) if score <= best => {
                self.stalled += 1;
                if self.stalled >= self.patience {
                    self.learning_rate *= 0.5;
                    self.stalled = 0;
                    return true;
                }
            }
            _ => {
                self.best = Some(score);
                self.stalled = 0;
            }
        }
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Rmsprop,
    Sgd,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Rmsprop(Rmsprop),
    Sgd(SgdHalving),
}

impl Optimizer {
    pub fn step<M: Module>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        match self {
            Optimizer::Rmsprop(o) => o.step(model, grads),
            Optimizer::Sgd(o) => o.step(model, grads),
        }
    }

    /// Feeds a validation score to schedules that use one.
    pub fn observe(&mut self, score: f64) -> bool {
        match self {
            Optimizer::Rmsprop(_) => false,
            Optimizer::Sgd(o) => o.observe(score),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Optimizer::Rmsprop(o) => o.learning_rate,
            Optimizer::Sgd(o) => o.learning_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmsprop_defaults() {
        let o = Rmsprop::default();
        assert_eq!((o.learning_rate, o.decay, o.momentum), (0.001, 0.9, 0.0));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_fn(&[3, 2], |i| i as f64);
        let before = p.clone();
        let g = Tensor::zeros(&[3, 2]);
        let mut o = Rmsprop::default();
        for _ in 0..5 {
            o.step_tensors(vec![&mut p], vec![&g]).unwrap();
        }
        assert_eq!(p, before);
        let mut s = SgdHalving::new(0.1, 3).unwrap();
        s.step_tensors(vec![&mut p], vec![&g]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_step_approaches_lr_sign() {
        let mut o = Rmsprop::default();
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::new(vec![2], vec![3.7, -0.02]).unwrap();
        let mut prev = p.clone();
        for _ in 0..500 {
            prev = p.clone();
            o.step_tensors(vec![&mut p], vec![&g]).unwrap();
        }
        let step = p.sub(&prev).unwrap();
        assert!((step.data()[0] + 0.001).abs() <= 0.01 * 0.001);
        assert!((step.data()[1] - 0.001).abs() <= 0.01 * 0.001);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        assert!(Rmsprop::default().step_tensors(vec![&mut p], vec![&g]).is_err());
        assert!(SgdHalving::new(0.1, 3).unwrap().step_tensors(vec![&mut p], vec![&g]).is_err());
    }

    #[test]
    fn sgd_single_step() {
        let mut p = Tensor::full(&[1], 1.0);
        let g = Tensor::full(&[1], 1.0);
        SgdHalving::new(0.1, 3).unwrap().step_tensors(vec![&mut p], vec![&g]).unwrap();
        assert_eq!(p.data(), &[0.9]);
    }

    #[test]
    fn halving_schedule() {
        let mut s = SgdHalving::new(0.1, 3).unwrap();
        for i in 0..20 {
            assert!(!s.observe(i as f64));
        }
        assert_eq!(s.learning_rate, 0.1);

        let mut s = SgdHalving::new(0.1, 3).unwrap();
        let halvings = (0..10).filter(|_| s.observe(0.5)).count();
        assert_eq!(halvings, 3);
        assert_eq!(s.learning_rate, 0.1 / 8.0);
    }

    proptest! {
        #[test]
        fn accumulators_stay_non_negative(grads in prop::collection::vec(-1e3f64..1e3, 1..40), decay in 0.01f64..0.99) {
            let mut o = Rmsprop::new(0.01, decay);
            let mut p = Tensor::zeros(&[1]);
            for g in grads {
                o.step_tensors(vec![&mut p], vec![&Tensor::full(&[1], g)]).unwrap();
                prop_assert!(o.accumulators()[0].data()[0] >= 0.0);
            }
        }

        #[test]
        fn deterministic(grads in prop::collection::vec(-5f64..5.0, 1..20)) {
            let run = || {
                let mut o = Rmsprop::default();
                let mut p = Tensor::zeros(&[1]);
                for &g in &grads {
                    o.step_tensors(vec![&mut p], vec![&Tensor::full(&[1], g)]).unwrap();
                }
                p.data()[0]
            };
            prop_assert_eq!(run().to_bits(), run().to_bits());
        }
    }
}
