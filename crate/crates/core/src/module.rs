//! Parameter access shared by layers, optimizers and checkpoints.
//!
//! Gradients are represented as a value of the same type as the layer they
//! belong to (with every trainable tensor replaced by its gradient), so an
//! optimizer can walk `params_mut()` of the model and `params()` of the
//! gradient side by side.

use crate::rng::Rng;
use crate::tensor::Tensor;

pub trait Module {
    /// Trainable tensors, in a fixed order, with dotted names.
    fn params(&self) -> Vec<(String, &Tensor)>;

    /// Same tensors and order as [`Module::params`].
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Persistent non-trainable state, such as running statistics.
    fn buffers(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every named tensor a checkpoint needs: parameters, then buffers.
    fn state(&self) -> Vec<(String, &Tensor)> {
        let mut all = self.params();
        all.extend(self.buffers());
        all
    }

    /// Same tensors and order as [`Module::state`]. Modules with buffers must override this.
    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        self.params_mut()
    }
}

/// Prepends `prefix.` to every name.
pub fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    items
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

/// Glorot (Xavier) uniform initialization with limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform_range(-limit, limit))
}

/// Sum of squared entries over all parameters.
pub fn squared_norm<M: Module + ?Sized>(m: &M) -> f64 {
    m.params()
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|v| v * v)
        .sum()
}
