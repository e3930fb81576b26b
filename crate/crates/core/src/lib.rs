//! Recurrent and 3-D convolutional building blocks for skeleton/video action
//! recognition, plus training, fusion and synthetic-data utilities.

pub mod conv3d;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod heads;
pub mod io;
pub mod module;
pub mod normreg;
pub mod optim;
pub mod recurrent;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use module::Module;
pub use rng::Rng;
pub use tensor::{Activation, Tensor};
