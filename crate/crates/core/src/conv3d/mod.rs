//! 3-D convolution, 3-D max pooling, C3D-style networks and clip handling.

mod clips;
mod model;
mod ops;

pub use clips::{clip_average, clip_split, crop, Crop};
pub use model::{C3d, C3dCache, C3dLayer, C3dSpec, PlanStep};
pub use ops::{Conv3d, Conv3dCache, Conv3dGrads, MaxPool3d, PoolCache};
