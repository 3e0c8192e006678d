//! Minimal convolutional network toolkit: layers with explicit caches, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod ops;
pub mod params;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{Container, TensorMap};
pub use layers::{Activation, Cache, Conv2d, ConvTranspose2d, Dense, InstanceNorm, Layer};
pub use ops::PadMode;
pub use params::{Grads, Initializer, ParamId, ParamStore};
