//! Tri-plane compression of 3D Gaussian-splat scenes.
//!
//! Every per-point attribute of a splat cloud is predicted from three
//! axis-aligned feature planes and a small MLP per attribute. The planes are
//! trained under a block-DCT entropy penalty so that they compress well with a
//! transform video codec, packed into 16-bit grayscale frames, and stored with
//! Morton-sorted, losslessly coded positions in a single container.

pub mod container;
pub mod error;
pub mod experiment;
pub mod framecodec;
pub mod geometry;
pub mod planefield;
pub mod rdloss;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
