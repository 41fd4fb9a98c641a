//! Neural style transfer constrained by a distance-transform loss.
//!
//! Style is synthesized inside and near the silhouette of a content image
//! (a logo, text, clip art) while the far background is pinned to the content
//! image by a penalty weighted with the emphasized Euclidean distance to the
//! silhouette.
//!
//! The pipeline: [`imageio`] loads and preprocesses images, [`distancefield`]
//! binarizes the content image and computes its exact distance transform,
//! [`extractor`] runs a VGG-style network built from [`numerics`] primitives,
//! [`losses`] scores the generated image and [`optimizer`] drives it with Adam.

pub mod distancefield;
pub mod extractor;
pub mod imageio;
pub mod losses;
pub mod numerics;
pub mod optimizer;

pub use distancefield::{binarize, edt, emphasize, BinaryMask, DistanceField};
pub use extractor::{load_weights, NetworkSpec, NetworkWeights};
pub use imageio::{from_tensor, load_image, resize_bilinear, to_tensor, Image, Preprocess};
pub use losses::{LossReport, LossWeights};
pub use numerics::Tensor3;
pub use optimizer::{run, OptimConfig, Problem, RunResult};
