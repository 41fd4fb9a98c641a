//! A VGG-style feature extractor assembled from the numerics primitives.
//!
//! [`forward`] records everything the exact backward pass needs, and
//! [`backward_to_input`] carries gradients injected at any requested layers
//! back to the input pixels.

mod network;
mod trace;
mod weights;

pub use network::{parse_conv_name, NetworkSpec, Stage, VGG19_LAYERS};
pub use trace::{backward_to_input, detach, forward, FeatureBundle, ForwardTrace};
pub use weights::{
    decode_weights, encode_weights, load_weights, write_weights, NetworkWeights, WeightsError,
    FORMAT_VERSION, MAGIC_PREFIX,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractorError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("no weights for layer `{0}`")]
    MissingWeights(String),
    #[error("layer `{layer}` expects {found} input channels but the network provides {expected}")]
    ChannelChain {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("no layers requested")]
    EmptyRequest,
    #[error("gradient supplied for layer `{0}`, which was not requested in the forward pass")]
    NotRequested(String),
    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        source: NumericsError,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
