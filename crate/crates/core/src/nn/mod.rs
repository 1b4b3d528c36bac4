//! Minimal CNN: same-padded 3x3 convolutions, ReLU, ceil-mode 2x2 max pooling,
//! dense layers and softmax cross-entropy, with exact backpropagation.

mod activation;
pub mod checkpoint;
mod conv;
mod dense;
mod gemm;
mod network;
mod params;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax_cross_entropy};
pub use conv::{conv2d_backward, conv2d_forward};
pub use dense::{dense_backward, dense_forward};
pub use network::{build_default_network, Layer, LayerSpec, Network, NetworkConfig};
pub use params::{Gradients, ParamSet};
pub use pool::{maxpool_backward, maxpool_forward, pooled_size, PoolIndices};
