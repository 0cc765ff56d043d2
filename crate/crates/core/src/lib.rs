//! Train a deep belief network by greedy layer-wise contrastive divergence,
//! attribute top-layer nodes to input aspects (activation variance over
//! single-aspect probes, or mean relative activity over paired inputs), and
//! reconstruct corrupted images with the irrelevant nodes inactivated.

pub mod data;
pub mod dbn;
pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod rbm;
pub mod separation;

pub use error::{Error, Result};
