pub mod adaptation;
pub mod benchmarks;
pub mod engine;
pub mod experiment;
pub mod matrix;
pub mod network;
pub mod splines;
pub mod stats;
pub mod training;

pub use engine::{Gradients, Jet2};
pub use matrix::Matrix;
pub use network::{LayerParams, Network};
pub use splines::KnotVector;

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
