//! Intrinsic image decomposition: a small autodiff engine, an edge-aware
//! solver layer, scale-invariant losses, an encoder/two-decoder network,
//! hybrid training, evaluation metrics and dataset tooling.

pub mod bilateral;
pub mod data;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod tensor;
pub mod train;

mod fsutil;

pub use fsutil::write_atomic;
