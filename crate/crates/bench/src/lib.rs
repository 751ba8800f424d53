//! Shared inputs for the benchmarks.

use intrinsic_core::data::{gen_mondrian, MondrianConfig};
use intrinsic_core::image::IntrinsicTriplet;

/// Square Mondrian triplet of side `size`.
pub fn mondrian(size: usize, seed: u64) -> IntrinsicTriplet {
    gen_mondrian(&MondrianConfig {
        width: size,
        height: size,
        seed,
        ..MondrianConfig::default()
    })
}
