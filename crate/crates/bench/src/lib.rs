//! Inputs shared by the benchmarks.

use dtstyle::{BinaryMask, Tensor3};

/// A filled disc of radius `size / 4` centred in a `size x size` mask.
pub fn disc_mask(size: usize) -> BinaryMask {
    let c = (size as f64 - 1.0) / 2.0;
    let r = size as f64 / 4.0;
    BinaryMask::from_fn(size, size, |x, y| {
        (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r
    })
}

/// Deterministic pseudo-random tensor with values in `[-1, 1)`.
pub fn noise(channels: usize, height: usize, width: usize, seed: u64) -> Tensor3 {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor3::from_fn(channels, height, width, |_, _, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}
