//! Writes the tiny 3 -> 4 -> 4 test network used by the test suites.
//!
//! ```text
//! cargo run -p dtstyle --example mint_tiny -- [SEED] [OUT]
//! ```

use dtstyle::extractor::{encode_weights, NetworkWeights};
use dtstyle::numerics::ConvLayer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed must be an integer"));
    let out = args
        .next()
        .unwrap_or_else(|| "crates/core/fixtures/tiny.cnstw".to_owned());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |name: &str, inputs: usize, outputs: usize| {
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| f64::from(rng.gen_range(-0.1f32..=0.1f32)))
                .collect()
        };
        let kernel = draw(outputs * inputs * 9);
        let bias = draw(outputs);
        ConvLayer::new(name, inputs, outputs, kernel, bias).expect("consistent shapes")
    };
    let weights = NetworkWeights::new(vec![layer("conv1_1", 3, 4), layer("conv1_2", 4, 4)])
        .expect("unique names");
    std::fs::write(&out, encode_weights(&weights)).expect("write fixture");
    println!("wrote {out} (seed {seed}, {} layers)", weights.len());
}
