#![allow(dead_code)]

use std::path::PathBuf;

use dtstyle::extractor::{load_weights, NetworkWeights};
use dtstyle::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize, scale: f64) -> Tensor3 {
    Tensor3::from_fn(c, h, w, |_, _, _| rng.gen_range(-scale..scale))
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tiny.cnstw")
}

pub fn tiny_weights() -> NetworkWeights {
    load_weights(fixture_path()).expect("tiny fixture loads")
}

/// Central differences of `f` around `x`, one coordinate at a time.
/// Coordinates for which `skip` returns true are left as NaN.
pub fn numeric_gradient_with(
    x: &Tensor3,
    step: f64,
    mut f: impl FnMut(&Tensor3) -> f64,
    mut skip: impl FnMut(&Tensor3, &Tensor3) -> bool,
) -> Tensor3 {
    let mut grad = x.map(|_| f64::NAN);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = probe.clone();
        let fp = f(&probe);
        probe.data_mut()[i] = orig - step;
        let fm = f(&probe);
        let skipped = skip(&plus, &probe);
        probe.data_mut()[i] = orig;
        if !skipped {
            grad.data_mut()[i] = (fp - fm) / (2.0 * step);
        }
    }
    grad
}

pub fn numeric_gradient(x: &Tensor3, step: f64, f: impl FnMut(&Tensor3) -> f64) -> Tensor3 {
    numeric_gradient_with(x, step, f, |_, _| false)
}

/// Largest elementwise relative error between an analytic and a numeric
/// gradient, ignoring NaN (skipped) numeric entries. Entries smaller than
/// 1e-6 of the gradient's scale are compared against that scale instead of
/// their own magnitude.
pub fn max_rel_error(analytic: &Tensor3, numeric: &Tensor3) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let scale = analytic
        .data()
        .iter()
        .chain(numeric.data().iter().filter(|v| !v.is_nan()))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (scale * 1e-6).max(1e-12);
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .filter(|(_, n)| !n.is_nan())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
