//! Exact EDT against a brute-force all-pairs search.

mod common;

use dtstyle::distancefield::{binarize, edt, edt_squared, emphasize, BinaryMask};
use dtstyle::Image;
use proptest::prelude::*;
use rand::Rng;

fn brute_force(mask: &BinaryMask) -> Vec<u64> {
    let (w, h) = (mask.width(), mask.height());
    let fg: Vec<(i64, i64)> = (0..h * w)
        .filter(|&i| mask.bits()[i])
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    (0..h * w)
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            fg.iter()
                .map(|&(fx, fy)| ((x - fx).pow(2) + (y - fy).pow(2)) as u64)
                .min()
                .expect("non-empty mask")
        })
        .collect()
}

#[test]
fn matches_brute_force_on_random_masks() {
    let mut rng = common::rng(2024);
    for trial in 0..500 {
        let (w, h) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let density = rng.gen_range(0.001..0.6);
        let mut mask = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density));
        if mask.count() == 0 {
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            mask = BinaryMask::from_fn(w, h, |a, b| (a, b) == (x, y));
        }
        assert_eq!(edt_squared(&mask).unwrap(), brute_force(&mask), "trial {trial}: {w}x{h}");
    }
}

#[test]
fn edge_case_masks() {
    for &(w, h) in &[(1, 1), (1, 32), (32, 1), (32, 32), (17, 5)] {
        let all = BinaryMask::from_fn(w, h, |_, _| true);
        assert!(edt_squared(&all).unwrap().iter().all(|&v| v == 0));
        let single = BinaryMask::from_fn(w, h, |x, y| (x, y) == (w / 2, h / 3));
        assert_eq!(edt_squared(&single).unwrap(), brute_force(&single));
        let border = BinaryMask::from_fn(w, h, |x, y| x == 0 || y == 0 || x == w - 1 || y == h - 1);
        assert_eq!(edt_squared(&border).unwrap(), brute_force(&border));
    }
}

#[test]
fn field_values_are_square_roots_of_exact_squares() {
    let mask = BinaryMask::from_fn(9, 7, |x, y| (x * 3 + y * 5) % 11 == 0);
    let field = edt(&mask).unwrap();
    for (v, sq) in field.values().iter().zip(brute_force(&mask)) {
        assert_eq!(*v, (sq as f64).sqrt());
    }
    for (v, b) in field.values().iter().zip(mask.bits()) {
        assert_eq!(*v == 0.0, *b);
    }
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (1usize..=16, 1usize..=16)
        .prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(any::<bool>(), w * h)))
        .prop_filter("needs a silhouette pixel", |(_, _, bits)| bits.iter().any(|&b| b))
        .prop_map(|(w, h, bits)| BinaryMask::new(w, h, bits).unwrap())
}

proptest! {
    #[test]
    fn unemphasized_field_is_one_lipschitz(mask in mask_strategy()) {
        let f = edt(&mask).unwrap();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if x + 1 < mask.width() {
                    prop_assert!((f.get(x, y) - f.get(x + 1, y)).abs() <= 1.0 + 1e-12);
                }
                if y + 1 < mask.height() {
                    prop_assert!((f.get(x, y) - f.get(x, y + 1)).abs() <= 1.0 + 1e-12);
                }
                if x + 1 < mask.width() && y + 1 < mask.height() {
                    prop_assert!((f.get(x, y) - f.get(x + 1, y + 1)).abs() <= 2f64.sqrt() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn emphasis_is_monotone_in_power(mask in mask_strategy(), n in 1u32..6) {
        let raw = edt(&mask).unwrap();
        let lo_norm = emphasize(&raw, n, true).unwrap();
        let hi_norm = emphasize(&raw, n + 1, true).unwrap();
        let lo_raw = emphasize(&raw, n, false).unwrap();
        let hi_raw = emphasize(&raw, n + 1, false).unwrap();
        for i in 0..raw.values().len() {
            prop_assert!(lo_norm.values()[i] <= 1.0);
            prop_assert!(hi_norm.values()[i] <= lo_norm.values()[i]);
            if raw.values()[i] >= 1.0 {
                prop_assert!(hi_raw.values()[i] >= lo_raw.values()[i]);
            }
            if mask.bits()[i] {
                prop_assert_eq!(hi_raw.values()[i], 0.0);
                prop_assert_eq!(hi_norm.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn inversion_is_complement(
        pixels in prop::collection::vec(any::<u8>(), 4 * 3 * 3),
        threshold in 0.0f64..=1.0,
    ) {
        let img = Image::new(4, 3, pixels).unwrap();
        let plain = binarize(&img, threshold, false);
        prop_assert_eq!(binarize(&img, threshold, true), plain.complement());
    }
}
