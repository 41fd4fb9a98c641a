#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dtstyle::Image;

pub const SIDE: usize = 64;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/tiny.cnstw")
}

/// Black disc of radius 16 centred on a white 64x64 canvas.
pub fn disc() -> Image {
    let c = (SIDE as f64 - 1.0) / 2.0;
    Image::from_fn(SIDE, SIDE, |x, y| {
        let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        if d <= 16.0 {
            [0; 3]
        } else {
            [255; 3]
        }
    })
    .unwrap()
}

/// Black and white squares of side 4.
pub fn checker() -> Image {
    Image::from_fn(SIDE, SIDE, |x, y| {
        if (x / 4 + y / 4) % 2 == 0 {
            [0; 3]
        } else {
            [255; 3]
        }
    })
    .unwrap()
}

/// A manifest for the tiny network with short runs, written into `dir`.
pub fn tiny_manifest(dir: &Path) -> String {
    let content = dir.join("content.png");
    let style = dir.join("style.png");
    disc().save_png(&content).unwrap();
    checker().save_png(&style).unwrap();
    format!(
        "# tiny smoke run\ncontent = {}\nstyle = {}\nweights = {}\nout = {}\nresolution = 32\n\
         content_layer = conv1_2\nstyle_layers = conv1_1, conv1_2\niterations = 6\nsnapshot_every = 3\n",
        content.display(),
        style.display(),
        fixture_path().display(),
        dir.join("out").display()
    )
}
