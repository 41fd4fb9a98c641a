//! Silhouette masks and their exact Euclidean distance transform.
//!
//! The transform uses the separable two-pass algorithm of Meijster, Roerdink and
//! Hesselink on integer squared distances, so it is exact: every value equals
//! the square root of an integer that matches a brute-force all-pairs search.

use thiserror::Error;

use crate::imageio::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("mask has no silhouette pixel, distance is undefined")]
    EmptyMask,
    #[error("emphasis power must be at least 1, got {0}")]
    InvalidPower(u32),
    #[error("field is already emphasized (power {power}, normalized {normalized})")]
    AlreadyEmphasized { power: u32, normalized: bool },
    #[error("mask length {found} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        found: usize,
    },
}

/// One flag per pixel, row-major; `true` marks the silhouette.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, DistanceError> {
        if bits.len() != width * height {
            return Err(DistanceError::LengthMismatch {
                width,
                height,
                found: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    /// Silhouette black on white.
    pub fn render(&self) -> Image {
        let pixels = self
            .bits
            .iter()
            .flat_map(|&b| if b { [0u8; 3] } else { [255u8; 3] })
            .collect();
        Image::new(self.width, self.height, pixels).expect("mask dimensions are valid")
    }
}

/// Rec.601 luma in `[0, 1]`.
fn luminance(rgb: [u8; 3]) -> f64 {
    (0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2])) / 255.0
}

/// A pixel is silhouette when its luminance is below `threshold`; `invert`
/// swaps silhouette and background.
pub fn binarize(img: &Image, threshold: f64, invert: bool) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        (luminance(img.pixel(x, y)) < threshold) != invert
    })
}

/// Per-pixel distance to the nearest silhouette pixel, possibly raised to an
/// emphasis power.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
    emphasis_power: u32,
    normalized: bool,
}

impl DistanceField {
    /// A field that is zero everywhere, i.e. imposes no constraint.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            emphasis_power: 1,
            normalized: false,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn emphasis_power(&self) -> u32 {
        self.emphasis_power
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Length of the image diagonal in pixels.
    pub fn diagonal(&self) -> f64 {
        diagonal(self.width, self.height)
    }

    /// Grayscale rendering, min-max scaled, with zero distance drawn white and
    /// the farthest pixels black.
    pub fn render(&self) -> Image {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let pixels = self
            .values
            .iter()
            .flat_map(|&v| {
                let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
                [(255.0 * (1.0 - t)).round() as u8; 3]
            })
            .collect();
        Image::new(self.width, self.height, pixels).expect("field dimensions are valid")
    }
}

fn diagonal(width: usize, height: usize) -> f64 {
    ((width * width + height * height) as f64).sqrt()
}

/// Exact squared Euclidean distance from every pixel to the nearest
/// silhouette pixel, measured between pixel centres.
pub fn edt_squared(mask: &BinaryMask) -> Result<Vec<u64>, DistanceError> {
    if !mask.bits.iter().any(|&b| b) {
        return Err(DistanceError::EmptyMask);
    }
    let (w, h) = (mask.width, mask.height);
    // Exceeds every real distance, so it never wins a minimum.
    let inf = (w + h) as i64;

    // Pass 1: distance to the nearest silhouette pixel in the same column.
    let mut g = vec![inf; w * h];
    for x in 0..w {
        let mut run = inf;
        for y in 0..h {
            run = if mask.bits[y * w + x] { 0 } else { (run + 1).min(inf) };
            g[y * w + x] = run;
        }
        let mut run = inf;
        for y in (0..h).rev() {
            run = if mask.bits[y * w + x] { 0 } else { (run + 1).min(inf) };
            let cell = &mut g[y * w + x];
            *cell = (*cell).min(run);
        }
    }

    // Pass 2: lower envelope of parabolas along each row.
    let mut out = vec![0u64; w * h];
    let mut s = vec![0usize; w];
    let mut t = vec![0usize; w];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let f = |x: usize, i: usize| {
            let d = x as i64 - i as i64;
            d * d + row[i] * row[i]
        };
        let sep = |i: usize, u: usize| {
            let (ii, uu) = (i as i64, u as i64);
            (uu * uu - ii * ii + row[u] * row[u] - row[i] * row[i]).div_euclid(2 * (uu - ii))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let next = 1 + sep(s[q as usize], u);
                if next < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = next as usize;
                }
            }
        }
        for u in (0..w).rev() {
            out[y * w + u] = f(u, s[q as usize]) as u64;
            if u == t[q as usize] {
                q -= 1;
            }
        }
    }
    Ok(out)
}

/// Unemphasized Euclidean distance transform of `mask`.
pub fn edt(mask: &BinaryMask) -> Result<DistanceField, DistanceError> {
    let values = edt_squared(mask)?
        .into_iter()
        .map(|sq| (sq as f64).sqrt())
        .collect();
    Ok(DistanceField {
        width: mask.width,
        height: mask.height,
        values,
        emphasis_power: 1,
        normalized: false,
    })
}

/// Raises every non-silhouette distance to the power `n`, optionally after
/// dividing by the image diagonal. Silhouette pixels stay exactly zero.
pub fn emphasize(
    field: &DistanceField,
    n: u32,
    normalize: bool,
) -> Result<DistanceField, DistanceError> {
    if n < 1 {
        return Err(DistanceError::InvalidPower(n));
    }
    if field.emphasis_power != 1 || field.normalized {
        return Err(DistanceError::AlreadyEmphasized {
            power: field.emphasis_power,
            normalized: field.normalized,
        });
    }
    let scale = if normalize { field.diagonal().recip() } else { 1.0 };
    let exponent = i32::try_from(n).map_err(|_| DistanceError::InvalidPower(n))?;
    let values = field
        .values
        .iter()
        .map(|&v| if v == 0.0 { 0.0 } else { (v * scale).powi(exponent) })
        .collect();
    Ok(DistanceField {
        values,
        emphasis_power: n,
        normalized: normalize,
        ..field.clone()
    })
}
