//! Raster images in and out of the numeric domain.
//!
//! An [`Image`] is always 8-bit RGB. [`to_tensor`] and [`from_tensor`] convert
//! between display pixels and the mean-subtracted tensors the extractor works on.

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::numerics::{NumericsError, Tensor3};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported image format in {path} (PNG or JPEG expected)")]
    UnsupportedFormat { path: PathBuf },
    #[error("corrupt image data in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer holds {found} bytes, expected {expected}")]
    BufferLength { expected: usize, found: usize },
    #[error(transparent)]
    Tensor(#[from] NumericsError),
}

/// Row-major RGB image, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageIoError> {
        if width == 0 || height == 0 {
            return Err(ImageIoError::ZeroDimension { width, height });
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ImageIoError::BufferLength {
                expected,
                found: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// An image filled with one colour.
    pub fn solid(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageIoError> {
        let pixels = rgb.repeat(width * height);
        Self::new(width, height, pixels)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageIoError> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Encodes as a non-interlaced 8-bit RGB PNG.
    pub fn encode_png(&self) -> Vec<u8> {
        let buf = RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .expect("encoding into memory cannot fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()).map_err(|e| ImageIoError::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

/// Decodes a PNG or JPEG file. Grayscale is replicated across channels and
/// any alpha channel is composited over white.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes, path)
}

fn decode_image(bytes: &[u8], path: &Path) -> Result<Image, ImageIoError> {
    let unsupported = || ImageIoError::UnsupportedFormat {
        path: path.to_path_buf(),
    };
    let format = image::guess_format(bytes).map_err(|_| unsupported())?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(unsupported());
    }
    let decoded = image::load_from_memory_with_format(bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(_) => unsupported(),
        other => ImageIoError::Corrupt {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let rgba = decoded.to_rgba8();
    let (width, height) = (rgba.width() as usize, rgba.height() as usize);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for px in rgba.pixels() {
        let a = u32::from(px[3]);
        for &c in &px.0[..3] {
            let blended = (u32::from(c) * a + 255 * (255 - a) + 127) / 255;
            pixels.push(blended as u8);
        }
    }
    Image::new(width, height, pixels)
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(
    img: &Image,
    new_width: usize,
    new_height: usize,
) -> Result<Image, ImageIoError> {
    if new_width == 0 || new_height == 0 {
        return Err(ImageIoError::ZeroDimension {
            width: new_width,
            height: new_height,
        });
    }
    if new_width == img.width && new_height == img.height {
        return Ok(img.clone());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, s - lo as f64)
    };
    let xs: Vec<_> = (0..new_width)
        .map(|x| axis(x, img.width, new_width))
        .collect();
    let mut pixels = Vec::with_capacity(new_width * new_height * 3);
    for y in 0..new_height {
        let (y0, y1, fy) = axis(y, img.height, new_height);
        for &(x0, x1, fx) in &xs {
            let (p00, p01) = (img.pixel(x0, y0), img.pixel(x1, y0));
            let (p10, p11) = (img.pixel(x0, y1), img.pixel(x1, y1));
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p01[c]) * fx;
                let bottom = f64::from(p10[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(new_width, new_height, pixels)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ChannelOrder {
    Rgb,
    #[default]
    Bgr,
}

impl ChannelOrder {
    /// Source RGB index feeding tensor channel `c`.
    fn rgb_index(self, c: usize) -> usize {
        match self {
            ChannelOrder::Rgb => c,
            ChannelOrder::Bgr => 2 - c,
        }
    }
}

impl fmt::Display for ChannelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelOrder::Rgb => "rgb",
            ChannelOrder::Bgr => "bgr",
        })
    }
}

impl FromStr for ChannelOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(ChannelOrder::Rgb),
            "bgr" => Ok(ChannelOrder::Bgr),
            other => Err(format!("unknown channel order `{other}`")),
        }
    }
}

/// Per-channel mean subtraction in a given channel order. `channel_mean` is
/// listed in tensor channel order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preprocess {
    channel_mean: [f64; 3],
    channel_order: ChannelOrder,
}

/// ImageNet channel means in BGR order, the convention of the Caffe VGG weights.
pub const IMAGENET_MEAN_BGR: [f64; 3] = [103.939, 116.779, 123.68];

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            channel_mean: IMAGENET_MEAN_BGR,
            channel_order: ChannelOrder::Bgr,
        }
    }
}

impl Preprocess {
    /// Returns `None` if a mean lies outside `[0, 255]`.
    pub fn new(channel_mean: [f64; 3], channel_order: ChannelOrder) -> Option<Self> {
        channel_mean
            .iter()
            .all(|m| (0.0..=255.0).contains(m))
            .then_some(Self {
                channel_mean,
                channel_order,
            })
    }

    pub fn channel_mean(&self) -> [f64; 3] {
        self.channel_mean
    }

    pub fn channel_order(&self) -> ChannelOrder {
        self.channel_order
    }
}

pub fn to_tensor(img: &Image, prep: &Preprocess) -> Tensor3 {
    Tensor3::from_fn(3, img.height, img.width, |c, y, x| {
        let src = prep.channel_order.rgb_index(c);
        f64::from(img.pixels[(y * img.width + x) * 3 + src]) - prep.channel_mean[c]
    })
}

/// Re-adds the mean, restores RGB order, clamps to `[0, 255]` and rounds half
/// away from zero.
pub fn from_tensor(t: &Tensor3, prep: &Preprocess) -> Result<Image, ImageIoError> {
    if t.channels() != 3 {
        return Err(NumericsError::ChannelMismatch {
            expected: 3,
            found: t.channels(),
        }
        .into());
    }
    let (h, w) = (t.height(), t.width());
    let mut pixels = vec![0u8; h * w * 3];
    for c in 0..3 {
        let dst = prep.channel_order.rgb_index(c);
        for (i, &v) in t.channel(c).iter().enumerate() {
            let v = (v + prep.channel_mean[c]).clamp(0.0, 255.0).round();
            pixels[i * 3 + dst] = v as u8;
        }
    }
    Image::new(w, h, pixels)
}
