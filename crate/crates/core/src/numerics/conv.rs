use rayon::prelude::*;

use super::{NumericsError, Tensor3};

pub const KERNEL_SIZE: usize = 3;
const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

/// A 3x3, stride 1, zero-padding 1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    name: String,
    in_channels: usize,
    out_channels: usize,
    /// `out x in x 3 x 3`, row-major.
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let expected = out_channels * in_channels * TAPS;
        if kernel.len() != expected {
            return Err(NumericsError::LengthMismatch {
                expected,
                found: kernel.len(),
            });
        }
        if bias.len() != out_channels {
            return Err(NumericsError::LengthMismatch {
                expected: out_channels,
                found: bias.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            bias,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// The nine taps connecting input channel `c` to output channel `o`.
    #[inline]
    fn taps(&self, o: usize, c: usize) -> &[f64] {
        let start = (o * self.in_channels + c) * TAPS;
        &self.kernel[start..start + TAPS]
    }

    pub fn without_bias(&self) -> Self {
        Self {
            bias: vec![0.0; self.out_channels],
            ..self.clone()
        }
    }
}

/// Range of destination indices `i` in `0..len` for which `i + offset` is in
/// `0..len`, where `offset` is one of -1, 0, 1.
#[inline]
fn valid_range(len: usize, offset: isize) -> std::ops::Range<usize> {
    match offset {
        -1 => 1.min(len)..len,
        0 => 0..len,
        _ => 0..len.saturating_sub(1),
    }
}

/// Adds `weight * src` shifted by `(dy, dx)` into `dst`, with zeros outside `src`.
#[inline]
fn accumulate_shifted(
    dst: &mut [f64],
    src: &[f64],
    height: usize,
    width: usize,
    dy: isize,
    dx: isize,
    weight: f64,
) {
    if weight == 0.0 {
        return;
    }
    let xs = valid_range(width, dx);
    for y in valid_range(height, dy) {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * width + xs.start..y * width + xs.end];
        let s_start = (sy * width) as isize + xs.start as isize + dx;
        let s = &src[s_start as usize..s_start as usize + xs.len()];
        for (a, b) in d.iter_mut().zip(s) {
            *a += weight * b;
        }
    }
}

/// `out[o,y,x] = bias[o] + sum_{c,dy,dx} input[c, y+dy-1, x+dx-1] * kernel[o,c,dy,dx]`.
///
/// Each output element is summed in the fixed order (c, dy, dx), so results do
/// not depend on the number of worker threads.
pub fn conv2d_forward(input: &Tensor3, layer: &ConvLayer) -> Result<Tensor3, NumericsError> {
    if input.channels() != layer.in_channels {
        return Err(NumericsError::ChannelMismatch {
            expected: layer.in_channels,
            found: input.channels(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let plane = h * w;
    let mut out = vec![0.0; layer.out_channels * plane];
    out.par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(o, dst)| {
            dst.fill(layer.bias[o]);
            for c in 0..layer.in_channels {
                let src = input.channel(c);
                for (t, &weight) in layer.taps(o, c).iter().enumerate() {
                    let dy = (t / KERNEL_SIZE) as isize - 1;
                    let dx = (t % KERNEL_SIZE) as isize - 1;
                    accumulate_shifted(dst, src, h, w, dy, dx, weight);
                }
            }
        });
    Tensor3::new(layer.out_channels, h, w, out)
}

/// Gradient of a loss with respect to the convolution input, given the
/// gradient with respect to its output: correlation with the spatially flipped
/// kernel under the same zero padding.
pub fn conv2d_backward_input(
    grad_out: &Tensor3,
    layer: &ConvLayer,
) -> Result<Tensor3, NumericsError> {
    if grad_out.channels() != layer.out_channels {
        return Err(NumericsError::ChannelMismatch {
            expected: layer.out_channels,
            found: grad_out.channels(),
        });
    }
    let (h, w) = (grad_out.height(), grad_out.width());
    let plane = h * w;
    let mut grad_in = vec![0.0; layer.in_channels * plane];
    grad_in
        .par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(c, dst)| {
            for o in 0..layer.out_channels {
                let src = grad_out.channel(o);
                for (t, &weight) in layer.taps(o, c).iter().enumerate() {
                    // input (y, x) fed output (y - dy, x - dx)
                    let dy = 1 - (t / KERNEL_SIZE) as isize;
                    let dx = 1 - (t % KERNEL_SIZE) as isize;
                    accumulate_shifted(dst, src, h, w, dy, dx, weight);
                }
            }
        });
    Tensor3::new(layer.in_channels, h, w, grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_layer() -> ConvLayer {
        ConvLayer::new("k", 1, 1, vec![1.0; 9], vec![0.0]).unwrap()
    }

    fn identity_layer(channels: usize) -> ConvLayer {
        let mut kernel = vec![0.0; channels * channels * 9];
        for c in 0..channels {
            kernel[(c * channels + c) * 9 + 4] = 1.0;
        }
        ConvLayer::new("id", channels, channels, kernel, vec![0.0; channels]).unwrap()
    }

    #[test]
    fn all_ones_kernel_counts_neighbours() {
        let input = Tensor3::filled(1, 3, 3, 1.0);
        let out = conv2d_forward(&input, &ones_layer()).unwrap();
        assert_eq!(
            out.data(),
            &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn identity_kernel_is_identity() {
        let input = Tensor3::from_fn(2, 4, 5, |c, y, x| (c * 20 + y * 5 + x) as f64 - 7.5);
        let layer = identity_layer(2);
        assert_eq!(conv2d_forward(&input, &layer).unwrap(), input);
        assert_eq!(conv2d_backward_input(&input, &layer).unwrap(), input);
    }

    #[test]
    fn zero_input_gives_bias() {
        let layer = ConvLayer::new("b", 2, 3, vec![0.5; 54], vec![1.0, -2.0, 3.0]).unwrap();
        let out = conv2d_forward(&Tensor3::zeros(2, 3, 4), &layer).unwrap();
        for o in 0..3 {
            assert!(out.channel(o).iter().all(|&v| v == layer.bias()[o]));
        }
    }

    #[test]
    fn single_pixel_gradient_spreads_to_patch() {
        let mut g = Tensor3::zeros(1, 4, 4);
        g.set(0, 0, 1, 1.0);
        let grad_in = conv2d_backward_input(&g, &ones_layer()).unwrap();
        let expected = [
            1.0, 1.0, 1.0, 0.0, //
            1.0, 1.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(grad_in.data(), &expected);
    }

    #[test]
    fn asymmetric_kernel_flips_in_backward() {
        // Kernel taps only the left neighbour: out[y,x] = in[y,x-1].
        let mut kernel = vec![0.0; 9];
        kernel[3] = 1.0;
        let layer = ConvLayer::new("l", 1, 1, kernel, vec![0.0]).unwrap();
        let input = Tensor3::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            conv2d_forward(&input, &layer).unwrap().data(),
            &[0.0, 1.0, 2.0]
        );
        // Adjoint sends output gradient at x back to input x-1.
        assert_eq!(
            conv2d_backward_input(&input, &layer).unwrap().data(),
            &[2.0, 3.0, 0.0]
        );
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let layer = ones_layer();
        assert!(matches!(
            conv2d_forward(&Tensor3::zeros(2, 3, 3), &layer),
            Err(NumericsError::ChannelMismatch { expected: 1, found: 2 })
        ));
        assert!(conv2d_backward_input(&Tensor3::zeros(3, 3, 3), &layer).is_err());
    }

    #[test]
    fn rejects_bad_kernel_length() {
        assert!(ConvLayer::new("x", 2, 2, vec![0.0; 35], vec![0.0; 2]).is_err());
        assert!(ConvLayer::new("x", 2, 2, vec![0.0; 36], vec![0.0; 3]).is_err());
    }

    #[test]
    fn one_pixel_wide_inputs() {
        let input = Tensor3::new(1, 1, 1, vec![2.0]).unwrap();
        let out = conv2d_forward(&input, &ones_layer()).unwrap();
        assert_eq!(out.data(), &[2.0]);
        assert_eq!(conv2d_backward_input(&input, &ones_layer()).unwrap().data(), &[2.0]);
    }
}
