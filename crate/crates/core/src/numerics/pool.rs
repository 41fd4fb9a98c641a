use std::fmt;
use std::str::FromStr;

use super::{NumericsError, Tensor3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PoolMode {
    #[default]
    Max,
    Average,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Max => "max",
            PoolMode::Average => "average",
        })
    }
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(PoolMode::Max),
            "average" | "avg" => Ok(PoolMode::Average),
            other => Err(format!("unknown pooling mode `{other}`")),
        }
    }
}

/// What the backward pass needs from a 2x2 pooling forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolRecord {
    mode: PoolMode,
    input_shape: (usize, usize, usize),
    /// Flat input index of each window's maximum (max mode only), in output order.
    argmax: Vec<usize>,
}

impl PoolRecord {
    pub fn mode(&self) -> PoolMode {
        self.mode
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (c, h, w) = self.input_shape;
        (c, h / 2, w / 2)
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Non-overlapping 2x2 pooling with stride 2. Max-mode ties go to the first
/// cell in row-major scan order.
pub fn pool2x2_forward(
    input: &Tensor3,
    mode: PoolMode,
) -> Result<(Tensor3, PoolRecord), NumericsError> {
    let (channels, h, w) = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NumericsError::OddDimension {
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(channels * oh * ow);
    let mut argmax = Vec::new();
    if mode == PoolMode::Max {
        argmax.reserve(channels * oh * ow);
    }
    let src = input.data();
    for c in 0..channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let top = (c * h + 2 * oy) * w + 2 * ox;
                let cells = [top, top + 1, top + w, top + w + 1];
                match mode {
                    PoolMode::Max => {
                        let mut best = cells[0];
                        for &i in &cells[1..] {
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                        out.push(src[best]);
                        argmax.push(best);
                    }
                    PoolMode::Average => {
                        out.push(cells.iter().map(|&i| src[i]).sum::<f64>() * 0.25);
                    }
                }
            }
        }
    }
    let record = PoolRecord {
        mode,
        input_shape: (channels, h, w),
        argmax,
    };
    Ok((Tensor3::new(channels, oh, ow, out)?, record))
}

pub fn pool2x2_backward(grad_out: &Tensor3, record: &PoolRecord) -> Result<Tensor3, NumericsError> {
    let expected = record.output_shape();
    if grad_out.shape() != expected {
        return Err(NumericsError::ShapeMismatch {
            expected,
            found: grad_out.shape(),
        });
    }
    let (channels, h, w) = record.input_shape;
    let mut grad_in = Tensor3::zeros(channels, h, w);
    let dst = grad_in.data_mut();
    match record.mode {
        PoolMode::Max => {
            for (&g, &i) in grad_out.data().iter().zip(&record.argmax) {
                dst[i] += g;
            }
        }
        PoolMode::Average => {
            let (oh, ow) = (h / 2, w / 2);
            for c in 0..channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = 0.25 * grad_out.get(c, oy, ox);
                        let top = (c * h + 2 * oy) * w + 2 * ox;
                        for i in [top, top + 1, top + w, top + w + 1] {
                            dst[i] += g;
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}
