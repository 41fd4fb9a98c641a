use super::{NumericsError, Tensor3};

pub fn relu_forward(input: &Tensor3) -> Tensor3 {
    input.map(|v| v.max(0.0))
}

/// Passes `grad_out` where the forward input was strictly positive. The
/// subgradient at exactly zero is taken as 0.
pub fn relu_backward(grad_out: &Tensor3, forward_input: &Tensor3) -> Result<Tensor3, NumericsError> {
    grad_out.check_same_shape(forward_input)?;
    let data = grad_out
        .data()
        .iter()
        .zip(forward_input.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor3::new(grad_out.channels(), grad_out.height(), grad_out.width(), data)
}
