use super::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| v.max(0.0)).collect() }
}

/// `x` is the forward input (pre-activation).
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    debug_assert_eq!(x.shape, dy.shape);
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().zip(&dy.data).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
    }
}
