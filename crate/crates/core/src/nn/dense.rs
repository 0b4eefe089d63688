use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{Error, Result};

/// Initial bias of every unit. Slightly positive so narrow ReLU layers fed
/// non-negative inputs start with live units.
pub const BIAS_INIT: f64 = 0.1;

/// Fully connected layer `y = W x + b`, applied to a batch of row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`.
    pub w: Tensor,
    pub b: Tensor,
    #[serde(skip)]
    pub dw: Tensor,
    #[serde(skip)]
    pub db: Tensor,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
            dw: Tensor::zeros(&[output, input]),
            db: Tensor::zeros(&[output]),
        }
    }

    /// Weights uniform in `±1/sqrt(in)`, biases [`BIAS_INIT`].
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(input, output);
        let bound = 1.0 / (input as f64).sqrt();
        for w in &mut layer.w.data {
            *w = rng.gen_range(-bound..bound);
        }
        layer.b.data.fill(BIAS_INIT);
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[0]
    }

    /// `x` is `batch x in`; returns `batch x out`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (input, output) = (self.input_dim(), self.output_dim());
        if x.shape.len() != 2 || x.shape[1] != input {
            return Err(Error::Shape(format!("dense input {:?}, layer expects [_, {input}]", x.shape)));
        }
        let batch = x.shape[0];
        let mut y = Tensor::zeros(&[batch, output]);
        for r in 0..batch {
            y.row_mut(r).copy_from_slice(&self.b.data);
        }
        gemm(
            1.0,
            MatRef::new(&x.data, batch, input),
            MatRef::new(&self.w.data, output, input).t(),
            1.0,
            &mut y.data,
        );
        Ok(y)
    }

    /// Accumulates `dW`, `db` and returns `dx` for the batch that produced `dy`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        let (input, output) = (self.input_dim(), self.output_dim());
        let batch = x.shape[0];
        x.expect_shape(&[batch, input], "dense backward input")?;
        dy.expect_shape(&[batch, output], "dense backward gradient")?;
        self.ensure_grads();
        gemm(
            1.0,
            MatRef::new(&dy.data, batch, output).t(),
            MatRef::new(&x.data, batch, input),
            1.0,
            &mut self.dw.data,
        );
        for r in 0..batch {
            for (g, d) in self.db.data.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(&[batch, input]);
        gemm(
            1.0,
            MatRef::new(&dy.data, batch, output),
            MatRef::new(&self.w.data, output, input),
            0.0,
            &mut dx.data,
        );
        Ok(dx)
    }

    pub fn zero_grad(&mut self) {
        self.ensure_grads();
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    // Gradient buffers are not serialized; restore them after a load.
    fn ensure_grads(&mut self) {
        if self.dw.shape != self.w.shape {
            self.dw = Tensor::zeros(&self.w.shape);
        }
        if self.db.shape != self.b.shape {
            self.db = Tensor::zeros(&self.b.shape);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradient, random_tensor};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn identity_layer() {
        let mut layer = DenseLayer::zeros(3, 3);
        for i in 0..3 {
            layer.w.data[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = stream_rng(1, Stream::Init);
        let mut layer = DenseLayer::init(4, 2, &mut rng);
        layer.b.data = vec![0.25, -1.5];
        let y = layer.forward(&Tensor::zeros(&[1, 4])).unwrap();
        assert_eq!(y.data, vec![0.25, -1.5]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(layer.forward(&Tensor::zeros(&[1, 4])), Err(Error::Shape(_))));
    }

    #[test]
    fn weight_and_input_gradients() {
        let mut rng = stream_rng(5, Stream::Init);
        let layer = DenseLayer::init(5, 3, &mut rng);
        let x = random_tensor(&[4, 5], &mut rng);
        let proj = random_tensor(&[4, 3], &mut rng);
        let loss = |l: &DenseLayer, x: &Tensor| -> f64 {
            l.forward(x).unwrap().data.iter().zip(&proj.data).map(|(a, b)| a * b).sum()
        };

        let mut work = layer.clone();
        work.zero_grad();
        let dx = work.backward(&x, &proj).unwrap();

        let report = check_gradient(&layer.w.data, &work.dw.data, 1e-5, |w| {
            let mut l = layer.clone();
            l.w.data.copy_from_slice(w);
            Some(loss(&l, &x))
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        let report = check_gradient(&layer.b.data, &work.db.data, 1e-5, |b| {
            let mut l = layer.clone();
            l.b.data.copy_from_slice(b);
            Some(loss(&l, &x))
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        let report = check_gradient(&x.data, &dx.data, 1e-5, |xs| {
            let xt = Tensor::from_vec(&x.shape, xs.to_vec()).unwrap();
            Some(loss(&layer, &xt))
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
