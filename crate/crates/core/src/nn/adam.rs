use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moments for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        AdamState {
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            eps: Self::EPS,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One bias-corrected Adam update. Fails without touching anything if a
    /// gradient is non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [(&mut Tensor, &Tensor)], lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().enumerate() {
            if p.shape != g.shape || p.shape != self.m[i].shape {
                return Err(Error::Shape(format!("parameter {i}: {:?} vs {:?}", p.shape, g.shape)));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (i, (p, g)) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for j in 0..g.data.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p.data[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(values: Vec<f64>) -> (Tensor, AdamState) {
        let t = Tensor::from_vec(&[values.len()], values).unwrap();
        let st = AdamState::new([t.shape.as_slice()]);
        (t, st)
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let (mut p, mut st) = one_param(vec![0.5, -1.0]);
        let g = Tensor::zeros(&[2]);
        for _ in 0..10 {
            st.step(&mut [(&mut p, &g)], 0.1).unwrap();
        }
        assert_eq!(p.data, vec![0.5, -1.0]);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (mut p, mut st) = one_param(vec![0.5, -1.0]);
        let g = Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap();
        for _ in 0..10 {
            st.step(&mut [(&mut p, &g)], 0.0).unwrap();
        }
        assert_eq!(p.data, vec![0.5, -1.0]);
    }

    #[test]
    fn constant_gradient_gives_unit_steps() {
        // Bias-corrected moments of a constant gradient g are g and g^2, so
        // each update is lr * g / (|g| + eps).
        let lr = 1e-3;
        let (mut p, mut st) = one_param(vec![0.0, 0.0]);
        let g = Tensor::from_vec(&[2], vec![0.7, -3.0]).unwrap();
        for _ in 0..200 {
            let before = p.data.clone();
            st.step(&mut [(&mut p, &g)], lr).unwrap();
            for j in 0..2 {
                let step = (p.data[j] - before[j]).abs();
                assert!((step - lr).abs() < 1e-9, "step {step}");
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut p, mut st) = one_param(vec![1.0]);
        let g = Tensor::from_vec(&[1], vec![f64::NAN]).unwrap();
        assert!(matches!(st.step(&mut [(&mut p, &g)], 0.1), Err(Error::NonFinite(_))));
        assert_eq!(p.data, vec![1.0]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn deterministic() {
        let g = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let run = || {
            let (mut p, mut st) = one_param(vec![1.0, 2.0, 3.0]);
            for _ in 0..5 {
                st.step(&mut [(&mut p, &g)], 0.01).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
