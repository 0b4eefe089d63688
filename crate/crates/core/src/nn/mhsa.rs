//! Multi-head self-attention producing a slice-by-slice context matrix.
//!
//! Each head projects the slice embeddings to queries and keys, and the
//! row-softmax of the scaled query-key products gives an `l x l` attention
//! matrix. The output is the average of the heads' attention matrices, so
//! every row is a probability distribution over slices. There is no value
//! projection: the attention weights themselves are the context scores.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mhsa {
    /// Per head, `input x head_dim`.
    pub wq: Vec<Tensor>,
    pub wk: Vec<Tensor>,
    #[serde(skip)]
    pub dwq: Vec<Tensor>,
    #[serde(skip)]
    pub dwk: Vec<Tensor>,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MhsaCache {
    pub u: Tensor,
    pub q: Vec<Tensor>,
    pub k: Vec<Tensor>,
    pub attn: Vec<Tensor>,
}

impl Mhsa {
    pub fn init(input: usize, head_dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = || {
            let mut t = Tensor::zeros(&[input, head_dim]);
            t.data.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
            t
        };
        let mut wq = Vec::with_capacity(heads);
        let mut wk = Vec::with_capacity(heads);
        for _ in 0..heads {
            wq.push(draw());
            wk.push(draw());
        }
        let mut m = Mhsa { wq, wk, dwq: Vec::new(), dwk: Vec::new() };
        m.zero_grad();
        m
    }

    pub fn heads(&self) -> usize {
        self.wq.len()
    }

    pub fn input_dim(&self) -> usize {
        self.wq[0].shape[0]
    }

    pub fn head_dim(&self) -> usize {
        self.wq[0].shape[1]
    }

    /// `u` is `l x input`; returns the `l x l` context matrix.
    pub fn forward(&self, u: &Tensor) -> Result<(Tensor, MhsaCache)> {
        let (input, d) = (self.input_dim(), self.head_dim());
        if u.shape.len() != 2 || u.shape[1] != input {
            return Err(Error::Shape(format!("attention input {:?}, expected [_, {input}]", u.shape)));
        }
        let l = u.shape[0];
        let scale = 1.0 / (d as f64).sqrt();
        let inv_heads = 1.0 / self.heads() as f64;
        let mut out = Tensor::zeros(&[l, l]);
        let mut cache = MhsaCache { u: u.clone(), q: Vec::new(), k: Vec::new(), attn: Vec::new() };
        let um = MatRef::new(&u.data, l, input);
        for (wq, wk) in self.wq.iter().zip(&self.wk) {
            let mut q = Tensor::zeros(&[l, d]);
            let mut k = Tensor::zeros(&[l, d]);
            gemm(1.0, um, MatRef::new(&wq.data, input, d), 0.0, &mut q.data);
            gemm(1.0, um, MatRef::new(&wk.data, input, d), 0.0, &mut k.data);
            let mut a = Tensor::zeros(&[l, l]);
            gemm(scale, MatRef::new(&q.data, l, d), MatRef::new(&k.data, l, d).t(), 0.0, &mut a.data);
            for r in 0..l {
                softmax_in_place(a.row_mut(r));
            }
            for (o, v) in out.data.iter_mut().zip(&a.data) {
                *o += v * inv_heads;
            }
            cache.q.push(q);
            cache.k.push(k);
            cache.attn.push(a);
        }
        Ok((out, cache))
    }

    /// Accumulates projection gradients and returns `dU`.
    pub fn backward(&mut self, cache: &MhsaCache, d_out: &Tensor) -> Result<Tensor> {
        let (input, d) = (self.input_dim(), self.head_dim());
        let l = cache.u.shape[0];
        d_out.expect_shape(&[l, l], "attention output gradient")?;
        if self.dwq.len() != self.heads() {
            self.zero_grad();
        }
        let scale = 1.0 / (d as f64).sqrt();
        let inv_heads = 1.0 / self.heads() as f64;
        let um = MatRef::new(&cache.u.data, l, input);
        let mut du = Tensor::zeros(&[l, input]);
        for h in 0..self.heads() {
            let a = &cache.attn[h];
            // Softmax backward on each row, folding in the head average and logit scale.
            let mut dz = Tensor::zeros(&[l, l]);
            for r in 0..l {
                let ar = a.row(r);
                let gr = d_out.row(r);
                let dot: f64 = ar.iter().zip(gr).map(|(x, g)| x * g).sum();
                for (z, (x, g)) in dz.row_mut(r).iter_mut().zip(ar.iter().zip(gr)) {
                    *z = x * (g - dot) * inv_heads * scale;
                }
            }
            let (q, k) = (&cache.q[h], &cache.k[h]);
            let mut dq = Tensor::zeros(&[l, d]);
            let mut dk = Tensor::zeros(&[l, d]);
            gemm(1.0, MatRef::new(&dz.data, l, l), MatRef::new(&k.data, l, d), 0.0, &mut dq.data);
            gemm(1.0, MatRef::new(&dz.data, l, l).t(), MatRef::new(&q.data, l, d), 0.0, &mut dk.data);
            gemm(1.0, um.t(), MatRef::new(&dq.data, l, d), 1.0, &mut self.dwq[h].data);
            gemm(1.0, um.t(), MatRef::new(&dk.data, l, d), 1.0, &mut self.dwk[h].data);
            gemm(1.0, MatRef::new(&dq.data, l, d), MatRef::new(&self.wq[h].data, input, d).t(), 1.0, &mut du.data);
            gemm(1.0, MatRef::new(&dk.data, l, d), MatRef::new(&self.wk[h].data, input, d).t(), 1.0, &mut du.data);
        }
        Ok(du)
    }

    pub fn zero_grad(&mut self) {
        self.dwq = self.wq.iter().map(|w| Tensor::zeros(&w.shape)).collect();
        self.dwk = self.wk.iter().map(|w| Tensor::zeros(&w.shape)).collect();
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
