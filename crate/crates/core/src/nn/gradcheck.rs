//! Central finite-difference gradient verification.

use rand::Rng;

use super::activation::{relu_backward, relu_forward};
use super::dense::DenseLayer;
use super::loss::masked_mse;
use super::mhsa::Mhsa;
use super::tensor::Tensor;
use crate::rng::{stream_rng, Stream};

/// Denominator floor of [`relative_error`]; below it the error is effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Coordinates where the objective declined to evaluate (e.g. a ReLU kink was crossed).
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Checks every coordinate of `x`.
pub fn check_gradient(
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    f: impl FnMut(&[f64]) -> Option<f64>,
) -> GradCheckReport {
    let coords: Vec<usize> = (0..x.len()).collect();
    check_gradient_at(x, analytic, &coords, eps, f)
}

/// Compares `analytic[i]` with `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`
/// for each `i` in `coords`. `f` may return `None` to skip a coordinate.
pub fn check_gradient_at(
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
    mut f: impl FnMut(&[f64]) -> Option<f64>,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len());
    let mut work = x.to_vec();
    let mut report = GradCheckReport::default();
    for &i in coords {
        let orig = work[i];
        work[i] = orig + eps;
        let plus = f(&work);
        work[i] = orig - eps;
        let minus = f(&work);
        work[i] = orig;
        match (plus, minus) {
            (Some(p), Some(m)) => {
                let numeric = (p - m) / (2.0 * eps);
                report.max_rel_error = report.max_rel_error.max(relative_error(analytic[i], numeric));
                report.max_abs_error = report.max_abs_error.max((analytic[i] - numeric).abs());
                report.checked += 1;
            }
            _ => report.skipped += 1,
        }
    }
    report
}

/// Tensor with entries uniform in `[-1, 1)`.
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    t
}

/// Worst errors of each primitive for one random draw.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrimitiveReport {
    pub dense: GradCheckReport,
    pub relu: GradCheckReport,
    pub mhsa: GradCheckReport,
    pub masked_mse: GradCheckReport,
}

impl PrimitiveReport {
    pub fn worst(&self) -> f64 {
        [self.dense, self.relu, self.mhsa, self.masked_mse]
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient-checks dense, ReLU, attention and masked-MSE on random small
/// shapes derived from `seed`. Scalar objectives are random projections of
/// each primitive's output.
pub fn check_primitives(seed: u64, eps: f64) -> PrimitiveReport {
    let mut rng = stream_rng(seed, Stream::Init);
    let mut report = PrimitiveReport::default();

    // dense
    let (batch, din, dout) = (rng.gen_range(1..5), rng.gen_range(1..7), rng.gen_range(1..7));
    let mut layer = DenseLayer::init(din, dout, &mut rng);
    layer.b = random_tensor(&[dout], &mut rng);
    let x = random_tensor(&[batch, din], &mut rng);
    let proj = random_tensor(&[batch, dout], &mut rng);
    let mut work = layer.clone();
    work.zero_grad();
    let dx = work.backward(&x, &proj).expect("dense backward");
    let eval = |l: &DenseLayer, x: &Tensor| Some(dot(&l.forward(x).ok()?.data, &proj.data));
    let mut r = check_gradient(&layer.w.data, &work.dw.data, eps, |w| {
        let mut l = layer.clone();
        l.w.data.copy_from_slice(w);
        eval(&l, &x)
    });
    r = r.merge(check_gradient(&layer.b.data, &work.db.data, eps, |b| {
        let mut l = layer.clone();
        l.b.data.copy_from_slice(b);
        eval(&l, &x)
    }));
    r = r.merge(check_gradient(&x.data, &dx.data, eps, |xs| {
        eval(&layer, &Tensor::from_vec(&x.shape, xs.to_vec()).ok()?)
    }));
    report.dense = r;

    // relu, skipping inputs within reach of the kink
    let len = rng.gen_range(1..12);
    let x = random_tensor(&[len], &mut rng);
    let proj = random_tensor(&[len], &mut rng);
    let dx = relu_backward(&x, &proj);
    let coords: Vec<usize> = (0..len).filter(|&i| x.data[i].abs() > 10.0 * eps).collect();
    report.relu = check_gradient_at(&x.data, &dx.data, &coords, eps, |xs| {
        let t = Tensor::from_vec(&x.shape, xs.to_vec()).ok()?;
        Some(dot(&relu_forward(&t).data, &proj.data))
    });

    // attention
    let (l, width) = (rng.gen_range(1..7), rng.gen_range(1..6));
    let m = Mhsa::init(width, width, 5, &mut rng);
    let u = random_tensor(&[l, width], &mut rng);
    let proj = random_tensor(&[l, l], &mut rng);
    let eval = |m: &Mhsa, u: &Tensor| Some(dot(&m.forward(u).ok()?.0.data, &proj.data));
    let mut work = m.clone();
    let (_, cache) = work.forward(&u).expect("attention forward");
    let du = work.backward(&cache, &proj).expect("attention backward");
    let mut r = check_gradient(&u.data, &du.data, eps, |xs| {
        eval(&m, &Tensor::from_vec(&u.shape, xs.to_vec()).ok()?)
    });
    for h in 0..m.heads() {
        r = r.merge(check_gradient(&m.wq[h].data, &work.dwq[h].data, eps, |w| {
            let mut mm = m.clone();
            mm.wq[h].data.copy_from_slice(w);
            eval(&mm, &u)
        }));
        r = r.merge(check_gradient(&m.wk[h].data, &work.dwk[h].data, eps, |w| {
            let mut mm = m.clone();
            mm.wk[h].data.copy_from_slice(w);
            eval(&mm, &u)
        }));
    }
    report.mhsa = r;

    // masked mse
    let len = rng.gen_range(1..9);
    let pred = random_tensor(&[len], &mut rng);
    let target = random_tensor(&[len], &mut rng);
    let mask: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.5)).collect();
    let (_, grad) = masked_mse(&pred.data, &target.data, &mask);
    report.masked_mse = check_gradient(&pred.data, &grad, eps, |p| Some(masked_mse(p, &target.data, &mask).0));

    report
}
