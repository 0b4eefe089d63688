//! Deep reward network: predicts, for every slice, the return of
//! accommodating it next.
//!
//! ```text
//! substrate (n) --[n->n->n->n]--------------------------> u_sub (n) --+
//! demands (l x s) --row-wise [s->s->s->s]--> U (l x s) ---------------+--> per-row concat
//!                                   \--> attention --> S (l x l) ----+     (n + s + l)
//!                                                                            |
//!                    head, shared across rows: [(n+s+l) -> 3(n+s) x3 -> 1] --> rho (l)
//! ```
//!
//! Hidden layers use ReLU (including the embedding outputs); the final head
//! layer is linear.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_forward, AdamState, DenseLayer, Mhsa, MhsaCache, Tensor};
use crate::rng::{stream_rng, Stream};
use crate::scenario::ScenarioConfig;
use crate::sched::SlicePicker;
use crate::state::{EnvState, StateSnapshot};

pub const FORMAT_VERSION: u32 = 1;
pub const HEADS: usize = 5;
const EMBED_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrnConfig {
    pub n: usize,
    pub l: usize,
    pub s: usize,
    /// Width of each substrate embedding layer.
    pub sub_width: usize,
    /// Width of each slice embedding layer (also the attention input and head size).
    pub slice_width: usize,
    pub heads: usize,
    pub head_width: usize,
    /// Hidden layers in the reward head.
    pub head_depth: usize,
    /// Divisor applied to capacities and demands before they enter the network.
    pub scale: f64,
}

impl DrnConfig {
    /// Standard widths for an instance shape: substrate layers of `n`, slice
    /// layers of `s`, five heads of size `s`, three head layers of `3(n+s)`.
    pub fn new(n: usize, l: usize, s: usize, scale: f64) -> Self {
        DrnConfig {
            n,
            l,
            s,
            sub_width: n,
            slice_width: s,
            heads: HEADS,
            head_width: 3 * (n + s),
            head_depth: 3,
            scale,
        }
    }

    /// Shape from a scenario config, with the input scale set to its capacity upper bound.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        Self::new(cfg.n, cfg.l, cfg.s, cfg.cap_range[1].max(1) as f64)
    }

    pub fn head_input(&self) -> usize {
        self.sub_width + self.slice_width + self.l
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.n, self.l, self.s, self.sub_width, self.slice_width, self.heads, self.head_width];
        if dims.contains(&0) || self.head_depth == 0 {
            return Err(Error::Config(format!("network widths must be positive: {self:?}")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("input scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }
}

/// Network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnNet {
    pub sub_emb: Vec<DenseLayer>,
    pub slice_emb: Vec<DenseLayer>,
    pub mhsa: Mhsa,
    pub head: Vec<DenseLayer>,
}

/// Weights, optimizer moments and training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnParams {
    pub config: DrnConfig,
    pub net: DrnNet,
    pub adam: AdamState,
    /// Training iterations completed.
    pub iteration: u64,
    /// Settings the weights were produced with, stored verbatim in checkpoints.
    pub provenance: Option<serde_json::Value>,
}

/// One network input: scaled substrate vector and row-major `l x s` demands.
#[derive(Debug, Clone, Copy)]
pub struct DrnInput<'a> {
    pub sub: &'a [f64],
    pub dem: &'a [f64],
}

#[derive(Debug, Clone)]
struct MlpCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

fn mlp_forward(layers: &[DenseLayer], x: Tensor, relu_last: bool) -> Result<(Tensor, MlpCache)> {
    let mut cache = MlpCache { inputs: Vec::with_capacity(layers.len()), pre: Vec::with_capacity(layers.len()) };
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        let z = layer.forward(&h)?;
        cache.inputs.push(h);
        h = if i + 1 < layers.len() || relu_last { relu_forward(&z) } else { z.clone() };
        cache.pre.push(z);
    }
    Ok((h, cache))
}

fn mlp_backward(layers: &mut [DenseLayer], cache: &MlpCache, dy: Tensor, relu_last: bool) -> Result<Tensor> {
    let mut g = dy;
    for i in (0..layers.len()).rev() {
        if i + 1 < layers.len() || relu_last {
            g = relu_backward(&cache.pre[i], &g);
        }
        g = layers[i].backward(&cache.inputs[i], &g)?;
    }
    Ok(g)
}

/// Intermediates of a batched forward pass.
#[derive(Debug, Clone)]
pub struct DrnCache {
    batch: usize,
    rows: Vec<(usize, usize)>,
    sub: MlpCache,
    u_sub: Tensor,
    slice: MlpCache,
    u_slice: Tensor,
    attn: Vec<MhsaCache>,
    head: MlpCache,
}

impl DrnCache {
    /// Sign pattern of every ReLU pre-activation; changes when an input crosses a kink.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for c in [&self.sub, &self.slice, &self.head] {
            for z in &c.pre {
                out.extend(z.data.iter().map(|&v| v > 0.0));
            }
        }
        out
    }
}

impl DrnNet {
    fn zeros(cfg: &DrnConfig) -> Self {
        let mut sub_emb = vec![DenseLayer::zeros(cfg.n, cfg.sub_width)];
        sub_emb.extend((1..EMBED_DEPTH).map(|_| DenseLayer::zeros(cfg.sub_width, cfg.sub_width)));
        let mut slice_emb = vec![DenseLayer::zeros(cfg.s, cfg.slice_width)];
        slice_emb.extend((1..EMBED_DEPTH).map(|_| DenseLayer::zeros(cfg.slice_width, cfg.slice_width)));
        let mhsa = Mhsa {
            wq: (0..cfg.heads).map(|_| Tensor::zeros(&[cfg.slice_width, cfg.slice_width])).collect(),
            wk: (0..cfg.heads).map(|_| Tensor::zeros(&[cfg.slice_width, cfg.slice_width])).collect(),
            dwq: Vec::new(),
            dwk: Vec::new(),
        };
        let mut head = vec![DenseLayer::zeros(cfg.head_input(), cfg.head_width)];
        head.extend((1..cfg.head_depth).map(|_| DenseLayer::zeros(cfg.head_width, cfg.head_width)));
        head.push(DenseLayer::zeros(cfg.head_width, 1));
        let mut net = DrnNet { sub_emb, slice_emb, mhsa, head };
        net.zero_grad();
        net
    }

    fn init(cfg: &DrnConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut sub_emb = vec![DenseLayer::init(cfg.n, cfg.sub_width, &mut rng)];
        sub_emb.extend((1..EMBED_DEPTH).map(|_| DenseLayer::init(cfg.sub_width, cfg.sub_width, &mut rng)));
        let mut slice_emb = vec![DenseLayer::init(cfg.s, cfg.slice_width, &mut rng)];
        slice_emb.extend((1..EMBED_DEPTH).map(|_| DenseLayer::init(cfg.slice_width, cfg.slice_width, &mut rng)));
        let mhsa = Mhsa::init(cfg.slice_width, cfg.slice_width, cfg.heads, &mut rng);
        let mut head = vec![DenseLayer::init(cfg.head_input(), cfg.head_width, &mut rng)];
        head.extend((1..cfg.head_depth).map(|_| DenseLayer::init(cfg.head_width, cfg.head_width, &mut rng)));
        head.push(DenseLayer::init(cfg.head_width, 1, &mut rng));
        let mut net = DrnNet { sub_emb, slice_emb, mhsa, head };
        net.zero_grad();
        net
    }

    pub fn zero_grad(&mut self) {
        self.sub_emb.iter_mut().chain(&mut self.slice_emb).chain(&mut self.head).for_each(DenseLayer::zero_grad);
        self.mhsa.zero_grad();
    }

    /// Parameter tensors in checkpoint order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (block, layers) in [("sub_emb", &self.sub_emb), ("slice_emb", &self.slice_emb)] {
            for (i, layer) in layers.iter().enumerate() {
                out.push((format!("{block}.{i}.w"), &layer.w));
                out.push((format!("{block}.{i}.b"), &layer.b));
            }
        }
        for h in 0..self.mhsa.heads() {
            out.push((format!("mhsa.{h}.wq"), &self.mhsa.wq[h]));
            out.push((format!("mhsa.{h}.wk"), &self.mhsa.wk[h]));
        }
        for (i, layer) in self.head.iter().enumerate() {
            out.push((format!("head.{i}.w"), &layer.w));
            out.push((format!("head.{i}.b"), &layer.b));
        }
        out
    }

    /// Mutable parameters paired with their gradients, in checkpoint order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut out: Vec<(&mut Tensor, &Tensor)> = Vec::new();
        for layer in self.sub_emb.iter_mut().chain(self.slice_emb.iter_mut()) {
            out.push((&mut layer.w, &layer.dw));
            out.push((&mut layer.b, &layer.db));
        }
        let m = &mut self.mhsa;
        for ((wq, dwq), (wk, dwk)) in m.wq.iter_mut().zip(&m.dwq).zip(m.wk.iter_mut().zip(&m.dwk)) {
            out.push((wq, dwq));
            out.push((wk, dwk));
        }
        for layer in self.head.iter_mut() {
            out.push((&mut layer.w, &layer.dw));
            out.push((&mut layer.b, &layer.db));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (block, layers) in [("sub_emb", &mut self.sub_emb), ("slice_emb", &mut self.slice_emb)] {
            for (i, layer) in layers.iter_mut().enumerate() {
                out.push((format!("{block}.{i}.w"), &mut layer.w));
                out.push((format!("{block}.{i}.b"), &mut layer.b));
            }
        }
        for (h, (wq, wk)) in self.mhsa.wq.iter_mut().zip(self.mhsa.wk.iter_mut()).enumerate() {
            out.push((format!("mhsa.{h}.wq"), wq));
            out.push((format!("mhsa.{h}.wk"), wk));
        }
        for (i, layer) in self.head.iter_mut().enumerate() {
            out.push((format!("head.{i}.w"), &mut layer.w));
            out.push((format!("head.{i}.b"), &mut layer.b));
        }
        out
    }

    /// Rewards for the requested `(sample, slice)` rows of a batch.
    pub fn forward_rows(
        &self,
        cfg: &DrnConfig,
        batch: &[DrnInput<'_>],
        rows: &[(usize, usize)],
    ) -> Result<(Vec<f64>, DrnCache)> {
        let (n, l, s) = (cfg.n, cfg.l, cfg.s);
        let b = batch.len();
        let mut x_sub = Tensor::zeros(&[b, n]);
        let mut x_dem = Tensor::zeros(&[b * l, s]);
        for (i, inp) in batch.iter().enumerate() {
            if inp.sub.len() != n || inp.dem.len() != l * s {
                return Err(Error::Shape(format!(
                    "network expects substrate {n} and demands {l}x{s}, got {} and {}",
                    inp.sub.len(),
                    inp.dem.len()
                )));
            }
            x_sub.row_mut(i).copy_from_slice(inp.sub);
            x_dem.data[i * l * s..(i + 1) * l * s].copy_from_slice(inp.dem);
        }
        let (u_sub, sub) = mlp_forward(&self.sub_emb, x_sub, false)?;
        let (u_slice, slice) = mlp_forward(&self.slice_emb, x_dem, false)?;
        let sw = cfg.slice_width;

        let mut contexts = Vec::with_capacity(b);
        let mut attn = Vec::with_capacity(b);
        for i in 0..b {
            let u = Tensor::from_vec(&[l, sw], u_slice.data[i * l * sw..(i + 1) * l * sw].to_vec())?;
            let (ctx, cache) = self.mhsa.forward(&u)?;
            contexts.push(ctx);
            attn.push(cache);
        }

        let width = cfg.head_input();
        let mut x_head = Tensor::zeros(&[rows.len(), width]);
        for (r, &(i, j)) in rows.iter().enumerate() {
            if i >= b || j >= l {
                return Err(Error::Shape(format!("row ({i}, {j}) outside batch {b}x{l}")));
            }
            let dst = x_head.row_mut(r);
            dst[..cfg.sub_width].copy_from_slice(u_sub.row(i));
            dst[cfg.sub_width..cfg.sub_width + sw].copy_from_slice(u_slice.row(i * l + j));
            dst[cfg.sub_width + sw..].copy_from_slice(contexts[i].row(j));
        }
        let (out, head) = mlp_forward(&self.head, x_head, false)?;
        let cache = DrnCache { batch: b, rows: rows.to_vec(), sub, u_sub, slice, u_slice, attn, head };
        Ok((out.data, cache))
    }

    /// Accumulates parameter gradients for `d_out` (one value per cached row).
    pub fn backward_rows(&mut self, cfg: &DrnConfig, cache: &DrnCache, d_out: &[f64]) -> Result<()> {
        let (l, sw) = (cfg.l, cfg.slice_width);
        if d_out.len() != cache.rows.len() {
            return Err(Error::Shape(format!("{} output gradients for {} rows", d_out.len(), cache.rows.len())));
        }
        let dy = Tensor::from_vec(&[d_out.len(), 1], d_out.to_vec())?;
        let dx_head = mlp_backward(&mut self.head, &cache.head, dy, false)?;

        let mut d_sub = Tensor::zeros(&cache.u_sub.shape);
        let mut d_slice = Tensor::zeros(&cache.u_slice.shape);
        let mut d_ctx: Vec<Option<Tensor>> = vec![None; cache.batch];
        for (r, &(i, j)) in cache.rows.iter().enumerate() {
            let g = dx_head.row(r);
            for (a, v) in d_sub.row_mut(i).iter_mut().zip(&g[..cfg.sub_width]) {
                *a += v;
            }
            for (a, v) in d_slice.row_mut(i * l + j).iter_mut().zip(&g[cfg.sub_width..cfg.sub_width + sw]) {
                *a += v;
            }
            let ctx = d_ctx[i].get_or_insert_with(|| Tensor::zeros(&[l, l]));
            for (a, v) in ctx.row_mut(j).iter_mut().zip(&g[cfg.sub_width + sw..]) {
                *a += v;
            }
        }
        for (i, ctx) in d_ctx.iter().enumerate() {
            if let Some(ctx) = ctx {
                let du = self.mhsa.backward(&cache.attn[i], ctx)?;
                for (a, v) in d_slice.data[i * l * sw..(i + 1) * l * sw].iter_mut().zip(&du.data) {
                    *a += v;
                }
            }
        }
        mlp_backward(&mut self.slice_emb, &cache.slice, d_slice, false)?;
        mlp_backward(&mut self.sub_emb, &cache.sub, d_sub, false)?;
        Ok(())
    }
}

impl DrnParams {
    /// Fresh network with weights drawn from the init stream of `seed`.
    pub fn build(config: DrnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = DrnNet::init(&config, seed);
        let adam = AdamState::new(net.named_params().into_iter().map(|(_, t)| t.shape.as_slice()));
        Ok(DrnParams { config, net, adam, iteration: 0, provenance: None })
    }

    /// Rewards for every slice of one encoded state.
    pub fn forward(&self, sub: &[f64], dem: &[f64]) -> Result<Vec<f64>> {
        let rows: Vec<(usize, usize)> = (0..self.config.l).map(|j| (0, j)).collect();
        let (out, _) = self.net.forward_rows(&self.config, &[DrnInput { sub, dem }], &rows)?;
        Ok(out)
    }

    pub fn forward_snapshot(&self, snap: &StateSnapshot) -> Result<Vec<f64>> {
        let (sub, dem) = snap.encode(self.config.scale);
        self.forward(&sub, &dem)
    }

    pub fn forward_state(&self, state: &EnvState) -> Result<Vec<f64>> {
        self.forward_snapshot(&state.snapshot())
    }

    pub fn param_count(&self) -> usize {
        self.net.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.net.named_params().iter().all(|(_, t)| t.all_finite())
    }

    /// Errors unless the network was built for instances shaped like `cfg`.
    pub fn check_compatible(&self, cfg: &ScenarioConfig) -> Result<()> {
        let c = &self.config;
        if (c.n, c.l, c.s) != (cfg.n, cfg.l, cfg.s) {
            return Err(Error::Config(format!(
                "network built for n={}, l={}, s={} but scenarios have n={}, l={}, s={}",
                c.n, c.l, c.s, cfg.n, cfg.l, cfg.s
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let arrays = |ts: Vec<(String, &Tensor)>| -> BTreeMap<String, Tensor> {
            ts.into_iter().map(|(k, t)| (k, t.clone())).collect()
        };
        let names: Vec<String> = self.net.named_params().into_iter().map(|(k, _)| k).collect();
        let doc = CheckpointDoc {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            iteration: self.iteration,
            provenance: self.provenance.clone(),
            arrays: arrays(self.net.named_params()),
            adam: AdamDoc {
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                eps: self.adam.eps,
                step: self.adam.step,
                m: names.iter().cloned().zip(self.adam.m.iter().cloned()).collect(),
                v: names.iter().cloned().zip(self.adam.v.iter().cloned()).collect(),
            },
        };
        serde_json::to_string(&doc).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        doc.config.validate()?;
        let mut net = DrnNet::zeros(&doc.config);
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, dst) in net.named_params_mut() {
            let expected = dst.shape.clone();
            let take = |map: &BTreeMap<String, Tensor>, what: &str| -> Result<Tensor> {
                let t = map
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing {what} '{name}'")))?;
                if t.shape != expected || t.data.len() != expected.iter().product::<usize>() {
                    return Err(Error::Checkpoint(format!(
                        "{what} '{name}' has shape {:?}, expected {:?}",
                        t.shape, expected
                    )));
                }
                Ok(t.clone())
            };
            *dst = take(&doc.arrays, "array")?;
            m.push(take(&doc.adam.m, "first moment")?);
            v.push(take(&doc.adam.v, "second moment")?);
        }
        if doc.arrays.len() != m.len() {
            return Err(Error::Checkpoint("unexpected extra arrays".into()));
        }
        net.zero_grad();
        let adam = AdamState { beta1: doc.adam.beta1, beta2: doc.adam.beta2, eps: doc.adam.eps, step: doc.adam.step, m, v };
        Ok(DrnParams { config: doc.config, net, adam, iteration: doc.iteration, provenance: doc.provenance })
    }
}

#[derive(Serialize, Deserialize)]
struct AdamDoc {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    config: DrnConfig,
    iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
    arrays: BTreeMap<String, Tensor>,
    adam: AdamDoc,
}

pub fn save_checkpoint(params: &DrnParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DrnParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DrnParams::from_json(&text).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Highest-reward feasible slice; ties go to the lower index.
pub fn select_action(rewards: &[f64], feasible: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&r, &ok)) in rewards.iter().zip(feasible).enumerate() {
        if ok && best.is_none_or(|b| r > rewards[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::NoFeasibleAction)
}

/// Greedy scheduler backed by a trained network.
pub struct DrnPicker<'a> {
    pub params: &'a DrnParams,
}

impl SlicePicker for DrnPicker<'_> {
    fn pick(&mut self, state: &EnvState, feasible: &[bool]) -> Result<usize> {
        let rewards = self.params.forward_state(state)?;
        select_action(&rewards, feasible)
    }
}

/// Finite-difference check of the whole network on one random input, using
/// a random projection of all slice rewards as the objective. Checks up to
/// `per_tensor` coordinates of every parameter tensor; coordinates whose
/// perturbation flips a ReLU are skipped.
pub fn gradient_check(config: &DrnConfig, seed: u64, per_tensor: usize, eps: f64) -> Result<crate::nn::gradcheck::GradCheckReport> {
    use crate::nn::gradcheck::{check_gradient_at, random_tensor, GradCheckReport};
    use rand::seq::index::sample;

    let params = DrnParams::build(config.clone(), seed)?;
    let mut rng = stream_rng(seed, Stream::Exploration);
    let sub: Vec<f64> = random_tensor(&[config.n], &mut rng).data.iter().map(|v| v.abs() * 1.5).collect();
    let dem: Vec<f64> = random_tensor(&[config.l * config.s], &mut rng).data.iter().map(|v| v.abs()).collect();
    let proj = random_tensor(&[config.l], &mut rng).data;
    let rows: Vec<(usize, usize)> = (0..config.l).map(|j| (0, j)).collect();
    let input = [DrnInput { sub: &sub, dem: &dem }];

    let mut work = params.net.clone();
    work.zero_grad();
    let (_, cache) = work.forward_rows(config, &input, &rows)?;
    let pattern = cache.activation_pattern();
    work.backward_rows(config, &cache, &proj)?;

    let grads: Vec<Tensor> = work.params_and_grads().into_iter().map(|(_, g)| g.clone()).collect();
    let mut report = GradCheckReport::default();
    let names: Vec<String> = params.net.named_params().into_iter().map(|(k, _)| k).collect();
    for (idx, name) in names.iter().enumerate() {
        let base = params.net.named_params()[idx].1.clone();
        let k = per_tensor.min(base.len());
        let coords = sample(&mut rng, base.len(), k).into_vec();
        let r = check_gradient_at(&base.data, &grads[idx].data, &coords, eps, |x| {
            let mut net = params.net.clone();
            let (_, dst) = net.named_params_mut().into_iter().find(|(k, _)| k == name)?;
            dst.data.copy_from_slice(x);
            let (out, c) = net.forward_rows(config, &input, &rows).ok()?;
            (c.activation_pattern() == pattern).then(|| out.iter().zip(&proj).map(|(a, b)| a * b).sum())
        });
        report = report.merge(r);
    }
    Ok(report)
}
