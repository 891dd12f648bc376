//! Diffusion-wavelet graph encoder.
//!
//! ```text
//! x ─ pre ─ h0 ─┬─ [bank → mix → leaky → norm → /√N] ─ h1 ─ ... ─ hL
//!               └──────────── concat(h1..hL) ─ post ─ leaky ─ head ─ sigmoid
//! ```
//!
//! The bank of a layer input `h` is `[h, P^(2^J) h, Ψ_1 h, ..., Ψ_J h]`
//! with the lazy walk `P = ½(I + D⁻¹A)` and band-pass
//! `Ψ_j = P^(2^(j-1)) - P^(2^j)`. Gradients are derived by hand.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::SoftAssignment;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::Graph;
use crate::task::TaskKind;

const NORM_EPS: f64 = 1e-5;
const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub wavelet_scales: usize,
    pub leaky_slope: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_dim: 3,
            hidden_dim: 32,
            num_layers: 3,
            wavelet_scales: 3,
            leaky_slope: 0.01,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 3 && self.input_dim != 6 {
            return Err(Error::InvalidArgument(format!("input_dim must be 3 or 6, got {}", self.input_dim)));
        }
        if self.hidden_dim == 0 || self.num_layers == 0 || self.wavelet_scales == 0 {
            return Err(Error::InvalidArgument("hidden_dim, num_layers and wavelet_scales must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether node features include complement-graph statistics.
    pub fn uses_complement_features(&self) -> bool {
        self.input_dim == 6
    }

    pub fn bank_width(&self) -> usize {
        (self.wavelet_scales + 2) * self.hidden_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound));
        Linear { weight, bias: Array1::zeros(fan_out) }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    fn backprop(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterLayer {
    pub mix: Linear,
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

/// Which parameter tensors receive zero gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeScope {
    Backbone,
    Head(TaskKind),
    All,
    None,
}

/// Encoder parameters, per-task heads and the freeze mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub arch: Architecture,
    pub pre: Linear,
    pub layers: Vec<FilterLayer>,
    pub post: Linear,
    pub heads: BTreeMap<TaskKind, Linear>,
    pub frozen: BTreeSet<String>,
}

fn head_prefix(task: TaskKind) -> String {
    format!("heads.{task}.")
}

fn is_backbone(name: &str) -> bool {
    !name.starts_with("heads.")
}

impl Params {
    /// Weights uniform in `±1/√fan_in`, zero biases, unit norm scale.
    pub fn init(arch: Architecture, tasks: &[TaskKind], seed: u64) -> Result<Params> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.hidden_dim;
        let pre = Linear::init(arch.input_dim, d, &mut rng);
        let layers = (0..arch.num_layers)
            .map(|_| FilterLayer {
                mix: Linear::init(arch.bank_width(), d, &mut rng),
                scale: Array1::ones(d),
                shift: Array1::zeros(d),
            })
            .collect();
        let post = Linear::init(arch.num_layers * d, d, &mut rng);
        let mut heads = BTreeMap::new();
        for &t in tasks {
            if let TaskKind::Coloring(0) = t {
                return Err(Error::InvalidArgument("coloring needs at least one color".into()));
            }
            heads.entry(t).or_insert_with(|| Linear::init(d, t.width(), &mut rng));
        }
        Ok(Params { arch, pre, layers, post, heads, frozen: BTreeSet::new() })
    }

    /// Same shapes, all values zero, nothing frozen.
    pub fn zeros_like(&self) -> Params {
        let z = |l: &Linear| Linear::zeros(l.weight.nrows(), l.weight.ncols());
        Params {
            arch: self.arch,
            pre: z(&self.pre),
            layers: self
                .layers
                .iter()
                .map(|l| FilterLayer {
                    mix: z(&l.mix),
                    scale: Array1::zeros(l.scale.len()),
                    shift: Array1::zeros(l.shift.len()),
                })
                .collect(),
            post: z(&self.post),
            heads: self.heads.iter().map(|(t, h)| (*t, z(h))).collect(),
            frozen: BTreeSet::new(),
        }
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.heads.keys().copied().collect()
    }

    /// Every tensor with its stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        out.push(("pre.weight".into(), self.pre.weight.view().into_dyn()));
        out.push(("pre.bias".into(), self.pre.bias.view().into_dyn()));
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.mix.weight"), layer.mix.weight.view().into_dyn()));
            out.push((format!("layers.{i}.mix.bias"), layer.mix.bias.view().into_dyn()));
            out.push((format!("layers.{i}.norm.scale"), layer.scale.view().into_dyn()));
            out.push((format!("layers.{i}.norm.shift"), layer.shift.view().into_dyn()));
        }
        out.push(("post.weight".into(), self.post.weight.view().into_dyn()));
        out.push(("post.bias".into(), self.post.bias.view().into_dyn()));
        for (t, h) in &self.heads {
            out.push((format!("{}weight", head_prefix(*t)), h.weight.view().into_dyn()));
            out.push((format!("{}bias", head_prefix(*t)), h.bias.view().into_dyn()));
        }
        out
    }

    /// Mutable counterpart of [`Params::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        out.push(("pre.weight".into(), self.pre.weight.view_mut().into_dyn()));
        out.push(("pre.bias".into(), self.pre.bias.view_mut().into_dyn()));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{i}.mix.weight"), layer.mix.weight.view_mut().into_dyn()));
            out.push((format!("layers.{i}.mix.bias"), layer.mix.bias.view_mut().into_dyn()));
            out.push((format!("layers.{i}.norm.scale"), layer.scale.view_mut().into_dyn()));
            out.push((format!("layers.{i}.norm.shift"), layer.shift.view_mut().into_dyn()));
        }
        out.push(("post.weight".into(), self.post.weight.view_mut().into_dyn()));
        out.push(("post.bias".into(), self.post.bias.view_mut().into_dyn()));
        for (t, h) in self.heads.iter_mut() {
            out.push((format!("{}weight", head_prefix(*t)), h.weight.view_mut().into_dyn()));
            out.push((format!("{}bias", head_prefix(*t)), h.bias.view_mut().into_dyn()));
        }
        out
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    /// Replaces the freeze mask according to `scope`. Values are untouched.
    pub fn set_freeze(&mut self, scope: FreezeScope) {
        let names: Vec<String> = self.tensors().into_iter().map(|(n, _)| n).collect();
        self.frozen = names
            .into_iter()
            .filter(|n| match scope {
                FreezeScope::Backbone => is_backbone(n),
                FreezeScope::Head(t) => n.starts_with(&head_prefix(t)),
                FreezeScope::All => true,
                FreezeScope::None => false,
            })
            .collect();
    }

    /// Reinitializes (or adds) the head for `task` from `seed`; everything
    /// else stays bit-identical.
    pub fn reset_head(&mut self, task: TaskKind, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = Linear::init(self.arch.hidden_dim, task.width(), &mut rng);
        self.heads.insert(task, head);
        let prefix = head_prefix(task);
        self.frozen.retain(|n| !n.starts_with(&prefix));
    }

    /// Negates the weights and bias of a width-1 head, so every output
    /// probability becomes `1 - p`.
    pub fn invert_head(&mut self, task: TaskKind) -> Result<()> {
        let head = self.heads.get_mut(&task).ok_or_else(|| Error::MissingHead(task.to_string()))?;
        if head.bias.len() != 1 {
            return Err(Error::HeadSurgery(format!("cannot invert {task} head of width {}", head.bias.len())));
        }
        head.weight.mapv_inplace(|x| -x);
        head.bias.mapv_inplace(|x| -x);
        Ok(())
    }

    /// Installs a copy of the `from` head under `to`. Widths must agree.
    pub fn copy_head(&mut self, from: TaskKind, to: TaskKind) -> Result<()> {
        let head = self.heads.get(&from).ok_or_else(|| Error::MissingHead(from.to_string()))?.clone();
        if head.bias.len() != to.width() {
            return Err(Error::HeadSurgery(format!(
                "{from} head has width {}, {to} needs {}",
                head.bias.len(),
                to.width()
            )));
        }
        self.heads.insert(to, head);
        Ok(())
    }

    fn zero_frozen(&self, grads: &mut Params) {
        for (name, mut t) in grads.tensors_mut() {
            if self.frozen.contains(&name) {
                t.fill(0.0);
            }
        }
    }
}

/// Sparse lazy random walk on a graph.
#[derive(Debug, Clone)]
pub struct WalkOperator {
    adj: Vec<Vec<usize>>,
    inv_deg: Vec<f64>,
}

impl WalkOperator {
    pub fn new(g: &Graph) -> Self {
        let n = g.num_nodes();
        let adj: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v).to_vec()).collect();
        let inv_deg = adj
            .iter()
            .map(|a| if a.is_empty() { 0.0 } else { 1.0 / a.len() as f64 })
            .collect();
        WalkOperator { adj, inv_deg }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// `P h` with `P = ½(I + D⁻¹A)`; rows of isolated nodes become `½ h`.
    pub fn apply(&self, h: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = h.to_owned();
        for (i, nbrs) in self.adj.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in nbrs {
                row.scaled_add(self.inv_deg[i], &h.row(j));
            }
            row *= 0.5;
        }
        out
    }

    /// `Pᵀ h = ½(I + A D⁻¹) h`.
    pub fn apply_transpose(&self, h: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = h.to_owned();
        for (i, nbrs) in self.adj.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in nbrs {
                row.scaled_add(self.inv_deg[j], &h.row(j));
            }
            row *= 0.5;
        }
        out
    }

    fn apply_times(&self, h: Array2<f64>, times: usize, transpose: bool) -> Array2<f64> {
        (0..times).fold(h, |acc, _| {
            if transpose {
                self.apply_transpose(&acc.view())
            } else {
                self.apply(&acc.view())
            }
        })
    }
}

/// `P h` for a graph. Convenience wrapper over [`WalkOperator`].
pub fn lazy_walk_apply(g: &Graph, h: &Array2<f64>) -> Result<Array2<f64>> {
    check_rows(g.num_nodes(), h)?;
    Ok(WalkOperator::new(g).apply(&h.view()))
}

/// `[h, P^(2^J) h, Ψ_1 h, ..., Ψ_J h]`, `(J + 2) d` columns.
pub fn wavelet_bank(g: &Graph, h: &Array2<f64>, scales: usize) -> Result<Array2<f64>> {
    check_rows(g.num_nodes(), h)?;
    if scales == 0 {
        return Err(Error::InvalidArgument("wavelet_scales must be >= 1".into()));
    }
    Ok(bank_forward(&WalkOperator::new(g), &h.view(), scales))
}

fn check_rows(n: usize, h: &Array2<f64>) -> Result<()> {
    if h.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} rows"),
            got: format!("{} rows", h.nrows()),
        });
    }
    Ok(())
}

fn bank_forward(op: &WalkOperator, h: &ArrayView2<f64>, scales: usize) -> Array2<f64> {
    // powers[j] = P^(2^j) h for j = 0..=J
    let mut powers = Vec::with_capacity(scales + 1);
    powers.push(op.apply(h));
    for j in 1..=scales {
        let steps = 1usize << (j - 1);
        let next = op.apply_times(powers[j - 1].clone(), steps, false);
        powers.push(next);
    }
    let mut blocks: Vec<Array2<f64>> = Vec::with_capacity(scales + 2);
    blocks.push(h.to_owned());
    blocks.push(powers[scales].clone());
    for j in 1..=scales {
        blocks.push(&powers[j - 1] - &powers[j]);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).expect("blocks share row count")
}

fn bank_backward(op: &WalkOperator, grad: &Array2<f64>, scales: usize, d: usize) -> Array2<f64> {
    let block = |b: usize| grad.slice(s![.., b * d..(b + 1) * d]).to_owned();
    let g_identity = block(0);
    let g_low = block(1);
    let g_psi: Vec<Array2<f64>> = (0..scales).map(|j| block(2 + j)).collect();
    // coefficient of (Pᵀ)^(2^j) for j = 0..=J
    let mut coeff: Vec<Array2<f64>> = Vec::with_capacity(scales + 1);
    coeff.push(g_psi[0].clone());
    for j in 1..scales {
        coeff.push(&g_psi[j] - &g_psi[j - 1]);
    }
    coeff.push(&g_low - &g_psi[scales - 1]);
    let mut acc = coeff[scales].clone();
    for j in (1..=scales).rev() {
        let steps = (1usize << j) - (1usize << (j - 1));
        acc = op.apply_times(acc, steps, true);
        acc += &coeff[j - 1];
    }
    let acc = op.apply_transpose(&acc.view());
    acc + g_identity
}

fn leaky(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

fn leaky_backward(pre: &Array2<f64>, dy: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|g, &x| {
        if x <= 0.0 {
            *g *= slope;
        }
    });
    out
}

// The negative branch mirrors the positive one so that
// sigmoid(-x) == 1 - sigmoid(x) holds bit for bit (the subtraction is exact
// for values in [0.5, 1]).
fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        1.0 - 1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    bank: Array2<f64>,
    pre_act: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    task: TaskKind,
    op: Arc<WalkOperator>,
    x: Array2<f64>,
    layers: Vec<LayerCache>,
    concat: Array2<f64>,
    post_pre_act: Array2<f64>,
    post_act: Array2<f64>,
    logits: Array2<f64>,
    probs: Array2<f64>,
}

impl ForwardCache {
    pub fn task(&self) -> TaskKind {
        self.task
    }
}

/// Runs the encoder for one graph and returns per-node probabilities.
pub fn forward(params: &Params, g: &Graph, feats: &FeatureMatrix, task: TaskKind) -> Result<(SoftAssignment, ForwardCache)> {
    forward_with(params, Arc::new(WalkOperator::new(g)), feats, task)
}

/// [`forward`] with a prebuilt walk operator.
pub fn forward_with(params: &Params, op: Arc<WalkOperator>, feats: &FeatureMatrix, task: TaskKind) -> Result<(SoftAssignment, ForwardCache)> {
    let arch = params.arch;
    let head = params.heads.get(&task).ok_or_else(|| Error::MissingHead(task.to_string()))?;
    let n = op.num_nodes();
    if feats.values.dim() != (n, arch.input_dim) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{} features", arch.input_dim),
            got: format!("{}x{}", feats.values.nrows(), feats.values.ncols()),
        });
    }
    let size_scale = 1.0 / (n as f64).sqrt();
    let x = feats.values.clone();
    let mut h = params.pre.apply(&x.view());
    let mut layers = Vec::with_capacity(arch.num_layers);
    let mut outputs = Vec::with_capacity(arch.num_layers);
    for layer in &params.layers {
        let bank = bank_forward(&op, &h.view(), arch.wavelet_scales);
        let pre_act = layer.mix.apply(&bank.view());
        let act = leaky(&pre_act, arch.leaky_slope);
        let mean = act.mean_axis(Axis(0)).unwrap();
        let centered = &act - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
        let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
        let normalized = &centered * &inv_std;
        let out = (&normalized * &layer.scale + &layer.shift) * size_scale;
        layers.push(LayerCache { bank, pre_act, normalized, inv_std });
        outputs.push(out.clone());
        h = out;
    }
    let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
    let concat = concatenate(Axis(1), &views).expect("layer outputs share row count");
    let post_pre_act = params.post.apply(&concat.view());
    let post_act = leaky(&post_pre_act, arch.leaky_slope);
    let logits = head.apply(&post_act.view());
    let probs = logits.mapv(sigmoid);
    let soft = match task {
        TaskKind::Coloring(_) => SoftAssignment::Colors(probs.clone()),
        _ => SoftAssignment::Nodes(probs.column(0).to_owned()),
    };
    let cache = ForwardCache { task, op, x, layers, concat, post_pre_act, post_act, logits, probs };
    Ok((soft, cache))
}

/// Reverse pass: gradients of a loss with respect to every parameter, given
/// the loss gradient with respect to the output probabilities. Frozen
/// tensors get zero gradient.
pub fn backward(params: &Params, cache: &ForwardCache, upstream: &SoftAssignment) -> Result<Params> {
    let arch = params.arch;
    let task = cache.task;
    let head = params.heads.get(&task).ok_or_else(|| Error::MissingHead(task.to_string()))?;
    let up: Array2<f64> = match (task, upstream) {
        (TaskKind::Coloring(_), SoftAssignment::Colors(g)) => g.clone(),
        (TaskKind::Coloring(_), _) | (_, SoftAssignment::Colors(_)) => {
            return Err(Error::DimensionMismatch {
                expected: format!("upstream gradient shaped like {task} output"),
                got: "other kind".into(),
            })
        }
        (_, SoftAssignment::Nodes(g)) => g.clone().insert_axis(Axis(1)),
    };
    if up.dim() != cache.probs.dim() || head.weight.dim() != (arch.hidden_dim, cache.probs.ncols()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", cache.probs.dim()),
            got: format!("{:?}", up.dim()),
        });
    }
    let n = cache.x.nrows();
    let d = arch.hidden_dim;
    let size_scale = 1.0 / (n as f64).sqrt();
    let mut grads = params.zeros_like();

    let mut dlogits = up;
    ndarray::Zip::from(&mut dlogits)
        .and(&cache.probs)
        .and(&cache.logits)
        .for_each(|g, &p, &z| {
            *g *= if z.abs() >= LOGIT_CLAMP { 0.0 } else { p * (1.0 - p) };
        });
    let head_grad = grads.heads.get_mut(&task).unwrap();
    let d_post_act = head.backprop(&cache.post_act.view(), &dlogits, head_grad);
    let d_post = leaky_backward(&cache.post_pre_act, &d_post_act, arch.leaky_slope);
    let d_concat = params.post.backprop(&cache.concat.view(), &d_post, &mut grads.post);

    let mut carry: Option<Array2<f64>> = None;
    for l in (0..arch.num_layers).rev() {
        let layer = &params.layers[l];
        let lc = &cache.layers[l];
        let mut d_out = d_concat.slice(s![.., l * d..(l + 1) * d]).to_owned();
        if let Some(c) = carry.take() {
            d_out += &c;
        }
        let d_y = d_out * size_scale;
        let lg = &mut grads.layers[l];
        lg.scale += &(&d_y * &lc.normalized).sum_axis(Axis(0));
        lg.shift += &d_y.sum_axis(Axis(0));
        let d_norm = &d_y * &layer.scale;
        let nf = n as f64;
        let sum_d = d_norm.sum_axis(Axis(0));
        let sum_dx = (&d_norm * &lc.normalized).sum_axis(Axis(0));
        let d_act = (&d_norm * nf - &sum_d - &(&lc.normalized * &sum_dx)) * &(&lc.inv_std / nf);
        let d_pre = leaky_backward(&lc.pre_act, &d_act, arch.leaky_slope);
        let d_bank = layer.mix.backprop(&lc.bank.view(), &d_pre, &mut lg.mix);
        carry = Some(bank_backward(&cache.op, &d_bank, arch.wavelet_scales, d));
    }
    let d_h0 = carry.expect("at least one layer");
    let _ = params.pre.backprop(&cache.x.view(), &d_h0, &mut grads.pre);
    params.zero_frozen(&mut grads);
    Ok(grads)
}
