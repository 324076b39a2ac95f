//! Parameter storage and shared neural building blocks.
//!
//! Parameters live in a [`ParamStore`] across forward passes; each pass binds
//! them onto a fresh [`Tape`] as leaves and reads gradients back afterwards.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::TensorError;
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new(), by_name: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name: {name}"
        );
        tensor.requires_grad = true;
        let id = self.tensors.len();
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name).map(|&i| &self.tensors[i])
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors.iter())
    }

    pub fn set_data(&mut self, id: ParamId, data: Vec<f64>) {
        assert_eq!(data.len(), self.tensors[id.0].data.len());
        self.tensors[id.0].data = data;
    }

    /// Binds every parameter onto the tape as a differentiable leaf.
    pub fn bind_all(&self, tape: &mut Tape) -> Bound {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        Bound { vars }
    }
}

/// Tape variables for every parameter of one forward pass.
pub struct Bound {
    vars: Vec<VarId>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> VarId {
        self.vars[id.0]
    }

    /// Copies each parameter's accumulated gradient out of the tape.
    pub fn collect_grads(&self, tape: &Tape) -> Vec<Option<Vec<f64>>> {
        self.vars.iter().map(|&v| tape.grad(v).map(|g| g.to_vec())).collect()
    }
}

// ── Initializers ────────────────────────────────────────────────────────

pub fn xavier_uniform(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("xavier shape")
}

/// N(0, std²) truncated at ±2 std, used for learnable tokens and memory.
pub fn truncated_normal(rng: &mut ChaCha20Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let z = standard_normal(rng);
        if z.abs() <= 2.0 {
            data.push(z * std);
        }
    }
    Tensor::new(shape.to_vec(), data).expect("trunc normal shape")
}

pub fn normal(rng: &mut ChaCha20Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| standard_normal(rng) * std).collect();
    Tensor::new(shape.to_vec(), data).expect("normal shape")
}

pub fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ── Parameter bundles ───────────────────────────────────────────────────

/// y = xW + b with W ∈ [in, out].
#[derive(Clone, Copy)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let w = store.register(format!("{prefix}.w"), xavier_uniform(rng, fan_in, fan_out));
        let b = store.register(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: VarId) -> Result<VarId, TensorError> {
        let wx = tape.matmul(x, bound.var(self.w))?;
        tape.add(wx, bound.var(self.b))
    }
}

#[derive(Clone, Copy)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d: usize) -> Self {
        let gamma = store.register(
            format!("{prefix}.gamma"),
            Tensor::new(vec![d], vec![1.0; d]).expect("gamma"),
        );
        let beta = store.register(format!("{prefix}.beta"), Tensor::zeros(&[d]));
        Self { gamma, beta }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: VarId) -> Result<VarId, TensorError> {
        tape.layer_norm(x, bound.var(self.gamma), bound.var(self.beta), LN_EPS)
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Projection weights for multi-head attention.
#[derive(Clone, Copy)]
pub struct MhaParams {
    pub wq: LinearParams,
    pub wk: LinearParams,
    pub wv: LinearParams,
    pub wo: LinearParams,
    pub heads: usize,
}

impl MhaParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        d: usize,
        heads: usize,
    ) -> Self {
        Self {
            wq: LinearParams::init(store, rng, &format!("{prefix}.wq"), d, d),
            wk: LinearParams::init(store, rng, &format!("{prefix}.wk"), d, d),
            wv: LinearParams::init(store, rng, &format!("{prefix}.wv"), d, d),
            wo: LinearParams::init(store, rng, &format!("{prefix}.wo"), d, d),
            heads,
        }
    }
}

/// Scaled dot-product multi-head attention with an optional additive mask and
/// optional rotary encoding of queries and keys.
///
/// `q`: [.., Lq, d], `k`/`v`: [.., Lk, d] sharing leading batch axes. The mask
/// is [Lq, Lk] additive (0 allowed, −∞ blocked).
pub fn multi_head_attention(
    tape: &mut Tape,
    bound: &Bound,
    params: &MhaParams,
    q: VarId,
    k: VarId,
    v: VarId,
    mask: Option<&Tensor>,
    rope_theta: Option<f64>,
) -> Result<VarId, TensorError> {
    let d = *tape.shape(q).last().expect("q rank");
    let h = params.heads;
    if d % h != 0 {
        return Err(TensorError::Dimension(format!(
            "model dim {d} not divisible by {h} heads"
        )));
    }
    let dk = d / h;
    let scale = 1.0 / (dk as f64).sqrt();

    let qp = params.wq.forward(tape, bound, q)?;
    let kp = params.wk.forward(tape, bound, k)?;
    let vp = params.wv.forward(tape, bound, v)?;

    let mut qh = split_heads(tape, qp, h)?;
    let mut kh = split_heads(tape, kp, h)?;
    let vh = split_heads(tape, vp, h)?;
    if let Some(theta) = rope_theta {
        qh = tape.rope(qh, theta)?;
        kh = tape.rope(kh, theta)?;
    }

    let kt = tape.transpose_last(kh)?;
    let logits = tape.matmul(qh, kt)?;
    let logits = tape.scale(logits, scale)?;
    let weights = tape.softmax_masked(logits, mask)?;
    let ctx = tape.matmul(weights, vh)?;
    let merged = merge_heads(tape, ctx)?;
    params.wo.forward(tape, bound, merged)
}

/// [.., L, d] -> [.., h, L, d/h]
pub fn split_heads(tape: &mut Tape, x: VarId, h: usize) -> Result<VarId, TensorError> {
    let shape = tape.shape(x).to_vec();
    let rank = shape.len();
    let (l, d) = (shape[rank - 2], shape[rank - 1]);
    let dk = d / h;
    let mut with_heads = shape[..rank - 2].to_vec();
    with_heads.extend([l, h, dk]);
    let x = tape.reshape(x, with_heads)?;
    // swap L and h
    let rank = rank + 1;
    let mut axes: Vec<usize> = (0..rank).collect();
    axes.swap(rank - 3, rank - 2);
    tape.permute(x, &axes)
}

/// [.., h, L, dk] -> [.., L, h*dk]
pub fn merge_heads(tape: &mut Tape, x: VarId) -> Result<VarId, TensorError> {
    let shape = tape.shape(x).to_vec();
    let rank = shape.len();
    let (h, l, dk) = (shape[rank - 3], shape[rank - 2], shape[rank - 1]);
    let mut axes: Vec<usize> = (0..rank).collect();
    axes.swap(rank - 3, rank - 2);
    let x = tape.permute(x, &axes)?;
    let mut out_shape = shape[..rank - 3].to_vec();
    out_shape.extend([l, h * dk]);
    tape.reshape(x, out_shape)
}

/// Two-layer GELU feed-forward block: Linear → GELU → Linear.
#[derive(Clone, Copy)]
pub struct FfnParams {
    pub lin1: LinearParams,
    pub lin2: LinearParams,
}

impl FfnParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
    ) -> Self {
        Self {
            lin1: LinearParams::init(store, rng, &format!("{prefix}.lin1"), d_in, d_hidden),
            lin2: LinearParams::init(store, rng, &format!("{prefix}.lin2"), d_hidden, d_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: VarId) -> Result<VarId, TensorError> {
        let h = self.lin1.forward(tape, bound, x)?;
        let h = tape.gelu(h)?;
        self.lin2.forward(tape, bound, h)
    }
}

/// Sinusoidal positional encodings for `len` positions of width `d`.
pub fn sinusoidal_pe(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let pair = i / 2;
            let rate = 10000f64.powf(-2.0 * pair as f64 / d as f64);
            let angle = pos as f64 * rate;
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![len, d], data).expect("pe shape")
}
