//! Reverse-mode autodiff on a linear tape.
//!
//! Every forward op appends one node recording its inputs and a backward
//! closure. Nodes are created in topological order, so the backward pass is a
//! single reverse sweep. Values are plain [`Tensor`]s; gradients accumulate in
//! per-node buffers and are read back for leaves after [`Tape::backward`].

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::TensorError;
use crate::tensor::{broadcast_shapes, reduce_broadcast_grad, strides_of, BroadcastMap, Tensor};

pub type VarId = usize;

/// Context handed to a node's backward closure.
pub struct BackCtx<'a> {
    pub grad_out: &'a [f64],
    pub out: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    /// Whether each input needs a gradient at all.
    pub needs: &'a [bool],
}

type BackwardFn = Box<dyn Fn(&BackCtx<'_>) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Tensor,
    inputs: Vec<VarId>,
    backward: Option<BackwardFn>,
}

/// Records forward operations and replays them in reverse for gradients.
pub struct Tape {
    nodes: Vec<Node>,
    ran_backward: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

static LOG_CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), ran_backward: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        &self.nodes[id].value.shape
    }

    pub fn grad(&self, id: VarId) -> Option<&[f64]> {
        self.nodes[id].value.grad.as_deref()
    }

    fn push(&mut self, value: Tensor, inputs: Vec<VarId>, backward: Option<BackwardFn>) -> VarId {
        self.nodes.push(Node { value, inputs, backward });
        self.nodes.len() - 1
    }

    /// Inserts a value that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> VarId {
        t.requires_grad = false;
        t.grad = None;
        self.push(t, vec![], None)
    }

    /// Inserts a differentiable leaf (a parameter or input under test).
    pub fn leaf(&mut self, mut t: Tensor) -> VarId {
        t.requires_grad = true;
        t.grad = None;
        self.push(t, vec![], None)
    }

    fn any_requires(&self, ids: &[VarId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].value.requires_grad)
    }

    fn push_op(
        &mut self,
        op: &'static str,
        mut value: Tensor,
        inputs: Vec<VarId>,
        backward: BackwardFn,
    ) -> Result<VarId, TensorError> {
        value.assert_finite(op)?;
        value.requires_grad = self.any_requires(&inputs);
        let backward = if value.requires_grad { Some(backward) } else { None };
        Ok(self.push(value, inputs, backward))
    }

    /// Runs the reverse sweep from a scalar loss, accumulating gradients on
    /// every node that requires them.
    pub fn backward(&mut self, loss: VarId) -> Result<(), TensorError> {
        if self.nodes.is_empty() || loss >= self.nodes.len() {
            return Err(TensorError::State(
                "backward called before any forward computation".into(),
            ));
        }
        if self.ran_backward {
            return Err(TensorError::State("backward already ran on this tape".into()));
        }
        let loss_node = &self.nodes[loss].value;
        if !loss_node.is_scalar() {
            return Err(TensorError::Dimension(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.shape
            )));
        }
        self.ran_backward = true;
        if !self.nodes[loss].value.requires_grad {
            return Ok(());
        }
        *self.nodes[loss].value.grad_mut() = vec![1.0];

        for id in (0..=loss).rev() {
            if !self.nodes[id].value.requires_grad || self.nodes[id].value.grad.is_none() {
                continue;
            }
            if self.nodes[id].backward.is_none() {
                continue; // leaf
            }
            let input_ids = self.nodes[id].inputs.clone();
            let needs: Vec<bool> =
                input_ids.iter().map(|&i| self.nodes[i].value.requires_grad).collect();
            let grads = {
                let node = &self.nodes[id];
                let ctx = BackCtx {
                    grad_out: node.value.grad.as_deref().expect("grad present"),
                    out: &node.value,
                    inputs: input_ids.iter().map(|&i| &self.nodes[i].value).collect(),
                    needs: &needs,
                };
                (node.backward.as_ref().expect("backward present"))(&ctx)
            };
            debug_assert_eq!(grads.len(), input_ids.len());
            for (k, grad) in grads.into_iter().enumerate() {
                let Some(grad) = grad else { continue };
                let target = &mut self.nodes[input_ids[k]].value;
                if !target.requires_grad {
                    continue;
                }
                debug_assert_eq!(grad.len(), target.data.len());
                let buf = target.grad_mut();
                for (b, g) in buf.iter_mut().zip(grad.iter()) {
                    *b += *g;
                }
            }
        }
        Ok(())
    }

    // ── Elementwise / broadcasting ops ──────────────────────────────────

    fn broadcast_binary(
        &mut self,
        op: &'static str,
        a: VarId,
        b: VarId,
        f: impl Fn(f64, f64) -> f64,
        backward: BackwardFn,
    ) -> Result<VarId, TensorError> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let out_shape = broadcast_shapes(&va.shape, &vb.shape)?;
        let n: usize = out_shape.iter().product();
        let mut data = vec![0.0; n];
        if va.shape == out_shape && vb.shape == out_shape {
            for i in 0..n {
                data[i] = f(va.data[i], vb.data[i]);
            }
        } else {
            let ma = BroadcastMap::new(&va.shape, &out_shape);
            let mb = BroadcastMap::new(&vb.shape, &out_shape);
            for (i, slot) in data.iter_mut().enumerate() {
                *slot = f(va.data[ma.map(i)], vb.data[mb.map(i)]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        self.push_op(op, value, vec![a, b], backward)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.broadcast_binary(
            "add",
            a,
            b,
            |x, y| x + y,
            Box::new(|ctx| {
                let mut out = Vec::with_capacity(2);
                for k in 0..2 {
                    out.push(ctx.needs[k].then(|| {
                        reduce_broadcast_grad(ctx.grad_out, &ctx.out.shape, &ctx.inputs[k].shape)
                    }));
                }
                out
            }),
        )
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.broadcast_binary(
            "sub",
            a,
            b,
            |x, y| x - y,
            Box::new(|ctx| {
                let ga = ctx.needs[0].then(|| {
                    reduce_broadcast_grad(ctx.grad_out, &ctx.out.shape, &ctx.inputs[0].shape)
                });
                let gb = ctx.needs[1].then(|| {
                    let mut g =
                        reduce_broadcast_grad(ctx.grad_out, &ctx.out.shape, &ctx.inputs[1].shape);
                    g.iter_mut().for_each(|v| *v = -*v);
                    g
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.broadcast_binary(
            "mul",
            a,
            b,
            |x, y| x * y,
            Box::new(|ctx| {
                let out_shape = &ctx.out.shape;
                let n = ctx.grad_out.len();
                let mut grads = Vec::with_capacity(2);
                for (k, other) in [(0usize, 1usize), (1, 0)] {
                    grads.push(ctx.needs[k].then(|| {
                        let mo = BroadcastMap::new(&ctx.inputs[other].shape, out_shape);
                        let mut scaled = vec![0.0; n];
                        for i in 0..n {
                            scaled[i] = ctx.grad_out[i] * ctx.inputs[other].data[mo.map(i)];
                        }
                        reduce_broadcast_grad(&scaled, out_shape, &ctx.inputs[k].shape)
                    }));
                }
                grads
            }),
        )
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> Result<VarId, TensorError> {
        let va = &self.nodes[a].value;
        let data: Vec<f64> = va.data.iter().map(|x| x * c).collect();
        let value = Tensor::new(va.shape.clone(), data)?;
        self.push_op(
            "scale",
            value,
            vec![a],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| ctx.grad_out.iter().map(|g| g * c).collect())]
            }),
        )
    }

    // ── Matrix multiply ─────────────────────────────────────────────────

    /// Batched matmul with numpy-style broadcasting over leading axes.
    /// Zero entries of the left operand are skipped so that exactly-masked
    /// attention weights contribute nothing, bit for bit.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.rank() < 2 || vb.rank() < 2 {
            return Err(TensorError::Dimension(format!(
                "matmul needs rank >= 2, got {:?} x {:?}",
                va.shape, vb.shape
            )));
        }
        let (p, q) = (va.shape[va.rank() - 2], va.shape[va.rank() - 1]);
        let (q2, r) = (vb.shape[vb.rank() - 2], vb.shape[vb.rank() - 1]);
        if q != q2 {
            return Err(TensorError::Dimension(format!(
                "matmul inner extents differ: {:?} x {:?}",
                va.shape, vb.shape
            )));
        }
        let batch_a = &va.shape[..va.rank() - 2];
        let batch_b = &vb.shape[..vb.rank() - 2];
        let batch = broadcast_shapes(batch_a, batch_b)?;
        let n_batch: usize = batch.iter().product();
        let map_a = BroadcastMap::new(batch_a, &batch);
        let map_b = BroadcastMap::new(batch_b, &batch);

        let mut out_shape = batch.clone();
        out_shape.push(p);
        out_shape.push(r);
        let mut data = vec![0.0; n_batch * p * r];
        for ib in 0..n_batch {
            let ao = map_a.map(ib) * p * q;
            let bo = map_b.map(ib) * q * r;
            let oo = ib * p * r;
            matmul_kernel(&va.data[ao..ao + p * q], &vb.data[bo..bo + q * r], &mut data[oo..oo + p * r], p, q, r);
        }
        let value = Tensor::new(out_shape, data)?;

        let (pb, qb, rb) = (p, q, r);
        let batch_c = batch.clone();
        self.push_op(
            "matmul",
            value,
            vec![a, b],
            Box::new(move |ctx| {
                let (p, q, r) = (pb, qb, rb);
                let n_batch: usize = batch_c.iter().product();
                let a_t = ctx.inputs[0];
                let b_t = ctx.inputs[1];
                let map_a = BroadcastMap::new(&a_t.shape[..a_t.rank() - 2], &batch_c);
                let map_b = BroadcastMap::new(&b_t.shape[..b_t.rank() - 2], &batch_c);
                let ga = ctx.needs[0].then(|| {
                    let mut g = vec![0.0; a_t.data.len()];
                    for ib in 0..n_batch {
                        let ao = map_a.map(ib) * p * q;
                        let bo = map_b.map(ib) * q * r;
                        let oo = ib * p * r;
                        // dA[i,k] = sum_j dC[i,j] * B[k,j]
                        for i in 0..p {
                            let grow = &ctx.grad_out[oo + i * r..oo + i * r + r];
                            let arow = &mut g[ao + i * q..ao + i * q + q];
                            for (k, slot) in arow.iter_mut().enumerate() {
                                let brow = &b_t.data[bo + k * r..bo + k * r + r];
                                let mut acc = 0.0;
                                for j in 0..r {
                                    acc += grow[j] * brow[j];
                                }
                                *slot += acc;
                            }
                        }
                    }
                    g
                });
                let gb = ctx.needs[1].then(|| {
                    let mut g = vec![0.0; b_t.data.len()];
                    for ib in 0..n_batch {
                        let ao = map_a.map(ib) * p * q;
                        let bo = map_b.map(ib) * q * r;
                        let oo = ib * p * r;
                        // dB[k,j] = sum_i A[i,k] * dC[i,j]
                        for i in 0..p {
                            let grow = &ctx.grad_out[oo + i * r..oo + i * r + r];
                            for k in 0..q {
                                let av = a_t.data[ao + i * q + k];
                                if av != 0.0 {
                                    let brow = &mut g[bo + k * r..bo + k * r + r];
                                    for j in 0..r {
                                        brow[j] += av * grow[j];
                                    }
                                }
                            }
                        }
                    }
                    g
                });
                vec![ga, gb]
            }),
        )
    }

    // ── Shape ops ───────────────────────────────────────────────────────

    pub fn reshape(&mut self, a: VarId, shape: Vec<usize>) -> Result<VarId, TensorError> {
        let va = &self.nodes[a].value;
        let n: usize = shape.iter().product();
        if n != va.data.len() {
            return Err(TensorError::Dimension(format!(
                "reshape {:?} -> {:?} changes element count",
                va.shape, shape
            )));
        }
        let value = Tensor::new(shape, va.data.clone())?;
        self.push_op(
            "reshape",
            value,
            vec![a],
            Box::new(|ctx| vec![ctx.needs[0].then(|| ctx.grad_out.to_vec())]),
        )
    }

    pub fn permute(&mut self, a: VarId, axes: &[usize]) -> Result<VarId, TensorError> {
        let va = &self.nodes[a].value;
        let rank = va.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&ax| ax >= rank || std::mem::replace(&mut seen[ax], true)) {
            return Err(TensorError::Dimension(format!(
                "invalid permutation {axes:?} for rank {rank}"
            )));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&ax| va.shape[ax]).collect();
        let data = permute_data(&va.data, &va.shape, axes);
        let value = Tensor::new(out_shape.clone(), data)?;
        let axes_owned = axes.to_vec();
        self.push_op(
            "permute",
            value,
            vec![a],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    let mut inverse = vec![0usize; axes_owned.len()];
                    for (i, &ax) in axes_owned.iter().enumerate() {
                        inverse[ax] = i;
                    }
                    permute_data(ctx.grad_out, &ctx.out.shape, &inverse)
                })]
            }),
        )
    }

    /// Swap the two trailing axes.
    pub fn transpose_last(&mut self, a: VarId) -> Result<VarId, TensorError> {
        let rank = self.nodes[a].value.rank();
        if rank < 2 {
            return Err(TensorError::Dimension("transpose needs rank >= 2".into()));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(a, &axes)
    }

    pub fn slice(&mut self, a: VarId, axis: usize, start: usize, len: usize) -> Result<VarId, TensorError> {
        let va = &self.nodes[a].value;
        let rank = va.rank();
        if axis >= rank || start + len > va.shape[axis] {
            return Err(TensorError::Dimension(format!(
                "slice [{start}, {}) on axis {axis} of shape {:?}",
                start + len,
                va.shape
            )));
        }
        let dim = va.shape[axis];
        let inner: usize = va.shape[axis + 1..].iter().product();
        let outer: usize = va.shape[..axis].iter().product();
        let mut out_shape = va.shape.clone();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = (o * dim + start) * inner;
            let dst = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&va.data[src..src + len * inner]);
        }
        let value = Tensor::new(out_shape, data)?;
        self.push_op(
            "slice",
            value,
            vec![a],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    let mut g = vec![0.0; ctx.inputs[0].data.len()];
                    for o in 0..outer {
                        let dst = (o * dim + start) * inner;
                        let src = o * len * inner;
                        g[dst..dst + len * inner].copy_from_slice(&ctx.grad_out[src..src + len * inner]);
                    }
                    g
                })]
            }),
        )
    }

    pub fn concat(&mut self, axis: usize, parts: &[VarId]) -> Result<VarId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Dimension("concat of zero tensors".into()));
        }
        let first = &self.nodes[parts[0]].value;
        let rank = first.rank();
        if axis >= rank {
            return Err(TensorError::Dimension(format!("concat axis {axis} out of range")));
        }
        let mut out_shape = first.shape.clone();
        let mut total = 0usize;
        for &p in parts {
            let v = &self.nodes[p].value;
            if v.rank() != rank {
                return Err(TensorError::Dimension("concat rank mismatch".into()));
            }
            for (ax, (&da, &db)) in v.shape.iter().zip(first.shape.iter()).enumerate() {
                if ax != axis && da != db {
                    return Err(TensorError::Dimension(format!(
                        "concat shape mismatch on axis {ax}: {:?} vs {:?}",
                        v.shape, first.shape
                    )));
                }
            }
            total += v.shape[axis];
        }
        out_shape[axis] = total;
        let inner: usize = first.shape[axis + 1..].iter().product();
        let outer: usize = first.shape[..axis].iter().product();
        let mut data = vec![0.0; outer * total * inner];
        let mut offset = 0usize;
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.nodes[p].value;
            let len = v.shape[axis];
            for o in 0..outer {
                let src = o * len * inner;
                let dst = (o * total + offset) * inner;
                data[dst..dst + len * inner].copy_from_slice(&v.data[src..src + len * inner]);
            }
            offset += len;
            sizes.push(len);
        }
        let value = Tensor::new(out_shape, data)?;
        self.push_op(
            "concat",
            value,
            parts.to_vec(),
            Box::new(move |ctx| {
                let mut grads = Vec::with_capacity(sizes.len());
                let mut offset = 0usize;
                for (k, &len) in sizes.iter().enumerate() {
                    grads.push(ctx.needs[k].then(|| {
                        let mut g = vec![0.0; outer * len * inner];
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            g[dst..dst + len * inner]
                                .copy_from_slice(&ctx.grad_out[src..src + len * inner]);
                        }
                        g
                    }));
                    offset += len;
                }
                grads
            }),
        )
    }

    // ── Neural primitives ───────────────────────────────────────────────

    /// Row-stochastic softmax over the last axis with an optional additive
    /// mask of shape `[Lq, Lk]` (entries 0 or −∞) broadcast over leading axes.
    /// Masked positions come out exactly 0; a fully masked row is an error.
    pub fn softmax_masked(&mut self, x: VarId, mask: Option<&Tensor>) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let rank = vx.rank();
        if rank < 1 {
            return Err(TensorError::Dimension("softmax on rank-0 tensor".into()));
        }
        let lk = vx.shape[rank - 1];
        let lq = if rank >= 2 { vx.shape[rank - 2] } else { 1 };
        if let Some(m) = mask {
            if m.shape != [lq, lk] {
                return Err(TensorError::Dimension(format!(
                    "mask shape {:?} does not match trailing dims [{lq}, {lk}]",
                    m.shape
                )));
            }
        }
        let n_rows = vx.data.len() / lk;
        let mut data = vec![0.0; vx.data.len()];
        for row in 0..n_rows {
            let base = row * lk;
            let mrow = row % lq; // mask row for this query position
            let mut max = f64::NEG_INFINITY;
            for k in 0..lk {
                let mv = mask.map_or(0.0, |m| m.data[mrow * lk + k]);
                if mv == 0.0 {
                    max = max.max(vx.data[base + k]);
                } else if mv != f64::NEG_INFINITY {
                    return Err(TensorError::InvalidMaskEntry { value: mv });
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::FullyMaskedRow { row: mrow });
            }
            let mut sum = 0.0;
            for k in 0..lk {
                let mv = mask.map_or(0.0, |m| m.data[mrow * lk + k]);
                let e = if mv == 0.0 { (vx.data[base + k] - max).exp() } else { 0.0 };
                data[base + k] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            for k in 0..lk {
                data[base + k] *= inv;
            }
        }
        let value = Tensor::new(vx.shape.clone(), data)?;
        self.push_op(
            "softmax_masked",
            value,
            vec![x],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    let y = &ctx.out.data;
                    let mut g = vec![0.0; y.len()];
                    let n_rows = y.len() / lk;
                    for row in 0..n_rows {
                        let base = row * lk;
                        let mut dot = 0.0;
                        for k in 0..lk {
                            dot += ctx.grad_out[base + k] * y[base + k];
                        }
                        for k in 0..lk {
                            g[base + k] = y[base + k] * (ctx.grad_out[base + k] - dot);
                        }
                    }
                    g
                })]
            }),
        )
    }

    /// Plain softmax over the last axis.
    pub fn softmax(&mut self, x: VarId) -> Result<VarId, TensorError> {
        self.softmax_masked(x, None)
    }

    /// LayerNorm over the last axis with learnable affine parameters.
    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId, eps: f64) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let rank = vx.rank();
        let d = *vx.shape.last().unwrap_or(&0);
        if rank < 1 || d == 0 {
            return Err(TensorError::Dimension("layer_norm needs a non-empty last axis".into()));
        }
        let vg = &self.nodes[gamma].value;
        let vb = &self.nodes[beta].value;
        if vg.shape != [d] || vb.shape != [d] {
            return Err(TensorError::Dimension(format!(
                "layer_norm affine shapes {:?}/{:?} must be [{d}]",
                vg.shape, vb.shape
            )));
        }
        let n_rows = vx.data.len() / d;
        let mut data = vec![0.0; vx.data.len()];
        let mut mus = vec![0.0; n_rows];
        let mut rstds = vec![0.0; n_rows];
        for row in 0..n_rows {
            let xs = &vx.data[row * d..(row + 1) * d];
            let mu = xs.iter().sum::<f64>() / d as f64;
            let var = xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            mus[row] = mu;
            rstds[row] = rstd;
            for k in 0..d {
                let xhat = (xs[k] - mu) * rstd;
                data[row * d + k] = vg.data[k] * xhat + vb.data[k];
            }
        }
        let value = Tensor::new(vx.shape.clone(), data)?;
        self.push_op(
            "layer_norm",
            value,
            vec![x, gamma, beta],
            Box::new(move |ctx| {
                let xv = &ctx.inputs[0].data;
                let gv = &ctx.inputs[1].data;
                let n_rows = xv.len() / d;
                let mut gx = ctx.needs[0].then(|| vec![0.0; xv.len()]);
                let mut gg = ctx.needs[1].then(|| vec![0.0; d]);
                let mut gb = ctx.needs[2].then(|| vec![0.0; d]);
                for row in 0..n_rows {
                    let base = row * d;
                    let (mu, rstd) = (mus[row], rstds[row]);
                    let go = &ctx.grad_out[base..base + d];
                    if let Some(gg) = gg.as_mut() {
                        for k in 0..d {
                            gg[k] += go[k] * (xv[base + k] - mu) * rstd;
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for k in 0..d {
                            gb[k] += go[k];
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for k in 0..d {
                            let xhat = (xv[base + k] - mu) * rstd;
                            let dxhat = go[k] * gv[k];
                            mean_dxhat += dxhat;
                            mean_dxhat_xhat += dxhat * xhat;
                        }
                        mean_dxhat /= d as f64;
                        mean_dxhat_xhat /= d as f64;
                        for k in 0..d {
                            let xhat = (xv[base + k] - mu) * rstd;
                            let dxhat = go[k] * gv[k];
                            gx[base + k] = rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                        }
                    }
                }
                vec![gx, gg, gb]
            }),
        )
    }

    /// Exact-erf GELU: x · Φ(x) with the Gaussian CDF.
    pub fn gelu(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let data: Vec<f64> = vx.data.iter().map(|&v| v * gauss_cdf(v)).collect();
        let value = Tensor::new(vx.shape.clone(), data)?;
        self.push_op(
            "gelu",
            value,
            vec![x],
            Box::new(|ctx| {
                vec![ctx.needs[0].then(|| {
                    ctx.inputs[0]
                        .data
                        .iter()
                        .zip(ctx.grad_out.iter())
                        .map(|(&v, &g)| g * (gauss_cdf(v) + v * gauss_pdf(v)))
                        .collect()
                })]
            }),
        )
    }

    /// Rotary positional encoding over axis −2 positions, rotating
    /// consecutive coordinate pairs of the last axis.
    pub fn rope(&mut self, x: VarId, theta: f64) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let rank = vx.rank();
        if rank < 2 {
            return Err(TensorError::Dimension("rope needs rank >= 2".into()));
        }
        let dk = vx.shape[rank - 1];
        let l = vx.shape[rank - 2];
        if dk % 2 != 0 {
            return Err(TensorError::Dimension(format!("rope head dim {dk} must be even")));
        }
        let pairs = dk / 2;
        let mut cos = vec![0.0; l * pairs];
        let mut sin = vec![0.0; l * pairs];
        for pos in 0..l {
            for p in 0..pairs {
                let freq = theta.powf(-2.0 * p as f64 / dk as f64);
                let angle = pos as f64 * freq;
                cos[pos * pairs + p] = angle.cos();
                sin[pos * pairs + p] = angle.sin();
            }
        }
        let n_seq = vx.data.len() / (l * dk);
        let mut data = vec![0.0; vx.data.len()];
        for s in 0..n_seq {
            for pos in 0..l {
                let base = (s * l + pos) * dk;
                for p in 0..pairs {
                    let (c, sn) = (cos[pos * pairs + p], sin[pos * pairs + p]);
                    let (a, b) = (vx.data[base + 2 * p], vx.data[base + 2 * p + 1]);
                    data[base + 2 * p] = a * c - b * sn;
                    data[base + 2 * p + 1] = a * sn + b * c;
                }
            }
        }
        let value = Tensor::new(vx.shape.clone(), data)?;
        self.push_op(
            "rope",
            value,
            vec![x],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    let mut g = vec![0.0; ctx.grad_out.len()];
                    let n_seq = g.len() / (l * dk);
                    for s in 0..n_seq {
                        for pos in 0..l {
                            let base = (s * l + pos) * dk;
                            for p in 0..pairs {
                                let (c, sn) = (cos[pos * pairs + p], sin[pos * pairs + p]);
                                let (ga, gb) =
                                    (ctx.grad_out[base + 2 * p], ctx.grad_out[base + 2 * p + 1]);
                                g[base + 2 * p] = ga * c + gb * sn;
                                g[base + 2 * p + 1] = -ga * sn + gb * c;
                            }
                        }
                    }
                    g
                })]
            }),
        )
    }

    pub fn sum_all(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let total: f64 = vx.data.iter().sum();
        let value = Tensor::scalar(total);
        self.push_op(
            "sum_all",
            value,
            vec![x],
            Box::new(|ctx| {
                vec![ctx.needs[0].then(|| vec![ctx.grad_out[0]; ctx.inputs[0].data.len()])]
            }),
        )
    }

    pub fn sum_last_axis(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let rank = vx.rank();
        let d = *vx.shape.last().unwrap_or(&0);
        if rank < 1 || d == 0 {
            return Err(TensorError::Dimension("sum_last_axis needs a last axis".into()));
        }
        let out_shape: Vec<usize> =
            if rank == 1 { vec![1] } else { vx.shape[..rank - 1].to_vec() };
        let n_rows = vx.data.len() / d;
        let mut data = vec![0.0; n_rows];
        for row in 0..n_rows {
            data[row] = vx.data[row * d..(row + 1) * d].iter().sum();
        }
        let value = Tensor::new(out_shape, data)?;
        self.push_op(
            "sum_last_axis",
            value,
            vec![x],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    let mut g = vec![0.0; ctx.inputs[0].data.len()];
                    for (row, &go) in ctx.grad_out.iter().enumerate() {
                        g[row * d..(row + 1) * d].iter_mut().for_each(|v| *v = go);
                    }
                    g
                })]
            }),
        )
    }

    /// Natural log with a floor; values below the floor are clamped (grad 0)
    /// and a warning is emitted once per process.
    pub fn ln_clamped(&mut self, x: VarId, floor: f64) -> Result<VarId, TensorError> {
        let vx = &self.nodes[x].value;
        let mut clamped = false;
        let data: Vec<f64> = vx
            .data
            .iter()
            .map(|&v| {
                if v < floor {
                    clamped = true;
                    floor.ln()
                } else {
                    v.ln()
                }
            })
            .collect();
        if clamped && !LOG_CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            eprintln!("warning: probability clamped to {floor} inside log-likelihood");
        }
        let value = Tensor::new(vx.shape.clone(), data)?;
        self.push_op(
            "ln_clamped",
            value,
            vec![x],
            Box::new(move |ctx| {
                vec![ctx.needs[0].then(|| {
                    ctx.inputs[0]
                        .data
                        .iter()
                        .zip(ctx.grad_out.iter())
                        .map(|(&v, &g)| if v < floor { 0.0 } else { g / v })
                        .collect()
                })]
            }),
        )
    }
}

/// i-k-j matmul kernel; skips zero left entries so exact-0 attention weights
/// leave the accumulator untouched bit for bit.
fn matmul_kernel(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let av = a[i * q + k];
            if av != 0.0 {
                let brow = &b[k * r..(k + 1) * r];
                for j in 0..r {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
    let mut out = vec![0.0; data.len()];
    let mut coords = vec![0usize; rank];
    for (flat_out, slot) in out.iter_mut().enumerate() {
        let mut rem = flat_out;
        for (i, dim) in out_shape.iter().enumerate().rev() {
            coords[i] = rem % dim;
            rem /= dim;
        }
        let mut flat_in = 0usize;
        for (i, &ax) in axes.iter().enumerate() {
            flat_in += coords[i] * in_strides[ax];
        }
        *slot = data[flat_in];
    }
    out
}

pub(crate) fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn rand_tensor(rng: &mut ChaCha20Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    /// Central-difference gradient check of a tape program against its
    /// analytic gradients. `build` maps leaf tensors to a scalar loss.
    fn gradcheck(inputs: &[Tensor], build: impl Fn(&mut Tape, &[VarId]) -> VarId) {
        let mut tape = Tape::new();
        let vars: Vec<VarId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> =
            vars.iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect();

        let h = 1e-5;
        for (which, input) in inputs.iter().enumerate() {
            for idx in 0..input.data.len() {
                let eval = |delta: f64| -> f64 {
                    let mut tape = Tape::new();
                    let vars: Vec<VarId> = inputs
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let mut t = t.clone();
                            if i == which {
                                t.data[idx] += delta;
                            }
                            tape.leaf(t)
                        })
                        .collect();
                    let loss = build(&mut tape, &vars);
                    tape.value(loss).data[0]
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[which][idx];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a - numeric).abs() / denom <= 1e-4,
                    "grad mismatch input {which} idx {idx}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = tape.constant(t(&[2, 2], &[5., 6., 7., 8.]));
        let out = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(out).data, vec![5., 6., 7., 8.]);
    }

    #[test]
    fn matmul_hand_case() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 2], &[1., 2.]));
        let b = tape.constant(t(&[2, 1], &[3., 4.]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data, vec![11.]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let a = rand_tensor(&mut rng, &[4, 5]);
        let b = rand_tensor(&mut rng, &[5, 3]);
        // independent triple-loop oracle
        let mut expect = vec![0.0; 12];
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += a.data[i * 5 + k] * b.data[k * 3 + j];
                }
                expect[i * 3 + j] = acc;
            }
        }
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let out = tape.matmul(va, vb).unwrap();
        for (got, want) in tape.value(out).data.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_batch_broadcast() {
        // [2,2,3] x [3,2] broadcasts the rhs across the batch
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, &[2, 2, 3]);
        let b = rand_tensor(&mut rng, &[3, 2]);
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let out = tape.matmul(va, vb).unwrap();
        assert_eq!(tape.shape(out), &[2, 2, 2]);
        for batch in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += a.data[batch * 6 + i * 3 + k] * b.data[k * 2 + j];
                    }
                    let got = tape.value(out).data[batch * 4 + i * 2 + j];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn softmax_uniform_when_equal() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[4, 4], &[1.0; 16]));
        let mask = Tensor::zeros(&[4, 4]);
        let out = tape.softmax_masked(x, Some(&mask)).unwrap();
        for v in &tape.value(out).data {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_single_survivor() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1., 2.]));
        let mask = t(&[1, 2], &[0.0, f64::NEG_INFINITY]);
        let out = tape.softmax_masked(x, Some(&mask)).unwrap();
        assert_eq!(tape.value(out).data, vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_matches_direct_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[3, 3]);
        let mut mask = Tensor::zeros(&[3, 3]);
        // random legal mask keeping the diagonal open
        for i in 0..3 {
            for j in 0..3 {
                if i != j && rng.gen_bool(0.4) {
                    mask.data[i * 3 + j] = f64::NEG_INFINITY;
                }
            }
        }
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let out = tape.softmax_masked(vx, Some(&mask)).unwrap();
        for i in 0..3 {
            let mut exps = [0.0; 3];
            let mut sum = 0.0;
            for j in 0..3 {
                if mask.data[i * 3 + j] == 0.0 {
                    exps[j] = x.data[i * 3 + j].exp();
                    sum += exps[j];
                }
            }
            let mut row_total = 0.0;
            for j in 0..3 {
                let got = tape.value(out).data[i * 3 + j];
                assert!((got - exps[j] / sum).abs() < 1e-12);
                row_total += got;
            }
            assert!((row_total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_fully_masked_row_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[0.0; 4]));
        let mut mask = Tensor::zeros(&[2, 2]);
        mask.data[0] = f64::NEG_INFINITY;
        mask.data[1] = f64::NEG_INFINITY;
        assert!(matches!(
            tape.softmax_masked(x, Some(&mask)),
            Err(TensorError::FullyMaskedRow { row: 0 })
        ));
    }

    #[test]
    fn softmax_rejects_bad_mask_entries() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[0.0; 2]));
        let mask = t(&[1, 2], &[0.0, -3.0]);
        assert!(matches!(
            tape.softmax_masked(x, Some(&mask)),
            Err(TensorError::InvalidMaskEntry { .. })
        ));
    }

    #[test]
    fn layer_norm_constant_vector_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 4], &[3.0; 4]));
        let g = tape.constant(t(&[4], &[1.0; 4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let out = tape.layer_norm(x, g, b, LN_EPS_TEST).unwrap();
        for v in &tape.value(out).data {
            assert!(v.abs() < 1e-9);
        }
    }

    const LN_EPS_TEST: f64 = 1e-5;

    #[test]
    fn layer_norm_already_normalized() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1., -1.]));
        let g = tape.constant(t(&[2], &[1.0; 2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let out = tape.layer_norm(x, g, b, 1e-15).unwrap();
        assert!((tape.value(out).data[0] - 1.0).abs() < 1e-6);
        assert!((tape.value(out).data[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_matches_mean_var_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[1, 6]);
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let g = tape.constant(t(&[6], &[1.0; 6]));
        let b = tape.constant(Tensor::zeros(&[6]));
        let out = tape.layer_norm(vx, g, b, 1e-12).unwrap();
        let mu = x.data.iter().sum::<f64>() / 6.0;
        let var = x.data.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 6.0;
        for (got, want) in tape
            .value(out)
            .data
            .iter()
            .zip(x.data.iter().map(|v| (v - mu) / (var + 1e-12).sqrt()))
        {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn gelu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[0.0, 10.0, 1.0]));
        let out = tape.gelu(x).unwrap();
        let v = &tape.value(out).data;
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 10.0).abs() < 1e-9); // asymptote
        // gelu(1) = Phi(1) = 0.5*(1+erf(1/sqrt(2))), frozen from the erf oracle
        assert!((v[2] - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn rope_position_zero_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[1, 1, 6]);
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let out = tape.rope(vx, 100000.0).unwrap();
        assert_eq!(tape.value(out).data, x.data);
    }

    #[test]
    fn rope_preserves_pair_norms() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let x = rand_tensor(&mut rng, &[2, 5, 8]);
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let out = tape.rope(vx, 100000.0).unwrap();
        let y = &tape.value(out).data;
        for i in (0..x.data.len()).step_by(2) {
            let before = (x.data[i].powi(2) + x.data[i + 1].powi(2)).sqrt();
            let after = (y[i].powi(2) + y[i + 1].powi(2)).sqrt();
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn rope_closed_form_first_pair() {
        // position 1, pair (1, 0), frequency theta^0 = 1 → (cos 1, sin 1)
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[0., 0., 1., 0.]));
        let out = tape.rope(x, 100000.0).unwrap();
        let y = &tape.value(out).data;
        assert!((y[2] - 1f64.cos()).abs() < 1e-12);
        assert!((y[3] - 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn rope_odd_dim_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.rope(x, 10.0), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[4], &[1., 2., 3., 4.]));
        let loss = tape.sum_all(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn backward_square_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_before_forward_errors() {
        let mut tape = Tape::new();
        assert!(matches!(tape.backward(0), Err(TensorError::State(_))));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]));
        assert!(matches!(tape.backward(x), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn nonfinite_forward_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[1e200]));
        let big = tape.constant(t(&[1], &[1e200]));
        assert!(matches!(tape.mul(x, big), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn gradcheck_primitives() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[4, 2]);
        gradcheck(&[a.clone(), b.clone()], |tape, v| {
            let m = tape.matmul(v[0], v[1]).unwrap();
            tape.sum_all(m).unwrap()
        });

        let c = rand_tensor(&mut rng, &[2, 3]);
        let d = rand_tensor(&mut rng, &[3]);
        gradcheck(&[c.clone(), d.clone()], |tape, v| {
            let s = tape.add(v[0], v[1]).unwrap();
            let m = tape.mul(s, v[0]).unwrap();
            tape.sum_all(m).unwrap()
        });

        let x = rand_tensor(&mut rng, &[2, 4]);
        gradcheck(&[x.clone()], |tape, v| {
            let g = tape.gelu(v[0]).unwrap();
            tape.sum_all(g).unwrap()
        });

        let x = rand_tensor(&mut rng, &[3, 3]);
        let mut mask = Tensor::zeros(&[3, 3]);
        mask.data[1] = f64::NEG_INFINITY;
        mask.data[5] = f64::NEG_INFINITY;
        gradcheck(&[x.clone()], |tape, v| {
            let s = tape.softmax_masked(v[0], Some(&mask)).unwrap();
            let sq = tape.mul(s, s).unwrap();
            tape.sum_all(sq).unwrap()
        });

        let x = rand_tensor(&mut rng, &[2, 5]);
        let g = rand_tensor(&mut rng, &[5]);
        let bta = rand_tensor(&mut rng, &[5]);
        gradcheck(&[x, g, bta], |tape, v| {
            let ln = tape.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
            let sq = tape.mul(ln, ln).unwrap();
            tape.sum_all(sq).unwrap()
        });

        let x = rand_tensor(&mut rng, &[2, 3, 4]);
        gradcheck(&[x], |tape, v| {
            let r = tape.rope(v[0], 100.0).unwrap();
            let sq = tape.mul(r, r).unwrap();
            tape.sum_all(sq).unwrap()
        });

        let x = rand_tensor(&mut rng, &[4, 3]);
        gradcheck(&[x], |tape, v| {
            let s = tape.slice(v[0], 0, 1, 2).unwrap();
            let p = tape.permute(s, &[1, 0]).unwrap();
            let sq = tape.mul(p, p).unwrap();
            tape.sum_all(sq).unwrap()
        });

        let x = rand_tensor(&mut rng, &[2, 3]);
        let y = rand_tensor(&mut rng, &[2, 3]);
        gradcheck(&[x, y], |tape, v| {
            let c = tape.concat(0, &[v[0], v[1]]).unwrap();
            let sq = tape.mul(c, c).unwrap();
            tape.sum_all(sq).unwrap()
        });

        // positive inputs for the log
        let mut x = rand_tensor(&mut rng, &[2, 3]);
        x.data.iter_mut().for_each(|v| *v = v.abs() + 0.5);
        gradcheck(&[x], |tape, v| {
            let l = tape.ln_clamped(v[0], 1e-12).unwrap();
            let s = tape.sum_last_axis(l).unwrap();
            tape.sum_all(s).unwrap()
        });

        let x = rand_tensor(&mut rng, &[3, 2]);
        gradcheck(&[x], |tape, v| {
            let s = tape.scale(v[0], -1.7).unwrap();
            let sub = tape.sub(s, v[0]).unwrap();
            let sq = tape.mul(sub, sub).unwrap();
            tape.sum_all(sq).unwrap()
        });
    }
}
