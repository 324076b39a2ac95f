//! Dense f64 tensor value type. All math runs at full precision; shapes are
//! row-major with numpy-style broadcasting over leading axes.

use crate::error::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Gradient buffer, populated by the tape for leaves that require it.
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data, grad: None, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n], grad: None, requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value], grad: None, requires_grad: false }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { shape: vec![r, c], data, grad: None, requires_grad: false }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Ensures a gradient buffer exists and returns it.
    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn assert_finite(&self, op: &'static str) -> Result<(), TensorError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }
}

/// Strides for a row-major layout.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Broadcast two shapes numpy-style (align right). Returns the output shape.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(TensorError::Dimension(format!(
                "cannot broadcast shapes {a:?} and {b:?}"
            )));
        };
    }
    Ok(out)
}

/// Index iterator helper: maps a flat output index to the flat index of a
/// (possibly broadcast) operand.
pub struct BroadcastMap {
    /// For each output axis: the operand's stride (0 where the operand is broadcast).
    strides: Vec<usize>,
    out_shape: Vec<usize>,
}

impl BroadcastMap {
    pub fn new(operand_shape: &[usize], out_shape: &[usize]) -> Self {
        let rank = out_shape.len();
        let pad = rank - operand_shape.len();
        let op_strides = strides_of(operand_shape);
        let mut strides = vec![0usize; rank];
        for i in 0..rank {
            if i >= pad {
                let dim = operand_shape[i - pad];
                strides[i] = if dim == 1 { 0 } else { op_strides[i - pad] };
            }
        }
        Self { strides, out_shape: out_shape.to_vec() }
    }

    /// Flat operand index for a flat output index.
    pub fn map(&self, mut flat: usize) -> usize {
        let mut idx = 0usize;
        for axis in (0..self.out_shape.len()).rev() {
            let dim = self.out_shape[axis];
            let coord = flat % dim;
            flat /= dim;
            idx += coord * self.strides[axis];
        }
        idx
    }

    /// True when the operand shape equals the output shape (identity map).
    pub fn is_identity(&self, operand_len: usize, out_len: usize) -> bool {
        operand_len == out_len && self.strides.iter().zip(&self.out_shape).all(|(s, _)| *s != 0 || false)
            || (operand_len == out_len
                && self
                    .strides
                    .iter()
                    .zip(strides_of(&self.out_shape).iter())
                    .all(|(a, b)| a == b))
    }
}

/// Sum-reduce `grad` (shaped like `out_shape`) back onto `operand_shape`.
pub fn reduce_broadcast_grad(grad: &[f64], out_shape: &[usize], operand_shape: &[usize]) -> Vec<f64> {
    let operand_len: usize = operand_shape.iter().product();
    let mut out = vec![0.0; operand_len];
    let map = BroadcastMap::new(operand_shape, out_shape);
    for (flat, g) in grad.iter().enumerate() {
        out[map.map(flat)] += *g;
    }
    out
}
