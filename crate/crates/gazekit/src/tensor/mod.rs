//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: it provides exactly the primitives the
//! network stack needs (convolution, pooling, bilinear upsampling, batch
//! normalization, fully-connected layers, soft-argmax and a handful of
//! elementwise/reduction ops), each with an analytic backward pass.
//!
//! Tensors are immutable after construction except for gradient population
//! and explicit parameter updates between steps. A [`Graph`] is a tape of
//! recorded operations; calling [`Graph::backward`] walks the tape in exact
//! reverse order and accumulates gradients into every participating tensor.
//! Forward and backward on a single graph are single-threaded at the graph
//! level; kernels may use intra-op parallelism that is deterministic for a
//! fixed thread count.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

mod conv;
mod ops;
pub mod checkpoint;
pub mod gradcheck;

pub use ops::PoolMode;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("data length {len} does not match shape {shape:?}")]
    DataShape { shape: Vec<usize>, len: usize },
    #[error("backward was already run on this graph; build a new graph instead of reusing it")]
    BackwardConsumed,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<V> = std::result::Result<V, TensorError>;

pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::Invalid { op, msg: msg.into() }
}

/// Scalar element type of a tensor: 32- or 64-bit IEEE float.
pub trait Scalar:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    /// Dtype tag written into checkpoints ("f32" or "f64").
    const DTYPE: &'static str;
    const BYTES: usize;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// C := alpha * A(m×k) * B(k×n) + beta * C(m×n), row-major contiguous.
    ///
    /// # Safety
    /// Caller guarantees the slices hold at least m*k, k*n and m*n elements.
    unsafe fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: *const Self, b: *const Self, beta: Self, c: *mut Self);
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn maximum(self, other: Self) -> Self {
        f32::max(self, other)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }

    unsafe fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: *const Self, b: *const Self, beta: Self, c: *mut Self) {
        matrixmultiply::sgemm(m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn maximum(self, other: Self) -> Self {
        f64::max(self, other)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }

    unsafe fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: *const Self, b: *const Self, beta: Self, c: *mut Self) {
        matrixmultiply::dgemm(m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
    }
}

static NEXT_TENSOR_ID: AtomicU64 = AtomicU64::new(1);

struct TensorInner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: Cell<bool>,
}

/// N-dimensional dense array in row-major order with optional gradient tracking.
///
/// Cloning is cheap (reference-counted handle). Invariants: `product(shape) ==
/// data.len()`, and `grad`, when present, has the same length as `data`.
pub struct Tensor<T: Scalar> {
    inner: Rc<TensorInner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id,
            self.inner.shape,
            self.requires_grad()
        )
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::DataShape { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Tensor {
            inner: Rc::new(TensorInner {
                id: NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![T::zero(); numel]).expect("zeros: positive extents")
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![value; numel]).expect("full: positive extents")
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(&[1], vec![value]).expect("scalar")
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, value: bool) -> &Self {
        self.inner.requires_grad.set(value);
        self
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the raw data. Intended for parameter updates and
    /// running-statistic buffers between forward passes, not for tensors that
    /// are live inputs of a recorded graph.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.data()[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.inner.grad.borrow()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    pub(crate) fn accumulate_grad_owned(&self, delta: Vec<T>) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(&delta) {
                    *gi += *di;
                }
            }
            None => *slot = Some(delta),
        }
    }

    /// Interpret the shape as [N, C, H, W].
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(invalid(op, format!("expected a 4-d tensor, got shape {:?}", self.shape()))),
        }
    }

    /// Interpret the shape as [N, F].
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape() {
            [n, f] => Ok((n, f)),
            _ => Err(invalid(op, format!("expected a 2-d tensor, got shape {:?}", self.shape()))),
        }
    }
}

/// One recorded primitive operation: its inputs, output and backward pass.
struct Node {
    name: &'static str,
    inputs: Vec<u64>,
    output: u64,
    backward: Box<dyn Fn()>,
}

/// Tape of recorded operations in topological (execution) order.
///
/// Backward traversal visits nodes in exact reverse topological order.
/// A graph built with [`Graph::inference`] records nothing and produces
/// tensors with gradient tracking disabled.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
    backward_done: Cell<bool>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            backward_done: Cell::new(false),
            _marker: std::marker::PhantomData,
        }
    }

    /// A graph that records no operations; every op runs forward-only.
    pub fn inference() -> Self {
        Graph { recording: false, ..Self::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Names of recorded ops in execution order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.borrow().iter().map(|n| n.name).collect()
    }

    /// Register the output of an op: decides gradient tracking and records the
    /// backward closure when any input tracks gradients.
    pub(crate) fn register(
        &self,
        name: &'static str,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        backward: impl Fn() + 'static,
    ) {
        if !self.recording || !inputs.iter().any(|t| t.requires_grad()) {
            return;
        }
        output.set_requires_grad(true);
        self.nodes.borrow_mut().push(Node {
            name,
            inputs: inputs.iter().map(|t| t.id()).collect(),
            output: output.id(),
            backward: Box::new(backward),
        });
    }

    /// Reverse-mode sweep from a scalar loss. Populates `grad` on every
    /// participating tensor with `requires_grad`. A second call on the same
    /// graph is rejected: gradients never accumulate silently across sweeps.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        if self.backward_done.get() {
            return Err(TensorError::BackwardConsumed);
        }
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
        }
        self.backward_done.set(true);
        loss.accumulate_grad(&[T::one()]);
        let nodes = self.nodes.borrow();
        for node in nodes.iter().rev() {
            (node.backward)();
        }
        Ok(())
    }

    /// Edge list (input ids, output id, op name) of the recorded tape.
    pub fn edges(&self) -> Vec<(Vec<u64>, u64, &'static str)> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| (n.inputs.clone(), n.output, n.name))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        let r = Tensor::<f32>::from_vec(&[2, 3], vec![1.0; 5]);
        assert!(matches!(r, Err(TensorError::DataShape { .. })));
    }

    #[test]
    fn sum_backward_is_ones() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
        x.set_requires_grad(true);
        let s = g.sum(&x).unwrap();
        g.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn squared_sum_gradient_is_two_x() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[4], vec![1.0, -2.0, 3.0, 0.25]).unwrap();
        x.set_requires_grad(true);
        let sq = g.mul(&x, &x).unwrap();
        let s = g.sum(&sq).unwrap();
        g.backward(&s).unwrap();
        let grad = x.grad().unwrap();
        for (gi, xi) in grad.iter().zip(x.data().iter()) {
            assert!((gi - 2.0 * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn second_backward_rejected() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        x.set_requires_grad(true);
        let s = g.sum(&x).unwrap();
        g.backward(&s).unwrap();
        assert!(matches!(g.backward(&s), Err(TensorError::BackwardConsumed)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        x.set_requires_grad(true);
        let y = g.relu(&x).unwrap();
        assert!(matches!(g.backward(&y), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn non_participating_tensor_has_no_grad() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let y = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        x.set_requires_grad(true);
        y.set_requires_grad(true);
        let s = g.sum(&x).unwrap();
        g.backward(&s).unwrap();
        assert!(y.grad().is_none());
    }

    #[test]
    fn inference_graph_records_nothing() {
        let g = Graph::<f32>::inference();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        x.set_requires_grad(true);
        let y = g.relu(&x).unwrap();
        assert!(!y.requires_grad());
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn forward_replay_is_bit_identical() {
        let run = || {
            let g = Graph::<f32>::new();
            let x = Tensor::from_vec(&[1, 2, 4, 4], (0..32).map(|i| (i as f32).sin()).collect()).unwrap();
            x.set_requires_grad(true);
            let k = Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|i| (i as f32 * 0.3).cos()).collect()).unwrap();
            k.set_requires_grad(true);
            let y = g.conv2d(&x, &k, 1, 1).unwrap();
            let z = g.relu(&y).unwrap();
            let s = g.sum(&z).unwrap();
            g.backward(&s).unwrap();
            (s.item(), x.grad().unwrap(), k.grad().unwrap())
        };
        let (s1, gx1, gk1) = run();
        let (s2, gx2, gk2) = run();
        assert_eq!(s1.to_bits(), s2.to_bits());
        assert_eq!(gx1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), gx2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(gk1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), gk2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
