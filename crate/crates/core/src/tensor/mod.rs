//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted block of contiguous
//! row-major data. Operations on tensors that require gradients record a
//! backward rule on the result; [`Tensor::backward`] linearizes the recorded
//! graph into a [`Tape`] and sweeps it in reverse, accumulating gradients on
//! every leaf that asked for them. The graph is consumed by the sweep.

mod autograd;
pub mod counter;
mod element;
mod ops;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use autograd::{is_grad_enabled, no_grad, NoGradGuard, Tape, TapeEntry};
pub(crate) use element::gemm;
pub use element::Element;
pub use ops::{adaptive_window, LAYER_NORM_EPS};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) type BackwardFn<T> = Box<dyn FnOnce(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send>;

pub(crate) struct Node<T: Element> {
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

struct Inner<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    node: Mutex<Option<Node<T>>>,
    // set once the node's backward rule has run
    consumed: AtomicBool,
    op: &'static str,
}

/// N-dimensional dense array participating in reverse-mode differentiation.
pub struct Tensor<T: Element = f64> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("dtype", &T::NAME)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("op", &self.inner.op)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Arc<Vec<T>>,
        requires_grad: bool,
        node: Option<Node<T>>,
        op: &'static str,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                node: Mutex::new(node),
                consumed: AtomicBool::new(false),
                op,
            }),
        }
    }

    /// Constant tensor (no gradient) from row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(
                "from_vec",
                format!("zero extent in {shape:?}"),
            ));
        }
        if numel(shape) != data.len() {
            return Err(Error::invalid(
                "from_vec",
                format!(
                    "shape {shape:?} needs {} values, got {}",
                    numel(shape),
                    data.len()
                ),
            ));
        }
        Ok(Self::build(
            shape.to_vec(),
            Arc::new(data),
            false,
            None,
            "const",
        ))
    }

    /// Leaf tensor that accumulates a gradient during [`Tensor::backward`].
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.into_leaf(true))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        Self::from_vec(shape, vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![1], Arc::new(vec![value]), false, None, "const")
    }

    /// Fresh leaf sharing this tensor's data, cut from any graph.
    pub fn detach(&self) -> Self {
        Self::build(
            self.inner.shape.clone(),
            Arc::clone(&self.inner.data),
            false,
            None,
            "const",
        )
    }

    /// Fresh leaf sharing this tensor's data with the given `requires_grad`.
    pub fn into_leaf(self, requires_grad: bool) -> Self {
        Self::build(
            self.inner.shape.clone(),
            Arc::clone(&self.inner.data),
            requires_grad,
            None,
            if requires_grad { "leaf" } else { "const" },
        )
    }

    /// Same value, but marked as a gradient-accumulating leaf.
    pub fn requires_grad_(self) -> Self {
        self.into_leaf(true)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.to_vec()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner
            .data
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::invalid(
                "item",
                format!("tensor has shape {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.lock().expect("node lock").is_none()
            && !self.inner.consumed.load(Ordering::Acquire)
    }

    pub fn op_name(&self) -> &'static str {
        self.inner.op
    }

    /// Accumulated gradient, if any backward pass reached this leaf.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    pub fn grad_tensor(&self) -> Option<Tensor<T>> {
        self.grad()
            .map(|g| Self::build(self.inner.shape.clone(), Arc::new(g), false, None, "const"))
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn take_node(&self) -> Option<Node<T>> {
        let node = self.inner.node.lock().expect("node lock").take();
        if node.is_some() {
            self.inner.consumed.store(true, Ordering::Release);
        }
        node
    }

    pub(crate) fn with_node<R>(&self, f: impl FnOnce(Option<&Node<T>>) -> R) -> R {
        let guard = self.inner.node.lock().expect("node lock");
        f(guard.as_ref())
    }

    pub(crate) fn is_consumed(&self) -> bool {
        self.inner.consumed.load(Ordering::Acquire)
    }

    /// Result of an operation. The backward rule is recorded only when
    /// gradients are enabled and some input requires them.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        op: &'static str,
        inputs: &[&Tensor<T>],
        backward: impl FnOnce(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + 'static,
    ) -> Self {
        let track = is_grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        let node = track.then(|| Node {
            inputs: inputs.iter().map(|&t| t.clone()).collect(),
            backward: Box::new(backward),
        });
        Self::build(shape, Arc::new(data), track, node, op)
    }

    /// Result sharing the input's data buffer (reshape-like views).
    pub(crate) fn from_shared(
        shape: Vec<usize>,
        src: &Tensor<T>,
        op: &'static str,
        backward: impl FnOnce(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + 'static,
    ) -> Self {
        let track = is_grad_enabled() && src.requires_grad();
        let node = track.then(|| Node {
            inputs: vec![src.clone()],
            backward: Box::new(backward) as BackwardFn<T>,
        });
        Self::build(shape, Arc::clone(&src.inner.data), track, node, op)
    }

    /// Converts element type; the result is a constant.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self
            .data()
            .iter()
            .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
            .collect();
        Tensor::build(self.shape().to_vec(), Arc::new(data), false, None, "const")
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }
}
