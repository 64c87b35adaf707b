//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`DiffTensor`] is a cheap handle onto a node of a dynamically built
//! computation graph. Operations allocate fresh output nodes that record
//! their inputs and a backward closure; [`DiffTensor::backward`] walks the
//! graph once in reverse topological order and accumulates `dLoss/dNode`
//! into every reachable node that participates in gradient computation.
//!
//! The graph is rebuilt on every forward pass and freed when the output
//! handles are dropped. Leaf parameters survive across passes and keep
//! their accumulated gradients until [`DiffTensor::zero_grad`].

mod ops;

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::mat::Mat;
use crate::rng::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: expected a 2-d tensor, got shape {shape:?}")]
    NotTwoDimensional { op: &'static str, shape: Vec<usize> },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis { op: &'static str, axis: usize, shape: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op}: index {index} out of bounds for extent {extent}")]
    IndexOutOfBounds { op: &'static str, index: usize, extent: usize },
    #[error("{op}: empty input list")]
    EmptyInput { op: &'static str },
}

/// Computes gradients for one recorded operation: receives `dLoss/dOut`
/// and returns `dLoss/dParent` for each parent, in parent order.
type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct OpRecord {
    parents: Vec<DiffTensor>,
    backward: BackwardFn,
}

struct Node {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    op: Option<OpRecord>,
}

/// Handle onto a node of the differentiation graph. Cloning is cheap and
/// aliases the same node.
pub struct DiffTensor {
    node: Rc<Node>,
}

impl Clone for DiffTensor {
    fn clone(&self) -> Self {
        Self { node: Rc::clone(&self.node) }
    }
}

impl std::fmt::Debug for DiffTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffTensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl DiffTensor {
    // ── Construction ────────────────────────────────────────────────

    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(data.len(), numel, "tensor data length {} != shape {:?}", data.len(), shape);
        Self {
            node: Rc::new(Node {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: None,
            }),
        }
    }

    /// Constant tensor that takes no gradient.
    pub fn constant(data: Vec<f64>, shape: &[usize]) -> Self {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// Trainable leaf parameter.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Self {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(vec![0.0; shape.iter().product()], shape)
    }

    /// Trainable parameter initialized to zero.
    pub fn zero_param(shape: &[usize]) -> Self {
        Self::param(vec![0.0; shape.iter().product()], shape)
    }

    /// Trainable parameter with entries uniform in ±1/sqrt(fan_in).
    pub fn uniform_param(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_in(-bound, bound)).collect();
        Self::param(data, shape)
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(vec![v], &[1])
    }

    /// Constant 2-d tensor from a plain matrix.
    pub fn from_mat(m: &Mat) -> Self {
        Self::constant(m.data().to_vec(), &[m.rows(), m.cols()])
    }

    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<DiffTensor>,
        backward: BackwardFn,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        let op = requires_grad.then_some(OpRecord { parents, backward });
        let numel: usize = shape.iter().product();
        assert_eq!(data.len(), numel);
        Self {
            node: Rc::new(Node {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op,
            }),
        }
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.node.data.borrow().clone()
    }

    /// View as a plain matrix; requires a 2-d shape.
    pub fn to_mat(&self) -> Mat {
        assert_eq!(self.node.shape.len(), 2, "to_mat requires 2-d, got {:?}", self.node.shape);
        Mat::from_vec(self.node.shape[0], self.node.shape[1], self.to_vec())
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on non-scalar shape {:?}", self.node.shape);
        self.node.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Accumulated gradient, if any backward pass has reached this node.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// In-place mutation of the underlying values (parameter updates).
    /// Must not be called while a graph referencing this tensor is being
    /// differentiated.
    pub fn with_data_mut(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.node.data.borrow_mut());
    }

    /// A gradient-free copy of this tensor's current values. Used where a
    /// prediction serves as a fixed target.
    pub fn detach(&self) -> DiffTensor {
        Self::constant(self.to_vec(), &self.node.shape)
    }

    fn ptr(&self) -> *const Node {
        Rc::as_ptr(&self.node)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into
    /// every reachable gradient-requiring node; calling twice without
    /// zeroing doubles them.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss { shape: self.node.shape.clone() });
        }
        if !self.node.requires_grad {
            return Ok(());
        }

        let order = self.reverse_topo();
        let mut pending: HashMap<*const Node, Vec<f64>> = HashMap::new();
        pending.insert(self.ptr(), vec![1.0]);

        for tensor in &order {
            let Some(grad) = pending.remove(&tensor.ptr()) else { continue };
            tensor.accumulate_grad(&grad);
            if let Some(op) = &tensor.node.op {
                let parent_grads = (op.backward)(&grad);
                debug_assert_eq!(parent_grads.len(), op.parents.len());
                for (parent, pg) in op.parents.iter().zip(parent_grads) {
                    if !parent.node.requires_grad {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.numel());
                    match pending.entry(parent.ptr()) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (a, b) in e.get_mut().iter_mut().zip(&pg) {
                                *a += b;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(pg);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => {
                for (a, b) in existing.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Nodes ordered so every consumer precedes its producers; restricted
    /// to the gradient-requiring subgraph. Iterative DFS post-order,
    /// reversed.
    fn reverse_topo(&self) -> Vec<DiffTensor> {
        let mut order: Vec<DiffTensor> = Vec::new();
        let mut visited: HashSet<*const Node> = HashSet::new();
        let mut stack: Vec<(DiffTensor, bool)> = vec![(self.clone(), false)];
        while let Some((tensor, expanded)) = stack.pop() {
            if expanded {
                order.push(tensor);
                continue;
            }
            if !visited.insert(tensor.ptr()) {
                continue;
            }
            stack.push((tensor.clone(), true));
            if let Some(op) = &tensor.node.op {
                for parent in &op.parents {
                    if parent.node.requires_grad && !visited.contains(&parent.ptr()) {
                        stack.push((parent.clone(), false));
                    }
                }
            }
        }
        order.reverse();
        order
    }

    // ── Shape helpers shared by the ops ─────────────────────────────

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.node.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::NotTwoDimensional { op, shape: self.node.shape.clone() }),
        }
    }

    pub(crate) fn same_shape(&self, other: &DiffTensor, op: &'static str) -> Result<(), TensorError> {
        if self.node.shape != other.node.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.node.shape.clone(),
                rhs: other.node.shape.clone(),
            });
        }
        Ok(())
    }
}
