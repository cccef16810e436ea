//! Dense tensors with define-by-run reverse-mode differentiation.
//!
//! Every operation returns a fresh immutable [`Tensor`] that remembers its
//! parents and a closure producing the vector-Jacobian product. Calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order. Gradients are accumulated additively into every reachable tensor
//! that requires grad, so callers zero (or rebuild) leaves between steps.

mod checkpoint;
mod ops;
mod optim;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{adamw_update, AdamState, AdamW, AdamWConfig};

/// Element type of every tensor. 64-bit unless the `f32` feature is enabled.
#[cfg(not(feature = "f32"))]
pub type Float = f64;
#[cfg(feature = "f32")]
pub type Float = f32;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn = Box<dyn Fn(&[Float]) -> Vec<Option<Vec<Float>>> + Send + Sync>;

struct GradFn {
    parents: Vec<Tensor>,
    apply: BackwardFn,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<Float>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<Float>>>,
    grad_fn: Option<GradFn>,
}

/// Shared handle to an immutable node of the computation graph.
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(
        data: Vec<Float>,
        shape: Vec<usize>,
        requires_grad: bool,
        grad_fn: Option<GradFn>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            grad_fn,
        }))
    }

    /// Constant tensor. Fails when `data.len()` does not match the shape.
    pub fn new(data: Vec<Float>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::dim("new", shape, &[data.len()]));
        }
        Ok(Self::build(data, shape.to_vec(), false, None))
    }

    /// Leaf tensor that collects gradients.
    pub fn leaf(data: Vec<Float>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::dim("leaf", shape, &[data.len()]));
        }
        Ok(Self::build(data, shape.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(vec![0.0; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn scalar(value: Float) -> Self {
        Self::build(vec![value], Vec::new(), false, None)
    }

    /// Result of an operation. The node only keeps its parents when at
    /// least one of them participates in differentiation.
    pub(crate) fn from_op<F>(
        data: Vec<Float>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        apply: F,
    ) -> Self
    where
        F: Fn(&[Float]) -> Vec<Option<Vec<Float>>> + Send + Sync + 'static,
    {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let grad_fn = requires_grad.then(|| GradFn {
            parents,
            apply: Box::new(apply),
        });
        Self::build(data, shape, requires_grad, grad_fn)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[Float] {
        &self.0.data
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Float {
        self.0.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<Float>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same values, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    pub fn same_node(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn accumulate(&self, g: Vec<Float>) {
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Gradients add onto whatever is already stored, so two calls without
    /// [`Tensor::zero_grad`] in between double every gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS gives a topological order (parents first).
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.0.id) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.0.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut pending: HashMap<u64, Vec<Float>> = HashMap::new();
        pending.insert(self.0.id, vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.0.id) else {
                continue;
            };
            if let Some(gf) = &t.0.grad_fn {
                let parent_grads = (gf.apply)(&g);
                for (p, pg) in gf.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !p.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), p.numel());
                    match pending.get_mut(&p.0.id) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(p.0.id, pg);
                        }
                    }
                }
            }
            t.accumulate(g);
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

/// A named trainable tensor.
///
/// The optimizer replaces `tensor` with a fresh leaf after each update, so
/// graphs built in earlier steps never observe mutation.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, data: Vec<Float>, shape: &[usize]) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf(data, shape)?,
        })
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn data(&self) -> &[Float] {
        self.tensor.data()
    }

    /// Swap in new values (as a new leaf with no gradient).
    pub fn set_data(&mut self, data: Vec<Float>) -> Result<()> {
        self.tensor = Tensor::leaf(data, self.tensor.shape())?;
        Ok(())
    }
}
