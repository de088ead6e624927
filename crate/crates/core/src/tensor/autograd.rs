use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use super::{Element, Node, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static NO_GRAD_DEPTH: Cell<usize> = const { Cell::new(0) };
}

pub fn is_grad_enabled() -> bool {
    NO_GRAD_DEPTH.with(|d| d.get() == 0)
}

/// While alive, operations on this thread record no backward rules.
pub struct NoGradGuard {
    _priv: (),
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

pub fn no_grad() -> NoGradGuard {
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    NoGradGuard { _priv: () }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapeEntry {
    pub output: u64,
    pub inputs: Vec<u64>,
    pub op: &'static str,
}

/// Operations reachable from a loss, in topological order (inputs first).
#[derive(Debug, Clone)]
pub struct Tape<T: Element> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Element> Tape<T> {
    /// Linearizes the graph that produced `root`.
    pub fn record(root: &Tensor<T>) -> Result<Self> {
        if root.is_consumed() {
            return Err(Error::Autograd(
                "graph already consumed by an earlier backward; run a new forward pass".into(),
            ));
        }
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // iterative post-order DFS; (tensor, children_pushed)
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if visited.contains(&t.id()) {
                continue;
            }
            if t.is_consumed() {
                return Err(Error::Autograd(format!(
                    "tensor produced by `{}` belongs to an already backpropagated graph",
                    t.op_name()
                )));
            }
            let children: Option<Vec<Tensor<T>>> = t.with_node(|n| {
                n.map(|n| {
                    n.inputs
                        .iter()
                        .filter(|i| i.requires_grad())
                        .cloned()
                        .collect()
                })
            });
            let Some(children) = children else {
                continue; // leaf
            };
            visited.insert(t.id());
            stack.push((t, true));
            for c in children.into_iter().rev() {
                if !visited.contains(&c.id()) {
                    stack.push((c, false));
                }
            }
        }
        Ok(Tape { nodes: order })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn entries(&self) -> Vec<TapeEntry> {
        self.nodes
            .iter()
            .map(|t| TapeEntry {
                output: t.id(),
                inputs: t.with_node(|n| {
                    n.map(|n| n.inputs.iter().map(Tensor::id).collect())
                        .unwrap_or_default()
                }),
                op: t.op_name(),
            })
            .collect()
    }

    fn run(self, root: &Tensor<T>) {
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(root.id(), vec![T::one(); root.numel()]);
        for t in self.nodes.into_iter().rev() {
            let Some(Node { inputs, backward }) = t.take_node() else {
                continue;
            };
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            let needs: Vec<bool> = inputs.iter().map(Tensor::requires_grad).collect();
            let grads = backward(&g, &needs);
            debug_assert_eq!(grads.len(), inputs.len());
            for ((input, grad), need) in inputs.iter().zip(grads).zip(needs) {
                let (Some(grad), true) = (grad, need) else {
                    continue;
                };
                debug_assert_eq!(
                    grad.len(),
                    input.numel(),
                    "gradient size for {}",
                    t.op_name()
                );
                let is_interior = input.with_node(|n| n.is_some());
                if is_interior {
                    match pending.get_mut(&input.id()) {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, &b)| *a = *a + b),
                        None => {
                            pending.insert(input.id(), grad);
                        }
                    }
                } else {
                    input.accumulate_grad(&grad);
                }
            }
        }
    }
}

impl<T: Element> Tensor<T> {
    /// Reverse sweep from a scalar loss. Gradients add onto any existing
    /// leaf gradients; the graph is released afterwards, so calling this a
    /// second time on the same loss is an error.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Autograd(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if self.is_consumed() {
            return Err(Error::Autograd(
                "backward already ran on this graph; run a new forward pass".into(),
            ));
        }
        if !self.requires_grad() {
            return Err(Error::Autograd(
                "loss is detached from any gradient-requiring input".into(),
            ));
        }
        if self.with_node(|n| n.is_none()) {
            // the loss is itself a leaf
            self.accumulate_grad(&[T::one()]);
            return Ok(());
        }
        let tape = Tape::record(self)?;
        tape.run(self);
        Ok(())
    }
}
