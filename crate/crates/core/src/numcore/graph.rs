use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{Error, Result};

use super::Tensor;

/// Values visible to a backward rule.
pub struct BackwardCtx<'a> {
    /// Gradient of the loss wrt this node's output.
    pub grad: &'a Tensor,
    pub output: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
}

/// Maps the output gradient to one optional gradient per parent.
pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Node ids are assigned in
/// creation order, which is a topological order, so the backward pass is a
/// single reverse sweep.
///
/// A graph is confined to the thread that built it.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// A trainable input: gradients are tracked for it.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Node { value, parents: vec![], backward: None, requires_grad: true })
    }

    /// A constant input: no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Node { value, parents: vec![], backward: None, requires_grad: false })
    }

    /// Records an op output. Non-finite outputs are rejected here, so no
    /// NaN/Inf ever enters the graph.
    pub fn op<'g>(
        &'g self,
        name: &'static str,
        parents: &[Var<'g>],
        value: Tensor,
        backward: BackwardFn,
    ) -> Result<Var<'g>> {
        if !value.is_finite() {
            return Err(Error::numeric(name, "non-finite output"));
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        Ok(self.push(Node {
            value,
            parents: parents.iter().map(|p| p.id).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        }))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.len() != 1 {
            return Err(Error::dim("backward", format!("output shape {:?} is not scalar", out.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.id + 1];
        grads[output.id] = Some(Tensor::full(out.value.shape().to_vec(), 1.0));
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let ctx = BackwardCtx {
                grad: &grad,
                output: &node.value,
                inputs: node.parents.iter().map(|&p| &nodes[p].value).collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape(), "grad shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
            grads[id] = Some(grad);
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::numeric("backward", "non-finite gradient"));
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }
}
