use crate::{Real, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[Node<T>], &mut GradSink<T>)>;

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

/// What [`Graph::stop_gradient`] does with the values it hands out.
enum Frozen<T> {
    Off,
    Record(Vec<Tensor<T>>),
    Replay(Vec<Tensor<T>>, usize),
}

/// Recording tape. Nodes are appended in topological order.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    frozen: Frozen<T>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), frozen: Frozen::Off }
    }

    /// Tape that keeps every value read through [`Graph::stop_gradient`]
    /// so a later graph can replay them with [`Graph::replaying`].
    pub fn recording() -> Self {
        Graph { nodes: Vec::new(), frozen: Frozen::Record(Vec::new()) }
    }

    /// Tape whose stop-gradient reads return `frozen` in order instead of
    /// the live values. Finite differences taken on such tapes hold the
    /// detached quantities fixed, matching what `backward` differentiates.
    pub fn replaying(frozen: Vec<Tensor<T>>) -> Self {
        Graph { nodes: Vec::new(), frozen: Frozen::Replay(frozen, 0) }
    }

    /// Values recorded so far by a [`Graph::recording`] tape.
    pub fn take_frozen(&mut self) -> Vec<Tensor<T>> {
        match std::mem::replace(&mut self.frozen, Frozen::Off) {
            Frozen::Record(v) => v,
            _ => Vec::new(),
        }
    }

    /// Value of `v` for use as a constant. Recorded or replayed depending on
    /// how the tape was created.
    pub fn stop_gradient(&mut self, v: Var) -> Tensor<T> {
        match &mut self.frozen {
            Frozen::Off => self.nodes[v.0].value.clone(),
            Frozen::Record(log) => {
                let t = self.nodes[v.0].value.clone();
                log.push(t.clone());
                t
            }
            Frozen::Replay(log, i) => {
                let t = log.get(*i).cloned().expect("replayed tape asked for more frozen values than were recorded");
                assert_eq!(t.shape(), self.nodes[v.0].value.shape(), "replayed frozen value has the wrong shape");
                *i += 1;
                t
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, backward: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn any_requires(&self, parents: &[Var]) -> bool {
        parents.iter().any(|p| self.nodes[p.0].requires_grad)
    }

    /// Appends an op result. `backward` is dropped when no parent needs a
    /// gradient, so inference graphs carry no closures.
    pub(crate) fn push<F>(&mut self, value: Tensor<T>, parents: &[Var], backward: F) -> Var
    where
        F: Fn(&Tensor<T>, &[Node<T>], &mut GradSink<T>) + 'static,
    {
        let requires_grad = self.any_requires(parents);
        let backward: Option<BackwardFn<T>> =
            if requires_grad { Some(Box::new(backward)) } else { None };
        self.nodes.push(Node { value, requires_grad, backward });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        self.backward_retaining(loss, &[])
    }

    /// Like [`Graph::backward`], but also keeps the gradients of the
    /// intermediate nodes in `retain`.
    pub fn backward_retaining(&self, loss: Var, retain: &[Var]) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward() needs a scalar");
        let mut sink = GradSink {
            grads: (0..self.nodes.len()).map(|_| None).collect(),
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
        };
        if !self.nodes[loss.0].requires_grad {
            return Gradients { grads: sink.grads };
        }
        sink.grads[loss.0] = Some(Tensor::new(self.value(loss).shape(), vec![T::one()]));
        for i in (0..=loss.0).rev() {
            let Some(g) = sink.grads[i].take() else { continue };
            if let Some(bw) = &self.nodes[i].backward {
                bw(&g, &self.nodes, &mut sink);
                if retain.contains(&Var(i)) {
                    sink.grads[i] = Some(g);
                }
            } else {
                // leaf: keep its gradient
                sink.grads[i] = Some(g);
            }
        }
        Gradients { grads: sink.grads }
    }
}

/// Accumulator handed to backward closures.
pub(crate) struct GradSink<T> {
    grads: Vec<Option<Tensor<T>>>,
    requires: Vec<bool>,
}

impl<T: Real> GradSink<T> {
    pub fn wants(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Mutable zero-initialised gradient buffer for `v`.
    pub fn slot(&mut self, v: Var, shape: &[usize]) -> &mut [T] {
        let g = self.grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
        g.data_mut()
    }

    pub fn add(&mut self, v: Var, t: Tensor<T>) {
        if !self.requires[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.add_assign(&t),
            slot @ None => *slot = Some(t),
        }
    }
}

/// Result of [`Graph::backward`]: gradients for leaf nodes that required them,
/// plus any retained intermediates.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
