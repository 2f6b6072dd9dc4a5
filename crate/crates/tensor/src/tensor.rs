//! Reference-counted tensors that record the operations producing them.
//!
//! Every op returns a new [`Tensor`]. When any input requires a gradient the
//! result keeps its parents and a backward closure; [`Tensor::backward`] then
//! walks the recorded graph in reverse topological order and accumulates
//! gradients into the leaves created with [`Tensor::param`].

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};

pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

pub(crate) struct GradFn<T: Element> {
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

pub(crate) struct Node<T: Element> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// Dense row-major tensor.
pub struct Tensor<T: Element = f32>(Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Element> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, grad_fn: Option<GradFn<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            grad_fn,
        }))
    }

    /// A constant tensor (no gradient tracking).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape {
                op: "from_vec",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A trainable leaf; gradients accumulate into it on `backward`.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        let node = Rc::try_unwrap(t.0).ok().expect("fresh tensor");
        Ok(Self::build(node.shape, node.data.into_inner(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![T::zero(); n], false, None)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(vec![], vec![v], false, None)
    }

    /// Result of an op. Records `backward` only if some parent needs a gradient.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Self {
        if parents.iter().any(|p| p.requires_grad()) {
            Self::build(
                shape,
                data,
                true,
                Some(GradFn {
                    parents,
                    backward: Box::new(backward),
                }),
            )
        } else {
            Self::build(shape, data, false, None)
        }
    }

    /// Defines a new differentiable op outside this crate.
    ///
    /// `backward` receives the gradient of the output and must return one
    /// entry per parent, each either `None` or a gradient of the parent's shape.
    pub fn custom(
        parents: &[&Tensor<T>],
        shape: &[usize],
        data: Vec<T>,
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape {
                op: "custom",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        let parents = parents.iter().map(|p| (*p).clone()).collect();
        Ok(Self::from_op(shape.to_vec(), data, parents, backward))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        let d = self.0.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.0.shape);
        d[0]
    }

    /// Overwrites the values in place (used by optimizers and loaders).
    pub fn set_data(&self, values: &[T]) -> Result<()> {
        let mut d = self.0.data.borrow_mut();
        if d.len() != values.len() {
            return Err(TensorError::Shape {
                op: "set_data",
                detail: format!("expected {} values, got {}", d.len(), values.len()),
            });
        }
        d.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.0.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub(crate) fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.0.grad.borrow()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Copy of the values with no graph attached.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.to_vec(), false, None)
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as *const () as usize
    }

    /// Back-propagates from a single-element tensor, accumulating into leaves.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Shape {
                op: "backward",
                detail: format!("needs a scalar, got shape {:?}", self.shape()),
            });
        }
        self.backward_with(vec![T::one()])
    }

    /// Back-propagates an explicit output gradient.
    pub fn backward_with(&self, seed: Vec<T>) -> Result<()> {
        if seed.len() != self.numel() {
            return Err(TensorError::Shape {
                op: "backward",
                detail: format!("seed has {} values for shape {:?}", seed.len(), self.shape()),
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
        grads.insert(self.key(), seed);
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.key()) else {
                continue;
            };
            match &node.0.grad_fn {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(g),
                    }
                }
                Some(gf) => {
                    let parent_grads = (gf.backward)(&g);
                    debug_assert_eq!(parent_grads.len(), gf.parents.len());
                    for (p, pg) in gf.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel());
                        match grads.get_mut(&p.key()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += *b),
                            None => {
                                grads.insert(p.key(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over nodes that require gradients.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}
