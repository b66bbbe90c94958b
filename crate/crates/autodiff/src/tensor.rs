//! Reference-counted tensors that record the operations producing them.

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::element::Element;
use crate::error::{shape_err, Result};

/// Backward rule of one recorded operation.
pub(crate) trait Function<T: Element> {
    fn inputs(&self) -> Vec<&Tensor<T>>;

    /// Gradients for each input, in `inputs()` order. Entries whose `needs`
    /// flag is false may be `None`.
    fn backward(&self, out: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Element> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    func: Option<Box<dyn Function<T>>>,
}

/// A dense row-major tensor. Cloning is cheap and shares storage.
pub struct Tensor<T: Element>(Rc<Node<T>>);

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

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            func: None,
        })))
    }

    /// A constant (untracked) tensor.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// A trainable leaf.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(shape.to_vec(), vec![T::zero(); numel(shape)], false).expect("consistent")
    }

    pub fn scalar(v: T) -> Self {
        Self::leaf(Vec::new(), vec![v], false).expect("consistent")
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        func: impl Function<T> + 'static,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = func.inputs().iter().any(|t| t.requires_grad());
        Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            func: requires_grad.then(|| Box::new(func) as Box<dyn Function<T>>),
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.len() != 1 {
            return Err(shape_err(format!("item() on shape {:?}", self.shape())));
        }
        Ok(self.0.data.borrow()[0])
    }

    /// Overwrites the values in place (optimizer updates, checkpoint loads).
    pub fn set_data(&self, values: Vec<T>) -> Result<()> {
        if values.len() != self.len() {
            return Err(shape_err(format!(
                "set_data: {} values for shape {:?}",
                values.len(),
                self.shape()
            )));
        }
        *self.0.data.borrow_mut() = values;
        Ok(())
    }

    /// Accumulated gradient, if one has been allocated.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    /// Gradient with an unallocated buffer read as zeros.
    pub fn grad_or_zeros(&self) -> Vec<T> {
        self.grad().unwrap_or_else(|| vec![T::zero(); self.len()])
    }

    pub fn set_grad(&self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.len() {
            return Err(shape_err(format!(
                "set_grad: {} values for shape {:?}",
                grad.len(),
                self.shape()
            )));
        }
        *self.0.grad.borrow_mut() = Some(grad);
        Ok(())
    }

    /// Resets the gradient to an allocated zero buffer.
    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = Some(vec![T::zero(); self.len()]);
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// An untracked copy sharing nothing with the graph.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::new(self.shape(), self.to_vec()).expect("consistent")
    }

    pub fn same_node(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const Node<T> {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode accumulation from a one-element root into every tracked
    /// leaf reachable from it.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut grads: HashMap<*const Node<T>, Vec<T>> = HashMap::new();
        grads.insert(self.key(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.key()) else {
                continue;
            };
            match &t.0.func {
                None => {
                    let mut slot = t.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(g),
                    }
                }
                Some(func) => {
                    let inputs = func.inputs();
                    let needs: Vec<bool> = inputs.iter().map(|i| i.requires_grad()).collect();
                    let input_grads = {
                        let out = t.0.data.borrow();
                        func.backward(&out, &g, &needs)
                    };
                    for ((input, ig), need) in inputs.iter().zip(input_grads).zip(needs) {
                        if !need {
                            continue;
                        }
                        let Some(ig) = ig else { continue };
                        debug_assert_eq!(ig.len(), input.len());
                        match grads.get_mut(&input.key()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += *b),
                            None => {
                                grads.insert(input.key(), ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Tracked nodes in an order where every node follows its inputs.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited: HashSet<*const Node<T>> = HashSet::new();
        // (node, children pushed?)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(func) = &t.0.func {
                for input in func.inputs() {
                    if input.requires_grad() && !visited.contains(&input.key()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}
