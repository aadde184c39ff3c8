use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{shape_err, AdError, Result};

/// What a backward closure sees: the gradient of the op output, the output
/// value and the op inputs. It returns one optional gradient per input.
pub(crate) struct Ctx<'a> {
    pub grad: &'a [f64],
    pub out: &'a [f64],
    pub parents: &'a [Tensor],
}

pub(crate) type BackwardFn = Box<dyn Fn(&Ctx) -> Vec<Option<Vec<f64>>>>;

struct Node {
    shape: Vec<usize>,
    value: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Reference-counted handle to a graph node. Cloning is cheap and shares
/// the node.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: &'static str) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(shape_err(op, format!("{} values for shape {shape:?}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AdError::NonFinite(op));
        }
        Ok(Tensor(Rc::new(Node {
            shape,
            value: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents: Vec::new(),
            backward: None,
        })))
    }

    /// Data that never receives a gradient.
    pub fn constant(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::build(shape.to_vec(), data, false, "constant")
    }

    /// Trainable leaf.
    pub fn leaf(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::build(shape.to_vec(), data, true, "leaf")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(shape, vec![0.0; numel(shape)]).expect("zeros are finite")
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::constant(&[], vec![v])
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        op: &'static str,
        backward: BackwardFn,
    ) -> Result<Self> {
        debug_assert_eq!(numel(&shape), data.len(), "{op}");
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AdError::NonFinite(op));
        }
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let (parents, backward) = if requires_grad { (parents, Some(backward)) } else { (Vec::new(), None) };
        Ok(Tensor(Rc::new(Node {
            shape,
            value: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward,
        })))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.value.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.value.borrow().clone()
    }

    /// First (for scalars: only) value.
    pub fn item(&self) -> f64 {
        self.0.value.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrites the values in place. Used by optimizers and for buffers.
    pub fn set_values(&self, data: &[f64]) -> Result<()> {
        let mut v = self.0.value.borrow_mut();
        if v.len() != data.len() {
            return Err(shape_err("set_values", format!("{} values for {:?}", data.len(), self.0.shape)));
        }
        v.copy_from_slice(data);
        Ok(())
    }

    pub(crate) fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.0.value.borrow_mut());
    }

    pub(crate) fn update_grad(&self, f: impl FnOnce(&mut [f64])) {
        if let Some(g) = self.0.grad.borrow_mut().as_mut() {
            f(g);
        }
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.to_vec(), false, "detach").expect("values already checked")
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const () {
        Rc::as_ptr(&self.0) as *const ()
    }

    /// Nodes requiring a gradient reachable from `self`, inputs first.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
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
            for p in &t.0.parents {
                if p.requires_grad() && !visited.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    /// Accumulates `d self / d leaf` into every reachable trainable leaf.
    /// Intermediate gradients are transient, so calling this twice on the
    /// same graph doubles the leaf gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(AdError::NotScalar(self.shape().to_vec()));
        }
        if !self.item().is_finite() {
            return Err(AdError::NonFinite("loss"));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<*const (), Vec<f64>> = HashMap::new();
        pending.insert(self.key(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.key()) else { continue };
            let Some(f) = &t.0.backward else {
                let mut slot = t.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            };
            let grads = {
                let out = t.0.value.borrow();
                f(&Ctx { grad: &g, out: &out, parents: &t.0.parents })
            };
            for (p, pg) in t.0.parents.iter().zip(grads) {
                let Some(pg) = pg else { continue };
                if !p.requires_grad() {
                    continue;
                }
                match pending.get_mut(&p.key()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(p.key(), pg);
                    }
                }
            }
            if t.ptr_eq(self) {
                *t.0.grad.borrow_mut() = Some(g);
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::constant(&[2, 2], vec![0.0; 3]).is_err());
        assert!(matches!(Tensor::leaf(&[1], vec![f64::NAN]), Err(AdError::NonFinite(_))));
    }

    #[test]
    fn leaf_loss_gets_unit_grad() {
        let x = Tensor::leaf(&[], vec![3.0]).unwrap();
        x.backward().unwrap();
        assert_eq!(x.grad(), Some(vec![1.0]));
    }

    #[test]
    fn constants_never_get_grads() {
        let c = Tensor::constant(&[2], vec![1.0, 2.0]).unwrap();
        let s = c.sum().unwrap();
        assert!(!s.requires_grad());
        s.backward().unwrap();
        assert!(c.grad().is_none());
    }
}
