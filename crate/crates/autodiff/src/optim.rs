//! Adam with decoupled weight decay and per-group step sizes.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters sharing a step size and weight decay.
#[derive(Debug, Clone)]
pub struct ParamGroup<T: Element> {
    pub name: String,
    pub lr: f64,
    pub weight_decay: f64,
    pub params: Vec<Tensor<T>>,
}

impl<T: Element> ParamGroup<T> {
    pub fn new(name: impl Into<String>, lr: f64, weight_decay: f64, params: Vec<Tensor<T>>) -> Self {
        ParamGroup {
            name: name.into(),
            lr,
            weight_decay,
            params,
        }
    }
}

#[derive(Debug)]
pub struct AdamW<T: Element> {
    groups: Vec<ParamGroup<T>>,
    first: Vec<Vec<Vec<T>>>,
    second: Vec<Vec<Vec<T>>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Element> AdamW<T> {
    /// Moment decays 0.9 / 0.999 and ε = 1e−8.
    pub fn new(groups: Vec<ParamGroup<T>>) -> Self {
        let zeros = |g: &ParamGroup<T>| -> Vec<Vec<T>> {
            g.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
        };
        AdamW {
            first: groups.iter().map(zeros).collect(),
            second: groups.iter().map(zeros).collect(),
            groups,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn groups(&self) -> &[ParamGroup<T>] {
        &self.groups
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, group: &str, lr: f64) -> Result<()> {
        let g = self
            .groups
            .iter_mut()
            .find(|g| g.name == group)
            .ok_or_else(|| Error::State(format!("no parameter group {group:?}")))?;
        g.lr = lr;
        Ok(())
    }

    /// Resets every parameter's gradient to zeros.
    pub fn zero_grad(&self) {
        self.groups.iter().flat_map(|g| &g.params).for_each(|p| p.zero_grad());
    }

    /// One update of every parameter. Fails without touching anything if a
    /// parameter has no gradient buffer.
    pub fn step(&mut self) -> Result<()> {
        for g in &self.groups {
            if let Some(i) = g.params.iter().position(|p| p.grad().is_none()) {
                return Err(Error::State(format!(
                    "parameter {i} of group {:?} has no gradient",
                    g.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (T::of(self.beta1), T::of(self.beta2), T::of(self.eps));
        for (gi, group) in self.groups.iter().enumerate() {
            let lr = T::of(group.lr);
            let decay = T::one() - T::of(group.lr * group.weight_decay);
            for (pi, param) in group.params.iter().enumerate() {
                let grad = param.grad().expect("checked above");
                let m = &mut self.first[gi][pi];
                let v = &mut self.second[gi][pi];
                let mut values = param.to_vec();
                for i in 0..values.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (T::one() - b1) * g;
                    v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                    let m_hat = m[i] / T::of(bc1);
                    let v_hat = v[i] / T::of(bc2);
                    values[i] = values[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
                }
                param.set_data(values)?;
            }
        }
        Ok(())
    }
}
