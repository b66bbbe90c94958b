//! Pointwise ops, biases and reductions.

use rand::Rng;

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::{Function, Tensor};

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

struct Add<T: Element>(Tensor<T>, Tensor<T>);

impl<T: Element> Function<T> for Add<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0, &self.1]
    }
    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![needs[0].then(|| g.to_vec()), needs[1].then(|| g.to_vec())]
    }
}

struct Mul<T: Element>(Tensor<T>, Tensor<T>);

impl<T: Element> Function<T> for Mul<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0, &self.1]
    }
    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let times = |other: &Tensor<T>| -> Vec<T> {
            g.iter().zip(other.data().iter()).map(|(g, o)| *g * *o).collect()
        };
        vec![
            needs[0].then(|| times(&self.1)),
            needs[1].then(|| times(&self.0)),
        ]
    }
}

struct Scale<T: Element>(Tensor<T>, T);

impl<T: Element> Function<T> for Scale<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.iter().map(|g| *g * self.1).collect())]
    }
}

/// Bias broadcast over a block structure: element `i` gets `b[(i / inner) % c]`.
struct Bias<T: Element> {
    x: Tensor<T>,
    b: Tensor<T>,
    inner: usize,
}

impl<T: Element> Function<T> for Bias<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x, &self.b]
    }
    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let db = needs[1].then(|| {
            let c = self.b.len();
            let mut db = vec![T::zero(); c];
            for (i, gv) in g.iter().enumerate() {
                db[(i / self.inner) % c] += *gv;
            }
            db
        });
        vec![needs[0].then(|| g.to_vec()), db]
    }
}

struct Relu<T: Element>(Tensor<T>);

impl<T: Element> Function<T> for Relu<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0]
    }
    fn backward(&self, out: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let dx = out
            .iter()
            .zip(g)
            .map(|(y, g)| if *y > T::zero() { *g } else { T::zero() })
            .collect();
        vec![Some(dx)]
    }
}

struct Sigmoid<T: Element>(Tensor<T>);

impl<T: Element> Function<T> for Sigmoid<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0]
    }
    fn backward(&self, out: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let dx = out
            .iter()
            .zip(g)
            .map(|(y, g)| *g * *y * (T::one() - *y))
            .collect();
        vec![Some(dx)]
    }
}

struct Dropout<T: Element> {
    x: Tensor<T>,
    mask: Vec<T>,
}

impl<T: Element> Function<T> for Dropout<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.iter().zip(&self.mask).map(|(g, m)| *g * *m).collect())]
    }
}

struct Sum<T: Element>(Tensor<T>);

impl<T: Element> Function<T> for Sum<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![g[0]; self.0.len()])]
    }
}

struct SumProduct<T: Element> {
    x: Tensor<T>,
    weights: Vec<T>,
}

impl<T: Element> Function<T> for SumProduct<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(self.weights.iter().map(|w| *w * g[0]).collect())]
    }
}

impl<T: Element> Tensor<T> {
    fn map_values(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.data().iter().map(|&v| f(v)).collect()
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other, "add")?;
        let data = {
            let (a, b) = (self.data(), other.data());
            a.iter().zip(b.iter()).map(|(x, y)| *x + *y).collect()
        };
        Ok(Tensor::from_op(self.shape().to_vec(), data, Add(self.clone(), other.clone())))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, other, "mul")?;
        let data = {
            let (a, b) = (self.data(), other.data());
            a.iter().zip(b.iter()).map(|(x, y)| *x * *y).collect()
        };
        Ok(Tensor::from_op(self.shape().to_vec(), data, Mul(self.clone(), other.clone())))
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        let data = self.map_values(|v| v * s);
        Tensor::from_op(self.shape().to_vec(), data, Scale(self.clone(), s))
    }

    fn bias(&self, b: &Tensor<T>, axis: usize, op: &str) -> Result<Tensor<T>> {
        if b.shape().len() != 1 || self.shape().len() <= axis || self.shape()[axis] != b.len() {
            return Err(shape_err(format!(
                "{op}: bias {:?} does not match axis {axis} of {:?}",
                b.shape(),
                self.shape()
            )));
        }
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let c = b.len();
        let data = {
            let (x, bv) = (self.data(), b.data());
            x.iter()
                .enumerate()
                .map(|(i, v)| *v + bv[(i / inner) % c])
                .collect()
        };
        let func = Bias {
            x: self.clone(),
            b: b.clone(),
            inner,
        };
        Ok(Tensor::from_op(self.shape().to_vec(), data, func))
    }

    /// Adds `b` along the last axis.
    pub fn add_bias(&self, b: &Tensor<T>) -> Result<Tensor<T>> {
        let last = self.shape().len().checked_sub(1).ok_or_else(|| shape_err("bias on scalar"))?;
        self.bias(b, last, "add_bias")
    }

    /// Adds `b` along axis 1 (channels of an `N×C×…` tensor).
    pub fn add_channel_bias(&self, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.bias(b, 1, "add_channel_bias")
    }

    pub fn relu(&self) -> Tensor<T> {
        let data = self.map_values(|v| if v > T::zero() { v } else { T::zero() });
        Tensor::from_op(self.shape().to_vec(), data, Relu(self.clone()))
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let data = self.map_values(|v| T::one() / (T::one() + (-v).exp()));
        Tensor::from_op(self.shape().to_vec(), data, Sigmoid(self.clone()))
    }

    /// Inverted dropout: in training, zeroes each element with probability
    /// `rate` and scales survivors by `1/(1−rate)`. Identity when `rng` is `None`.
    pub fn dropout<R: Rng + ?Sized>(&self, rate: f64, rng: Option<&mut R>) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(shape_err(format!("dropout rate {rate} outside [0, 1)")));
        }
        let Some(rng) = rng else {
            return Ok(self.clone());
        };
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = {
            let x = self.data();
            x.iter().zip(&mask).map(|(x, m)| *x * *m).collect()
        };
        let func = Dropout {
            x: self.clone(),
            mask,
        };
        Ok(Tensor::from_op(self.shape().to_vec(), data, func))
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().copied().sum();
        Tensor::from_op(Vec::new(), vec![s], Sum(self.clone()))
    }

    /// `Σ self ⊙ weights` for a constant weight vector. Useful for injecting
    /// an externally computed gradient: backward then delivers `weights`.
    pub fn sum_product(&self, weights: &[T]) -> Result<Tensor<T>> {
        if weights.len() != self.len() {
            return Err(shape_err(format!(
                "sum_product: {} weights for {} values",
                weights.len(),
                self.len()
            )));
        }
        let s = self.data().iter().zip(weights).map(|(x, w)| *x * *w).sum();
        let func = SumProduct {
            x: self.clone(),
            weights: weights.to_vec(),
        };
        Ok(Tensor::from_op(Vec::new(), vec![s], func))
    }
}
