//! Parameterized layers on top of the tensor primitives.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sal360_autodiff::{BatchNormStats, Element, Tensor};

use crate::error::Result;

/// Collects named parameters while layers are constructed.
pub(crate) struct ParamBuilder<'a, T: Element> {
    rng: &'a mut ChaCha8Rng,
    pub params: Vec<(String, Tensor<T>)>,
}

impl<'a, T: Element> ParamBuilder<'a, T> {
    pub fn new(rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            rng,
            params: Vec::new(),
        }
    }

    pub fn register(&mut self, name: String, t: Tensor<T>) -> Tensor<T> {
        self.params.push((name, t.clone()));
        t
    }

    pub fn normal_values(&mut self, n: usize, std: f64) -> Vec<T> {
        let dist = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| T::of(dist.sample(&mut *self.rng))).collect()
    }

    pub fn normal(&mut self, name: String, shape: &[usize], std: f64) -> Tensor<T> {
        let values = self.normal_values(shape.iter().product(), std);
        let t = Tensor::param(shape, values).expect("consistent");
        self.register(name, t)
    }

    pub fn constant(&mut self, name: String, shape: &[usize], v: f64) -> Tensor<T> {
        let t = Tensor::param(shape, vec![T::of(v); shape.iter().product()]).expect("consistent");
        self.register(name, t)
    }
}

/// Dense layer on row-major `[rows, in]` tokens.
pub(crate) struct Linear<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(b: &mut ParamBuilder<'_, T>, name: &str, din: usize, dout: usize, gain: f64) -> Self {
        Linear {
            weight: b.normal(format!("{name}.weight"), &[din, dout], gain / (din as f64).sqrt()),
            bias: b.constant(format!("{name}.bias"), &[dout], 0.0),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.matmul(&self.weight)?.add_bias(&self.bias)?)
    }
}

pub(crate) struct Conv<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let fan_in = (cin * kernel * kernel) as f64;
        Conv {
            weight: b.normal(format!("{name}.weight"), &[cout, cin, kernel, kernel], (2.0 / fan_in).sqrt()),
            bias: bias.then(|| b.constant(format!("{name}.bias"), &[cout], 0.0)),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(&self.weight, self.bias.as_ref(), self.stride, self.pad)?)
    }
}

pub(crate) struct LayerNorm<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Element> LayerNorm<T> {
    pub fn new(b: &mut ParamBuilder<'_, T>, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: b.constant(format!("{name}.gamma"), &[d], 1.0),
            beta: b.constant(format!("{name}.beta"), &[d], 0.0),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.layer_norm(&self.gamma, &self.beta, 1e-5)?)
    }
}

pub(crate) struct BatchNorm<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: BatchNormStats<T>,
}

impl<T: Element> BatchNorm<T> {
    pub fn new(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Self {
        BatchNorm {
            gamma: b.constant(format!("{name}.gamma"), &[c], 1.0),
            beta: b.constant(format!("{name}.beta"), &[c], 0.0),
            stats: BatchNormStats::new(c),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, batch_stats: bool) -> Result<Tensor<T>> {
        Ok(x.batch_norm2d(&self.gamma, &self.beta, &mut self.stats, batch_stats)?)
    }
}

