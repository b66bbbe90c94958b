//! Batch and layer normalization.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::{Function, Tensor};

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats<T: Element> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Element> BatchNormStats<T> {
    /// Zero mean, unit variance, momentum 0.1, ε = 1e−5.
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Shared backward for affine normalizations `y = γ·x̂ + β`.
/// Element `i` belongs to channel `(i / inner) % c` and to normalization
/// group `group(i)`; `reduce` selects the full (batch-statistics) rule.
struct Normalized<T: Element> {
    x: Tensor<T>,
    gamma: Tensor<T>,
    beta: Tensor<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    layout: Layout,
    batch_stats: bool,
}

#[derive(Clone, Copy)]
enum Layout {
    /// `N×C×S`: groups are channels, `inner = S`.
    Channels { c: usize, inner: usize },
    /// `R×D`: groups are rows, parameters index the last axis.
    Rows { d: usize },
}

impl Layout {
    fn param_index(&self, i: usize) -> usize {
        match *self {
            Layout::Channels { c, inner } => (i / inner) % c,
            Layout::Rows { d } => i % d,
        }
    }

    fn group(&self, i: usize) -> usize {
        match *self {
            Layout::Channels { c, inner } => (i / inner) % c,
            Layout::Rows { d } => i / d,
        }
    }
}

impl<T: Element> Function<T> for Normalized<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x, &self.gamma, &self.beta]
    }

    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let np = self.gamma.len();
        let mut dgamma = vec![T::zero(); np];
        let mut dbeta = vec![T::zero(); np];
        for (i, gv) in g.iter().enumerate() {
            let j = self.layout.param_index(i);
            dgamma[j] += *gv * self.xhat[i];
            dbeta[j] += *gv;
        }
        let dx = needs[0].then(|| {
            let gamma = self.gamma.data();
            let dxhat: Vec<T> = g
                .iter()
                .enumerate()
                .map(|(i, gv)| *gv * gamma[self.layout.param_index(i)])
                .collect();
            if !self.batch_stats {
                return dxhat
                    .iter()
                    .enumerate()
                    .map(|(i, d)| *d * self.inv_std[self.layout.group(i)])
                    .collect();
            }
            let groups = self.inv_std.len();
            let mut sum = vec![T::zero(); groups];
            let mut sum_x = vec![T::zero(); groups];
            let mut count = vec![0usize; groups];
            for (i, d) in dxhat.iter().enumerate() {
                let k = self.layout.group(i);
                sum[k] += *d;
                sum_x[k] += *d * self.xhat[i];
                count[k] += 1;
            }
            dxhat
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let k = self.layout.group(i);
                    let m = T::of(count[k] as f64);
                    self.inv_std[k] / m * (m * *d - sum[k] - self.xhat[i] * sum_x[k])
                })
                .collect()
        });
        vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    }
}

impl<T: Element> Tensor<T> {
    /// Batch normalization over `N×C×H×W` (statistics per channel).
    /// In training mode batch statistics are used and `stats` is updated
    /// with the unbiased batch variance; otherwise `stats` is read only.
    pub fn batch_norm2d(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &mut BatchNormStats<T>,
        train: bool,
    ) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4
            || gamma.shape() != [s[1]]
            || beta.shape() != [s[1]]
            || stats.mean.len() != s[1]
            || stats.var.len() != s[1]
        {
            return Err(shape_err(format!(
                "batch_norm2d: input {s:?}, gamma {:?}, beta {:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let (n, c, inner) = (s[0], s[1], s[2] * s[3]);
        let layout = Layout::Channels { c, inner };
        let x = self.data();
        let eps = T::of(stats.eps);
        let (mean, var) = if train {
            let m = (n * inner) as f64;
            let mut mean = vec![T::zero(); c];
            for (i, v) in x.iter().enumerate() {
                mean[layout.group(i)] += *v;
            }
            mean.iter_mut().for_each(|v| *v /= T::of(m));
            let mut var = vec![T::zero(); c];
            for (i, v) in x.iter().enumerate() {
                let d = *v - mean[layout.group(i)];
                var[layout.group(i)] += d * d;
            }
            var.iter_mut().for_each(|v| *v /= T::of(m));
            let mom = T::of(stats.momentum);
            let unbias = if m > 1.0 { T::of(m / (m - 1.0)) } else { T::one() };
            for k in 0..c {
                stats.mean[k] = (T::one() - mom) * stats.mean[k] + mom * mean[k];
                stats.var[k] = (T::one() - mom) * stats.var[k] + mom * var[k] * unbias;
            }
            (mean, var)
        } else {
            (stats.mean.clone(), stats.var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let xhat: Vec<T> = x
            .iter()
            .enumerate()
            .map(|(i, v)| (*v - mean[layout.group(i)]) * inv_std[layout.group(i)])
            .collect();
        drop(x);
        let (gd, bd) = (gamma.data(), beta.data());
        let data = xhat
            .iter()
            .enumerate()
            .map(|(i, xh)| gd[layout.param_index(i)] * *xh + bd[layout.param_index(i)])
            .collect();
        drop((gd, bd));
        let func = Normalized {
            x: self.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            inv_std,
            layout,
            batch_stats: train,
        };
        Ok(Tensor::from_op(s.to_vec(), data, func))
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        let s = self.shape();
        let d = *s.last().ok_or_else(|| shape_err("layer_norm on scalar"))?;
        if gamma.shape() != [d] || beta.shape() != [d] || d == 0 {
            return Err(shape_err(format!(
                "layer_norm: input {s:?}, gamma {:?}, beta {:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let layout = Layout::Rows { d };
        let x = self.data();
        let rows = x.len() / d;
        let eps = T::of(eps);
        let mut inv_std = Vec::with_capacity(rows);
        let mut xhat = Vec::with_capacity(x.len());
        for row in x.chunks(d) {
            let mean = row.iter().copied().sum::<T>() / T::of(d as f64);
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / T::of(d as f64);
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (*v - mean) * is));
        }
        drop(x);
        let (gd, bd) = (gamma.data(), beta.data());
        let data = xhat
            .iter()
            .enumerate()
            .map(|(i, xh)| gd[i % d] * *xh + bd[i % d])
            .collect();
        drop((gd, bd));
        let func = Normalized {
            x: self.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            inv_std,
            layout,
            batch_stats: true,
        };
        Ok(Tensor::from_op(s.to_vec(), data, func))
    }
}
