//! Reshape, axis permutation and channel concatenation.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::{numel, Function, Tensor};

struct Reshape<T: Element>(Tensor<T>);

impl<T: Element> Function<T> for Reshape<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.0]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.to_vec())]
    }
}

/// Gathers `src` (with `shape`) into the axis order `perm`.
fn permute_values<T: Element>(src: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..src.len() {
        let offset: usize = idx.iter().zip(&out_strides).map(|(i, s)| i * s).sum();
        out.push(src[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

struct Permute<T: Element> {
    x: Tensor<T>,
    perm: Vec<usize>,
    out_shape: Vec<usize>,
}

impl<T: Element> Function<T> for Permute<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x]
    }
    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut inverse = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inverse[p] = i;
        }
        vec![Some(permute_values(g, &self.out_shape, &inverse))]
    }
}

struct Concat<T: Element> {
    parts: Vec<Tensor<T>>,
    outer: usize,
}

impl<T: Element> Function<T> for Concat<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        self.parts.iter().collect()
    }
    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let blocks: Vec<usize> = self.parts.iter().map(|p| p.len() / self.outer).collect();
        let total: usize = blocks.iter().sum();
        let mut grads: Vec<Option<Vec<T>>> = needs
            .iter()
            .zip(&self.parts)
            .map(|(n, p)| n.then(|| Vec::with_capacity(p.len())))
            .collect();
        for o in 0..self.outer {
            let mut offset = o * total;
            for (grad, block) in grads.iter_mut().zip(&blocks) {
                if let Some(grad) = grad {
                    grad.extend_from_slice(&g[offset..offset + block]);
                }
                offset += block;
            }
        }
        grads
    }
}

impl<T: Element> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.len() {
            return Err(shape_err(format!("reshape {:?} -> {shape:?}", self.shape())));
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), Reshape(self.clone())))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err(format!("permute {perm:?} on rank {rank}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let data = permute_values(&self.data(), self.shape(), perm);
        let func = Permute {
            x: self.clone(),
            perm: perm.to_vec(),
            out_shape: out_shape.clone(),
        };
        Ok(Tensor::from_op(out_shape, data, func))
    }

    /// Concatenates along axis 1; all other axes must agree.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| shape_err("concat of nothing"))?;
        let s0 = first.shape();
        if s0.len() < 2 {
            return Err(shape_err("concat needs rank >= 2"));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return Err(shape_err(format!("concat: {s0:?} vs {s:?}")));
            }
        }
        let outer = s0[0];
        let mut shape = s0.to_vec();
        shape[1] = parts.iter().map(|p| p.shape()[1]).sum();
        let mut data = Vec::with_capacity(numel(&shape));
        let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for d in &datas {
                let block = d.len() / outer;
                data.extend_from_slice(&d[o * block..(o + 1) * block]);
            }
        }
        drop(datas);
        let func = Concat {
            parts: parts.to_vec(),
            outer,
        };
        Ok(Tensor::from_op(shape, data, func))
    }
}
