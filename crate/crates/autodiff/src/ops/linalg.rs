//! Matrix products and softmax.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::kernels::gemm;
use crate::tensor::{Function, Tensor};

struct MatMul<T: Element> {
    a: Tensor<T>,
    b: Tensor<T>,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Element> Function<T> for MatMul<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.a, &self.b]
    }

    fn backward(&self, _: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let a = self.a.data();
        let b = self.b.data();
        let da = needs[0].then(|| {
            let mut da = vec![T::zero(); self.batch * m * k];
            for i in 0..self.batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                let bi = &b[i * k * n..(i + 1) * k * n];
                // dA = G · Bᵀ
                gemm(m, k, n, gi, false, bi, true, &mut da[i * m * k..(i + 1) * m * k], false);
            }
            da
        });
        let db = needs[1].then(|| {
            let mut db = vec![T::zero(); self.batch * k * n];
            for i in 0..self.batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                let ai = &a[i * m * k..(i + 1) * m * k];
                // dB = Aᵀ · G
                gemm(k, n, m, ai, true, gi, false, &mut db[i * k * n..(i + 1) * k * n], false);
            }
            db
        });
        vec![da, db]
    }
}

struct Softmax<T: Element> {
    x: Tensor<T>,
    d: usize,
}

impl<T: Element> Function<T> for Softmax<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x]
    }

    fn backward(&self, out: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut dx = Vec::with_capacity(out.len());
        for (y, gy) in out.chunks(self.d).zip(g.chunks(self.d)) {
            let dot: T = y.iter().zip(gy).map(|(a, b)| *a * *b).sum();
            dx.extend(y.iter().zip(gy).map(|(y, g)| *y * (*g - dot)));
        }
        vec![Some(dx)]
    }
}

impl<T: Element> Tensor<T> {
    /// `[m,k]·[k,n]` or batched `[B,m,k]·[B,k,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        let (batch, m, k, k2, n) = match (sa.len(), sb.len()) {
            (2, 2) => (1, sa[0], sa[1], sb[0], sb[1]),
            (3, 3) if sa[0] == sb[0] => (sa[0], sa[1], sa[2], sb[1], sb[2]),
            _ => (0, 0, 1, 0, 0),
        };
        if k != k2 || (batch == 0 && m == 0) {
            return Err(shape_err(format!("matmul: {sa:?} x {sb:?}")));
        }
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (a, b) = (self.data(), other.data());
            for i in 0..batch {
                gemm(
                    m,
                    n,
                    k,
                    &a[i * m * k..(i + 1) * m * k],
                    false,
                    &b[i * k * n..(i + 1) * k * n],
                    false,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let func = MatMul {
            a: self.clone(),
            b: other.clone(),
            batch,
            m,
            k,
            n,
        };
        Ok(Tensor::from_op(shape, out, func))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let d = *self.shape().last().ok_or_else(|| shape_err("softmax on scalar"))?;
        if d == 0 {
            return Err(shape_err("softmax over an empty axis"));
        }
        let mut out = Vec::with_capacity(self.len());
        for row in self.data().chunks(d) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            out.extend(row.iter().map(|v| (*v - max).exp()));
            let s: T = out[start..].iter().copied().sum();
            out[start..].iter_mut().for_each(|v| *v /= s);
        }
        Ok(Tensor::from_op(self.shape().to_vec(), out, Softmax { x: self.clone(), d }))
    }
}
