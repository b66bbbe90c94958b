//! 2-D convolution via im2col.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::kernels::gemm;
use crate::tensor::{Function, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

/// Column matrix `[ci·kh·kw, ho·wo]` of one image; padded taps are zero.
fn im2col<T: Element>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.p();
    for c in 0..g.ci {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let out = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        out[oy * g.wo + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < g.h
                            && (ix as usize) < g.w
                        {
                            plane[iy as usize * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back into image layout.
fn col2im<T: Element>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.p();
    for c in 0..g.ci {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            plane[iy as usize * g.w + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2d<T: Element> {
    x: Tensor<T>,
    w: Tensor<T>,
    b: Option<Tensor<T>>,
    g: Geometry,
}

impl<T: Element> Function<T> for Conv2d<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.x, &self.w];
        if let Some(b) = &self.b {
            v.push(b);
        }
        v
    }

    fn backward(&self, _: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = self.g;
        let (k, p) = (g.k(), g.p());
        let x_ref = self.x.data();
        let w_ref = self.w.data();
        let (x, w): (&[T], &[T]) = (&x_ref, &w_ref);
        let in_len = g.ci * g.h * g.w;
        let out_len = g.co * p;

        let dx = needs[0].then(|| {
            let parts = sal360_par::map_range(g.n, |n| {
                let mut dcols = vec![T::zero(); k * p];
                gemm(k, p, g.co, w, true, &grad[n * out_len..(n + 1) * out_len], false, &mut dcols, false);
                let mut dx = vec![T::zero(); in_len];
                col2im(&dcols, &g, &mut dx);
                dx
            });
            parts.concat()
        });

        let dw = needs[1].then(|| {
            // Per-image contributions, summed in image order.
            let parts = sal360_par::map_range(g.n, |n| {
                let mut cols = vec![T::zero(); k * p];
                im2col(&x[n * in_len..(n + 1) * in_len], &g, &mut cols);
                let mut dw = vec![T::zero(); g.co * k];
                gemm(g.co, k, p, &grad[n * out_len..(n + 1) * out_len], false, &cols, true, &mut dw, false);
                dw
            });
            let mut dw = vec![T::zero(); g.co * k];
            for part in parts {
                dw.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
            dw
        });

        let mut out = vec![dx, dw];
        if self.b.is_some() {
            out.push(needs[2].then(|| {
                let mut db = vec![T::zero(); g.co];
                for n in 0..g.n {
                    for (c, d) in db.iter_mut().enumerate() {
                        let start = n * out_len + c * p;
                        *d += grad[start..start + p].iter().copied().sum();
                    }
                }
                db
            }));
        }
        out
    }
}

impl<T: Element> Tensor<T> {
    /// Cross-correlation of `self` (`N×Cin×H×W`) with `weight`
    /// (`Cout×Cin×kh×kw`), optional per-output-channel `bias`, symmetric
    /// zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || stride == 0 {
            return Err(shape_err(format!(
                "conv2d: input {xs:?}, weight {ws:?}, stride {stride}"
            )));
        }
        if let Some(b) = bias {
            if b.shape() != [ws[0]] {
                return Err(shape_err(format!("conv2d: bias {:?} for {} outputs", b.shape(), ws[0])));
            }
        }
        let (h, w, kh, kw) = (xs[2], xs[3], ws[2], ws[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(shape_err(format!("conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")));
        }
        let g = Geometry {
            n: xs[0],
            ci: xs[1],
            h,
            w,
            co: ws[0],
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        let (k, p) = (g.k(), g.p());
        let in_len = g.ci * g.h * g.w;
        let data = {
            let x_ref = self.data();
            let w_ref = weight.data();
            let (x, wt): (&[T], &[T]) = (&x_ref, &w_ref);
            let b = bias.map(|b| b.to_vec());
            let parts = sal360_par::map_range(g.n, |n| {
                let mut cols = vec![T::zero(); k * p];
                im2col(&x[n * in_len..(n + 1) * in_len], &g, &mut cols);
                let mut out = vec![T::zero(); g.co * p];
                gemm(g.co, p, k, wt, false, &cols, false, &mut out, false);
                if let Some(b) = &b {
                    for (c, bc) in b.iter().enumerate() {
                        out[c * p..(c + 1) * p].iter_mut().for_each(|v| *v += *bc);
                    }
                }
                out
            });
            parts.concat()
        };
        let func = Conv2d {
            x: self.clone(),
            w: weight.clone(),
            b: bias.cloned(),
            g,
        };
        Ok(Tensor::from_op(vec![g.n, g.co, g.ho, g.wo], data, func))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn naive(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], s: usize, p: usize) -> Vec<f64> {
        let [n, ci, h, wd] = xs;
        let [co, _, kh, kw] = ws;
        let ho = (h + 2 * p - kh) / s + 1;
        let wo = (wd + 2 * p - kw) / s + 1;
        let mut out = vec![0.0; n * co * ho * wo];
        for b in 0..n {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x[((b * ci + c) * h + iy as usize) * wd + ix as usize]
                                            * w[((o * ci + c) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                        }
                        out[((b * co + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loops() {
        for &(xs, ws, s, p) in &[
            ([2, 3, 9, 11], [4, 3, 3, 3], 1, 1),
            ([1, 6, 16, 20], [5, 6, 7, 7], 4, 3),
            ([3, 2, 5, 4], [2, 2, 3, 3], 2, 1),
        ] {
            let x: Vec<f64> = (0..xs.iter().product::<usize>()).map(|i| (i as f64 * 0.31).sin()).collect();
            let w: Vec<f64> = (0..ws.iter().product::<usize>()).map(|i| (i as f64 * 0.17).cos()).collect();
            let xt = Tensor::new(&xs, x.clone()).unwrap();
            let wt = Tensor::new(&ws, w.clone()).unwrap();
            let y = xt.conv2d(&wt, None, s, p).unwrap();
            let want = naive(&x, xs, &w, ws, s, p);
            assert_eq!(y.len(), want.len());
            for (a, b) in y.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel_passes_values_and_gradients() {
        let x = Tensor::<f64>::param(&[1, 2, 3, 3], (0..18).map(|v| v as f64).collect()).unwrap();
        let mut w = vec![0.0; 4];
        w[0] = 1.0;
        w[3] = 1.0;
        let w = Tensor::new(&[2, 2, 1, 1], w).unwrap();
        let y = x.conv2d(&w, None, 1, 0).unwrap();
        assert_eq!(*y.data(), x.to_vec());
        let r: Vec<f64> = (0..18).map(|v| v as f64 * 0.5).collect();
        y.sum_product(&r).unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), r);
    }

    #[test]
    fn output_size_and_errors() {
        let x = Tensor::<f32>::zeros(&[1, 6, 64, 128]);
        let w = Tensor::<f32>::zeros(&[8, 6, 7, 7]);
        assert_eq!(x.conv2d(&w, None, 4, 3).unwrap().shape(), &[1, 8, 16, 32]);
        let bad = Tensor::<f32>::zeros(&[8, 3, 7, 7]);
        assert!(x.conv2d(&bad, None, 4, 3).is_err());
    }
}
