//! Bilinear resizing with half-pixel centers (`align_corners = false`).

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::{Function, Tensor};

/// Source taps `(i0, i1, λ)` for each output index along one axis.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

struct Upsample<T: Element> {
    x: Tensor<T>,
    ty: Vec<(usize, usize, f64)>,
    tx: Vec<(usize, usize, f64)>,
}

impl<T: Element> Function<T> for Upsample<T> {
    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.x]
    }

    fn backward(&self, _: &[T], g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let s = self.x.shape();
        let (h, w) = (s[2], s[3]);
        let (ho, wo) = (self.ty.len(), self.tx.len());
        let mut dx = vec![T::zero(); self.x.len()];
        let (ty, tx) = (&self.ty, &self.tx);
        sal360_par::for_each_chunk_mut(&mut dx, h * w, |plane, out| {
            let gp = &g[plane * ho * wo..(plane + 1) * ho * wo];
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let (ly, my) = (T::of(ly), T::of(1.0 - ly));
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let (lx, mx) = (T::of(lx), T::of(1.0 - lx));
                    let gv = gp[oy * wo + ox];
                    out[y0 * w + x0] += gv * my * mx;
                    out[y0 * w + x1] += gv * my * lx;
                    out[y1 * w + x0] += gv * ly * mx;
                    out[y1 * w + x1] += gv * ly * lx;
                }
            }
        });
        vec![Some(dx)]
    }
}

impl<T: Element> Tensor<T> {
    /// Bilinear resize of an `N×C×H×W` tensor to `out_h × out_w`.
    pub fn upsample_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 || s[2] == 0 || s[3] == 0 || out_h == 0 || out_w == 0 {
            return Err(shape_err(format!("upsample {s:?} -> {out_h}x{out_w}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let ty = taps(h, out_h);
        let tx = taps(w, out_w);
        let mut out = vec![T::zero(); planes * out_h * out_w];
        {
            let x_ref = self.data();
            let x: &[T] = &x_ref;
            sal360_par::for_each_chunk_mut(&mut out, out_h * out_w, |plane, o| {
                let xp = &x[plane * h * w..(plane + 1) * h * w];
                for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                    let (ly, my) = (T::of(ly), T::of(1.0 - ly));
                    for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                        let (lx, mx) = (T::of(lx), T::of(1.0 - lx));
                        let top = xp[y0 * w + x0] * mx + xp[y0 * w + x1] * lx;
                        let bottom = xp[y1 * w + x0] * mx + xp[y1 * w + x1] * lx;
                        o[oy * out_w + ox] = top * my + bottom * ly;
                    }
                }
            });
        }
        let func = Upsample {
            x: self.clone(),
            ty,
            tx,
        };
        Ok(Tensor::from_op(vec![s[0], s[1], out_h, out_w], out, func))
    }
}
