//! Dense inner loops shared by the ops.

use crate::element::Element;

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// `c[m×n] (+)= op(a) · op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`.
/// `ta` means `a` is stored as `k×m`; `tb` means `b` is stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Element>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let row = |i: usize, out: &mut [T]| {
        if !accumulate {
            out.iter_mut().for_each(|v| *v = T::zero());
        }
        let a_at = |p: usize| if ta { a[p * m + i] } else { a[i * k + p] };
        if tb {
            for (j, o) in out.iter_mut().enumerate() {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (p, &bv) in brow.iter().enumerate() {
                    acc += a_at(p) * bv;
                }
                *o += acc;
            }
        } else {
            for p in 0..k {
                let av = a_at(p);
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    };
    if m * n * k < PAR_THRESHOLD || m == 1 {
        c.chunks_mut(n).enumerate().for_each(|(i, out)| row(i, out));
    } else {
        sal360_par::for_each_chunk_mut(c, n, row);
    }
}
