//! Dense kernels shared by the forward and backward passes.

use crate::num::{Scalar, Strided};

/// `c[n×m] = a[n×k] · b[k×m]`
pub(crate) fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut c = vec![S::zero(); n * m];
    S::gemm(n, k, m, Strided::rows(a, k), Strided::rows(b, m), S::zero(), &mut c);
    c
}

/// `c[n×k] += g[n×m] · b[k×m]ᵀ`
pub(crate) fn matmul_nt_acc<S: Scalar>(c: &mut [S], g: &[S], b: &[S], n: usize, k: usize, m: usize) {
    S::gemm(n, m, k, Strided::rows(g, m), Strided::t(b, m), S::one(), c);
}

/// `c[k×m] += a[n×k]ᵀ · g[n×m]`
pub(crate) fn matmul_tn_acc<S: Scalar>(c: &mut [S], a: &[S], g: &[S], n: usize, k: usize, m: usize) {
    S::gemm(k, n, m, Strided::t(a, k), Strided::rows(g, m), S::one(), c);
}

/// Geometry of a stride-1 1-D convolution over `[batch, channels, length]` data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn len_out(&self) -> usize {
        self.len_in + 2 * self.pad + 1 - self.kernel
    }

    /// Output positions `t` for which input index `t + k - pad` is in range.
    fn valid(&self, k: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(k);
        let hi = (self.len_in + self.pad).saturating_sub(k).min(self.len_out());
        (lo, hi.max(lo))
    }
}

impl ConvGeom {
    /// Unfolds sample `n` into `col[(c·K + k), t] = x[n, c, t + k − pad]`, zero outside.
    fn im2col<S: Scalar>(&self, x: &[S], n: usize, col: &mut [S]) {
        let lo = self.len_out();
        col.iter_mut().for_each(|v| *v = S::zero());
        for c in 0..self.c_in {
            let xrow = &x[(n * self.c_in + c) * self.len_in..(n * self.c_in + c + 1) * self.len_in];
            for k in 0..self.kernel {
                let (t0, t1) = self.valid(k);
                let off = t0 + k - self.pad;
                let dst = &mut col[(c * self.kernel + k) * lo..(c * self.kernel + k + 1) * lo];
                dst[t0..t1].copy_from_slice(&xrow[off..off + (t1 - t0)]);
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: folds `col` back into sample `n` of `gx`.
    fn col2im<S: Scalar>(&self, col: &[S], n: usize, gx: &mut [S]) {
        let lo = self.len_out();
        for c in 0..self.c_in {
            let gxrow = &mut gx[(n * self.c_in + c) * self.len_in..(n * self.c_in + c + 1) * self.len_in];
            for k in 0..self.kernel {
                let (t0, t1) = self.valid(k);
                let off = t0 + k - self.pad;
                let src = &col[(c * self.kernel + k) * lo..(c * self.kernel + k + 1) * lo];
                for (xv, &v) in gxrow[off..off + (t1 - t0)].iter_mut().zip(&src[t0..t1]) {
                    *xv += v;
                }
            }
        }
    }

    fn patch(&self) -> usize {
        self.c_in * self.kernel
    }
}

/// Cross-correlation `y[n,o,t] = Σ_{c,k} w[o,c,k] · x[n,c,t+k-pad]`, bias not included.
pub(crate) fn conv_forward<S: Scalar>(x: &[S], w: &[S], g: &ConvGeom) -> Vec<S> {
    let lo = g.len_out();
    let pk = g.patch();
    let mut y = vec![S::zero(); g.batch * g.c_out * lo];
    let mut col = vec![S::zero(); pk * lo];
    for n in 0..g.batch {
        g.im2col(x, n, &mut col);
        let yn = &mut y[n * g.c_out * lo..(n + 1) * g.c_out * lo];
        S::gemm(g.c_out, pk, lo, Strided::rows(w, pk), Strided::rows(&col, lo), S::zero(), yn);
    }
    y
}

/// Adjoint of [`conv_forward`] with respect to its input: accumulates into `gx`.
pub(crate) fn conv_backward_input<S: Scalar>(gx: &mut [S], gy: &[S], w: &[S], g: &ConvGeom) {
    let lo = g.len_out();
    let pk = g.patch();
    let mut col = vec![S::zero(); pk * lo];
    for n in 0..g.batch {
        let gyn = &gy[n * g.c_out * lo..(n + 1) * g.c_out * lo];
        S::gemm(pk, g.c_out, lo, Strided::t(w, pk), Strided::rows(gyn, lo), S::zero(), &mut col);
        g.col2im(&col, n, gx);
    }
}

/// Adjoint of [`conv_forward`] with respect to the kernel: accumulates into `gw`.
pub(crate) fn conv_backward_weight<S: Scalar>(gw: &mut [S], x: &[S], gy: &[S], g: &ConvGeom) {
    let lo = g.len_out();
    let pk = g.patch();
    let mut col = vec![S::zero(); pk * lo];
    for n in 0..g.batch {
        g.im2col(x, n, &mut col);
        let gyn = &gy[n * g.c_out * lo..(n + 1) * g.c_out * lo];
        S::gemm(g.c_out, lo, pk, Strided::rows(gyn, lo), Strided::t(&col, lo), S::one(), gw);
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let lo = g.len_out();
        let mut y = vec![0.0; g.batch * g.c_out * lo];
        for n in 0..g.batch {
            for o in 0..g.c_out {
                for t in 0..lo {
                    let mut s = 0.0;
                    for c in 0..g.c_in {
                        for k in 0..g.kernel {
                            let idx = t as isize + k as isize - g.pad as isize;
                            if idx >= 0 && (idx as usize) < g.len_in {
                                s += w[(o * g.c_in + c) * g.kernel + k]
                                    * x[(n * g.c_in + c) * g.len_in + idx as usize];
                            }
                        }
                    }
                    y[(n * g.c_out + o) * lo + t] = s;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive_loop() {
        let g = ConvGeom {
            batch: 2,
            c_in: 3,
            c_out: 2,
            len_in: 9,
            kernel: 5,
            pad: 2,
        };
        let x: Vec<f64> = (0..g.batch * g.c_in * g.len_in)
            .map(|i| ((i * 7 % 11) as f64) - 5.0)
            .collect();
        let w: Vec<f64> = (0..g.c_out * g.c_in * g.kernel)
            .map(|i| ((i * 3 % 7) as f64) * 0.1 - 0.3)
            .collect();
        let fast = conv_forward(&x, &w, &g);
        let slow = naive_conv(&x, &w, &g);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_adjoint_identity() {
        // <conv(x), y> == <x, conv_backward_input(y)>
        let g = ConvGeom {
            batch: 1,
            c_in: 2,
            c_out: 3,
            len_in: 7,
            kernel: 3,
            pad: 1,
        };
        let x: Vec<f64> = (0..14).map(|i| (i as f64).sin()).collect();
        let w: Vec<f64> = (0..18).map(|i| (i as f64 * 0.7).cos()).collect();
        let y: Vec<f64> = (0..21).map(|i| (i as f64 * 1.3).sin()).collect();
        let cx = conv_forward(&x, &w, &g);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut gx = vec![0.0; 14];
        conv_backward_input(&mut gx, &y, &w, &g);
        let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }
}
