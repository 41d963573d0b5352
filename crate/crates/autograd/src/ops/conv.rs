//! Square-kernel 2-D convolution on channels-last maps with edge-replicate
//! padding, lowered to im2col + GEMM.

use crate::real::{gemm, Mat};
use crate::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    /// Odd kernel size; padding is `kernel / 2` on every side.
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2dSpec {
    pub fn out_size(&self, n: usize) -> usize {
        let pad = self.kernel / 2;
        (n + 2 * pad - self.kernel) / self.stride + 1
    }
}

impl<T: Real> Graph<T> {
    /// `x [n, h, w, c]`, `weight [k*k*c, o]` laid out `(ky, kx, c)`, `bias [o]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, spec: Conv2dSpec) -> Var {
        let vx = self.value(x);
        let s = vx.shape().to_vec();
        assert_eq!(s.len(), 4, "conv2d expects [n, h, w, c]");
        assert!(spec.kernel % 2 == 1 && spec.stride > 0, "conv2d: odd kernel, positive stride");
        let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
        let k = spec.kernel;
        let pad = (k / 2) as isize;
        let (ho, wo) = (spec.out_size(h), spec.out_size(w));
        let kc = k * k * c;
        let vw = self.value(weight);
        assert_eq!(vw.shape()[0], kc, "conv2d: weight rows");
        let o = vw.shape()[1];
        assert_eq!(self.value(bias).len(), o, "conv2d: bias size");

        // source pixel for every (output position, tap)
        let src_index = move |ni: usize, oy: usize, ox: usize, ky: usize, kx: usize| -> usize {
            let iy = (oy as isize * spec.stride as isize + ky as isize - pad).clamp(0, h as isize - 1) as usize;
            let ix = (ox as isize * spec.stride as isize + kx as isize - pad).clamp(0, w as isize - 1) as usize;
            ((ni * h + iy) * w + ix) * c
        };

        let rows = n * ho * wo;
        let mut cols = vec![T::zero(); rows * kc];
        let xd = vx.data();
        for ni in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let r = (ni * ho + oy) * wo + ox;
                    for ky in 0..k {
                        for kx in 0..k {
                            let src = src_index(ni, oy, ox, ky, kx);
                            let dst = r * kc + (ky * k + kx) * c;
                            cols[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                        }
                    }
                }
            }
        }
        let mut out = vec![T::zero(); rows * o];
        let bd = self.value(bias).data();
        for row in out.chunks_mut(o) {
            row.copy_from_slice(bd);
        }
        gemm(T::one(), Mat::rm(&cols, 0, rows, kc, kc), Mat::rm(vw.data(), 0, kc, o, o), T::one(), &mut out, 0, o);
        let out = Tensor::new(&[n, ho, wo, o], out);
        self.push(out, &[x, weight, bias], move |g, nodes, sink| {
            let gd = g.data();
            if sink.wants(bias) {
                let gb = sink.slot(bias, &[o]);
                for row in gd.chunks(o) {
                    for (a, &v) in gb.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            if sink.wants(weight) {
                let gw = sink.slot(weight, &[kc, o]);
                gemm(T::one(), Mat::rm(&cols, 0, rows, kc, kc).t(), Mat::rm(gd, 0, rows, o, o), T::one(), gw, 0, o);
            }
            if sink.wants(x) {
                let wv = nodes[weight.0].value.data();
                let mut dcols = vec![T::zero(); rows * kc];
                gemm(T::one(), Mat::rm(gd, 0, rows, o, o), Mat::rm(wv, 0, kc, o, o).t(), T::zero(), &mut dcols, 0, kc);
                let gx = sink.slot(x, &[n, h, w, c]);
                for ni in 0..n {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let r = (ni * ho + oy) * wo + ox;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let dst = src_index(ni, oy, ox, ky, kx);
                                    let src = r * kc + (ky * k + kx) * c;
                                    for (a, &v) in gx[dst..dst + c].iter_mut().zip(&dcols[src..src + c]) {
                                        *a += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        })
    }
}
