use std::rc::Rc;

use crate::real::{gemm, Mat};
use crate::{Graph, Real, Tensor, Var};

impl<T: Real> Graph<T> {
    /// Per-group linear resampling with constant weights.
    ///
    /// `map` is `[groups * cells, d]`; `weights` holds one row-major
    /// `[out_rows, cells]` matrix per group. Output is `[groups * out_rows, d]`
    /// with `out[g] = weights[g] * map[g]`. Gradients flow into `map` only.
    pub fn resample(&mut self, map: Var, weights: Rc<[T]>, groups: usize, out_rows: usize) -> Var {
        let vm = self.value(map);
        let d = vm.cols();
        assert!(groups > 0 && vm.rows().is_multiple_of(groups), "resample: rows not divisible by groups");
        let cells = vm.rows() / groups;
        assert_eq!(weights.len(), groups * out_rows * cells, "resample: weight size");
        let mut out = vec![T::zero(); groups * out_rows * d];
        for g in 0..groups {
            gemm(
                T::one(),
                Mat::rm(&weights, g * out_rows * cells, out_rows, cells, cells),
                Mat::rm(vm.data(), g * cells * d, cells, d, d),
                T::zero(),
                &mut out,
                g * out_rows * d,
                d,
            );
        }
        let mshape = vm.shape().to_vec();
        let out = Tensor::new(&[groups * out_rows, d], out);
        self.push(out, &[map], move |g_out, _, sink| {
            let gm = sink.slot(map, &mshape);
            for g in 0..groups {
                gemm(
                    T::one(),
                    Mat::rm(&weights, g * out_rows * cells, out_rows, cells, cells).t(),
                    Mat::rm(g_out.data(), g * out_rows * d, out_rows, d, d),
                    T::one(),
                    gm,
                    g * cells * d,
                    d,
                );
            }
        })
    }
}
