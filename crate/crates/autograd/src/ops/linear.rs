use crate::real::{gemm, Mat};
use crate::{Graph, Real, Tensor, Var};

impl<T: Real> Graph<T> {
    /// `x W + b` over the trailing axis: `x [.., in]`, `w [in, out]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (vx, vw) = (self.value(x), self.value(w));
        let (rows, din) = (vx.rows(), vx.cols());
        assert_eq!(vw.shape().len(), 2, "linear: weight must be 2-D");
        assert_eq!(vw.shape()[0], din, "linear: input width {din} vs weight {:?}", vw.shape());
        let dout = vw.shape()[1];
        let mut out = vec![T::zero(); rows * dout];
        if let Some(b) = b {
            let vb = self.value(b);
            assert_eq!(vb.len(), dout, "linear: bias size");
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(vb.data());
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        gemm(
            T::one(),
            Mat::rm(vx.data(), 0, rows, din, din),
            Mat::rm(vw.data(), 0, din, dout, dout),
            beta,
            &mut out,
            0,
            dout,
        );
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        let xshape = vx.shape().to_vec();
        let wshape = vw.shape().to_vec();
        let out = Tensor::new(&shape, out);
        let parents: Vec<Var> = std::iter::once(x).chain(std::iter::once(w)).chain(b).collect();
        self.push(out, &parents, move |g, nodes, sink| {
            let gd = g.data();
            if sink.wants(x) {
                let vw = &nodes[w.0].value;
                let gx = sink.slot(x, &xshape);
                gemm(
                    T::one(),
                    Mat::rm(gd, 0, rows, dout, dout),
                    Mat::rm(vw.data(), 0, din, dout, dout).t(),
                    T::one(),
                    gx,
                    0,
                    din,
                );
            }
            if sink.wants(w) {
                let vx = &nodes[x.0].value;
                let gw = sink.slot(w, &wshape);
                gemm(
                    T::one(),
                    Mat::rm(vx.data(), 0, rows, din, din).t(),
                    Mat::rm(gd, 0, rows, dout, dout),
                    T::one(),
                    gw,
                    0,
                    dout,
                );
            }
            if let Some(b) = b {
                if sink.wants(b) {
                    let gb = sink.slot(b, &[dout]);
                    for row in gd.chunks(dout) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
        })
    }

    /// Plain 2-D matrix product `a [m, k] * b [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = (va.rows(), va.cols());
        assert_eq!(vb.rows(), k, "matmul: inner dimension");
        let n = vb.cols();
        let mut out = vec![T::zero(); m * n];
        gemm(T::one(), Mat::rm(va.data(), 0, m, k, k), Mat::rm(vb.data(), 0, k, n, n), T::zero(), &mut out, 0, n);
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        self.push(Tensor::new(&[m, n], out), &[a, b], move |g, nodes, sink| {
            let gd = g.data();
            if sink.wants(a) {
                let vb = &nodes[b.0].value;
                let ga = sink.slot(a, &sa);
                gemm(T::one(), Mat::rm(gd, 0, m, n, n), Mat::rm(vb.data(), 0, k, n, n).t(), T::one(), ga, 0, k);
            }
            if sink.wants(b) {
                let va = &nodes[a.0].value;
                let gb = sink.slot(b, &sb);
                gemm(T::one(), Mat::rm(va.data(), 0, m, k, k).t(), Mat::rm(gd, 0, m, n, n), T::one(), gb, 0, n);
            }
        })
    }
}
