use std::rc::Rc;

use crate::{Graph, Real, Tensor, Var};

impl<T: Real> Graph<T> {
    /// Elementwise `a + b` (identical shapes).
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape(), data);
        self.push(out, &[a, b], move |g, _, sink| {
            sink.add(a, g.clone());
            sink.add(b, g.clone());
        })
    }

    /// Elementwise `a - b` (identical shapes).
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(va.shape(), data);
        self.push(out, &[a, b], move |g, _, sink| {
            sink.add(a, g.clone());
            sink.add(b, g.map(|v| -v));
        })
    }

    /// Elementwise product (identical shapes).
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(va.shape(), data);
        self.push(out, &[a, b], move |g, nodes, sink| {
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            if sink.wants(a) {
                let d = g.data().iter().zip(vb.data()).map(|(&g, &y)| g * y).collect();
                sink.add(a, Tensor::new(g.shape(), d));
            }
            if sink.wants(b) {
                let d = g.data().iter().zip(va.data()).map(|(&g, &x)| g * x).collect();
                sink.add(b, Tensor::new(g.shape(), d));
            }
        })
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, &[a], move |g, _, sink| sink.add(a, g.map(|v| v * c)))
    }

    /// `x + y` where `y` has `k` rows, `x` has `n*k` rows and row `r` of `x`
    /// receives row `r % k` of `y`. A rank-1 `y` acts as a bias.
    pub fn add_tiled(&mut self, x: Var, y: Var) -> Var {
        let (vx, vy) = (self.value(x), self.value(y));
        let c = vx.cols();
        assert_eq!(c, vy.cols(), "add_tiled: column mismatch");
        let k = vy.rows();
        assert!(k > 0 && vx.rows() % k == 0, "add_tiled: rows not divisible");
        let mut data = vx.data().to_vec();
        let yd = vy.data();
        for (chunk_idx, chunk) in data.chunks_mut(c).enumerate() {
            let yr = &yd[(chunk_idx % k) * c..(chunk_idx % k + 1) * c];
            for (o, &v) in chunk.iter_mut().zip(yr) {
                *o += v;
            }
        }
        let yshape = vy.shape().to_vec();
        let out = Tensor::new(vx.shape(), data);
        self.push(out, &[x, y], move |g, _, sink| {
            sink.add(x, g.clone());
            if sink.wants(y) {
                let gy = sink.slot(y, &yshape);
                for (chunk_idx, chunk) in g.data().chunks(c).enumerate() {
                    let off = (chunk_idx % k) * c;
                    for (o, &v) in gy[off..off + c].iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
            }
        })
    }

    /// `x + y` where row `r` of `x` receives row `r / rep` of `y`.
    pub fn add_repeated(&mut self, x: Var, y: Var, rep: usize) -> Var {
        let (vx, vy) = (self.value(x), self.value(y));
        let c = vx.cols();
        assert_eq!(c, vy.cols(), "add_repeated: column mismatch");
        assert_eq!(vx.rows(), vy.rows() * rep, "add_repeated: row mismatch");
        let mut data = vx.data().to_vec();
        let yd = vy.data();
        for (r, chunk) in data.chunks_mut(c).enumerate() {
            let yr = &yd[(r / rep) * c..(r / rep + 1) * c];
            for (o, &v) in chunk.iter_mut().zip(yr) {
                *o += v;
            }
        }
        let yshape = vy.shape().to_vec();
        let out = Tensor::new(vx.shape(), data);
        self.push(out, &[x, y], move |g, _, sink| {
            sink.add(x, g.clone());
            if sink.wants(y) {
                let gy = sink.slot(y, &yshape);
                for (r, chunk) in g.data().chunks(c).enumerate() {
                    let off = (r / rep) * c;
                    for (o, &v) in gy[off..off + c].iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
            }
        })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let vx = self.value(x);
        let old = vx.shape().to_vec();
        let out = vx.clone().reshape(shape);
        self.push(out, &[x], move |g, _, sink| sink.add(x, g.clone().reshape(&old)))
    }

    /// Gradient-free copy.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.stop_gradient(x);
        self.constant(v)
    }

    /// Rows of a 2-D view selected by `idx` (repeats allowed). Output shape
    /// `[idx.len(), cols]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let vx = self.value(x);
        let c = vx.cols();
        let n = vx.rows();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < n, "gather_rows: index {i} out of range {n}");
            data.extend_from_slice(vx.row(i));
        }
        let xshape = vx.shape().to_vec();
        let idx: Rc<[usize]> = idx.into();
        let out = Tensor::new(&[idx.len(), c], data);
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, &xshape);
            for (r, &i) in idx.iter().enumerate() {
                for (o, &v) in gx[i * c..(i + 1) * c].iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                    *o += v;
                }
            }
        })
    }

    /// Stacks 2-D views with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), c, "concat_rows: column mismatch");
            data.extend_from_slice(v.data());
            sizes.push((p, v.shape().to_vec(), v.len()));
        }
        let rows = data.len() / c.max(1);
        let out = Tensor::new(&[rows, c], data);
        self.push(out, parts, move |g, _, sink| {
            let mut off = 0;
            for (p, shape, len) in &sizes {
                if sink.wants(*p) {
                    sink.add(*p, Tensor::new(shape, g.data()[off..off + len].to_vec()));
                }
                off += len;
            }
        })
    }

    /// Side-by-side concatenation of two 2-D views with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (ca, cb) = (va.cols(), vb.cols());
        let rows = va.rows();
        assert_eq!(rows, vb.rows(), "concat_cols: row mismatch");
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        let out = Tensor::new(&[rows, ca + cb], data);
        self.push(out, &[a, b], move |g, _, sink| {
            let w = ca + cb;
            if sink.wants(a) {
                let mut d = Vec::with_capacity(rows * ca);
                for r in 0..rows {
                    d.extend_from_slice(&g.data()[r * w..r * w + ca]);
                }
                sink.add(a, Tensor::new(&sa, d));
            }
            if sink.wants(b) {
                let mut d = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    d.extend_from_slice(&g.data()[r * w + ca..(r + 1) * w]);
                }
                sink.add(b, Tensor::new(&sb, d));
            }
        })
    }

    /// Columns `start..start+len` of a 2-D view.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let vx = self.value(x);
        let c = vx.cols();
        assert!(start + len <= c, "slice_cols out of range");
        let rows = vx.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&vx.row(r)[start..start + len]);
        }
        let xshape = vx.shape().to_vec();
        let out = Tensor::new(&[rows, len], data);
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, &xshape);
            for r in 0..rows {
                for (o, &v) in gx[r * c + start..r * c + start + len]
                    .iter_mut()
                    .zip(&g.data()[r * len..(r + 1) * len])
                {
                    *o += v;
                }
            }
        })
    }

    /// Swaps the two trailing axes of a `[.., b, c]` tensor.
    pub fn transpose_last2(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s = vx.shape().to_vec();
        assert!(s.len() >= 2, "transpose_last2 needs rank >= 2");
        let (b, c) = (s[s.len() - 2], s[s.len() - 1]);
        let outer = vx.len() / (b * c).max(1);
        let mut data = vec![T::zero(); vx.len()];
        let src = vx.data();
        for o in 0..outer {
            let base = o * b * c;
            for i in 0..b {
                for j in 0..c {
                    data[base + j * b + i] = src[base + i * c + j];
                }
            }
        }
        let mut ns = s.clone();
        let n = ns.len();
        ns.swap(n - 2, n - 1);
        let out = Tensor::new(&ns, data);
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, &s);
            let gd = g.data();
            for o in 0..outer {
                let base = o * b * c;
                for i in 0..b {
                    for j in 0..c {
                        gx[base + i * c + j] += gd[base + j * b + i];
                    }
                }
            }
        })
    }

    /// Mean over consecutive groups of `group` rows: `[a*group, c] -> [a, c]`.
    pub fn mean_groups(&mut self, x: Var, group: usize) -> Var {
        let vx = self.value(x);
        let c = vx.cols();
        assert!(group > 0 && vx.rows().is_multiple_of(group), "mean_groups: bad group");
        let a = vx.rows() / group;
        let inv = T::one() / T::from_usize(group).unwrap();
        let mut data = vec![T::zero(); a * c];
        for (r, row) in vx.data().chunks(c).enumerate() {
            let o = &mut data[(r / group) * c..(r / group + 1) * c];
            for (d, &v) in o.iter_mut().zip(row) {
                *d += v;
            }
        }
        for d in &mut data {
            *d *= inv;
        }
        let xshape = vx.shape().to_vec();
        let out = Tensor::new(&[a, c], data);
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, &xshape);
            for (r, row) in gx.chunks_mut(c).enumerate() {
                let gr = &g.data()[(r / group) * c..(r / group + 1) * c];
                for (o, &v) in row.iter_mut().zip(gr) {
                    *o += v * inv;
                }
            }
        })
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s: T = vx.data().iter().copied().sum();
        let shape = vx.shape().to_vec();
        self.push(Tensor::scalar(s), &[x], move |g, _, sink| {
            let gv = g.item();
            for o in sink.slot(x, &shape) {
                *o += gv;
            }
        })
    }

    /// `sum_i x_i c_i` against a constant weight tensor of the same size.
    pub fn dot_const(&mut self, x: Var, c: Tensor<T>) -> Var {
        let vx = self.value(x);
        assert_eq!(vx.len(), c.len(), "dot_const: size mismatch");
        let s: T = vx.data().iter().zip(c.data()).map(|(&a, &b)| a * b).sum();
        let shape = vx.shape().to_vec();
        self.push(Tensor::scalar(s), &[x], move |g, _, sink| {
            let gv = g.item();
            for (o, &w) in sink.slot(x, &shape).iter_mut().zip(c.data()) {
                *o += gv * w;
            }
        })
    }

    /// Sum of one-element vars.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let s: T = parts.iter().map(|&p| self.value(p).item()).sum();
        let parts_owned: Vec<Var> = parts.to_vec();
        self.push(Tensor::scalar(s), parts, move |g, _, sink| {
            for &p in &parts_owned {
                sink.add(p, g.clone());
            }
        })
    }
}
