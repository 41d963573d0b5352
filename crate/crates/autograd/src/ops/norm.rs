use crate::{Graph, Real, Tensor, Var};

fn gelu_parts<T: Real>(x: T) -> (T, T) {
    // tanh approximation written as x * sigmoid(2z); returns (value, derivative)
    let k = T::c(0.797_884_560_802_865_4);
    let a = T::c(0.044_715);
    let inner = k * (x + a * x * x * x);
    let s = sigmoid(inner + inner);
    let dinner = k * (T::one() + T::c(3.0) * a * x * x);
    let y = x * s;
    let dy = s + T::c(2.0) * x * s * (T::one() - s) * dinner;
    (y, dy)
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| gelu_parts(v).0);
        self.push(out, &[x], move |g, nodes, sink| {
            let vx = &nodes[x.0].value;
            let shape = vx.shape().to_vec();
            let gx = sink.slot(x, &shape);
            for ((o, &gv), &xv) in gx.iter_mut().zip(g.data()).zip(vx.data()) {
                *o += gv * gelu_parts(xv).1;
            }
        })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let y = out.clone();
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, y.shape());
            for ((o, &gv), &s) in gx.iter_mut().zip(g.data()).zip(y.data()) {
                *o += gv * s * (T::one() - s);
            }
        })
    }

    /// `ln(x + eps)`.
    pub fn log_eps(&mut self, x: Var, eps: T) -> Var {
        let out = self.value(x).map(|v| (v + eps).ln());
        self.push(out, &[x], move |g, nodes, sink| {
            let vx = &nodes[x.0].value;
            let shape = vx.shape().to_vec();
            let gx = sink.slot(x, &shape);
            for ((o, &gv), &xv) in gx.iter_mut().zip(g.data()).zip(vx.data()) {
                *o += gv / (xv + eps);
            }
        })
    }

    /// Softmax over the trailing axis.
    pub fn softmax_last(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let c = vx.cols();
        let mut data = vx.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let out = Tensor::new(vx.shape(), data);
        let y = out.clone();
        self.push(out, &[x], move |g, _, sink| {
            let gx = sink.slot(x, y.shape());
            for ((gr, yr), ox) in g.data().chunks(c).zip(y.data().chunks(c)).zip(gx.chunks_mut(c)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((o, &gv), &yv) in ox.iter_mut().zip(gr).zip(yr) {
                    *o += yv * (gv - dot);
                }
            }
        })
    }

    /// Layer normalisation over the trailing axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let vx = self.value(x);
        let c = vx.cols();
        let rows = vx.rows();
        let (vg, vb) = (self.value(gamma), self.value(beta));
        assert_eq!(vg.len(), c, "layer_norm: gamma size");
        assert_eq!(vb.len(), c, "layer_norm: beta size");
        let inv_c = T::one() / T::from_usize(c).unwrap();
        let mut xhat = vec![T::zero(); vx.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); vx.len()];
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().copied().sum::<T>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let shape = vx.shape().to_vec();
        let out = Tensor::new(&shape, out);
        self.push(out, &[x, gamma, beta], move |g, nodes, sink| {
            let gd = g.data();
            if sink.wants(gamma) {
                let gg = sink.slot(gamma, &[c]);
                for r in 0..rows {
                    for j in 0..c {
                        gg[j] += gd[r * c + j] * xhat[r * c + j];
                    }
                }
            }
            if sink.wants(beta) {
                let gb = sink.slot(beta, &[c]);
                for row in gd.chunks(c) {
                    for (o, &v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
            }
            if sink.wants(x) {
                let gamma_v = nodes[gamma.0].value.data().to_vec();
                let gx = sink.slot(x, &shape);
                let mut dxhat = vec![T::zero(); c];
                for r in 0..rows {
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..c {
                        let d = gd[r * c + j] * gamma_v[j];
                        dxhat[j] = d;
                        m1 += d;
                        m2 += d * xhat[r * c + j];
                    }
                    m1 *= inv_c;
                    m2 *= inv_c;
                    for j in 0..c {
                        gx[r * c + j] += rstd[r] * (dxhat[j] - m1 - xhat[r * c + j] * m2);
                    }
                }
            }
        })
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
