//! Fused scaled dot-product multi-head attention over independent groups.

use std::rc::Rc;

use super::norm::softmax_in_place;
use crate::real::{gemm, Mat};
use crate::{Graph, Real, Tensor, Var};

/// Layout of a batched attention call.
///
/// Queries are `[groups * q_len, dim]`, keys/values `[groups * k_len, dim]`.
/// Query rows of group `g` only see key rows of group `g`. `key_mask`, when
/// present, has `groups * k_len` entries; `false` keys get zero weight.
#[derive(Clone, Debug)]
pub struct AttentionSpec {
    pub groups: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub key_mask: Option<Rc<[bool]>>,
}

/// Softmax weights `[groups, heads, q_len, k_len]` of one attention call.
#[derive(Clone, Debug)]
pub struct AttentionWeights<T> {
    pub groups: usize,
    pub heads: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub data: Vec<T>,
}

impl<T: Real> AttentionWeights<T> {
    /// Weights of one query row, `k_len` entries.
    pub fn row(&self, group: usize, head: usize, q: usize) -> &[T] {
        let off = ((group * self.heads + head) * self.q_len + q) * self.k_len;
        &self.data[off..off + self.k_len]
    }
}

impl<T: Real> Graph<T> {
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: &AttentionSpec) -> (Var, Rc<AttentionWeights<T>>) {
        let AttentionSpec { groups, q_len, k_len, heads, .. } = *spec;
        let mask = spec.key_mask.clone();
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let d = vq.cols();
        assert_eq!(vq.rows(), groups * q_len, "attention: query rows");
        assert_eq!(vk.rows(), groups * k_len, "attention: key rows");
        assert_eq!(vv.rows(), groups * k_len, "attention: value rows");
        assert!(vk.cols() == d && vv.cols() == d, "attention: width mismatch");
        assert!(heads > 0 && d % heads == 0, "attention: {d} not divisible by {heads} heads");
        if let Some(m) = &mask {
            assert_eq!(m.len(), groups * k_len, "attention: mask size");
            for g in 0..groups {
                assert!(
                    m[g * k_len..(g + 1) * k_len].iter().any(|&b| b),
                    "attention: group {g} has no visible keys"
                );
            }
        }
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let mut probs = vec![T::zero(); groups * heads * q_len * k_len];
        let mut out = vec![T::zero(); groups * q_len * d];
        let (qd, kd, vd) = (vq.data(), vk.data(), vv.data());
        for g in 0..groups {
            for h in 0..heads {
                let p_off = (g * heads + h) * q_len * k_len;
                let pb = &mut probs[p_off..p_off + q_len * k_len];
                gemm(
                    scale,
                    Mat::rm(qd, g * q_len * d + h * dh, q_len, dh, d),
                    Mat::rm(kd, g * k_len * d + h * dh, k_len, dh, d).t(),
                    T::zero(),
                    pb,
                    0,
                    k_len,
                );
                for row in pb.chunks_mut(k_len) {
                    if let Some(m) = &mask {
                        for (s, &keep) in row.iter_mut().zip(&m[g * k_len..(g + 1) * k_len]) {
                            if !keep {
                                *s = T::neg_infinity();
                            }
                        }
                    }
                    softmax_in_place(row);
                }
                gemm(
                    T::one(),
                    Mat::rm(&probs, p_off, q_len, k_len, k_len),
                    Mat::rm(vd, g * k_len * d + h * dh, k_len, dh, d),
                    T::zero(),
                    &mut out,
                    g * q_len * d + h * dh,
                    d,
                );
            }
        }
        let weights = Rc::new(AttentionWeights { groups, heads, q_len, k_len, data: probs });
        let saved = weights.clone();
        let out = Tensor::new(&[groups * q_len, d], out);
        let (qs, ks, vs) = (vq.shape().to_vec(), vk.shape().to_vec(), vv.shape().to_vec());
        let var = self.push(out, &[q, k, v], move |g_out, nodes, sink| {
            let (qd, kd, vd) = (nodes[q.0].value.data(), nodes[k.0].value.data(), nodes[v.0].value.data());
            let go = g_out.data();
            let p = &saved.data;
            let mut gq = vec![T::zero(); groups * q_len * d];
            let mut gk = vec![T::zero(); groups * k_len * d];
            let mut gv = vec![T::zero(); groups * k_len * d];
            let mut ds = vec![T::zero(); q_len * k_len];
            for g in 0..groups {
                for h in 0..heads {
                    let p_off = (g * heads + h) * q_len * k_len;
                    let q_off = g * q_len * d + h * dh;
                    let k_off = g * k_len * d + h * dh;
                    // dV += P^T dO
                    gemm(
                        T::one(),
                        Mat::rm(p, p_off, q_len, k_len, k_len).t(),
                        Mat::rm(go, q_off, q_len, dh, d),
                        T::one(),
                        &mut gv,
                        k_off,
                        d,
                    );
                    // dP = dO V^T
                    gemm(
                        T::one(),
                        Mat::rm(go, q_off, q_len, dh, d),
                        Mat::rm(vd, k_off, k_len, dh, d).t(),
                        T::zero(),
                        &mut ds,
                        0,
                        k_len,
                    );
                    for (dr, pr) in ds.chunks_mut(k_len).zip(p[p_off..p_off + q_len * k_len].chunks(k_len)) {
                        let dot: T = dr.iter().zip(pr).map(|(&a, &b)| a * b).sum();
                        for (x, &pv) in dr.iter_mut().zip(pr) {
                            *x = pv * (*x - dot) * scale;
                        }
                    }
                    gemm(T::one(), Mat::rm(&ds, 0, q_len, k_len, k_len), Mat::rm(kd, k_off, k_len, dh, d), T::one(), &mut gq, q_off, d);
                    gemm(
                        T::one(),
                        Mat::rm(&ds, 0, q_len, k_len, k_len).t(),
                        Mat::rm(qd, q_off, q_len, dh, d),
                        T::one(),
                        &mut gk,
                        k_off,
                        d,
                    );
                }
            }
            sink.add(q, Tensor::new(&qs, gq));
            sink.add(k, Tensor::new(&ks, gk));
            sink.add(v, Tensor::new(&vs, gv));
        });
        (var, weights)
    }
}
