//! Fused loss terms with hand-written gradients.

use super::norm::sigmoid;
use crate::{Graph, Real, Tensor, Var};

/// Overlap loss between `(cx, cy, w, h)` boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxLossKind {
    /// `1 - IoU`
    Plain,
    /// `1 - GIoU`
    Generalized,
}

/// Value of the box loss for one pair and its gradient w.r.t. `pred`.
fn box_loss_grad<T: Real>(p: &[T], t: &[T], kind: BoxLossKind) -> (T, [T; 4]) {
    let half = T::c(0.5);
    let (x1, x2) = (p[0] - half * p[2], p[0] + half * p[2]);
    let (y1, y2) = (p[1] - half * p[3], p[1] + half * p[3]);
    let (tx1, tx2) = (t[0] - half * t[2], t[0] + half * t[2]);
    let (ty1, ty2) = (t[1] - half * t[3], t[1] + half * t[3]);
    let zero = T::zero();
    let one = T::one();

    let iw_raw = x2.min(tx2) - x1.max(tx1);
    let ih_raw = y2.min(ty2) - y1.max(ty1);
    let iw = iw_raw.max(zero);
    let ih = ih_raw.max(zero);
    let inter = iw * ih;
    let area = p[2] * p[3];
    let union = area + t[2] * t[3] - inter;
    let ew = x2.max(tx2) - x1.min(tx1);
    let eh = y2.max(ty2) - y1.min(ty1);
    let encl = ew * eh;

    // dL/d{inter, area, encl}
    let (mut loss, mut d_inter, mut d_area, mut d_encl) = (one, zero, zero, zero);
    if union > zero {
        let iou = inter / union;
        loss -= iou;
        // iou = I / (A + At - I)
        d_inter -= one / union + inter / (union * union);
        d_area += inter / (union * union);
    }
    if kind == BoxLossKind::Generalized {
        loss += one;
        if encl > zero {
            // -(U / E) with U = A + At - I
            loss -= union / encl;
            d_inter += one / encl;
            d_area -= one / encl;
            d_encl += union / (encl * encl);
        } else {
            loss -= one;
        }
    }

    // corners -> (cx, cy, w, h)
    let mut g_x1 = zero;
    let mut g_x2 = zero;
    let mut g_y1 = zero;
    let mut g_y2 = zero;
    let mut g_w = d_area * p[3];
    let mut g_h = d_area * p[2];
    if iw_raw > zero && ih_raw > zero {
        let d_iw = d_inter * ih;
        let d_ih = d_inter * iw;
        if x2 < tx2 {
            g_x2 += d_iw;
        }
        if x1 > tx1 {
            g_x1 -= d_iw;
        }
        if y2 < ty2 {
            g_y2 += d_ih;
        }
        if y1 > ty1 {
            g_y1 -= d_ih;
        }
    }
    if d_encl != zero {
        let d_ew = d_encl * eh;
        let d_eh = d_encl * ew;
        if x2 > tx2 {
            g_x2 += d_ew;
        }
        if x1 < tx1 {
            g_x1 -= d_ew;
        }
        if y2 > ty2 {
            g_y2 += d_eh;
        }
        if y1 < ty1 {
            g_y1 -= d_eh;
        }
    }
    let g_cx = g_x1 + g_x2;
    let g_cy = g_y1 + g_y2;
    g_w += half * (g_x2 - g_x1);
    g_h += half * (g_y2 - g_y1);
    (loss, [g_cx, g_cy, g_w, g_h])
}

impl<T: Real> Graph<T> {
    /// `sum_i w_i * BCE(y_i, sigmoid(z_i))`, computed stably from logits.
    pub fn bce_with_logits(&mut self, z: Var, target: Tensor<T>, weight: Tensor<T>) -> Var {
        let vz = self.value(z);
        assert!(vz.len() == target.len() && vz.len() == weight.len(), "bce: size mismatch");
        let mut total = T::zero();
        for ((&x, &y), &w) in vz.data().iter().zip(target.data()).zip(weight.data()) {
            // softplus(x) - y x
            let sp = x.max(T::zero()) + (-x.abs()).exp().ln_1p();
            total += w * (sp - y * x);
        }
        let shape = vz.shape().to_vec();
        self.push(Tensor::scalar(total), &[z], move |g, nodes, sink| {
            let gv = g.item();
            let zd = nodes[z.0].value.data().to_vec();
            let gz = sink.slot(z, &shape);
            for (((o, &x), &y), &w) in gz.iter_mut().zip(&zd).zip(target.data()).zip(weight.data()) {
                *o += gv * w * (sigmoid(x) - y);
            }
        })
    }

    /// `sum_i w_i * BCE(y_i, p_i)` on probabilities clipped to `[eps, 1 - eps]`.
    pub fn bce_prob(&mut self, p: Var, target: Tensor<T>, weight: Tensor<T>, eps: T) -> Var {
        let vp = self.value(p);
        assert!(vp.len() == target.len() && vp.len() == weight.len(), "bce_prob: size mismatch");
        let one = T::one();
        let mut total = T::zero();
        for ((&x, &y), &w) in vp.data().iter().zip(target.data()).zip(weight.data()) {
            let x = x.max(eps).min(one - eps);
            total -= w * (y * x.ln() + (one - y) * (one - x).ln());
        }
        let shape = vp.shape().to_vec();
        self.push(Tensor::scalar(total), &[p], move |g, nodes, sink| {
            let gv = g.item();
            let pd = nodes[p.0].value.data().to_vec();
            let gp = sink.slot(p, &shape);
            for (((o, &x), &y), &w) in gp.iter_mut().zip(&pd).zip(target.data()).zip(weight.data()) {
                if x < eps || x > one - eps {
                    continue;
                }
                *o += gv * w * ((one - y) / (one - x) - y / x);
            }
        })
    }

    /// `sum_r w_r * sum_c smoothL1(pred[r,c] - target[r,c])` with beta = 1.
    pub fn smooth_l1(&mut self, pred: Var, target: Tensor<T>, row_weight: Tensor<T>) -> Var {
        let vp = self.value(pred);
        let c = vp.cols();
        assert_eq!(vp.len(), target.len(), "smooth_l1: size mismatch");
        assert_eq!(vp.rows(), row_weight.len(), "smooth_l1: weight size");
        let half = T::c(0.5);
        let mut total = T::zero();
        for (r, (pr, tr)) in vp.data().chunks(c).zip(target.data().chunks(c)).enumerate() {
            let w = row_weight.data()[r];
            for (&p, &t) in pr.iter().zip(tr) {
                let d = (p - t).abs();
                total += w * if d < T::one() { half * d * d } else { d - half };
            }
        }
        let shape = vp.shape().to_vec();
        self.push(Tensor::scalar(total), &[pred], move |g, nodes, sink| {
            let gv = g.item();
            let pd = nodes[pred.0].value.data().to_vec();
            let gp = sink.slot(pred, &shape);
            for (i, o) in gp.iter_mut().enumerate() {
                let w = row_weight.data()[i / c];
                let d = pd[i] - target.data()[i];
                let dd = if d.abs() < T::one() { d } else { d.signum() };
                *o += gv * w * dd;
            }
        })
    }

    /// `sum_r w_r * loss(pred_r, target_r)` over `[n, 4]` center-size boxes.
    pub fn box_overlap_loss(&mut self, pred: Var, target: Tensor<T>, row_weight: Tensor<T>, kind: BoxLossKind) -> Var {
        let vp = self.value(pred);
        assert_eq!(vp.cols(), 4, "box loss expects [n, 4]");
        assert_eq!(vp.len(), target.len(), "box loss: size mismatch");
        assert_eq!(vp.rows(), row_weight.len(), "box loss: weight size");
        let mut total = T::zero();
        let mut grads = vec![T::zero(); vp.len()];
        for (r, (pr, tr)) in vp.data().chunks(4).zip(target.data().chunks(4)).enumerate() {
            let w = row_weight.data()[r];
            if w == T::zero() {
                continue;
            }
            let (l, gr) = box_loss_grad(pr, tr, kind);
            total += w * l;
            for j in 0..4 {
                grads[r * 4 + j] = w * gr[j];
            }
        }
        let shape = vp.shape().to_vec();
        self.push(Tensor::scalar(total), &[pred], move |g, _, sink| {
            let gv = g.item();
            for (o, &d) in sink.slot(pred, &shape).iter_mut().zip(&grads) {
                *o += gv * d;
            }
        })
    }

    /// Clips `[n, 4]` center-size boxes into `[0, 1]` with `w, h >= min_size`.
    pub fn clamp_boxes(&mut self, x: Var, min_size: T) -> Var {
        let vx = self.value(x);
        assert_eq!(vx.cols(), 4, "clamp_boxes expects [n, 4]");
        let mut pass = vec![false; vx.len()];
        let mut data = vx.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            let lo = if i % 4 < 2 { T::zero() } else { min_size };
            let clipped = v.max(lo).min(T::one());
            pass[i] = clipped == *v;
            *v = clipped;
        }
        let shape = vx.shape().to_vec();
        self.push(Tensor::new(&shape, data), &[x], move |g, _, sink| {
            for ((o, &gv), &p) in sink.slot(x, &shape).iter_mut().zip(g.data()).zip(&pass) {
                if p {
                    *o += gv;
                }
            }
        })
    }
}
