//! Instance context generation: RoI-pool appearance and motion features of
//! the currently predicted regions.

use std::rc::Rc;

use autograd::{Graph, Real, Tensor, Var};

use crate::encoder::TokenLayout;
use crate::geometry::BBox;

/// Bilinear weights of the cells around continuous index `u` on an axis of
/// `n` cells, where cell `j` is centered at `u = j`. Neighbours outside the
/// axis are dropped (zero padding).
fn axis_taps(u: f64, n: usize) -> [(usize, f64); 2] {
    let u0 = u.floor();
    let f = u - u0;
    let j0 = u0 as i64;
    let tap = |j: i64, w: f64| if j >= 0 && (j as usize) < n { (j as usize, w) } else { (0, 0.0) };
    [tap(j0, 1.0 - f), tap(j0 + 1, f)]
}

/// Sampling matrix `[pool * pool, h * w]` of one box: row `bin` holds the
/// weight of every map cell in that bin's average of `ratio^2` bilinear
/// samples.
pub fn roi_weights(b: &BBox, h: usize, w: usize, pool: usize, ratio: usize) -> Vec<f64> {
    let cells = h * w;
    let mut out = vec![0.0; pool * pool * cells];
    let x1 = (b.cx - 0.5 * b.w) * w as f64;
    let y1 = (b.cy - 0.5 * b.h) * h as f64;
    let bin_w = b.w * w as f64 / pool as f64;
    let bin_h = b.h * h as f64 / pool as f64;
    let norm = 1.0 / (ratio * ratio) as f64;
    for py in 0..pool {
        for px in 0..pool {
            let row = &mut out[(py * pool + px) * cells..(py * pool + px + 1) * cells];
            for iy in 0..ratio {
                let y = y1 + (py as f64 + (iy as f64 + 0.5) / ratio as f64) * bin_h;
                let ty = axis_taps(y - 0.5, h);
                for ix in 0..ratio {
                    let x = x1 + (px as f64 + (ix as f64 + 0.5) / ratio as f64) * bin_w;
                    let tx = axis_taps(x - 0.5, w);
                    for &(yy, wy) in &ty {
                        for &(xx, wx) in &tx {
                            row[yy * w + xx] += norm * wy * wx;
                        }
                    }
                }
            }
        }
    }
    out
}

/// RoIAlign of one `[h, w, d]` map (row-major) to `[pool, pool, d]`.
pub fn roi_align(map: &[f64], h: usize, w: usize, d: usize, b: &BBox, pool: usize, ratio: usize) -> Vec<f64> {
    assert_eq!(map.len(), h * w * d, "roi_align: map size");
    let weights = roi_weights(b, h, w, pool, ratio);
    let cells = h * w;
    let mut out = vec![0.0; pool * pool * d];
    for bin in 0..pool * pool {
        for (c, &wt) in weights[bin * cells..(bin + 1) * cells].iter().enumerate() {
            if wt != 0.0 {
                for k in 0..d {
                    out[bin * d + k] += wt * map[c * d + k];
                }
            }
        }
    }
    out
}

/// Splits encoder rows `[groups * per_frame, d]` into appearance and motion
/// maps `[groups, h, w, d]`. Text rows are dropped.
pub fn reshape_visual<T: Real>(x: &Tensor<T>, layout: &TokenLayout) -> (Tensor<T>, Option<Tensor<T>>) {
    let d = x.cols();
    let s = layout.per_frame();
    assert_eq!(x.rows() % s, 0, "reshape_visual: rows not a multiple of the frame length");
    let groups = x.rows() / s;
    let take = |r: std::ops::Range<usize>| {
        let mut data = Vec::with_capacity(groups * r.len() * d);
        for gi in 0..groups {
            for t in r.clone() {
                data.extend_from_slice(x.row(gi * s + t));
            }
        }
        Tensor::new(&[groups, layout.h, layout.w, d], data)
    };
    (take(layout.appearance()), layout.motion().map(take))
}

/// How context features are pooled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoiSpec {
    pub pool: usize,
    pub sampling_ratio: usize,
    /// Average the grid into one vector per modality.
    pub mean: bool,
    /// Pool motion features too.
    pub motion: bool,
}

impl RoiSpec {
    /// Rows produced per modality: `pool^2`, or 1 when averaged.
    pub fn rows_per_modality(&self) -> usize {
        if self.mean {
            1
        } else {
            self.pool * self.pool
        }
    }
}

/// RoI features of every frame of a batch. `appearance` (and `motion`) are
/// `[groups, rows * d]` where `rows` is [`RoiSpec::rows_per_modality`].
#[derive(Clone, Debug)]
pub struct RawContext {
    pub appearance: Var,
    pub motion: Option<Var>,
    /// Both modalities side by side, `[groups, n_mod * rows * d]`.
    pub joint: Var,
    pub boxes: Vec<BBox>,
    pub spec: RoiSpec,
}

/// Per-group sampling matrices `[groups][out_rows, per_frame]` over a
/// frame's token rows.
fn context_weights<T: Real>(boxes: &[BBox], layout: &TokenLayout, spec: &RoiSpec) -> (Rc<[T]>, usize) {
    let s = layout.per_frame();
    let cells = layout.cells();
    let rows = spec.rows_per_modality();
    let mods = if spec.motion { 2 } else { 1 };
    let out_rows = rows * mods;
    let mut data = vec![T::zero(); boxes.len() * out_rows * s];
    for (gi, b) in boxes.iter().enumerate() {
        let grid = roi_weights(b, layout.h, layout.w, spec.pool, spec.sampling_ratio);
        let mut per_mod = vec![0.0; rows * cells];
        if spec.mean {
            for bin in grid.chunks(cells) {
                for (o, &v) in per_mod.iter_mut().zip(bin) {
                    *o += v / (spec.pool * spec.pool) as f64;
                }
            }
        } else {
            per_mod = grid;
        }
        let mut ranges = vec![layout.appearance()];
        if spec.motion {
            ranges.push(layout.motion().expect("motion context requires motion tokens"));
        }
        for (m, range) in ranges.into_iter().enumerate() {
            for r in 0..rows {
                let dst = (gi * out_rows + m * rows + r) * s;
                for (c, &v) in per_mod[r * cells..(r + 1) * cells].iter().enumerate() {
                    data[dst + range.start + c] = T::c(v);
                }
            }
        }
    }
    (data.into(), out_rows)
}

/// Pools features of `memory` (`[groups * per_frame, d]`) inside `boxes`
/// (one per group). Box coordinates act as constants.
pub fn generate_context<T: Real>(
    g: &mut Graph<T>,
    memory: Var,
    layout: &TokenLayout,
    boxes: &[BBox],
    spec: RoiSpec,
) -> RawContext {
    let d = g.value(memory).cols();
    let groups = boxes.len();
    let (weights, out_rows) = context_weights::<T>(boxes, layout, &spec);
    let pooled = g.resample(memory, weights, groups, out_rows);
    let width = spec.rows_per_modality() * d;
    let joint = g.reshape(pooled, &[groups, out_rows * d]);
    let (appearance, motion) = if spec.motion {
        (g.slice_cols(joint, 0, width), Some(g.slice_cols(joint, width, width)))
    } else {
        (joint, None)
    };
    RawContext { appearance, motion, joint, boxes: boxes.to_vec(), spec }
}
