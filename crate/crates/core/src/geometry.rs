//! Boxes, frame segments and their overlap measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest width/height a clamped box may have.
pub const MIN_BOX_SIZE: f64 = 1e-4;

/// Axis-aligned box in center-size form, normalized to the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox { cx: v[0], cy: v[1], w: v[2], h: v[3] }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { cx: 0.5 * (x1 + x2), cy: 0.5 * (y1 + y2), w: x2 - x1, h: y2 - y1 }
    }

    /// `[x1, y1, x2, y2]`
    pub fn corners(&self) -> [f64; 4] {
        [self.cx - 0.5 * self.w, self.cy - 0.5 * self.h, self.cx + 0.5 * self.w, self.cy + 0.5 * self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        self.into()
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.cx) && unit(self.cy) && self.w > 0.0 && self.w <= 1.0 && self.h > 0.0 && self.h <= 1.0
    }
}

/// Clips the box coordinates into `[0, 1]` and floors the size at [`MIN_BOX_SIZE`].
pub fn clamp_box(b: BBox) -> BBox {
    BBox {
        cx: b.cx.clamp(0.0, 1.0),
        cy: b.cy.clamp(0.0, 1.0),
        w: b.w.clamp(MIN_BOX_SIZE, 1.0),
        h: b.h.clamp(MIN_BOX_SIZE, 1.0),
    }
}

/// Intersection over union; zero when either box has no area.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    // areas from the same corners, so identical boxes give exactly 1
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Inclusive frame range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Input(format!("segment start {start} after end {end}")));
        }
        Ok(Segment { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn intersection(&self, other: &Segment) -> Option<Segment> {
        let s = self.start.max(other.start);
        let e = self.end.min(other.end);
        (s <= e).then_some(Segment { start: s, end: e })
    }

    /// Number of frames in either segment.
    pub fn union_len(&self, other: &Segment) -> usize {
        self.len() + other.len() - self.intersection(other).map_or(0, |s| s.len())
    }
}

pub fn segment_tiou(a: &Segment, b: &Segment) -> f64 {
    let inter = a.intersection(b).map_or(0, |s| s.len());
    inter as f64 / a.union_len(b) as f64
}

/// Ground-truth tube: one box per frame of `segment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingAnnotation {
    pub clip_id: String,
    pub segment: Segment,
    pub boxes: Vec<BBox>,
}

impl GroundingAnnotation {
    pub fn new(clip_id: impl Into<String>, segment: Segment, boxes: Vec<BBox>) -> Result<Self> {
        let ann = GroundingAnnotation { clip_id: clip_id.into(), segment, boxes };
        ann.validate()?;
        Ok(ann)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment.start > self.segment.end {
            return Err(Error::Input(format!("{}: inverted segment", self.clip_id)));
        }
        if self.boxes.len() != self.segment.len() {
            return Err(Error::Input(format!(
                "{}: {} boxes for a {}-frame segment",
                self.clip_id,
                self.boxes.len(),
                self.segment.len()
            )));
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.is_valid()) {
            return Err(Error::Input(format!("{}: invalid box {b:?}", self.clip_id)));
        }
        Ok(())
    }

    /// Ground-truth box of `frame`, if the frame is inside the segment.
    pub fn box_at(&self, frame: usize) -> Option<&BBox> {
        self.segment.contains(frame).then(|| &self.boxes[frame - self.segment.start])
    }
}
