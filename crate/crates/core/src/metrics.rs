//! Tube metrics: tIoU, vIoU and their dataset summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, segment_tiou, BBox, GroundingAnnotation, Segment};

pub const REPORT_FORMAT_VERSION: u32 = 1;
/// Thresholds of the vIoU@R columns.
pub const VIOU_THRESHOLDS: [f64; 2] = [0.3, 0.5];

/// Predicted segment plus one box for every frame of the clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubePrediction {
    pub clip_id: String,
    pub segment: Segment,
    pub boxes: Vec<BBox>,
}

/// Sum of box IoUs over the frames both segments share, divided by the
/// number of frames in either segment.
pub fn tube_viou(pred: &TubePrediction, gt: &GroundingAnnotation) -> Result<f64> {
    if pred.clip_id != gt.clip_id {
        return Err(Error::Input(format!("prediction {} scored against {}", pred.clip_id, gt.clip_id)));
    }
    if gt.segment.end >= pred.boxes.len() || pred.segment.end >= pred.boxes.len() {
        return Err(Error::Input(format!("{}: segment beyond the {} predicted boxes", gt.clip_id, pred.boxes.len())));
    }
    let Some(inter) = pred.segment.intersection(&gt.segment) else {
        return Ok(0.0);
    };
    let sum: f64 = inter.frames().map(|f| box_iou(&pred.boxes[f], gt.box_at(f).expect("frame in segment"))).sum();
    Ok(sum / pred.segment.union_len(&gt.segment) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub tiou: f64,
    pub viou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub n_samples: usize,
    pub m_tiou: f64,
    pub m_viou: f64,
    /// Fraction of clips with vIoU strictly above each threshold, keyed
    /// `"0.3"` and `"0.5"`.
    pub viou_at: BTreeMap<String, f64>,
    /// Sorted by clip id.
    pub per_clip: Vec<ClipScore>,
}

impl EvalReport {
    pub fn viou_at(&self, r: f64) -> Option<f64> {
        self.viou_at.get(&format!("{r}")).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores predictions against ground truth. Clip ids must match one to one.
pub fn evaluate(preds: &[TubePrediction], gts: &[GroundingAnnotation]) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Input("no predictions to evaluate".into()));
    }
    let mut by_id: BTreeMap<&str, &GroundingAnnotation> = BTreeMap::new();
    for gt in gts {
        if by_id.insert(&gt.clip_id, gt).is_some() {
            return Err(Error::Input(format!("duplicate ground truth for {}", gt.clip_id)));
        }
    }
    let mut pred_by_id: BTreeMap<&str, &TubePrediction> = BTreeMap::new();
    for p in preds {
        if pred_by_id.insert(&p.clip_id, p).is_some() {
            return Err(Error::Input(format!("duplicate prediction for {}", p.clip_id)));
        }
    }
    if pred_by_id.len() != by_id.len() {
        return Err(Error::Input(format!("{} predictions for {} ground-truth clips", pred_by_id.len(), by_id.len())));
    }
    let mut per_clip = Vec::with_capacity(preds.len());
    for (id, p) in &pred_by_id {
        let gt = by_id.get(id).ok_or_else(|| Error::Input(format!("no ground truth for {id}")))?;
        per_clip.push(ClipScore { clip_id: id.to_string(), tiou: segment_tiou(&p.segment, &gt.segment), viou: tube_viou(p, gt)? });
    }
    let n = per_clip.len() as f64;
    let m_tiou = per_clip.iter().map(|c| c.tiou).sum::<f64>() / n;
    let m_viou = per_clip.iter().map(|c| c.viou).sum::<f64>() / n;
    let viou_at = VIOU_THRESHOLDS
        .iter()
        .map(|&r| (format!("{r}"), per_clip.iter().filter(|c| c.viou > r).count() as f64 / n))
        .collect();
    Ok(EvalReport { format_version: REPORT_FORMAT_VERSION, n_samples: per_clip.len(), m_tiou, m_viou, viou_at, per_clip })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(id: &str, s: usize, e: usize, b: BBox) -> GroundingAnnotation {
        GroundingAnnotation::new(id, Segment { start: s, end: e }, vec![b; e - s + 1]).unwrap()
    }

    fn pred(id: &str, s: usize, e: usize, b: BBox, n: usize) -> TubePrediction {
        TubePrediction { clip_id: id.into(), segment: Segment { start: s, end: e }, boxes: vec![b; n] }
    }

    #[test]
    fn viou_examples() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        assert!((tube_viou(&pred("a", 2, 5, b, 8), &ann("a", 2, 5, b)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(tube_viou(&pred("a", 0, 2, b, 10), &ann("a", 5, 8, b)).unwrap(), 0.0);
        // half-overlapping boxes: IoU = 0.5 when one covers 2/3 of the other
        let g = BBox::from_corners(0.0, 0.0, 0.3, 0.2);
        let p = BBox::from_corners(0.1, 0.0, 0.3, 0.2);
        assert!((box_iou(&p, &g) - 2.0 / 3.0).abs() < 1e-12);
        let half = BBox::from_corners(0.0, 0.0, 0.2, 0.2);
        let other = BBox::from_corners(0.0, 0.0, 0.2, 0.1);
        assert!((box_iou(&half, &other) - 0.5).abs() < 1e-12);
        let v = tube_viou(&pred("a", 4, 9, other, 13), &ann("a", 6, 12, half)).unwrap();
        assert!((v - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn report_examples() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let r = evaluate(&[pred("a", 1, 3, b, 5)], &[ann("a", 1, 3, b)]).unwrap();
        assert!((r.m_viou - 1.0).abs() < 1e-12);
        assert_eq!((r.viou_at(0.3), r.viou_at(0.5)), (Some(1.0), Some(1.0)));

        // vIoU 0.4 and 0.6 from segment overlap with perfect boxes
        let gts = [ann("a", 0, 4, b), ann("b", 0, 4, b)];
        let preds = [pred("a", 0, 1, b, 10), pred("b", 0, 2, b, 10)];
        let r = evaluate(&preds, &gts).unwrap();
        assert!((r.m_viou - 0.5).abs() < 1e-12);
        assert_eq!(r.viou_at(0.3), Some(1.0));
        assert_eq!(r.viou_at(0.5), Some(0.5));
        assert_eq!(r.n_samples, 2);
    }

    #[test]
    fn input_errors() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        assert!(evaluate(&[], &[ann("a", 0, 1, b)]).is_err());
        assert!(evaluate(&[pred("a", 0, 1, b, 4), pred("a", 0, 1, b, 4)], &[ann("a", 0, 1, b)]).is_err());
        assert!(evaluate(&[pred("b", 0, 1, b, 4)], &[ann("a", 0, 1, b)]).is_err());
    }

    #[test]
    fn report_json_keys() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let r = evaluate(&[pred("a", 1, 3, b, 5)], &[ann("a", 1, 3, b)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["format_version", "n_samples", "m_tiou", "m_viou", "viou_at", "per_clip"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["viou_at"].get("0.3").is_some() && v["viou_at"].get("0.5").is_some());
    }
}
