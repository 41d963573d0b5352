//! tIoU, vIoU and vIoU@R on hand-made predictions: a perfect tube, one with
//! a shifted segment and one with loose boxes.

use stvg::synth::generate_samples;
use stvg::{evaluate, segment_tiou, BBox, Segment, SynthConfig, TubePrediction};

fn main() -> anyhow::Result<()> {
    let samples = generate_samples(&SynthConfig::default(), 3, 0)?;
    let gts: Vec<_> = samples.iter().map(|s| s.annotation.clone()).collect();
    let n = SynthConfig::default().n_frames;

    let tube = |i: usize, seg: Segment, grow: f64| {
        let gt = &gts[i];
        let boxes = (0..n)
            .map(|f| {
                let b = gt.box_at(f.clamp(gt.segment.start, gt.segment.end)).unwrap();
                BBox::new(b.cx, b.cy, b.w * grow, b.h * grow)
            })
            .collect();
        TubePrediction { clip_id: gt.clip_id.clone(), segment: seg, boxes }
    };
    let exact = tube(0, gts[0].segment, 1.0);
    let s = gts[1].segment;
    let shifted_seg = Segment::new(s.start + 1, (s.end + 1).min(n - 1))?;
    let shifted = tube(1, shifted_seg, 1.0);
    let loose = tube(2, gts[2].segment, 1.5);
    println!("shifted segment tIoU {:.3}", segment_tiou(&shifted_seg, &s));

    let report = evaluate(&[exact, shifted, loose], &gts)?;
    for c in &report.per_clip {
        println!("{}  tIoU {:.3}  vIoU {:.3}", c.clip_id, c.tiou, c.viou);
    }
    println!("m_tIoU {:.3}  m_vIoU {:.3}  vIoU@0.5 {:.3}", report.m_tiou, report.m_viou, report.viou_at(0.5).unwrap());
    Ok(())
}
