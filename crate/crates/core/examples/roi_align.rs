//! RoIAlign on a small feature map: pools a box into a fixed grid with
//! bilinear sampling and shows which map cells feed each bin.

use stvg::icg::{roi_align, roi_weights};
use stvg::BBox;

fn main() {
    let (h, w) = (6, 6);
    // one channel holding the column index, one holding the row index
    let map: Vec<f64> = (0..h * w).flat_map(|c| [(c % w) as f64, (c / w) as f64]).collect();
    let b = BBox::from_corners(0.25, 0.1, 0.75, 0.6);
    let pool = 2;
    let out = roi_align(&map, h, w, 2, &b, pool, 2);
    let [x1, y1, x2, y2] = b.corners();
    println!("box ({x1:.2}, {y1:.2})-({x2:.2}, {y2:.2}) on a {h}x{w} map, {pool}x{pool} bins");
    for bin in 0..pool * pool {
        println!("bin ({}, {}): mean x {:.3}, mean y {:.3}", bin / pool, bin % pool, out[bin * 2], out[bin * 2 + 1]);
    }

    let weights = roi_weights(&b, h, w, pool, 2);
    println!("\nweights of bin (0, 0) over the map:");
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{:5.3}", weights[y * w + x])).collect();
        println!("  {}", row.join(" "));
    }
    let total: f64 = weights[..h * w].iter().sum();
    println!("sum {total:.6} (1 inside the map, less where samples fall outside)");
}
