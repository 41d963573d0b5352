//! Which frames' instance context survives the high-pass filters under each
//! fusion mode and filter toggle.

use stvg::icr::{kept_frames, FilterConfig};
use stvg::Fusion;

fn main() {
    let s_t = [0.95, 0.85, 0.72, 0.40, 0.10, 0.05];
    let s_s = [0.90, 0.60, 0.88, 0.95, 0.20, 0.10];
    println!("temporal scores {s_t:?}");
    println!("spatial scores  {s_s:?}\n");

    let base = FilterConfig::default();
    let cases = [
        ("two-level (temporal then spatial)", base),
        ("temporal only", FilterConfig { filter_spatial: false, ..base }),
        ("spatial only", FilterConfig { filter_temporal: false, ..base }),
        ("no filtering", FilterConfig { filter_temporal: false, filter_spatial: false, ..base }),
        ("one level on s_t + s_s", FilterConfig { fusion: Fusion::Sum, ..base }),
        ("one level on s_t * s_s", FilterConfig { fusion: Fusion::Product, ..base }),
        ("spatial level reading s_t", FilterConfig { hfs_uses_temporal: true, ..base }),
    ];
    for (name, cfg) in cases {
        println!("{name:<36} kept {:?}", kept_frames(&s_t, &s_s, &cfg));
    }

    // nothing clears the thresholds: the best frame is kept alone
    let low = [0.2, 0.3, 0.1, 0.25, 0.05, 0.0];
    println!("\nall scores low, fallback keeps {:?}", kept_frames(&low, &low, &base));
}
