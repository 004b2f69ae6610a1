//! SLIC superpixels on a synthetic shape, with per-segment attribution aggregation.
//! Writes the label map as a PGM next to the system temp dir.
//!
//! cargo run --release --example slic_segments [target-segments]

use attrib_bench::data::synth_generate;
use attrib_bench::segmentation::{segment_attribution, slic, Aggregation, SlicParams};

fn main() -> attrib_bench::Result<()> {
    let target: usize = std::env::args().nth(1).map_or(50, |t| t.parse().expect("segment count"));
    let ds = synth_generate(9, 4, 56, 10)?;
    let x = ds.image(2);
    let s = slic(&x, &SlicParams::with_target(target))?;
    let sizes = s.sizes();
    println!(
        "{} segments (target {target}), sizes {}..{}, 4-connected: {}",
        s.count(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap(),
        s.is_connected()
    );

    // Foreground share per segment, using the known region as an attribution map.
    let region = ds.region(2).expect("synthetic data carries regions");
    let e = attrib_bench::Tensor::new(x.shape().to_vec(), region.iter().map(|&r| f64::from(u8::from(r))).collect())?;
    let share = segment_attribution(&e, &s, Aggregation::Signed)?;
    let on_shape = share.iter().filter(|&&v| v > 0.5).count();
    println!("{on_shape} segments lie mostly on the shape");

    let path = std::env::temp_dir().join("slic_segments.pgm");
    s.write_pgm(&path)?;
    println!("label map written to {}", path.display());
    Ok(())
}
