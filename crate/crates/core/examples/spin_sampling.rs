//! Draw Ising configurations (Potts with q = 2) on a 6×6 box with plus
//! boundary conditions by recursive contour sampling. Sites within distance
//! two of the outside are pinned to plus. The default radius is
//! very conservative; here a radius of 1 is assumed so that contours show up.

use pirogov::contour::ContourModel;
use pirogov::lattice::Region;
use pirogov::sampling::ContourSampler;

fn main() -> pirogov::Result<()> {
    let model = ContourModel::potts(2, 2)?.with_delta(1.0)?;
    let side = 6;
    let region = Region::cube(2, side);
    let z = 0.3;
    let sampler = ContourSampler::new(&model, &region, 0, z, 0.05)?;
    let mut shown = 0;
    let mut with_contours = 0;
    for draw in 0..500 {
        let sample = sampler.sample_spins(42, draw)?;
        assert!(sample.consistent(&model, &region, 0)?);
        if sample.contours().is_empty() {
            continue;
        }
        with_contours += 1;
        if shown < 3 {
            shown += 1;
            println!("draw {draw}: {} contours, digest {}", sample.contours().len(), &sample.provenance_digest(&model)[..12]);
            for row in sample.spins.chunks(side as usize) {
                println!("  {}", row.iter().map(|&s| if s == 0 { '+' } else { '-' }).collect::<String>());
            }
        }
    }
    println!("{with_contours} of 500 draws differ from the ground state");
    Ok(())
}
