//! Counting and sampling on the discrete torus T_n. The exhaustive census
//! on T_4 shows which part of Z comes from configurations with a large
//! contour, the term the approximation leaves out.

use pirogov::contour::ContourModel;
use pirogov::torus::{torus_approx_z, torus_census, TorusOptions, TorusSampler};

fn main() -> pirogov::Result<()> {
    let model = ContourModel::potts(2, 2)?;
    let (n, z) = (4, 0.01);
    let options = TorusOptions { force: true, ..TorusOptions::default() };

    let census = torus_census(&model, n)?;
    let total = census.total.eval_f64(z);
    let big = census.big.eval_f64(z);
    println!("T_{n}: {} configurations, Z = {total:.10}, large-contour part {big:.3e}", census.configurations);

    let a = torus_approx_z(&model, n, z, 0.05, options)?;
    println!("approximation: log Z ~ {:.10} (order {}), log(Z - big) = {:.10}", a.log_value, a.m_used, (total - big).ln());
    println!("below floor {:.3}: {}", a.floor, a.below_floor);

    let sampler = TorusSampler::new(&model, 8, z, 0.05, options)?;
    println!("T_8 phase law: {:?}", sampler.phase_law());
    for draw in 0..3 {
        let s = sampler.sample(3, draw)?;
        assert!(s.consistent(&model, 8)?);
        println!("draw {draw}: phase {}, {} contours", s.phi, s.contours.len());
    }
    Ok(())
}
