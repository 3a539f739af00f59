//! Spin partition functions of the 3-state Potts model and the hard-core
//! model at low temperature through their contour representations.

use pirogov::contour::{spin_z_from_contours, ContourModel};
use pirogov::lattice::Region;
use pirogov::oracle::brute_z_spin;

fn main() -> pirogov::Result<()> {
    let region = Region::cube(2, 4);
    let epsilon = 1e-3;

    let potts = ContourModel::potts(3, 2)?;
    let beta = 1.2 - potts.delta.ln();
    let a = spin_z_from_contours(&potts, &region, 0, beta, epsilon, false)?;
    let exact = brute_z_spin(potts.system, &region, Some(0))?;
    let log_exact = a.log_prefactor + exact.eval_f64(a.z).ln();
    println!("Potts q=3, 4x4, beta {beta:.3}: approx {:.10}, exact {:.10}, m = {}", a.log_value, log_exact, a.contour.m_used);

    let hardcore = ContourModel::hardcore(2)?;
    let lambda = 2.0 / hardcore.delta;
    for phi in hardcore.ground_states() {
        let a = spin_z_from_contours(&hardcore, &region, phi, lambda, epsilon, false)?;
        let exact = brute_z_spin(hardcore.system, &region, Some(phi))?;
        let log_exact = a.log_prefactor + exact.eval_f64(a.z).ln();
        println!(
            "hard-core {} boundary, lambda {lambda:.3e}: approx {:.10}, exact {:.10}",
            hardcore.system.ground_name(phi),
            a.log_value,
            log_exact
        );
    }
    Ok(())
}
