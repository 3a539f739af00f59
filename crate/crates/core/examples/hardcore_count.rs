//! Approximate the independence polynomial of a 4×4 grid by the truncated
//! cluster expansion and compare with exhaustive enumeration.

use pirogov::cluster::approx_z;
use pirogov::lattice::Region;
use pirogov::oracle::brute_z_hardcore;
use pirogov::polymer::hardcore_polymer_model;

fn main() -> pirogov::Result<()> {
    let host = Region::cube(2, 4).nn_graph();
    let model = hardcore_polymer_model(host.clone(), None)?;
    let exact = brute_z_hardcore(&host)?;
    let z = 0.5 * model.delta;
    let log_exact = exact.eval_f64(z).ln();
    println!("host: 4x4 grid, delta = {:.5}, z = {z:.5}", model.delta);
    println!("exact log Z = {log_exact:.12}");
    for epsilon in [1e-1, 1e-2, 1e-3, 1e-4] {
        let a = approx_z(&model, z, epsilon, false)?;
        let err = (a.log_value - log_exact).abs();
        println!("eps {epsilon:>6}: m = {:>2}, log Z ~ {:.12}, |error| = {err:.2e}", a.m_used, a.log_value);
        assert!(err <= epsilon);
    }
    Ok(())
}
