//! Low-temperature Ising model as a polymer gas of minus-spin clusters.
//! The expansion in z (the external field factor) is checked against the
//! spin-by-spin sum at several temperatures.

use pirogov::cluster::log_z_coefficients;
use pirogov::lattice::Region;
use pirogov::oracle::brute_z_ising;
use pirogov::polymer::ising_polymer_model;

fn main() -> pirogov::Result<()> {
    let host = Region::free_box(&[(0, 1), (0, 2)])?.nn_graph();
    let table = brute_z_ising(&host)?;
    for beta in [0.5, 1.0, 2.0] {
        let model = ising_polymer_model(host.clone(), beta, None)?;
        let m = 3 * host.len();
        let series = log_z_coefficients(&model, m)?;
        let poly = table.polynomial(beta);
        let z = 0.3;
        let exact: f64 = poly.iter().rev().fold(0.0, |acc, c| acc * z + c);
        let approx = series.evaluate_real(z);
        println!("beta {beta}: log Z exact {:.12}, expansion to order {m} {:.12}", exact.ln(), approx);
    }
    Ok(())
}
