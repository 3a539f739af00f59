//! Check the Kotecký–Preiss condition for the hard-core gas on the 4×4 torus
//! at and above the radius 1/(e(Δ+1)).

use pirogov::lattice::Region;
use pirogov::polymer::hardcore_polymer_model;

fn main() -> pirogov::Result<()> {
    let host = Region::torus(2, 4)?.nn_graph();
    let model = hardcore_polymer_model(host.clone(), None)?;
    let radius = 1.0 / (std::f64::consts::E * (host.max_degree() + 1) as f64);
    for scale in [0.5, 1.0, 1.5] {
        let cert = model.kp_certificate(scale * radius, 1);
        println!("z = {:.5}: holds {}, worst margin {:+.3e}", scale * radius, cert.holds_truncated, cert.worst_margin);
    }
    Ok(())
}
