//! Ursell function φ(H) = Σ over connected spanning subgraphs of (−1)^|E|,
//! computed three ways.

use pirogov::graph::Graph;
use pirogov::ursell::{ursell, ursell_deletion_contraction, ursell_edge_subsets};

fn main() -> pirogov::Result<()> {
    let graphs = [
        ("K1", Graph::complete(1)),
        ("K2", Graph::complete(2)),
        ("P4", Graph::path(4)),
        ("C5", Graph::cycle(5)),
        ("K4", Graph::complete(4)),
        ("K6", Graph::complete(6)),
    ];
    for (name, g) in &graphs {
        let a = ursell(g)?;
        let b = ursell_deletion_contraction(g)?;
        let c = ursell_edge_subsets(g)?;
        assert!(a == b && b == c);
        println!("{name}: {a}");
    }
    // For K_n the value is (−1)^{n−1} (n−1)!.
    Ok(())
}
