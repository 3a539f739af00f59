//! Exact and approximate samplers for the hard-core polymer gas on a cycle.

use std::collections::HashMap;

use pirogov::graph::Graph;
use pirogov::oracle::{family_key, polymer_measure, tv_distance};
use pirogov::polymer::hardcore_polymer_model;
use pirogov::sampling::{ExactPolymerSampler, PolymerSampler};
use pirogov::Rational;

fn main() -> pirogov::Result<()> {
    let model = hardcore_polymer_model(Graph::cycle(5), None)?;
    let z = Rational::new(1, 32);
    let law = polymer_measure(&model, &z)?;

    // the self-reducible sampler reproduces the law exactly
    let exact = ExactPolymerSampler::new(&model, &z)?;
    for (key, p) in law.outcomes.iter().take(4) {
        println!("{:>8}: {p}", if key.is_empty() { "{}" } else { key });
    }

    let approx = PolymerSampler::new(&model, 1.0 / 32.0, 0.05)?;
    let draws = 20_000;
    let mut counts: HashMap<String, u64> = HashMap::new();
    for draw in 0..draws {
        *counts.entry(family_key(&approx.sample(7, draw)?)).or_default() += 1;
    }
    let tv = tv_distance(&law, &counts);
    println!("approximate sampler: TV {:.4} over {draws} draws (sampling noise ~ {:.4})", tv.tv, tv.sigma);
    println!("one exact draw: {}", family_key(&exact.sample(7, 0)));
    Ok(())
}
