use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pirogov::cluster::{log_z_coefficients, Evaluation};
use pirogov::contour::{
    config_from_contours, contours_of_config, list_contours, mutually_external, Contour, ContourModel,
};
use pirogov::graph::Graph;
use pirogov::lattice::{Geometry, Point, Region};
use pirogov::oracle::{brute_z_hardcore, brute_z_ising, compatible_families, family_key, polymer_measure, PaddedSpace};
use pirogov::polymer::{hardcore_polymer_model, ising_polymer_model};
use pirogov::sampling::{ContourSampler, ExactPolymerSampler};
use pirogov::torus::{config_from_torus_contours, torus_contours_of_config, ContourKind};
use pirogov::ursell::{ursell_deletion_contraction, ursell_edge_subsets};
use pirogov::{Coeff, ExactSeries, Rational};

fn graph(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = rng.random_range(0..=n);
    Graph::random_connected(n, 3.max(n.min(4)), extra, &mut rng)
}

fn king_connected(points: &[Point]) -> bool {
    let set: HashSet<Point> = points.iter().copied().collect();
    let mut seen = HashSet::from([points[0]]);
    let mut queue = VecDeque::from([points[0]]);
    while let Some(p) = queue.pop_front() {
        for q in &set {
            if p.dinf(q) == 1 && seen.insert(*q) {
                queue.push_back(*q);
            }
        }
    }
    seen.len() == set.len()
}

fn series(coeffs: &[i64], order: usize) -> ExactSeries {
    let mut c = vec![Rational::from(1)];
    c.extend(coeffs.iter().map(|&v| Rational::from(v)));
    ExactSeries::from_coeffs(order, c)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn components_partition_the_complement(mask in any::<u32>()) {
        let torus = Region::torus(2, 5).unwrap();
        let excluded: Vec<Point> =
            torus.vertices().iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| *p).collect();
        let comps = torus.components(&excluded);
        let mut seen = HashSet::new();
        for c in &comps {
            for p in c {
                prop_assert!(seen.insert(*p), "components overlap");
            }
        }
        let rest: HashSet<Point> = torus.vertices().iter().filter(|p| !excluded.contains(p)).copied().collect();
        prop_assert_eq!(seen, rest);
    }

    #[test]
    fn connected_subsets_match_brute_force(mask in 1u32..1 << 16, k in 1usize..5) {
        let cells: Vec<Point> =
            (0..16).filter(|i| mask >> i & 1 == 1).map(|i| Point::new(&[i / 4, i % 4])).collect();
        let region = Region::new(2, Geometry::Free, cells.clone()).unwrap();
        let root = region.vertices()[0];
        let sets = region.connected_subsets(&root, k).unwrap();
        let unique: HashSet<Vec<Point>> = sets.iter().cloned().collect();
        prop_assert_eq!(unique.len(), sets.len());
        prop_assert!(sets.iter().all(|s| s.contains(&root) && king_connected(s)));
        let v = region.vertices();
        let brute = (1u32..1 << v.len())
            .filter(|b| b & 1 == 1 && b.count_ones() as usize <= k)
            .filter(|b| {
                let s: Vec<Point> = (0..v.len()).filter(|i| b >> i & 1 == 1).map(|i| v[i]).collect();
                king_connected(&s)
            })
            .count();
        prop_assert_eq!(sets.len(), brute);
    }

    #[test]
    fn newton_round_trip(coeffs in prop::collection::vec(-20i64..20, 0..12)) {
        let p = series(&coeffs, 12);
        prop_assert_eq!(p.log_from_poly().unwrap().poly_from_log().unwrap(), p);
    }

    #[test]
    fn product_is_commutative_and_associative(
        a in prop::collection::vec(-9i64..9, 0..8),
        b in prop::collection::vec(-9i64..9, 0..8),
        c in prop::collection::vec(-9i64..9, 0..8),
    ) {
        let (a, b, c) = (series(&a, 8), series(&b, 8), series(&c, 8));
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap().mul(&c).unwrap(), a.mul(&b.mul(&c).unwrap()).unwrap());
    }

    #[test]
    fn float_log_tracks_exact_log(coeffs in prop::collection::vec(-5i64..5, 0..10)) {
        let p = series(&coeffs, 10);
        let exact = p.log_from_poly().unwrap();
        let float = p.to_float().log_from_poly().unwrap();
        for k in 0..=10 {
            let (e, f) = (exact.coeff(k).to_f64(), float.coeff(k));
            if e.abs() >= 1e-6 {
                prop_assert!((e - f).abs() <= 1e-12 * e.abs(), "k {}: {} vs {}", k, e, f);
            }
        }
    }

    #[test]
    fn ursell_routes_agree(n in 1usize..=7, seed in any::<u64>()) {
        let g = graph(n, seed);
        prop_assert_eq!(ursell_deletion_contraction(&g).unwrap(), ursell_edge_subsets(&g).unwrap());
    }

    #[test]
    fn polymer_weights_and_compatibility(n in 1usize..=4, seed in any::<u64>(), beta in 0.2f64..2.0) {
        let g = graph(n, seed);
        let model = ising_polymer_model(g.clone(), beta, None).unwrap();
        let polymers = model.list_polymers(n);
        for p in &polymers {
            let low = (model.rho * p.size() as f64).ceil() as usize;
            let w = model.weight(p, 2 * n);
            prop_assert!((0..low).all(|k| w.coeff(k) == 0.0));
            prop_assert!(!model.compatible(p, p));
            for q in &polymers {
                prop_assert_eq!(model.compatible(p, q), model.compatible(q, p));
            }
        }
        // z^{|G|} e^{−β|E|} Z_G(β, z) from spins equals the polymer partition function
        let z = 0.7;
        let families = compatible_families(&model).unwrap();
        let polymer_z: f64 =
            families.iter().map(|f| f.iter().map(|p| model.weight_value(p, z)).product::<f64>()).sum();
        let spins_z: f64 =
            brute_z_ising(&g).unwrap().polynomial(beta).iter().rev().fold(0.0, |acc, c| acc * z + c);
        prop_assert!((polymer_z - spins_z).abs() <= 1e-12 * spins_z);
    }

    #[test]
    fn hardcore_expansion_is_the_independence_polynomial(n in 1usize..=10, seed in any::<u64>()) {
        let g = graph(n, seed);
        let model = hardcore_polymer_model(g.clone(), None).unwrap();
        let (_, system) = model.system(n).unwrap();
        let brute = brute_z_hardcore(&g).unwrap().to_series(n);
        for how in [Evaluation::Auto, Evaluation::Supports, Evaluation::Regrouped, Evaluation::Direct] {
            prop_assert_eq!(system.log_z_with(how).unwrap().poly_from_log().unwrap(), brute.clone());
        }
    }

    #[test]
    fn truncation_is_monotone(n in 2usize..=8, seed in any::<u64>(), m in 1usize..6) {
        let model = hardcore_polymer_model(graph(n, seed), None).unwrap();
        let short = log_z_coefficients(&model, m).unwrap();
        let long = log_z_coefficients(&model, m + 2).unwrap();
        prop_assert_eq!(short, long.with_order(m));
    }

    #[test]
    fn step_laws_are_normalised(n in 1usize..=7, seed in any::<u64>(), num in 1i64..20) {
        let model = hardcore_polymer_model(graph(n, seed), None).unwrap();
        let z = Rational::new(num, 7);
        let sampler = ExactPolymerSampler::new(&model, &z).unwrap();
        let mu = polymer_measure(&model, &z).unwrap();
        for fam in compatible_families(&model).unwrap() {
            prop_assert_eq!(sampler.path_probability(&fam), mu.get(&family_key(&fam)));
        }
        // every state visited by a run satisfies the fundamental identity
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gamma: Vec<usize> = Vec::new();
        for t in 0..n {
            let law = sampler.step_law(&gamma, t);
            let total = law.iter().fold(Rational::from(0), |a, (_, p)| a + p.clone());
            prop_assert_eq!(total, Rational::from(1));
            let pick = rng.random_range(0..law.len());
            if let Some(p) = law[pick].0 {
                gamma.push(p);
            }
        }
    }
}

fn contour_models() -> Vec<ContourModel> {
    vec![ContourModel::potts(2, 2).unwrap(), ContourModel::potts(3, 2).unwrap(), ContourModel::hardcore(2).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn contours_round_trip_and_obey_peierls(which in 0usize..3, idx in any::<u64>(), phi_pick in 0u8..3) {
        let model = contour_models()[which];
        let grounds = model.ground_states();
        let phi = grounds[phi_pick as usize % grounds.len()];
        let r = Region::cube(2, 8);
        let space = PaddedSpace::new(model.system, &r, Some(phi));
        let spins = space.config(idx as u128 % space.raw_len());
        prop_assume!(space.admissible(&spins));
        let cs = contours_of_config(&model, &r, phi, &spins).unwrap();
        prop_assert_eq!(config_from_contours(&model, &r, phi, &cs).unwrap(), spins.clone());
        let total: usize = cs.iter().map(|c| c.energy).sum();
        prop_assert_eq!(total as i64, space.energy(&spins));
        for c in &cs {
            prop_assert!(model.peierls_lower(c.size()) <= c.energy);
            prop_assert!(c.energy <= model.surface_constant() * c.size());
            prop_assert!(c.energy > 0);
            prop_assert!(!mutually_external(c, c));
            for d in &cs {
                prop_assert_eq!(mutually_external(c, d), mutually_external(d, c));
            }
        }
    }

    #[test]
    fn translation_preserves_energy_and_labels(which in 0usize..3, pick in any::<usize>(), dx in -4i32..4, dy in -4i32..4) {
        let model = contour_models()[which];
        let r = Region::cube(2, 7);
        let listed = list_contours(&model, &r, model.ground_states()[0], 18).unwrap();
        prop_assume!(!listed.is_empty());
        let c = &listed[pick % listed.len()];
        let (dx, dy) = if model.system.alphabet() == 2 && model.ground_states() == vec![0, 1] && which == 2 {
            (dx, dy + (dx + dy).rem_euclid(2))
        } else {
            (dx, dy)
        };
        let moved = c.translate(&Point::new(&[dx, dy]));
        let rebuilt = Contour::from_parts(model.system, 2, &moved.support, &moved.spins).unwrap();
        prop_assert_eq!(rebuilt, moved);
    }

    #[test]
    fn spin_samples_reextract(seed in any::<u64>(), draw in 0u64..1000) {
        let model = ContourModel::potts(2, 2).unwrap().with_delta(1.0).unwrap();
        let r = Region::cube(2, 7);
        let sampler = ContourSampler::new(&model, &r, 0, 0.3, 0.2).unwrap();
        let x = sampler.sample_spins(seed, draw).unwrap();
        prop_assert!(x.consistent(&model, &r, 0).unwrap());
    }

    #[test]
    fn torus_configurations_round_trip(which in 0usize..2, bits in any::<u64>()) {
        let model = [ContourModel::potts(2, 2).unwrap(), ContourModel::hardcore(2).unwrap()][which];
        let torus = Region::torus(2, 4).unwrap();
        let mut spins: Vec<u8> = (0..16).map(|i| (bits >> i & 1) as u8).collect();
        if which == 1 {
            let g = torus.nn_graph();
            for v in 0..16 {
                if spins[v] == 1 && g.neighbors(v).iter().any(|&u| u < v && spins[u] == 1) {
                    spins[v] = 0;
                }
            }
        }
        let cs = torus_contours_of_config(&model, 4, &spins).unwrap();
        prop_assert!(cs.iter().filter(|c| c.kind == ContourKind::Large).count() <= 1);
        let rebuilt = model
            .ground_states()
            .into_iter()
            .any(|phi| config_from_torus_contours(&model, 4, phi, &cs).unwrap() == spins);
        prop_assert!(rebuilt);
    }

    #[test]
    fn small_torus_contours_are_planar_contours(flips in prop::collection::vec(any::<bool>(), 9)) {
        // a pattern inside a 3×3 window sits the same way on T_12 and in a large box
        let model = ContourModel::potts(2, 2).unwrap();
        let n = 12;
        let torus = Region::torus(2, n).unwrap();
        let free = Region::cube(2, 16);
        let mut on_torus = vec![0u8; torus.len()];
        let mut in_box = vec![0u8; free.len()];
        for (k, &f) in flips.iter().enumerate() {
            let p = Point::new(&[5 + k as i32 / 3, 5 + k as i32 % 3]);
            on_torus[torus.index_of(&p).unwrap()] = u8::from(f);
            in_box[free.index_of(&p).unwrap()] = u8::from(f);
        }
        let lifted: Vec<Contour> = torus_contours_of_config(&model, n, &on_torus)
            .unwrap()
            .into_iter()
            .map(|c| c.lift.expect("all contours here are small"))
            .collect();
        let mut planar = contours_of_config(&model, &free, 0, &in_box).unwrap();
        let mut lifted = lifted;
        planar.sort_by(|a, b| a.canonical_cmp(b));
        lifted.sort_by(|a, b| a.canonical_cmp(b));
        prop_assert_eq!(lifted, planar);
    }
}
