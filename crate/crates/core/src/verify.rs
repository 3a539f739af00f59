//! Self-checks against the brute-force oracles, one suite per acceptance
//! criterion. Shared by the `verify` subcommand and the acceptance tests.

use std::collections::HashMap;
use std::f64::consts::E;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cluster::{approx_z, log_z_coefficients};
use crate::contour::{contour_degree, contour_z, contours_of_config, ContourEngine, ContourModel};
use crate::graph::Graph;
use crate::lattice::Region;
use crate::oracle::{
    brute_z_hardcore, brute_z_ising, brute_z_potts, brute_z_spin, compatible_families, config_key, family_key,
    gibbs_distribution, polymer_measure, tv_distance, PaddedSpace, DEFAULT_STATE_CAP,
};
use crate::polymer::{hardcore_polymer_model, ising_polymer_model, KP_TOLERANCE};
use crate::sampling::{ContourSampler, ExactPolymerSampler, PolymerSampler};
use crate::torus::{torus_approx_z, torus_census, torus_z_small, torus_full_degree, TorusOptions};
use crate::ursell::{ursell, ursell_deletion_contraction, ursell_edge_subsets};
use crate::{Error, ExactSeries, Rational, Result};

/// Suite names in criterion order.
pub const SUITES: [&str; 9] = ["ursell", "newton", "cluster", "fptas", "contour", "sampler", "spin-sampler", "torus", "kp"];

/// Outcome of one suite. `passed` requires both the checks and the time limit.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub criterion: usize,
    pub name: &'static str,
    pub checks_passed: bool,
    pub passed: bool,
    pub elapsed: Duration,
    pub limit: Duration,
    pub detail: Vec<String>,
}

impl SuiteReport {
    /// One line: `[PASS] 3 cluster (12.1 s / 120 s): ...`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {} {} ({:.1} s / {} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs(),
            self.detail.join("; ")
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "criterion": self.criterion,
            "suite": self.name,
            "passed": self.passed,
            "checks_passed": self.checks_passed,
            "elapsed_s": self.elapsed.as_secs_f64(),
            "limit_s": self.limit.as_secs(),
            "detail": self.detail,
        })
    }
}

/// Collects named checks; a failed check does not stop the suite.
#[derive(Default)]
struct Checks {
    ok: bool,
    lines: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks { ok: true, lines: Vec::new() }
    }

    fn check(&mut self, pass: bool, what: impl Into<String>) {
        let what = what.into();
        self.ok &= pass;
        self.lines.push(if pass { what } else { format!("FAILED {what}") });
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let criterion = SUITES
        .iter()
        .position(|&s| s == name)
        .ok_or_else(|| Error::validation(format!("unknown suite {name:?}; expected one of {}", SUITES.join(", "))))?;
    let limit = Duration::from_secs([10, 5, 120, 60, 300, 180, 300, 600, 10][criterion]);
    let start = Instant::now();
    let checks = match criterion {
        0 => ursell_suite(seed),
        1 => newton_suite(seed),
        2 => cluster_suite(seed),
        3 => fptas_suite(),
        4 => contour_suite(),
        5 => sampler_suite(seed),
        6 => spin_sampler_suite(seed),
        7 => torus_suite(),
        _ => kp_suite(),
    }?;
    let elapsed = start.elapsed();
    Ok(SuiteReport {
        criterion: criterion + 1,
        name: SUITES[criterion],
        checks_passed: checks.ok,
        passed: checks.ok && elapsed < limit,
        elapsed,
        limit,
        detail: checks.lines,
    })
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    SUITES.iter().map(|s| run_suite(s, seed)).collect()
}

fn ursell_suite(seed: u64) -> Result<Checks> {
    let mut c = Checks::new();
    let golden = [
        ("K1", Graph::complete(1), 1),
        ("K2", Graph::complete(2), -1),
        ("P3", Graph::path(3), 1),
        ("K3", Graph::complete(3), 2),
    ];
    for (label, g, want) in golden {
        let got = ursell(&g)?;
        c.check(got == want, format!("phi({label}) = {got}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let extra = rng.random_range(0..=2 * n);
        let g = Graph::random_connected(n, (n - 1).max(2), extra, &mut rng);
        if ursell_deletion_contraction(&g)? == ursell_edge_subsets(&g)? {
            agree += 1;
        }
    }
    c.check(agree == 200, format!("deletion-contraction = edge subsets on {agree}/200 random graphs"));
    Ok(c)
}

fn newton_suite(seed: u64) -> Result<Checks> {
    let mut c = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..500 {
        let deg = rng.random_range(0..=10);
        let mut coeffs = vec![Rational::from(1)];
        for _ in 0..deg {
            coeffs.push(Rational::new(rng.random_range(-9..=9), rng.random_range(1..=9)));
        }
        let p = ExactSeries::from_coeffs(10, coeffs);
        if p.log_from_poly()?.poly_from_log()? == p {
            agree += 1;
        }
    }
    c.check(agree == 500, format!("exp(log p) = p on {agree}/500 random polynomials"));
    Ok(c)
}

fn grid(rows: i32, cols: i32) -> Graph {
    Region::free_box(&[(0, rows - 1), (0, cols - 1)]).expect("valid box").nn_graph()
}

fn cluster_suite(seed: u64) -> Result<Checks> {
    let mut c = Checks::new();
    let host = grid(3, 4);
    let mut hosts: Vec<Graph> = host.all_connected_subsets(host.len()).iter().map(|s| host.induced(s)).collect();
    let subgraphs = hosts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        hosts.push(Graph::random_connected(n, 3, n, &mut rng));
    }
    let mut exact = 0;
    for g in &hosts {
        let m = g.len();
        let model = hardcore_polymer_model(g.clone(), None)?;
        let z = log_z_coefficients(&model, m)?.poly_from_log()?;
        if z == brute_z_hardcore(g)?.to_series(m) {
            exact += 1;
        }
    }
    c.check(
        exact == hosts.len(),
        format!("hard-core exp(T_m) = independence polynomial on {exact}/{} hosts ({subgraphs} grid subgraphs)", hosts.len()),
    );

    let ising_hosts = [grid(2, 3), Graph::cycle(5), Graph::complete(4), Graph::path(6), grid(2, 4)];
    let mut worst = 0.0f64;
    for g in &ising_hosts {
        let table = brute_z_ising(g)?;
        for beta in [0.5, 1.0, 2.0] {
            let m = 2 * g.len();
            let model = ising_polymer_model(g.clone(), beta, None)?;
            let got = log_z_coefficients(&model, m)?.poly_from_log()?;
            for (k, want) in table.polynomial(beta).iter().enumerate() {
                let err = (got.coeff(k) - want).abs();
                worst = worst.max(if *want == 0.0 { if err == 0.0 { 0.0 } else { f64::INFINITY } } else { err / want.abs() });
            }
        }
    }
    c.check(worst <= 1e-9, format!("Ising coefficients within {worst:.1e} relative (limit 1e-9)"));
    Ok(c)
}

fn fptas_suite() -> Result<Checks> {
    let mut c = Checks::new();
    let g = grid(4, 4);
    let model = hardcore_polymer_model(g.clone(), None)?;
    let z = 0.5 / (E * 5.0);
    let exact = brute_z_hardcore(&g)?.eval_f64(z);
    for eps in [1e-1, 1e-2, 1e-3] {
        let a = approx_z(&model, z, eps, false)?;
        let err = (a.log_value - exact.ln()).abs();
        c.check(err <= eps, format!("eps {eps:e}: m = {}, |log ratio| = {err:.2e}", a.m_used));
    }
    Ok(c)
}

fn contour_suite() -> Result<Checks> {
    let mut c = Checks::new();
    for q in [2u8, 3] {
        let model = ContourModel::potts(q, 2)?;
        for side in [6, 7] {
            let r = Region::cube(2, side);
            for phi in model.ground_states() {
                let deg = contour_degree(&model, &r, phi);
                let brute = brute_z_potts(&r, q, Some(phi))?;
                let ok = brute.degree() <= deg && contour_z(&model, &r, phi, deg)? == brute.to_series(deg);
                c.check(ok, format!("Potts q={q} {side}x{side} phi={phi}: degree {deg}"));
                if side == 6 {
                    let engine = ContourEngine::new(model, deg).cluster_only();
                    let ok = engine.solve(&r, phi)?.z == brute.to_series(deg);
                    c.check(ok, format!("Potts q={q} 6x6 phi={phi}: same by cluster expansion alone"));
                }
            }
        }
    }
    let model = ContourModel::hardcore(2)?;
    let r = Region::cube(2, 8);
    let deg = contour_degree(&model, &r, 0);
    let brute = brute_z_spin(model.system, &r, Some(0))?;
    c.check(contour_z(&model, &r, 0, deg)? == brute.to_series(deg), format!("hard-core 8x8 even: degree {deg}"));
    let space = PaddedSpace::new(model.system, &r, Some(0));
    let configs = space.configs(DEFAULT_STATE_CAP)?;
    let mut matched = 0;
    for s in &configs {
        let total: usize = contours_of_config(&model, &r, 0, s)?.iter().map(|g| g.energy).sum();
        if total as i64 == space.energy(s) {
            matched += 1;
        }
    }
    c.check(
        matched == configs.len(),
        format!("|even| - |I| = sum of contour energies on {matched}/{} configurations", configs.len()),
    );
    Ok(c)
}

fn sampler_hosts() -> Vec<(&'static str, Graph)> {
    vec![
        ("K2", Graph::path(2)),
        ("P4", Graph::path(4)),
        ("C4", Graph::cycle(4)),
        ("C5", Graph::cycle(5)),
        ("K4", Graph::complete(4)),
        ("grid 2x3", grid(2, 3)),
    ]
}

fn sampler_suite(seed: u64) -> Result<Checks> {
    let mut c = Checks::new();
    // Exact sampler at a fugacity well outside the expansion regime.
    let z = Rational::new(2, 7);
    for (label, g) in sampler_hosts() {
        let model = hardcore_polymer_model(g, None)?;
        let sampler = ExactPolymerSampler::new(&model, &z)?;
        let mu = polymer_measure(&model, &z)?;
        let families = compatible_families(&model)?;
        let exact = families.iter().all(|f| sampler.path_probability(f) == mu.get(&family_key(f)));
        c.check(exact, format!("{label}: path products = measure on {} outcomes", families.len()));
    }
    // 1/32 is below 1/(e(Δ+1)) for every host above and is exact in binary.
    let z = Rational::new(1, 32);
    let draws = 100_000u64;
    for (label, g) in sampler_hosts() {
        let model = hardcore_polymer_model(g, None)?;
        let sampler = PolymerSampler::new(&model, 1.0 / 32.0, 0.05)?;
        let mut counts = HashMap::new();
        for k in 0..draws {
            *counts.entry(family_key(&sampler.sample(seed, k)?)).or_insert(0u64) += 1;
        }
        let tv = tv_distance(&polymer_measure(&model, &z)?, &counts);
        c.check(tv.tv <= 0.05 + 4.0 * tv.sigma, format!("{label}: TV {:.2e} (sigma {:.2e})", tv.tv, tv.sigma));
    }
    Ok(c)
}

fn spin_sampler_suite(seed: u64) -> Result<Checks> {
    let mut c = Checks::new();
    let model = ContourModel::potts(2, 2)?;
    let r = Region::cube(2, 6);
    let (phi, eps) = (1, 0.05);
    let sampler = ContourSampler::new(&model, &r, phi, 0.02, eps)?;
    let exact = gibbs_distribution(model.system, &r, Some(phi), &Rational::new(1, 50))?;
    let draws = 100_000u64;
    let mut counts = HashMap::new();
    let mut consistent = 0u64;
    for k in 0..draws {
        let x = sampler.sample_spins(seed, k)?;
        if x.consistent(&model, &r, phi)? {
            consistent += 1;
        }
        *counts.entry(config_key(&x.spins)).or_insert(0u64) += 1;
    }
    let tv = tv_distance(&exact, &counts);
    c.check(tv.tv <= eps + 4.0 * tv.sigma, format!("TV {:.2e} (sigma {:.2e})", tv.tv, tv.sigma));
    c.check(consistent == draws, format!("{consistent}/{draws} samples re-extract to their provenance"));
    Ok(c)
}

fn torus_suite() -> Result<Checks> {
    let mut c = Checks::new();
    let n = 4;
    let (z, eps) = (0.01, 0.05);
    for model in [ContourModel::hardcore(2)?, ContourModel::potts(2, 2)?] {
        let label = model.system.to_string();
        let census = torus_census(&model, n)?;
        let brute = brute_z_spin(model.system, &Region::torus(2, n)?, None)?;
        c.check(census.total == brute, format!("{label}: census total = brute force ({} configurations)", census.configurations));
        c.check(
            census.injective && census.externals_match && census.total == census.matching_form(),
            format!("{label}: contour representation holds"),
        );
        let full = torus_full_degree(&model, n);
        let mut sum: ExactSeries = census.big.to_series(full);
        for phi in model.ground_states() {
            sum = sum.add(&torus_z_small(&model, n, phi, full)?)?;
        }
        c.check(sum == census.total.to_series(full), format!("{label}: Z = Z_big + sum of phase terms"));

        // Both models sit below the floor here, and hard-core also outside its radius.
        let options = TorusOptions { force: true, ..TorusOptions::default() };
        let approx = torus_approx_z(&model, n, z, eps, options)?;
        let total = census.total.eval_f64(z);
        let big = census.big.eval_f64(z);
        let ratio = big / (total - big);
        let err = (approx.log_value + ratio.ln_1p() - total.ln()).abs();
        c.check(err <= eps, format!("{label}: approx {:.6e}, big ratio {ratio:.3e}, error {err:.2e}", approx.value));
    }
    Ok(c)
}

fn kp_suite() -> Result<Checks> {
    let mut c = Checks::new();
    let host = Region::torus(2, 4)?.nn_graph();
    let delta_kp = 1.0 / (E * (host.max_degree() as f64 + 1.0));
    let model = hardcore_polymer_model(host, None)?;
    let at = model.kp_certificate(delta_kp, 1);
    c.check(
        at.holds_truncated && at.worst_margin.abs() <= KP_TOLERANCE,
        format!("z = 1/(e(D+1)): holds, margin {:.1e}", at.worst_margin),
    );
    let above = model.kp_certificate(1.5 * delta_kp, 1);
    c.check(!above.holds_truncated, format!("z = 1.5/(e(D+1)): fails, margin {:.3}", above.worst_margin));
    Ok(c)
}
