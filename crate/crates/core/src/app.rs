//! Resolved run configurations and the JSON artifacts of the command-line tool.
//!
//! The binary only parses flags into a [`RunConfig`]; everything that decides
//! what gets computed and printed lives here so it can be tested directly.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cluster::{log_z_coefficients, truncation_order};
use crate::contour::{ContourEngine, ContourModel};
use crate::graph::Graph;
use crate::lattice::{Point, Region};
use crate::oracle::{
    brute_z_hardcore, brute_z_ising, brute_z_spin, config_key, gibbs_distribution, ExactDistribution,
};
use crate::polymer::{hardcore_polymer_model, ising_polymer_model, Polymer, PolymerModel};
use crate::sampling::{categorical, substream, ContourSampler, ExactPolymerSampler, PolymerSampler, SpinSample};
use crate::scalar::Coeff;
use crate::torus::{
    torus_approx_z, torus_census, torus_full_degree, torus_z_big_exact, TorusOptions, TorusSampler,
    DEFAULT_FLOOR_CONSTANT,
};
use crate::verify::{run_all, run_suite, SUITES};
use crate::{Error, Rational, Result};

/// Version string baked in at build time (`git describe` when available).
pub const VERSION: &str = match option_env!("PIROGOV_VERSION") {
    Some(v) => v,
    None => env!("CARGO_PKG_VERSION"),
};

/// Artifact schema version.
pub const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    HardcorePolymer,
    IsingPolymer,
    PottsContour,
    HardcoreContour,
}

impl ModelId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "hardcore-polymer" => ModelId::HardcorePolymer,
            "ising-polymer" => ModelId::IsingPolymer,
            "potts-contour" => ModelId::PottsContour,
            "hardcore-contour" => ModelId::HardcoreContour,
            _ => {
                return Err(Error::validation(format!(
                    "unknown model {s:?}; expected hardcore-polymer, ising-polymer, potts-contour or hardcore-contour"
                )))
            }
        })
    }

    fn is_polymer(self) -> bool {
        matches!(self, ModelId::HardcorePolymer | ModelId::IsingPolymer)
    }
}

/// Where the model lives: a free region given as JSON, or the torus T^d_n.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "geometry", rename_all = "kebab-case")]
pub enum Domain {
    Free { region: Value },
    Torus { dim: usize, n: u32 },
}

/// Everything that determines an artifact. Thread count is deliberately
/// absent: output does not depend on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelId,
    pub q: Option<u8>,
    pub domain: Domain,
    pub boundary: Option<String>,
    pub z: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub m: Option<usize>,
    pub seed: u64,
    pub samples: u64,
    pub force: bool,
    pub floor_constant: f64,
}

impl RunConfig {
    pub fn new(model: ModelId, domain: Domain) -> Self {
        RunConfig {
            model,
            q: None,
            domain,
            boundary: None,
            z: None,
            beta: None,
            lambda: None,
            delta: None,
            epsilon: 0.01,
            m: None,
            seed: 0,
            samples: 1,
            force: false,
            floor_constant: DEFAULT_FLOOR_CONSTANT,
        }
    }

    /// Checks the parameter convention of the model and returns the resolved
    /// instance.
    fn resolve(&self) -> Result<Instance> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let given = |name: &str, v: Option<f64>, allowed: bool| -> Result<()> {
            if v.is_some() && !allowed {
                return Err(Error::validation(format!("--{name} does not apply to model {:?}", self.model)));
            }
            Ok(())
        };
        let pm = self.model;
        given("beta", self.beta, matches!(pm, ModelId::IsingPolymer | ModelId::PottsContour))?;
        given("lambda", self.lambda, pm == ModelId::HardcoreContour)?;
        if self.q.is_some() && pm != ModelId::PottsContour {
            return Err(Error::validation("--q only applies to potts-contour"));
        }
        if self.boundary.is_some() && pm.is_polymer() {
            return Err(Error::validation("--boundary only applies to contour models"));
        }
        let host_region = match &self.domain {
            Domain::Free { region } => Region::from_json(region)?,
            Domain::Torus { dim, n } => Region::torus(*dim, *n)?,
        };
        let kind = match pm {
            ModelId::HardcorePolymer | ModelId::IsingPolymer => {
                let z = self.z.ok_or_else(|| Error::validation("polymer models need --z"))?;
                if pm == ModelId::IsingPolymer && self.beta.is_none() {
                    return Err(Error::validation("ising-polymer needs --beta"));
                }
                Kind::Polymer { host: host_region.nn_graph(), z }
            }
            ModelId::PottsContour | ModelId::HardcoreContour => {
                let mut model = match pm {
                    ModelId::PottsContour => ContourModel::potts(self.q.unwrap_or(2), host_region.dim())?,
                    _ => ContourModel::hardcore(host_region.dim())?,
                };
                if let Some(d) = self.delta {
                    model = model.with_delta(d)?;
                }
                let param = if pm == ModelId::PottsContour { self.beta } else { self.lambda };
                let z = match (self.z, param) {
                    (Some(z), None) => {
                        if !(z >= 0.0 && z.is_finite()) {
                            return Err(Error::validation(format!("z must be a non-negative real, got {z}")));
                        }
                        z
                    }
                    (None, Some(p)) => model.activity(p)?,
                    _ => {
                        let name = if pm == ModelId::PottsContour { "--beta" } else { "--lambda" };
                        return Err(Error::validation(format!("give exactly one of --z and {name}")));
                    }
                };
                let phi = match &self.boundary {
                    Some(b) => model.system.parse_ground(b)?,
                    None => model.ground_states()[0],
                };
                Kind::Contour { model, z, phi }
            }
        };
        Ok(Instance { region: host_region, kind })
    }

    fn torus_n(&self) -> Option<u32> {
        match self.domain {
            Domain::Torus { n, .. } => Some(n),
            Domain::Free { .. } => None,
        }
    }

    fn torus_options(&self) -> TorusOptions {
        TorusOptions { floor_constant: self.floor_constant, force: self.force }
    }
}

struct Instance {
    region: Region,
    kind: Kind,
}

enum Kind {
    Polymer { host: Graph, z: f64 },
    Contour { model: ContourModel, z: f64, phi: u8 },
}

/// What a command produces: one JSON document or a stream of JSON lines.
#[derive(Clone, Debug, PartialEq)]
pub enum Artifact {
    Document(Value),
    Lines(Vec<Value>),
}

impl Artifact {
    pub fn render(&self) -> String {
        match self {
            Artifact::Document(v) => format!("{v}\n"),
            Artifact::Lines(ls) => ls.iter().map(|l| format!("{l}\n")).collect(),
        }
    }
}

fn header(command: &str, cfg: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("v".into(), json!(SCHEMA));
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(VERSION));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serialises"));
    m
}

fn polymer_model_f64(cfg: &RunConfig, host: Graph) -> Result<PolymerModel<f64>> {
    ising_polymer_model(host, cfg.beta.expect("checked in resolve"), cfg.delta)
}

fn series_coeffs<S: Coeff>(t: &crate::TruncatedSeries<S>) -> Value {
    t.to_json()["coeffs"].clone()
}

/// Radius actually used, and whether --force was needed to get past it.
fn regime(cfg: &RunConfig, z: f64, delta: f64) -> Result<(f64, bool)> {
    if z.abs() < delta {
        return Ok((delta, false));
    }
    if !cfg.force {
        return Err(Error::Regime { z: z.abs(), delta });
    }
    Ok((2.0 * z.abs(), true))
}

fn forced_fields(out: &mut Map<String, Value>, forced: bool) {
    out.insert("forced".into(), json!(forced));
    if forced {
        out.insert(
            "warning".into(),
            json!("|z| is not below the assumed zero-free radius; the error bound does not apply"),
        );
    }
}

pub fn count(cfg: &RunConfig) -> Result<Artifact> {
    let inst = cfg.resolve()?;
    let mut out = header("count", cfg);
    match (&inst.kind, cfg.torus_n()) {
        (Kind::Polymer { host, z }, _) => {
            let z = *z;
            let (log_coeffs, m, delta, forced, series) = if cfg.model == ModelId::HardcorePolymer {
                let model = hardcore_polymer_model(host.clone(), cfg.delta)?;
                let (d, forced) = regime(cfg, z, model.delta)?;
                let m = match cfg.m {
                    Some(m) => m,
                    None => truncation_order(model.degree(), z, d, cfg.epsilon)?,
                };
                let t = log_z_coefficients(&model, m)?;
                (series_coeffs(&t), m, model.delta, forced, t.to_float())
            } else {
                let model = polymer_model_f64(cfg, host.clone())?;
                let (d, forced) = regime(cfg, z, model.delta)?;
                let m = match cfg.m {
                    Some(m) => m,
                    None => truncation_order(model.degree(), z, d, cfg.epsilon)?,
                };
                let t = log_z_coefficients(&model, m)?;
                (series_coeffs(&t), m, model.delta, forced, t)
            };
            let log_value = series.evaluate_real(z);
            out.insert("log_coeffs".into(), log_coeffs);
            out.insert("m".into(), json!(m));
            out.insert("z".into(), json!(z));
            out.insert("approx_Z".into(), json!(log_value.exp()));
            out.insert("log_approx_Z".into(), json!(log_value));
            out.insert("epsilon".into(), json!(cfg.epsilon));
            out.insert("zero_free_radius_assumed".into(), json!(delta));
            forced_fields(&mut out, forced);
        }
        (Kind::Contour { model, z, .. }, Some(n)) => {
            if cfg.m.is_some() {
                return Err(Error::validation("--m is not supported on the torus"));
            }
            let a = torus_approx_z(model, n, *z, cfg.epsilon, cfg.torus_options())?;
            let big = match torus_z_big_exact(model, n) {
                Ok(p) => json!(p.eval_f64(*z)),
                Err(Error::CapExceeded { .. }) => Value::Null,
                Err(e) => return Err(e),
            };
            let e = torus_full_degree(model, n);
            out.insert("m".into(), json!(a.m_used));
            out.insert("z".into(), json!(z));
            out.insert("approx_Z".into(), json!(a.value));
            out.insert("log_approx_Z".into(), json!(a.log_value));
            out.insert("phases".into(), phases_json(model, &a.phases));
            out.insert("prefactor".into(), prefactor_json(e, *z));
            out.insert("log_approx_Z_spin".into(), json!(a.log_value - e as f64 * z.ln()));
            out.insert("epsilon".into(), json!(cfg.epsilon));
            out.insert("zero_free_radius_assumed".into(), json!(model.delta));
            out.insert("floor".into(), json!(a.floor));
            out.insert("below_floor".into(), json!(a.below_floor));
            out.insert("dropped_big_term".into(), json!(a.dropped_big_term));
            out.insert("big_term_exact".into(), big);
            forced_fields(&mut out, a.forced);
        }
        (Kind::Contour { model, z, phi }, None) => {
            let (d, forced) = regime(cfg, *z, model.delta)?;
            let m = match cfg.m {
                Some(m) => m,
                None => truncation_order(model.degree(&inst.region), *z, d, cfg.epsilon)?,
            };
            let solved = ContourEngine::new(*model, m).solve(&inst.region, *phi)?;
            let log_value = solved.log_z.evaluate_real(*z);
            let e = model.prefactor_exponent(&inst.region, *phi);
            out.insert("boundary".into(), json!(model.system.ground_name(*phi)));
            out.insert("log_coeffs".into(), series_coeffs(&solved.log_z));
            out.insert("contour_coeffs".into(), series_coeffs(&solved.z));
            out.insert("m".into(), json!(m));
            out.insert("z".into(), json!(z));
            out.insert("approx_Z".into(), json!(log_value.exp()));
            out.insert("log_approx_Z".into(), json!(log_value));
            out.insert("prefactor".into(), prefactor_json(e, *z));
            out.insert("log_approx_Z_spin".into(), json!(log_value - e as f64 * z.ln()));
            out.insert("epsilon".into(), json!(cfg.epsilon));
            out.insert("zero_free_radius_assumed".into(), json!(model.delta));
            forced_fields(&mut out, forced);
        }
    }
    Ok(Artifact::Document(Value::Object(out)))
}

/// The spin partition function is z^{−e} times the contour one.
fn prefactor_json(e: usize, z: f64) -> Value {
    json!({"z_power": -(e as i64), "log": -(e as f64) * z.ln()})
}

fn phases_json(model: &ContourModel, phases: &[(u8, f64)]) -> Value {
    phases
        .iter()
        .map(|(phi, l)| json!({"phase": model.system.ground_name(*phi), "log_Z": l}))
        .collect()
}

fn point_key(p: &Point, dim: usize) -> String {
    p.coords(dim).iter().map(i32::to_string).collect::<Vec<_>>().join(",")
}

fn spins_json(region: &Region, spins: &[u8]) -> Value {
    let map: BTreeMap<String, u8> =
        region.vertices().iter().zip(spins).map(|(p, &s)| (point_key(p, region.dim()), s)).collect();
    json!(map)
}

fn polymers_json(family: &[Polymer]) -> Value {
    family.iter().map(Polymer::to_json).collect()
}

fn sample_line(index: u64, mut body: Map<String, Value>, exact: bool) -> Value {
    body.insert("v".into(), json!(SCHEMA));
    body.insert("kind".into(), json!("sample"));
    body.insert("index".into(), json!(index));
    if exact {
        body.insert("exact".into(), json!(true));
    }
    Value::Object(body)
}

pub fn sample(cfg: &RunConfig) -> Result<Artifact> {
    let inst = cfg.resolve()?;
    let mut head = header("sample", cfg);
    head.insert("kind".into(), json!("header"));
    let mut lines = Vec::new();
    match (&inst.kind, cfg.torus_n()) {
        (Kind::Polymer { host, z }, _) => {
            let draw: Box<dyn Fn(u64) -> Result<Vec<Polymer>>> = if cfg.model == ModelId::HardcorePolymer {
                let s = PolymerSampler::new(&hardcore_polymer_model(host.clone(), cfg.delta)?, *z, cfg.epsilon)?;
                Box::new(move |k| s.sample(cfg.seed, k))
            } else {
                let s = PolymerSampler::new(&polymer_model_f64(cfg, host.clone())?, *z, cfg.epsilon)?;
                Box::new(move |k| s.sample(cfg.seed, k))
            };
            for k in 0..cfg.samples {
                let mut body = Map::new();
                body.insert("polymers".into(), polymers_json(&draw(k)?));
                lines.push(sample_line(k, body, false));
            }
        }
        (Kind::Contour { model, z, .. }, Some(n)) => {
            let s = TorusSampler::new(model, n, *z, cfg.epsilon, cfg.torus_options())?;
            head.insert("m".into(), json!(s.order()));
            head.insert("below_floor".into(), json!(s.below_floor));
            head.insert("dropped_big_term".into(), json!(true));
            for k in 0..cfg.samples {
                let x = s.sample(cfg.seed, k)?;
                let digest = SpinSample { spins: x.spins.clone(), provenance: x.provenance.clone() }.provenance_digest(model);
                let mut body = Map::new();
                body.insert("phase".into(), json!(model.system.ground_name(x.phi)));
                body.insert("spins".into(), spins_json(&inst.region, &x.spins));
                body.insert("contours".into(), json!(x.contours.len()));
                body.insert("provenance_digest".into(), json!(digest));
                lines.push(sample_line(k, body, false));
            }
        }
        (Kind::Contour { model, z, phi }, None) => {
            let s = ContourSampler::new(model, &inst.region, *phi, *z, cfg.epsilon)?;
            for k in 0..cfg.samples {
                let x = s.sample_spins(cfg.seed, k)?;
                let mut body = Map::new();
                body.insert("spins".into(), spins_json(&inst.region, &x.spins));
                body.insert("contours".into(), json!(x.contours().len()));
                body.insert("provenance_digest".into(), json!(x.provenance_digest(model)));
                lines.push(sample_line(k, body, false));
            }
        }
    }
    lines.insert(0, Value::Object(head));
    Ok(Artifact::Lines(lines))
}

/// The rational number written by `{z}`, which round-trips the float.
fn exact_z(z: f64) -> Result<Rational> {
    Rational::from_decimal_str(&format!("{z}"))
}

/// Exact counterpart of [`count`].
pub fn oracle_count(cfg: &RunConfig) -> Result<Artifact> {
    let inst = cfg.resolve()?;
    let mut out = header("oracle", cfg);
    out.insert("exact".into(), json!(true));
    match (&inst.kind, cfg.torus_n()) {
        (Kind::Polymer { host, z }, _) => {
            let coeffs: Vec<f64> = if cfg.model == ModelId::HardcorePolymer {
                let p = brute_z_hardcore(host)?;
                out.insert("coeffs".into(), serde_json::to_value(&p).expect("polynomial serialises"));
                p.coeffs().iter().map(|&c| c as f64).collect()
            } else {
                let table = brute_z_ising(host)?;
                let poly = table.polynomial(cfg.beta.expect("checked in resolve"));
                out.insert("coeffs".into(), json!(poly));
                poly
            };
            let value = coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c);
            out.insert("z".into(), json!(z));
            out.insert("Z".into(), json!(value));
            out.insert("log_Z".into(), json!(value.ln()));
        }
        (Kind::Contour { model, z, .. }, Some(n)) => {
            let census = torus_census(model, n)?;
            let e = torus_full_degree(model, n);
            let total = census.total.eval_f64(*z);
            out.insert("coeffs".into(), serde_json::to_value(&census.total).expect("polynomial serialises"));
            out.insert("big_coeffs".into(), serde_json::to_value(&census.big).expect("polynomial serialises"));
            let phases: Vec<Value> = census
                .small
                .iter()
                .map(|(phi, p)| json!({"phase": model.system.ground_name(*phi), "coeffs": p, "Z": p.eval_f64(*z)}))
                .collect();
            out.insert("phases".into(), json!(phases));
            out.insert("z".into(), json!(z));
            out.insert("Z".into(), json!(total));
            out.insert("log_Z".into(), json!(total.ln()));
            out.insert("big_term_exact".into(), json!(census.big.eval_f64(*z)));
            out.insert("prefactor".into(), prefactor_json(e, *z));
            out.insert("log_Z_spin".into(), json!(total.ln() - e as f64 * z.ln()));
        }
        (Kind::Contour { model, z, phi }, None) => {
            let p = brute_z_spin(model.system, &inst.region, Some(*phi))?;
            let e = model.prefactor_exponent(&inst.region, *phi);
            let value = p.eval_f64(*z);
            out.insert("boundary".into(), json!(model.system.ground_name(*phi)));
            out.insert("coeffs".into(), serde_json::to_value(&p).expect("polynomial serialises"));
            out.insert("z".into(), json!(z));
            out.insert("Z".into(), json!(value));
            out.insert("log_Z".into(), json!(value.ln()));
            out.insert("prefactor".into(), prefactor_json(e, *z));
            out.insert("log_Z_spin".into(), json!(value.ln() - e as f64 * z.ln()));
        }
    }
    Ok(Artifact::Document(Value::Object(out)))
}

fn draw_exact(law: &ExactDistribution, seed: u64, k: u64) -> &str {
    let masses: Vec<f64> = law.outcomes.iter().map(|(_, p)| p.to_f64()).collect();
    &law.outcomes[categorical(&masses, &mut substream(seed, &[k]))].0
}

fn spins_from_key(key: &str) -> Vec<u8> {
    key.bytes().map(|b| b - b'0').collect()
}

/// Exact counterpart of [`sample`]: draws from the exact law.
pub fn oracle_sample(cfg: &RunConfig) -> Result<Artifact> {
    let inst = cfg.resolve()?;
    let mut head = header("oracle", cfg);
    head.insert("kind".into(), json!("header"));
    head.insert("exact".into(), json!(true));
    let mut lines = Vec::new();
    match &inst.kind {
        Kind::Polymer { host, z } => {
            if cfg.model != ModelId::HardcorePolymer {
                return Err(Error::validation("exact sampling needs rational weights; use hardcore-polymer"));
            }
            let model = hardcore_polymer_model(host.clone(), cfg.delta)?;
            let s = ExactPolymerSampler::new(&model, &exact_z(*z)?)?;
            for k in 0..cfg.samples {
                let mut body = Map::new();
                body.insert("polymers".into(), polymers_json(&s.sample(cfg.seed, k)));
                lines.push(sample_line(k, body, true));
            }
        }
        Kind::Contour { model, z, phi } => {
            let boundary = cfg.torus_n().is_none().then_some(*phi);
            let law = gibbs_distribution(model.system, &inst.region, boundary, &exact_z(*z)?)?;
            for k in 0..cfg.samples {
                let spins = spins_from_key(draw_exact(&law, cfg.seed, k));
                let mut body = Map::new();
                body.insert("spins".into(), spins_json(&inst.region, &spins));
                body.insert("key".into(), json!(config_key(&spins)));
                lines.push(sample_line(k, body, true));
            }
        }
    }
    lines.insert(0, Value::Object(head));
    Ok(Artifact::Lines(lines))
}

/// Runs one suite, or all of them for `"all"`. The boolean is overall success.
pub fn verify(suite: &str, seed: u64) -> Result<(Artifact, bool)> {
    let reports = if suite == "all" { run_all(seed)? } else { vec![run_suite(suite, seed)?] };
    let passed = reports.iter().all(|r| r.passed);
    let doc = json!({
        "v": SCHEMA,
        "command": "verify",
        "version": VERSION,
        "config": {"suite": suite, "seed": seed, "available": SUITES},
        "passed": passed,
        "reports": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    Ok((Artifact::Document(doc), passed))
}
