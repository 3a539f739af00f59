use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pirogov::app::{self, Artifact, Domain, ModelId, RunConfig};
use pirogov::lattice::Region;
use pirogov::torus::DEFAULT_FLOOR_CONSTANT;
use pirogov::{Error, Result};

#[derive(Parser)]
#[command(name = "pirogov", version = app::VERSION, about = "Cluster-expansion counting and sampling for polymer and contour models")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate the partition function by the truncated cluster expansion.
    Count(Instance),
    /// Draw approximate samples as JSON lines.
    Sample(SampleArgs),
    /// Exhaustive counterparts of count and sample.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run the self-check suites.
    Verify {
        /// A suite name or "all".
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    Count(Instance),
    Sample(SampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Geometry {
    Free,
    Torus,
}

#[derive(Args)]
struct Instance {
    #[arg(long)]
    model: String,
    /// Potts colours.
    #[arg(long)]
    q: Option<u8>,
    /// Region JSON file.
    #[arg(long, conflicts_with = "box")]
    region: Option<PathBuf>,
    /// Box shorthand such as 4x4 (anchored at the origin).
    #[arg(long = "box")]
    r#box: Option<String>,
    #[arg(long, value_enum, default_value = "free")]
    geometry: Geometry,
    /// Torus side.
    #[arg(long)]
    n: Option<u32>,
    /// Torus dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Ground state on the boundary: a colour name or index, or even/odd.
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Assumed zero-free radius.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Truncation order override.
    #[arg(long)]
    m: Option<usize>,
    /// Compute even outside the regime where the error bound holds.
    #[arg(long)]
    force: bool,
    /// c in the torus accuracy floor e^{-c n}.
    #[arg(long, default_value_t = DEFAULT_FLOOR_CONSTANT)]
    floor_constant: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    instance: Instance,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    samples: u64,
    /// Write the JSON lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_box(s: &str) -> Result<Value> {
    let sides: Vec<i64> = s
        .split('x')
        .map(|t| t.trim().parse::<i64>().ok().filter(|&v| v > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::validation(format!("box must look like 4x4, got {s:?}")))?;
    let bounds: Vec<Value> = sides.iter().map(|&k| json!([0, k - 1])).collect();
    Ok(json!({"dim": sides.len(), "geometry": "free", "vertices": {"box": bounds}}))
}

impl Instance {
    fn config(&self) -> Result<RunConfig> {
        let domain = match self.geometry {
            Geometry::Torus => {
                if self.region.is_some() || self.r#box.is_some() {
                    return Err(Error::validation("--geometry torus takes --n, not a region"));
                }
                let n = self.n.ok_or_else(|| Error::validation("--geometry torus needs --n"))?;
                Domain::Torus { dim: self.dim, n }
            }
            Geometry::Free => {
                let region = match (&self.region, &self.r#box) {
                    (Some(path), _) => {
                        let text = std::fs::read_to_string(path)
                            .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
                        serde_json::from_str(&text)
                            .map_err(|e| Error::validation(format!("{} is not JSON: {e}", path.display())))?
                    }
                    (None, Some(b)) => parse_box(b)?,
                    (None, None) => return Err(Error::validation("give --region, --box or --geometry torus")),
                };
                Region::from_json(&region)?;
                Domain::Free { region }
            }
        };
        let mut cfg = RunConfig::new(ModelId::parse(&self.model)?, domain);
        cfg.q = self.q;
        cfg.boundary = self.boundary.clone();
        cfg.z = self.z;
        cfg.beta = self.beta;
        cfg.lambda = self.lambda;
        cfg.delta = self.delta;
        cfg.epsilon = self.epsilon;
        cfg.m = self.m;
        cfg.force = self.force;
        cfg.floor_constant = self.floor_constant;
        Ok(cfg)
    }
}

impl SampleArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.instance.config()?;
        cfg.seed = self.seed;
        cfg.samples = self.samples;
        Ok(cfg)
    }
}

fn emit(artifact: &Artifact, out: Option<&PathBuf>) -> Result<()> {
    let text = artifact.render();
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Count(i) => emit(&app::count(&i.config()?)?, None)?,
        Command::Sample(s) => emit(&app::sample(&s.config()?)?, s.out.as_ref())?,
        Command::Oracle(OracleCommand::Count(i)) => emit(&app::oracle_count(&i.config()?)?, None)?,
        Command::Oracle(OracleCommand::Sample(s)) => emit(&app::oracle_sample(&s.config()?)?, s.out.as_ref())?,
        Command::Verify { suite, seed } => {
            let (artifact, passed) = app::verify(&suite, seed)?;
            emit(&artifact, None)?;
            return Ok(passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"v": 1, "error": e.to_string(), "exit_code": code}));
            ExitCode::from(code as u8)
        }
    }
}
