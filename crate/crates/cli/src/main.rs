//! `cocompact`: Lorentz norms, the staircase experiment, profile
//! decomposition and invariant audits from the command line.
//!
//! Exit codes: 0 success, 1 invariant failure or runtime error,
//! 2 configuration or input error.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cocompact::audit::ChiVariant;

use commands::Failure;
use config::{exponent_arg, FixtureKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "cocompact", version, about = "Concentration experiments on dyadic grids")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON/grid outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the audit corpus and the probe's random shifts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Both Lorentz evaluations, the Lebesgue norm and TV of one function.
    Norms {
        /// annulus2d, annulus3d, staircase2d:<n>, zero2d, ..., a .grid file or a radial .csv file
        input: Option<String>,
        #[arg(long, value_parser = exponent_arg)]
        p: Option<f64>,
        #[arg(long, value_parser = exponent_arg)]
        q: Option<f64>,
        /// Dimension of a radial CSV input.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// The staircase table, decay rates and the vanishing probe.
    Counterexample {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        n_max: Option<u32>,
        /// Comma-separated second Lorentz indices.
        #[arg(long, value_delimiter = ',', value_parser = exponent_arg)]
        q_list: Option<Vec<f64>>,
    },
    /// Greedy profile extraction on a sequence directory.
    Decompose {
        /// Directory of <k>.grid or <k>_<patch>.grid files.
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Run the invariant audit suites over a seeded corpus.
    Audit {
        #[arg(long)]
        corpus_size: Option<usize>,
        /// Compose with the truncation profile whose derivative bound is wrong.
        #[arg(long)]
        broken_chi: bool,
        /// Run only this suite; repeatable.
        #[arg(long)]
        suite: Vec<String>,
    },
    /// Write a synthetic sequence directory to --out.
    Fixture {
        kind: Option<FixtureKind>,
        #[arg(long)]
        level: Option<i32>,
        #[arg(long)]
        k_max: Option<i64>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.counterexample.seed = seed;
        cfg.audit.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Norms { input, p, q, dim } => {
            if let Some(i) = input {
                cfg.norms.input = i.clone();
            }
            if let Some(p) = p {
                cfg.norms.p = *p;
            }
            if let Some(q) = q {
                cfg.norms.q = *q;
            }
            if let Some(d) = dim {
                cfg.norms.dim = *d;
            }
        }
        Command::Counterexample { dim, n_max, q_list } => {
            if let Some(d) = dim {
                cfg.counterexample.dim = *d;
            }
            if let Some(n) = n_max {
                cfg.counterexample.n_max = *n;
            }
            if let Some(q) = q_list {
                cfg.counterexample.q_list = q.clone();
            }
        }
        Command::Decompose { epsilon, stride, .. } => {
            if let Some(e) = epsilon {
                cfg.decompose.extraction.epsilon = *e;
            }
            if let Some(s) = stride {
                cfg.decompose.extraction.stride = *s;
            }
        }
        Command::Audit {
            corpus_size,
            broken_chi,
            suite,
        } => {
            if let Some(n) = corpus_size {
                cfg.audit.corpus_size = *n;
            }
            if *broken_chi {
                cfg.audit.chi_variant = ChiVariant::Broken;
            }
            if !suite.is_empty() {
                cfg.audit.suites = Some(suite.clone());
            }
        }
        Command::Fixture { kind, level, k_max } => {
            if let Some(k) = kind {
                cfg.fixture.kind = *k;
            }
            if let Some(l) = level {
                cfg.fixture.level = *l;
            }
            if let Some(k) = k_max {
                cfg.fixture.k_max = *k;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> commands::CmdResult {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Norms { .. } => commands::norms(cfg),
        Command::Counterexample { .. } => commands::counterexample(cfg, out),
        Command::Decompose { input, .. } => commands::decompose(cfg, input, out),
        Command::Audit { .. } => commands::audit(cfg, out),
        Command::Fixture { .. } => commands::fixture(cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli, &cfg) {
        Ok(outcome) => {
            let printed = serde_json::to_string_pretty(&outcome.doc)
                .map_err(|e| e.to_string())
                .and_then(|s| writeln!(std::io::stdout(), "{s}").map_err(|e| e.to_string()));
            if let Err(e) = printed {
                eprintln!("error: cannot print the report: {e}");
                return ExitCode::from(1);
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
