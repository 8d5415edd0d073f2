//! `tree-sobolev`: seeded, reproducible runs of the weighted-tree extension
//! machinery.  Every subcommand reads the same configuration surface (a JSON
//! file, flags, or both, with flags winning) and stamps its output with the
//! config digest and seed so results can be traced back to their inputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{OutputFormat, RunConfig, WeightSpec};

/// Why a run stopped.  Exit codes: verification failures exit 1, bad
/// configuration exits 2 (as do command-line usage errors), and a solver
/// that did not converge exits 3 with a diagnostic JSON object on stderr.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    NonConvergence { diagnostic: serde_json::Value },
    Verify { failures: usize },
}

impl Failure {
    pub fn config(msg: String) -> Self {
        Failure::Config(msg)
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Verify { .. } => 1,
            Failure::Config(_) => 2,
            Failure::NonConvergence { .. } => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tree-sobolev",
    version,
    about = "Extension operators, random walks and kernel bounds on weighted binary trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; flags below override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Tree height
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Exponent(s) p > 1, comma separated
    #[arg(long, value_name = "P[,P..]", value_delimiter = ',')]
    p: Option<Vec<f64>>,

    /// Weight family: unit | dyadic[:c] | geometric:beta[:c] | explicit:w1,w2,...
    #[arg(long, value_name = "SPEC")]
    weights: Option<WeightSpec>,

    /// RNG seed; required for subcommands that draw samples
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Monte-Carlo walk trials
    #[arg(long, value_name = "COUNT")]
    trials: Option<u64>,

    /// Random leaf-data samples per cell
    #[arg(long, value_name = "COUNT")]
    samples: Option<usize>,

    /// Write the report here instead of stdout
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,

    /// Report format where both are supported
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

impl ConfigArgs {
    fn resolve(&self, needs_seed: bool) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::baseline(),
        };
        // A config file always carries a seed; otherwise one must be given
        // explicitly before we draw any samples.
        let seed_given = self.config.is_some() || self.seed.is_some();
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(p) = &self.p {
            cfg.p = p.clone();
        }
        if let Some(w) = &self.weights {
            cfg.weights = w.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if needs_seed && !seed_given {
            return Err(Failure::config(
                "this subcommand draws random samples; pass an explicit --seed \
                 (or a config file, which always carries one)"
                    .into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Extend leaf data across the tree and report both seminorms
    Extend {
        #[command(flatten)]
        base: ConfigArgs,
        /// JSON array of 2^N leaf values (default: seeded uniform data)
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
    /// Monte-Carlo walk statistics next to their closed-form laws
    Simulate {
        #[command(flatten)]
        base: ConfigArgs,
        /// Start the walk at one depth instead of all of 1..=N
        #[arg(long, value_name = "DEPTH")]
        start_depth: Option<usize>,
    },
    /// Dump the depth-reduced kernels and their reversed-index forms
    Kernels {
        #[command(flatten)]
        base: ConfigArgs,
    },
    /// Operator-norm report for a single (N, p, weights) cell
    Opnorm {
        #[command(flatten)]
        base: ConfigArgs,
    },
    /// Sweep the exponent list against weight families
    Report {
        #[command(flatten)]
        base: ConfigArgs,
        /// Weight family for the sweep; repeat to add more
        /// (default: dyadic, unit, geometric:3)
        #[arg(long = "family", value_name = "SPEC")]
        families: Vec<WeightSpec>,
    },
    /// Run the invariant suite; any violation makes the exit code nonzero
    Verify {
        #[command(flatten)]
        base: ConfigArgs,
    },
}

fn write_out(cfg: &RunConfig, text: &str) -> Result<(), Failure> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<(), Failure> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Extend { base, input } => {
            let cfg = base.resolve(input.is_none())?;
            let text = commands::extend(&cfg, input.as_deref())?;
            write_out(&cfg, &text)
        }
        Cmd::Simulate { base, start_depth } => {
            let cfg = base.resolve(true)?;
            let text = commands::simulate(&cfg, start_depth)?;
            write_out(&cfg, &text)
        }
        Cmd::Kernels { base } => {
            let cfg = base.resolve(false)?;
            let text = commands::kernels(&cfg)?;
            write_out(&cfg, &text)
        }
        Cmd::Opnorm { base } => {
            let cfg = base.resolve(true)?;
            let text = commands::opnorm(&cfg)?;
            write_out(&cfg, &text)
        }
        Cmd::Report { base, families } => {
            let cfg = base.resolve(true)?;
            let text = commands::report(&cfg, &families)?;
            write_out(&cfg, &text)
        }
        Cmd::Verify { base } => {
            let cfg = base.resolve(false)?;
            let (text, failures) = commands::verify(&cfg)?;
            write_out(&cfg, &text)?;
            if failures > 0 {
                return Err(Failure::Verify { failures });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::NonConvergence { diagnostic } => eprintln!(
                    "{}",
                    serde_json::to_string_pretty(diagnostic)
                        .unwrap_or_else(|_| diagnostic.to_string())
                ),
                Failure::Verify { failures } => {
                    eprintln!("verify failed: {failures} check(s)")
                }
            }
            ExitCode::from(f.exit_code())
        }
    }
}
