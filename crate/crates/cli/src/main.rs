use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use arctic_core::oracle::check_equilibrium;
use arctic_core::perturb::{perturb, PerturbationConfig};
use arctic_core::rational::{self, Rational};
use arctic_core::solve::{solve, Algorithm, SolveOptions, Solved};
use arctic_core::{load_instance, MarketInstance, SolverError};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

mod bench;
mod document;

#[derive(Parser)]
#[command(
    name = "arctic",
    version,
    about = "Exact equilibria of the Arctic Auction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write the equilibrium document.
    Solve(SolveArgs),
    /// Check a solution document against an instance.
    Verify(VerifyArgs),
    /// Solve random instances and write per-run statistics as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Weak,
    Strong,
    Both,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Weak => Algorithm::Weak,
            AlgorithmArg::Strong => Algorithm::Strong,
            AlgorithmArg::Both => Algorithm::Both,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: AlgorithmArg,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON-lines trace of every step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Perturbation magnitude, e.g. `1/1000000`.
    #[arg(long, value_parser = parse_rational)]
    perturb: Option<Rational>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    max_retries: u32,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    solution: PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "6,10,20")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "both")]
    algorithm: AlgorithmArg,
    /// Defaults to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

fn read_instance(path: &Path) -> Result<MarketInstance> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    load_instance(&text).with_context(|| format!("invalid instance {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn trace_lines(solved: &Solved) -> String {
    let mut out = String::new();
    let runs = [
        ("weak", solved.weak.as_ref().map(|r| &r.trace)),
        ("strong", solved.strong.as_ref().map(|r| &r.trace)),
    ];
    for (name, trace) in runs {
        let Some(trace) = trace else { continue };
        for row in &trace.rows {
            let mut obj = serde_json::Map::new();
            obj.insert("algorithm".into(), Value::from(name));
            if let Value::Object(fields) = serde_json::to_value(row).expect("rows serialize") {
                obj.extend(fields);
            }
            out += &Value::Object(obj).to_string();
            out.push('\n');
        }
    }
    out
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let inst = read_instance(&args.input)?;
    let mut opts = SolveOptions::new(&inst, args.algorithm.into(), args.seed);
    opts.perturbation.max_retries = args.max_retries;
    if let Some(sigma) = &args.perturb {
        opts.perturbation.magnitude = sigma.clone();
    }
    let solved = match solve(&inst, &opts) {
        Ok(s) => s,
        Err(e @ SolverError::Genericity(_)) => {
            eprintln!("error: {e} (after {} attempts)", args.max_retries + 1);
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let doc = document::output_doc(&solved);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_out(args.output.as_deref(), &text)?;
    if let Some(path) = &args.trace {
        fs::write(path, trace_lines(&solved))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(if doc.certificate.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let inst = read_instance(&args.input)?;
    let text = fs::read_to_string(&args.solution)
        .with_context(|| format!("cannot read {}", args.solution.display()))?;
    let doc: document::OutputDoc = serde_json::from_str(&text)
        .with_context(|| format!("invalid solution {}", args.solution.display()))?;
    // Solutions refer to the perturbed instance they were computed on.
    let inst = match &doc.perturbation {
        Some(p) => {
            let cfg = PerturbationConfig {
                magnitude: parse_rational(&p.sigma).map_err(anyhow::Error::msg)?,
                seed: p.seed,
                max_retries: 0,
            };
            perturb(&inst, &cfg)?
        }
        None => inst,
    };
    let state = document::read_state(&inst, &doc.equilibrium)?;
    let certificate = check_equilibrium(&inst, &inst.budgets_vec(), &state);
    println!("{}", serde_json::to_string_pretty(&certificate)?);
    Ok(if certificate.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    if args.sizes.iter().any(|&n| n < 2) {
        anyhow::bail!("sizes must be at least 2");
    }
    let rows = match &args.csv {
        Some(p) => {
            let file =
                fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
            bench::run(
                &args.sizes,
                args.trials,
                args.seed,
                args.algorithm.into(),
                file,
            )?
        }
        None => bench::run(
            &args.sizes,
            args.trials,
            args.seed,
            args.algorithm.into(),
            io::stdout(),
        )?,
    };
    eprintln!("{rows} rows");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
