use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use catmapq::exp_sums::AverageMode;
use catmapq::harness::{self, OutputFormat, RunConfig};
use catmapq::parallel;
use catmapq::Result;

#[derive(Parser)]
#[command(name = "catmapq", version, about = "Hecke trace sums for quantized cat maps over F_p")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bound scan and every invariant suite
    Verify(ScanArgs),
    /// Same as verify
    Scan(ScanArgs),
    /// Hecke eigenspace dimensions and <v|pi(xi)v> at one prime
    Spectrum(SingleArgs),
    /// F(B, xi) over the Hecke torus by the dense and fast paths
    TraceTable(SingleArgs),
}

#[derive(Args)]
struct Common {
    /// Entries a,b,c,d of A in SL_2(Z)
    #[arg(long, default_value = "2,1,1,1", allow_hyphen_values = true)]
    matrix: String,
    /// Frequency l,m (repeatable) or `all`
    #[arg(long = "xi", default_value = "1,0", allow_hyphen_values = true)]
    xi: Vec<String>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Range `7..31`, list `7,11,13`, or a mix
    #[arg(long, default_value = "7..31")]
    primes: String,
    #[command(flatten)]
    common: Common,
    /// `all` or comma-separated character indices
    #[arg(long, default_value = "all")]
    chi: String,
    /// Averaging reported for the rate check: sum or mean
    #[arg(long, default_value = "mean")]
    mode: String,
    /// Evaluate every trace from dense matrices
    #[arg(long)]
    no_fast_path: bool,
    /// Seed for the sampled invariant suites
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the run report as JSON
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SingleArgs {
    #[arg(long)]
    prime: u64,
    #[command(flatten)]
    common: Common,
}

fn base(primes: Vec<u64>, c: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::new(primes, harness::parse_matrix(&c.matrix)?);
    config.frequencies = harness::parse_frequencies(&c.xi)?;
    config.format = OutputFormat::parse(&c.format)?;
    config.out = c.out.clone();
    Ok(config)
}

fn scan_config(a: &ScanArgs) -> Result<RunConfig> {
    let mut config = base(harness::parse_primes(&a.primes)?, &a.common)?;
    config.chars = harness::parse_chars(&a.chi)?;
    config.mode = AverageMode::parse(&a.mode)
        .ok_or_else(|| catmapq::Error::Config(format!("unknown mode {:?} (expected sum or mean)", a.mode)))?;
    config.fast = !a.no_fast_path;
    config.seed = a.seed;
    config.report = a.report.clone();
    Ok(config)
}

fn run(cli: Cli) -> i32 {
    let built = match &cli.command {
        Command::Verify(a) | Command::Scan(a) => scan_config(a),
        Command::Spectrum(a) | Command::TraceTable(a) => base(vec![a.prime], &a.common),
    };
    let config = match built {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return harness::exit_code(&e);
        }
    };
    match cli.command {
        Command::Verify(_) | Command::Scan(_) => harness::cmd_verify(&config),
        Command::Spectrum(_) => harness::cmd_spectrum(&config),
        Command::TraceTable(_) => harness::cmd_trace_table(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    parallel::init_from_env();
    ExitCode::from(run(cli) as u8)
}
