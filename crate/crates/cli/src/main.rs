use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use byzcoin_lab::analyze::{self, DEFAULT_C, DEFAULT_N, DEFAULT_Q, DEFAULT_Z_MAX};
use byzcoin_lab::run::{run_scenario, sweep, sweep_table, write_atomic, Axis};
use byzcoin_lab::table::Table;
use byzcoin_lab::{CliError, LOG_ENV};
use byzcoin_simnet::ScenarioConfig;

/// Exit status when a run completes but its safety audit fails.
const AUDIT_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "byzcoin-lab", version, about = "ByzCoin consensus simulator and security calculators")]
struct Cli {
    /// Overrides the seed in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where metrics, traces and sweep tables are written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file; exits nonzero if the safety audit fails.
    Run { config: PathBuf },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Positive, ascending, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
    },
    /// Closed-form analysis tables.
    Analyze {
        #[command(subcommand)]
        which: Analysis,
        #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Probability that an attacker reverts a payment after z confirmations.
    Doublespend(DoubleSpendArgs),
    /// Probability that a share window holds at most a third Byzantine shares.
    Membership(MembershipArgs),
    /// Revenue of block withholding under smallest-hash fork resolution.
    Selfish(SelfishArgs),
}

#[derive(Args)]
struct DoubleSpendArgs {
    /// Attacker hash-power fractions.
    #[arg(short, value_delimiter = ',')]
    q: Vec<f64>,
    /// Confirmation depths; defaults to 0 through 12.
    #[arg(short, value_delimiter = ',')]
    z: Vec<u64>,
}

#[derive(Args)]
struct MembershipArgs {
    /// Print the published twelve-cell grid next to computed values.
    #[arg(long)]
    published_table: bool,
    #[arg(short, value_delimiter = ',', default_values_t = [12u64, 100, 144, 288, 1008, 2016])]
    w: Vec<u64>,
    #[arg(short, value_delimiter = ',', default_values_t = [0.25, 0.30])]
    p: Vec<f64>,
}

#[derive(Args)]
struct SelfishArgs {
    /// Attacker hash-power fractions.
    #[arg(short, value_delimiter = ',')]
    c: Vec<f64>,
    /// Extra zero bits required before withholding.
    #[arg(short, value_delimiter = ',')]
    n: Vec<u32>,
    /// Also run the Monte Carlo under both fork-resolution rules.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 10_000)]
    forks: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print(table: &Table, format: Format) {
    match format {
        Format::Text => print!("{}", table.to_text()),
        Format::Csv => print!("{}", table.to_csv()),
    }
}

fn or<T: Clone>(given: Vec<T>, default: &[T]) -> Vec<T> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given
    }
}

fn main_inner(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let out = run_scenario(&cfg, &cli.out_dir)?;
            let r = &out.report;
            println!("scenario        {}", r.name);
            println!("committed       {}", r.committed_blocks);
            println!("mean latency    {:.3} s", r.mean_latency_s);
            println!("throughput      {:.1} tx/s", r.throughput_tps);
            println!("view changes    {}", r.view_changes);
            println!("truncated       {}", r.truncated);
            println!("audit           {}", if r.audit.safe { "safe" } else { "FAILED" });
            println!("metrics         {}", out.metrics_path.display());
            println!("trace           {}", out.trace_path.display());
            Ok(if r.audit.safe {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(AUDIT_FAILED)
            })
        }
        Command::Sweep { config, axis, values } => {
            let cfg = load(&config, cli.seed)?;
            let points = sweep(&cfg, axis, &values, &cli.out_dir)?;
            let table = sweep_table(axis, &points);
            let path = cli.out_dir.join(format!("{}-sweep-{}.csv", cfg.name, axis.name()));
            write_atomic(&path, table.to_csv().as_bytes())?;
            print!("{}", table.to_text());
            println!("written to {}", path.display());
            let unsafe_point = points.iter().any(|p| p.result.as_ref().is_ok_and(|r| !r.audit.safe));
            Ok(if unsafe_point {
                ExitCode::from(AUDIT_FAILED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Analyze { which, format } => {
            let table = match which {
                Analysis::Doublespend(a) => {
                    let zs: Vec<u64> = (0..=DEFAULT_Z_MAX).collect();
                    analyze::doublespend(&or(a.q, &DEFAULT_Q), &or(a.z, &zs))?
                }
                Analysis::Membership(a) if a.published_table => analyze::membership_published_table(),
                Analysis::Membership(a) => analyze::membership(&a.w, &a.p)?,
                Analysis::Selfish(a) => {
                    let (cs, ns) = (or(a.c, &DEFAULT_C), or(a.n, &DEFAULT_N));
                    if a.simulate {
                        analyze::selfish_simulated(&cs, &ns, a.forks, cli.seed.unwrap_or(1))?
                    } else {
                        analyze::selfish(&cs, &ns)?
                    }
                }
            };
            print(&table, format);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
