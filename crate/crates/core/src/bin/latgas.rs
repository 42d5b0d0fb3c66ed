//! Experiment driver. Subcommands map one-to-one onto the library's run_*
//! entry points; exit codes: 0 pass, 1 certificate failure, 2 usage error,
//! 3 numerical nonconvergence.

use clap::{ArgGroup, Args, Parser, Subcommand};
use latgas::driver::{
    emit, load_patch, parse_count, parse_sizes, run_congestion, run_gap_scan, run_kmc, run_verify,
    Config, ConfigPatch, KmcMode, Report, VerifySuite, VERSION,
};
use latgas::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "latgas", version = VERSION, disable_version_flag = true)]
#[command(about = "Certificates and simulation checks for disordered lattice-gas dynamics")]
struct Cli {
    /// Declarative config file (TOML); flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: $LATGAS_OUT_DIR, else the working directory).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<String>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed; replicate seeds derive from it deterministically.
    #[arg(long, global = true)]
    seed0: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kawasaki spectral gaps over a size list, with the gap*L^2 band check.
    GapScan(GapScanArgs),
    /// Pencil certificates and the variance-constant trend.
    Verify(VerifyArgs),
    /// Event-driven simulation: equilibrium, relaxation, or block statistics.
    Kmc(KmcArgs),
    /// Two-window block statistic scan (shorthand for kmc --two-block).
    TwoBlock(TwoBlockArgs),
    /// Exact route congestion counts with the closed-form check.
    Congestion(CongestionArgs),
}

#[derive(Args)]
struct GapScanArgs {
    /// Dimension.
    #[arg(long = "d")]
    d: Option<usize>,
    /// Size list: a single size, "lo..hi" (inclusive), or "a,b,c".
    #[arg(long = "L", value_name = "SIZES")]
    l: Option<String>,
    /// Particle number (default: half filling per size).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Disorder bound; 0 is the homogeneous field.
    #[arg(long = "K")]
    k_bound: Option<f64>,
    /// Disorder replicates per size when K > 0.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Certificate family: 1 (endpoint exchange vs unweighted chain under
    /// bounded disorder) or 2 (weighted chain at zero field).
    #[arg(long, conflicts_with = "thm")]
    lemma: Option<u8>,
    /// Aggregate family: 1 (variance-constant trend).
    #[arg(long)]
    thm: Option<u8>,
    /// Chain size list for --lemma 2.
    #[arg(long = "k", value_name = "SIZES")]
    chain_sizes: Option<String>,
    /// Size list.
    #[arg(long = "L", value_name = "SIZES")]
    l: Option<String>,
    /// Size list (synonym for --L).
    #[arg(long, value_name = "SIZES", conflicts_with = "l")]
    sizes: Option<String>,
    /// Disorder bound.
    #[arg(long = "K")]
    k_bound: Option<f64>,
    /// Disorder replicates per size when K > 0.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["check_equilibrium", "relax", "two_block"])))]
struct KmcArgs {
    /// Compare strobe-sampled configurations against exact canonical weights.
    #[arg(long)]
    check_equilibrium: bool,
    /// Estimate the relaxation time and compare it with the exact gap.
    #[arg(long)]
    relax: bool,
    /// Two-window block statistic scan.
    #[arg(long)]
    two_block: bool,
    /// Dimension.
    #[arg(long = "d")]
    d: Option<usize>,
    /// Size list.
    #[arg(long = "L", value_name = "SIZES")]
    l: Option<String>,
    /// Particle number (default: half filling per size).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Disorder bound.
    #[arg(long = "K")]
    k_bound: Option<f64>,
    /// Event budget; accepts scientific notation ("1e6").
    #[arg(long)]
    events: Option<String>,
    /// Micro window radius.
    #[arg(long = "Kwin")]
    kwin: Option<usize>,
    /// Macro window fraction; the macro radius is floor(delta * L).
    #[arg(long)]
    delta: Option<f64>,
    /// Equilibrium draws per replicate for Monte Carlo block statistics.
    #[arg(long)]
    samples: Option<usize>,
    /// Observation grid spacing; omit for a per-size default.
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Trajectory length for --relax; omit for a per-size default.
    #[arg(long)]
    horizon: Option<f64>,
    /// Replicates.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct TwoBlockArgs {
    /// Dimension.
    #[arg(long = "d")]
    d: Option<usize>,
    /// Size list.
    #[arg(long = "L", value_name = "SIZES")]
    l: Option<String>,
    /// Particle number (default: half filling per size).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Disorder bound.
    #[arg(long = "K")]
    k_bound: Option<f64>,
    /// Micro window radius.
    #[arg(long = "Kwin")]
    kwin: Option<usize>,
    /// Macro window fraction.
    #[arg(long)]
    delta: Option<f64>,
    /// Equilibrium draws per replicate when the sector is too large to enumerate.
    #[arg(long)]
    samples: Option<usize>,
    /// Replicates per size.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct CongestionArgs {
    /// Dimension.
    #[arg(long = "d")]
    d: Option<usize>,
    /// Size list.
    #[arg(long = "L", value_name = "SIZES")]
    l: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => 3,
        Error::InvalidArgument(_)
        | Error::Parse(_)
        | Error::Degenerate(_)
        | Error::Io(_)
        | Error::ParticleMismatch { .. } => 2,
        Error::Reducible { .. } | Error::KernelEscape { .. } => 1,
    }
}

#[derive(Default)]
struct FlagPatch {
    d: Option<usize>,
    sizes: Option<String>,
    n: Option<usize>,
    k: Option<f64>,
    seeds: Option<usize>,
    kwin: Option<usize>,
    delta: Option<f64>,
    events: Option<String>,
    samples: Option<usize>,
    sample_dt: Option<f64>,
    horizon: Option<f64>,
}

fn build_patch(cli: &Cli, flags: FlagPatch) -> Result<ConfigPatch> {
    Ok(ConfigPatch {
        d: flags.d,
        sizes: match flags.sizes {
            Some(text) => Some(parse_sizes(&text)?),
            None => None,
        },
        n: flags.n,
        k: flags.k,
        seeds: flags.seeds,
        kwin: flags.kwin,
        delta: flags.delta,
        events: match flags.events {
            Some(text) => Some(parse_count(&text)? as f64),
            None => None,
        },
        samples: flags.samples,
        sample_dt: flags.sample_dt,
        horizon: flags.horizon,
        seed0: cli.seed0,
        out_dir: cli.out_dir.clone(),
        format: cli.format.clone(),
        workers: cli.workers,
        ..ConfigPatch::default()
    })
}

fn resolve(cli: &Cli, flags: FlagPatch) -> Result<Config> {
    let file = load_patch(cli.config.as_deref())?;
    let cmdline = build_patch(cli, flags)?;
    Config::resolve(&[file, cmdline])
}

fn run(cli: Cli) -> Result<bool> {
    let reports: Vec<(Report, Config)> = match &cli.command {
        Command::GapScan(args) => {
            let cfg = resolve(
                &cli,
                FlagPatch {
                    d: args.d,
                    sizes: args.l.clone(),
                    n: args.n,
                    k: args.k_bound,
                    seeds: args.seeds,
                    ..FlagPatch::default()
                },
            )?;
            vec![(run_gap_scan(&cfg)?, cfg)]
        }
        Command::Verify(args) => {
            let sizes = args
                .chain_sizes
                .clone()
                .or_else(|| args.l.clone())
                .or_else(|| args.sizes.clone());
            let cfg = resolve(
                &cli,
                FlagPatch {
                    sizes,
                    k: args.k_bound,
                    seeds: args.seeds,
                    ..FlagPatch::default()
                },
            )?;
            let suites: Vec<VerifySuite> = match (args.lemma, args.thm) {
                (Some(2), None) => vec![VerifySuite::ChainWeights],
                (Some(1), None) => vec![VerifySuite::PathBound],
                (None, Some(1)) => vec![VerifySuite::VarianceTrend],
                (None, None) => vec![
                    VerifySuite::ChainWeights,
                    VerifySuite::PathBound,
                    VerifySuite::VarianceTrend,
                ],
                (Some(other), None) => {
                    return Err(Error::InvalidArgument(format!(
                        "--lemma must be 1 or 2, got {other}"
                    )))
                }
                (None, Some(other)) => {
                    return Err(Error::InvalidArgument(format!(
                        "--thm must be 1, got {other}"
                    )))
                }
                (Some(_), Some(_)) => unreachable!("clap rejects --lemma with --thm"),
            };
            suites
                .into_iter()
                .map(|s| Ok((run_verify(&cfg, s)?, cfg.clone())))
                .collect::<Result<Vec<_>>>()?
        }
        Command::Kmc(args) => {
            let cfg = resolve(
                &cli,
                FlagPatch {
                    d: args.d,
                    sizes: args.l.clone(),
                    n: args.n,
                    k: args.k_bound,
                    seeds: args.seeds,
                    kwin: args.kwin,
                    delta: args.delta,
                    events: args.events.clone(),
                    samples: args.samples,
                    sample_dt: args.sample_dt,
                    horizon: args.horizon,
                },
            )?;
            let mode = if args.check_equilibrium {
                KmcMode::Equilibrium
            } else if args.relax {
                KmcMode::Relax
            } else {
                KmcMode::TwoBlock
            };
            vec![(run_kmc(&cfg, mode)?, cfg)]
        }
        Command::TwoBlock(args) => {
            let cfg = resolve(
                &cli,
                FlagPatch {
                    d: args.d,
                    sizes: args.l.clone(),
                    n: args.n,
                    k: args.k_bound,
                    seeds: args.seeds,
                    kwin: args.kwin,
                    delta: args.delta,
                    samples: args.samples,
                    ..FlagPatch::default()
                },
            )?;
            vec![(run_kmc(&cfg, KmcMode::TwoBlock)?, cfg)]
        }
        Command::Congestion(args) => {
            let cfg = resolve(
                &cli,
                FlagPatch {
                    d: args.d,
                    sizes: args.l.clone(),
                    ..FlagPatch::default()
                },
            )?;
            vec![(run_congestion(&cfg)?, cfg)]
        }
    };
    let mut all_pass = true;
    for (report, cfg) in &reports {
        println!("[{}]", report.name);
        if report.rows.len() <= 30 {
            println!("  d,L,N,K,seed,quantity,value,method,residual");
            for row in &report.rows {
                println!("  {}", row.csv_line());
            }
        }
        for note in &report.notes {
            println!("  {note}");
        }
        let path = emit(report, cfg)?;
        println!("  result: {}", if report.pass { "pass" } else { "FAIL" });
        println!("  wrote {}", path.display());
        all_pass &= report.pass;
    }
    Ok(all_pass)
}
