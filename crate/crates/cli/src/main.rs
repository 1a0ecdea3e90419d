//! `rsd`: config-driven experiment runner for the remote-state-determination
//! toolkit. Every subcommand is deterministic given its seed; structured
//! results go to JSON, sweeps to CSV.

mod commands;
mod common;

use clap::{Args, Parser, Subcommand};
use common::ResourceSpec;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rsd", version, about = "Remote state determination via weak values")]
struct Cli {
    /// Skip the second set of runs and take every Re(Pi_k)_w as zero.
    /// Sound only with prior knowledge that the state's weak values carry
    /// no real parts worth measuring; halves the classical communication.
    #[arg(long = "skip-set2-if-imaginary", global = true)]
    skip_set2_if_imaginary: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transfer a random pure state and report the reconstruction fidelity.
    Roundtrip(RoundtripArgs),
    /// Sweep the coupling strength under exact forward dynamics.
    Gscan(GscanArgs),
    /// Fibre-noise overhead: copies needed to keep the error budget.
    Noise(NoiseArgs),
    /// Classical-bit count: overlap expression vs closed form.
    Bits(BitsArgs),
    /// Necessity and sufficiency report for a resource.
    Checks(ChecksArgs),
    /// Run one role (or all three) of a distributed session.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// werner:z | bell:c1,c2,c3 | singlet | product
    #[arg(long, default_value = "werner:0.8")]
    resource: ResourceSpec,
    #[arg(long, default_value_t = 0.05)]
    g: f64,
    /// analytic | sampled
    #[arg(long, default_value = "analytic")]
    mode: String,
    /// first-order | exact (analytic mode only)
    #[arg(long, default_value = "first-order")]
    forward: String,
    /// Copies per set per projector (sampled mode).
    #[arg(long = "N", default_value_t = 100_000)]
    n_copies: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Seed for the random true state; defaults to a stream derived from --seed.
    #[arg(long)]
    psi_seed: Option<u64>,
    /// Result file (JSON, embeds the resolved config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bit ledger (CSV, sampled mode only).
    #[arg(long)]
    ledger_out: Option<PathBuf>,
    /// Re-run the experiment embedded in an existing result file.
    #[arg(long, conflicts_with_all = ["d", "g", "mode", "forward", "n_copies", "seed", "psi_seed"])]
    from: Option<PathBuf>,
}

#[derive(Args)]
struct GscanArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value = "werner:0.8")]
    resource: ResourceSpec,
    /// Comma-separated coupling strengths.
    #[arg(long = "g-list", default_value = "0.1,0.05,0.025,0.0125")]
    g_list: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, default_value_t = 0.4)]
    z: f64,
    #[arg(long, default_value_t = 200.0)]
    dphi: f64,
    /// Baseline copy count; prints the inflated N' when given.
    #[arg(long = "N")]
    n_copies: Option<u64>,
    /// Sweep grid start:stop:steps for z (enables CSV output).
    #[arg(long)]
    grid: Option<String>,
    /// Sweep grid start:stop:steps for dphi.
    #[arg(long)]
    dphi_grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BitsArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long = "N", default_value_t = 1000)]
    n_copies: u64,
    #[arg(long, default_value = "bell:-0.8,-0.8,-0.8")]
    resource: ResourceSpec,
    #[arg(long, default_value_t = 0.05)]
    g: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    psi_seed: Option<u64>,
}

#[derive(Args)]
struct ChecksArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    resource: ResourceSpec,
    #[arg(long, default_value_t = 0.05)]
    g: f64,
}

#[derive(Args)]
struct ServeArgs {
    /// source | alice | bob | all
    #[arg(long)]
    role: String,
    /// Session file (JSON).
    #[arg(long)]
    session: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = common::init_thread_pool() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
    let skip = cli.skip_set2_if_imaginary;
    let outcome: anyhow::Result<i32> = match cli.command {
        Command::Roundtrip(a) => commands::roundtrip(commands::RoundtripOpts {
            d: a.d,
            resource: a.resource,
            g: a.g,
            mode: a.mode,
            forward: a.forward,
            n_copies: a.n_copies,
            seed: a.seed,
            psi_seed: a.psi_seed,
            out: a.out,
            ledger_out: a.ledger_out,
            from: a.from,
            skip_set2: skip,
        })
        .map(|()| 0),
        Command::Gscan(a) => commands::gscan(commands::GscanOpts {
            d: a.d,
            resource: a.resource,
            g_list: a.g_list,
            seed: a.seed,
            out: a.out,
            skip_set2: skip,
        })
        .map(|()| 0),
        Command::Noise(a) => commands::noise(commands::NoiseOpts {
            z: a.z,
            dphi: a.dphi,
            n_copies: a.n_copies,
            z_grid: a.grid,
            dphi_grid: a.dphi_grid,
            out: a.out,
        })
        .map(|()| 0),
        Command::Bits(a) => commands::bits(commands::BitsOpts {
            d: a.d,
            n_copies: a.n_copies,
            resource: a.resource,
            g: a.g,
            seed: a.seed,
            psi_seed: a.psi_seed,
            skip_set2: skip,
        })
        .map(|()| 0),
        Command::Checks(a) => {
            commands::checks(commands::ChecksOpts { d: a.d, resource: a.resource, g: a.g })
                .map(|()| 0)
        }
        Command::Serve(a) => {
            commands::serve(commands::ServeOpts { role: a.role, session: a.session })
        }
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            // Physics-level refusals are protocol errors; everything else
            // is a configuration problem.
            let code = if e.downcast_ref::<rsd_core::protocol::ProtocolError>().is_some() {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}
