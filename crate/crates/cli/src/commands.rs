//! Subcommand implementations.

use crate::common::{
    build_experiment, parse_grid, parse_mode, write_file, ResourceSpec,
};
use anyhow::{bail, Context, Result};
use rsd_core::config::{ModeDocument, ResultFile};
use rsd_core::noise::{copies_needed, overhead_csv, overhead_curve, FiberScenario};
use rsd_core::protocol::{check_necessity, exact_weak_values};
use rsd_core::stats::{classical_bits_overlap, closed_form_bits};
use rsd_core::wire::{run_alice, run_bob, run_source, SessionConfig, WireError};
use std::path::{Path, PathBuf};

pub struct RoundtripOpts {
    pub d: usize,
    pub resource: ResourceSpec,
    pub g: f64,
    pub mode: String,
    pub forward: String,
    pub n_copies: u64,
    pub seed: u64,
    pub psi_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub ledger_out: Option<PathBuf>,
    pub from: Option<PathBuf>,
    pub skip_set2: bool,
}

pub fn roundtrip(opts: RoundtripOpts) -> Result<()> {
    let experiment = match &opts.from {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let file: ResultFile = serde_json::from_str(&text).context("malformed result file")?;
            file.config
        }
        None => build_experiment(
            opts.d,
            opts.resource,
            opts.g,
            opts.n_copies,
            opts.seed,
            opts.psi_seed,
            parse_mode(&opts.mode, &opts.forward)?,
            opts.skip_set2,
        )?,
    };

    let output = experiment.run()?;
    let doc = ResultFile { config: experiment, result: output.result.to_document() };
    if let Some(path) = &opts.out {
        write_file(path, &doc.to_json_pretty())?;
    }
    if let Some(ledger) = &output.ledger {
        if let Some(path) = &opts.ledger_out {
            write_file(path, &ledger.to_csv())?;
        }
    }
    let fid = doc.result.fidelity.unwrap_or(f64::NAN);
    println!(
        "fidelity = {:.12}; overall factor magnitude = {:.6}{}",
        fid,
        doc.result.overall_factor_magnitude,
        output
            .ledger
            .map(|l| format!("; classical bits = {}", l.total_bits()))
            .unwrap_or_default()
    );
    Ok(())
}

pub struct GscanOpts {
    pub d: usize,
    pub resource: ResourceSpec,
    pub g_list: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub skip_set2: bool,
}

/// Infidelity and weak-value error against g, with exact-unitary forward
/// dynamics and first-order inversion.
pub fn gscan(opts: GscanOpts) -> Result<()> {
    let gs: Vec<f64> = opts
        .g_list
        .split(',')
        .map(|s| s.trim().parse().context("bad g value"))
        .collect::<Result<_>>()?;
    if gs.is_empty() {
        bail!("need at least one g");
    }
    use rayon::prelude::*;
    let rows: Vec<(f64, f64, f64)> = gs
        .par_iter()
        .map(|&g| -> Result<(f64, f64, f64)> {
            let experiment = build_experiment(
                opts.d,
                opts.resource,
                g,
                1,
                opts.seed,
                None,
                ModeDocument::Analytic { forward: rsd_core::protocol::ForwardModel::ExactUnitary },
                opts.skip_set2,
            )?;
            let resolved = experiment.resolve()?;
            let exact = exact_weak_values(&resolved.psi_true, &resolved.cfg)?;
            let out = experiment.run()?;
            let max_err = out
                .result
                .weak_values
                .iter()
                .map(|r| (r.value - exact[r.k]).norm())
                .fold(0.0f64, f64::max);
            let infid = 1.0 - out.result.fidelity_vs_truth.unwrap_or(f64::NAN);
            Ok((g, max_err, infid))
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("g,max_weak_value_error,infidelity\n");
    for (g, err, infid) in &rows {
        csv.push_str(&format!("{g},{err},{infid}\n"));
    }
    match &opts.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    let last = rows.last().unwrap();
    println!("gscan: {} points; at g = {} infidelity = {:.3e}", rows.len(), last.0, last.2);
    Ok(())
}

pub struct NoiseOpts {
    pub z: f64,
    pub dphi: f64,
    pub n_copies: Option<u64>,
    pub z_grid: Option<String>,
    pub dphi_grid: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn noise(opts: NoiseOpts) -> Result<()> {
    let scenario = FiberScenario::new(opts.z, opts.dphi, opts.n_copies.unwrap_or(1))?;
    let ratio = copies_needed(&FiberScenario { n_base: 1, ..scenario })?;
    println!("N'/N = {ratio:.6}");
    if let Some(n) = opts.n_copies {
        println!("N' = {:.2}", ratio * n as f64);
    }

    if opts.z_grid.is_some() || opts.dphi_grid.is_some() {
        let zs = parse_grid(opts.z_grid.as_deref().unwrap_or("0.1:1.0:10"))?;
        let dphis = parse_grid(opts.dphi_grid.as_deref().unwrap_or("0.0:2.0:9"))?;
        let rows = overhead_curve(&zs, &dphis)?;
        let csv = overhead_csv(&rows);
        match &opts.out {
            Some(path) => {
                write_file(path, &csv)?;
                println!("wrote {} grid points to {}", rows.len(), path.display());
            }
            None => print!("{csv}"),
        }
    }
    Ok(())
}

pub struct BitsOpts {
    pub d: usize,
    pub n_copies: u64,
    pub resource: ResourceSpec,
    pub g: f64,
    pub seed: u64,
    pub psi_seed: Option<u64>,
    pub skip_set2: bool,
}

pub fn bits(opts: BitsOpts) -> Result<()> {
    let experiment = build_experiment(
        opts.d,
        opts.resource,
        opts.g,
        opts.n_copies,
        opts.seed,
        opts.psi_seed,
        ModeDocument::Sampled,
        opts.skip_set2,
    )?;
    let resolved = experiment.resolve()?;
    let c_eq6 = classical_bits_overlap(&resolved.cfg, &resolved.resource, &resolved.psi_true)?;
    let c_closed = closed_form_bits(&resolved.cfg, &resolved.resource, &resolved.psi_true);
    println!("C (overlap expression) = {c_eq6:.6}");
    println!("C (closed form, Bell-diagonal family) = {c_closed:.6}");
    println!("relative difference = {:.3e}", ((c_eq6 - c_closed) / c_closed).abs());
    Ok(())
}

pub struct ChecksOpts {
    pub d: usize,
    pub resource: ResourceSpec,
    pub g: f64,
}

pub fn checks(opts: ChecksOpts) -> Result<()> {
    let rho = opts.resource.build()?;
    let necessity = check_necessity(&rho)?;
    if necessity.is_product {
        println!(
            "necessity: product resource (deviation {:.3e}) -> inert: protocol cannot transfer information",
            necessity.product_deviation
        );
        println!(
            "  probe run: Bob's set-1/set-2 states match rho_B to {:.3e} / {:.3e}",
            necessity.set1_deviation.unwrap_or(f64::NAN),
            necessity.set2_deviation.unwrap_or(f64::NAN)
        );
    } else {
        println!(
            "necessity: non-product resource (deviation {:.3e}) -> usable",
            necessity.product_deviation
        );
    }

    let cfg = rsd_core::protocol::ProtocolConfig::example_instance(opts.d, opts.g, 1)?;
    let suff = cfg.sufficiency(&rho)?;
    println!(
        "sufficiency: |tr(B tr_A((A x 1) rho))| = {:.3e} [{}]",
        suff.q1_magnitude,
        if suff.q1_ok { "ok" } else { "FAIL" }
    );
    println!(
        "sufficiency: |tr((pi_l x B)[(A x 1), rho])| = {:.3e} [{}]",
        suff.q2_magnitude,
        if suff.q2_ok { "ok" } else { "FAIL" }
    );
    let usable = !necessity.inert && suff.sufficient();
    println!("verdict: {}", if usable { "protocol can run on this instance" } else { "protocol cannot run on this instance" });
    Ok(())
}

pub struct ServeOpts {
    pub role: String,
    pub session: PathBuf,
}

pub fn serve(opts: ServeOpts) -> Result<i32> {
    if opts.role == "all" {
        return serve_all(&opts.session);
    }
    let session = SessionConfig::load(&opts.session).map_err(wire_exit)?;
    let outcome = match opts.role.as_str() {
        "source" => run_source(&session),
        "alice" => run_alice(&session),
        "bob" => run_bob(&session).map(|result| {
            println!(
                "bob: reconstructed state with fidelity {:.12}",
                result.fidelity_vs_truth.unwrap_or(f64::NAN)
            );
        }),
        other => bail!("unknown role `{other}`; use source, alice, bob or all"),
    };
    match outcome {
        Ok(()) => Ok(0),
        Err(e) => {
            eprintln!("{}: {e}", opts.role);
            Ok(e.exit_code())
        }
    }
}

fn wire_exit(e: WireError) -> anyhow::Error {
    anyhow::anyhow!("{e}")
}

/// Spawns source, bob and alice as child processes of this binary and
/// waits for all three.
fn serve_all(session_path: &Path) -> Result<i32> {
    // Fail fast on an unreadable session before spawning anything.
    SessionConfig::load(session_path).map_err(wire_exit)?;
    let exe = std::env::current_exe().context("locating own binary")?;
    let spawn = |role: &str| {
        std::process::Command::new(&exe)
            .arg("serve")
            .arg("--role")
            .arg(role)
            .arg("--session")
            .arg(session_path)
            .spawn()
            .with_context(|| format!("spawning {role}"))
    };
    let mut source = spawn("source")?;
    let mut bob = spawn("bob")?;
    let mut alice = spawn("alice")?;
    let codes = [
        ("source", source.wait()?.code().unwrap_or(3)),
        ("bob", bob.wait()?.code().unwrap_or(3)),
        ("alice", alice.wait()?.code().unwrap_or(3)),
    ];
    let worst = codes.iter().map(|(_, c)| *c).max().unwrap_or(0);
    if worst != 0 {
        for (role, code) in codes {
            if code != 0 {
                eprintln!("{role} exited with {code}");
            }
        }
    }
    Ok(worst)
}
