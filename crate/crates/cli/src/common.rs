//! Shared helpers: resource parsing, experiment assembly, file output.

use anyhow::{anyhow, bail, Context, Result};
use rsd_core::config::{ExperimentConfig, ModeDocument};
use rsd_core::protocol::{ForwardModel, ProtocolConfig};
use rsd_core::qmat::{c64, CMatrix, SubsystemDims};
use rsd_core::states::{bell_diagonal, random_pure, werner, QState};
use rsd_core::stats::BitAccounting;
use std::path::Path;
use std::str::FromStr;

/// Named resource families accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResourceSpec {
    Werner(f64),
    Bell(f64, f64, f64),
    Singlet,
    /// Maximally mixed product state; the protocol is inert on it.
    Product,
}

impl FromStr for ResourceSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singlet" => return Ok(ResourceSpec::Singlet),
            "product" => return Ok(ResourceSpec::Product),
            _ => {}
        }
        if let Some(z) = s.strip_prefix("werner:") {
            return Ok(ResourceSpec::Werner(z.parse().context("werner:z needs a number")?));
        }
        if let Some(cs) = s.strip_prefix("bell:") {
            let parts: Vec<&str> = cs.split(',').collect();
            if parts.len() != 3 {
                bail!("bell:c1,c2,c3 needs three numbers");
            }
            return Ok(ResourceSpec::Bell(
                parts[0].parse().context("bad c1")?,
                parts[1].parse().context("bad c2")?,
                parts[2].parse().context("bad c3")?,
            ));
        }
        bail!("unknown resource `{s}`; use werner:z, bell:c1,c2,c3, singlet or product")
    }
}

impl ResourceSpec {
    pub fn build(&self) -> Result<QState> {
        let state = match *self {
            ResourceSpec::Werner(z) => werner(z)?,
            ResourceSpec::Bell(c1, c2, c3) => bell_diagonal(c1, c2, c3)?,
            ResourceSpec::Singlet => werner(1.0)?,
            ResourceSpec::Product => {
                let half = CMatrix::identity(2).scale(c64(0.5, 0.0));
                QState::new(half.tensor(&half), SubsystemDims::new(vec![2, 2])?)?
            }
        };
        Ok(state)
    }
}

/// Parses a sweep axis `start:stop:steps`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:stop:steps, got `{s}`");
    }
    let start: f64 = parts[0].parse().context("bad grid start")?;
    let stop: f64 = parts[1].parse().context("bad grid stop")?;
    let steps: usize = parts[2].parse().context("bad grid steps")?;
    if steps < 1 {
        bail!("grid needs at least one step");
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    let h = (stop - start) / (steps - 1) as f64;
    Ok((0..steps).map(|i| start + h * i as f64).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn build_experiment(
    d: usize,
    resource: ResourceSpec,
    g: f64,
    n_copies: u64,
    seed: u64,
    psi_seed: Option<u64>,
    mode: ModeDocument,
    skip_set2: bool,
) -> Result<ExperimentConfig> {
    let mut cfg = ProtocolConfig::example_instance(d, g, n_copies)?;
    cfg.skip_set2 = skip_set2;
    let rho = resource.build()?;
    // A separate default stream for the state keeps it independent of the
    // per-round sampling sub-streams.
    let psi = random_pure(d, psi_seed.unwrap_or(seed ^ 0x9e37_79b9_7f4a_7c15))?;
    Ok(ExperimentConfig::from_parts(
        &cfg,
        &rho,
        &psi,
        seed,
        mode,
        BitAccounting::SuccessesOnly,
    ))
}

pub fn parse_mode(mode: &str, forward: &str) -> Result<ModeDocument> {
    let forward = match forward {
        "first-order" => ForwardModel::FirstOrder,
        "exact" => ForwardModel::ExactUnitary,
        other => bail!("unknown forward model `{other}`; use first-order or exact"),
    };
    match mode {
        "analytic" => Ok(ModeDocument::Analytic { forward }),
        "sampled" => Ok(ModeDocument::Sampled),
        other => bail!("unknown mode `{other}`; use analytic or sampled"),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Caps the rayon worker count from RSD_THREADS, when set.
pub fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("RSD_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("RSD_THREADS must be an integer"))?;
        // A second initialization (e.g. in tests) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}
