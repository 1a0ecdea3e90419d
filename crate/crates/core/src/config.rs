//! Experiment configuration documents.
//!
//! Everything a run depends on lives in one JSON-serializable struct so that
//! result files can embed the resolved configuration, re-running from a
//! result reproduces it byte for byte, and the three distributed roles can
//! agree on a hash of the physics before exchanging a single protocol bit.
//!
//! The system basis is the computational one; `b0` may override the default
//! uniform post-selection vector as long as it stays mutually unbiased.

use crate::protocol::{
    ForwardModel, ProtocolConfig, ProtocolError, ReconstructionDocument, Result, RunMode,
    RunOutput,
};
use crate::qmat::c64;
use crate::states::{mub_b0, PureState, QState, StateDocument, VectorDocument};
use crate::stats::{BitAccounting, SamplingPlan};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How the run produces Bob's expectation values, in document form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeDocument {
    Analytic { forward: ForwardModel },
    Sampled,
}

/// Complete, self-contained description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub g: f64,
    pub n_copies: u64,
    pub seed: u64,
    pub mode: ModeDocument,
    pub psi_true: VectorDocument,
    pub resource: StateDocument,
    pub a_obs: StateDocument,
    pub b_obs: StateDocument,
    pub pi_l: StateDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<VectorDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector_order: Option<Vec<usize>>,
    #[serde(default)]
    pub skip_set2: bool,
    #[serde(default)]
    pub accounting: BitAccounting,
}

/// A fully validated experiment, ready to run.
pub struct ResolvedExperiment {
    pub cfg: ProtocolConfig,
    pub resource: QState,
    pub psi_true: PureState,
    pub plan: SamplingPlan,
    pub mode: RunMode,
}

impl ExperimentConfig {
    pub fn from_parts(
        cfg: &ProtocolConfig,
        resource: &QState,
        psi_true: &PureState,
        seed: u64,
        mode: ModeDocument,
        accounting: BitAccounting,
    ) -> Self {
        Self {
            d: cfg.d,
            g: cfg.g,
            n_copies: cfg.n_copies,
            seed,
            mode,
            psi_true: VectorDocument::from_amplitudes(psi_true.amplitudes()),
            resource: resource.to_document(),
            a_obs: StateDocument::from_matrix(&cfg.a_obs, None),
            b_obs: StateDocument::from_matrix(&cfg.b_obs, None),
            pi_l: StateDocument::from_matrix(&cfg.pi_l, None),
            b0: Some(VectorDocument::from_amplitudes(cfg.b0.amplitudes())),
            projector_order: Some(cfg.projector_order.clone()),
            skip_set2: cfg.skip_set2,
            accounting,
        }
    }

    /// Validates the document into runnable pieces.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let d = self.d;
        let basis = (0..d)
            .map(|k| {
                let mut amps = vec![c64(0.0, 0.0); d];
                amps[k] = c64(1.0, 0.0);
                PureState::new(amps, "computational").map_err(ProtocolError::from)
            })
            .collect::<Result<Vec<_>>>()?;
        let b0 = match &self.b0 {
            Some(doc) => PureState::new(doc.to_amplitudes()?, "computational")?,
            None => mub_b0(d)?,
        };
        let order = self.projector_order.clone().unwrap_or_else(|| (0..d).collect());
        let mut cfg = ProtocolConfig::new(
            basis,
            b0,
            self.a_obs.to_matrix()?,
            self.b_obs.to_matrix()?,
            self.pi_l.to_matrix()?,
            self.g,
            self.n_copies,
            order,
        )?;
        cfg.skip_set2 = self.skip_set2;

        let resource = QState::from_document(&self.resource)?;
        let psi_true = PureState::new(self.psi_true.to_amplitudes()?, "computational")?;
        let plan = SamplingPlan::new(self.n_copies, self.seed);
        let mode = match self.mode {
            ModeDocument::Analytic { forward } => RunMode::Analytic { forward },
            ModeDocument::Sampled => RunMode::Sampled { plan, accounting: self.accounting },
        };
        Ok(ResolvedExperiment { cfg, resource, psi_true, plan, mode })
    }

    /// Resolves and runs the experiment in-process.
    pub fn run(&self) -> Result<RunOutput> {
        let r = self.resolve()?;
        crate::protocol::run_protocol(&r.psi_true, &r.resource, &r.cfg, r.mode)
    }

    /// SHA-256 of the canonical JSON serialization; the distributed roles
    /// compare this in their handshake.
    pub fn config_hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        h.finalize().into()
    }
}

/// Result file layout: the resolved configuration plus the reconstruction,
/// so any result can be re-run from its own header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub config: ExperimentConfig,
    pub result: ReconstructionDocument,
}

impl ResultFile {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}
