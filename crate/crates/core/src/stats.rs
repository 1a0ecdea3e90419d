//! Monte Carlo measurement statistics, classical-bit accounting and error
//! propagation.
//!
//! Sampling follows the physical round: each shared copy draws Alice's
//! post-selection outcome(s) with Born probabilities taken from the
//! first-order evolved state, and only successful copies trigger one
//! measurement of B at Bob's end. Every (seed, round, set) triple owns an
//! independent counter-based RNG sub-stream, so rounds can be sampled in
//! parallel, or by three separate processes, and still reproduce bit for
//! bit.
//!
//! Two bit counts coexist. `BitLedger` counts actual channel uses under a
//! configurable accounting rule, while [`classical_bits_overlap`] evaluates
//! the overlap-based expression the analysis works with; the two agree on
//! the Bell-diagonal instances but are not the same object.

use crate::protocol::ProtocolConfig;
use crate::qmat::{c64, eigh, expectation, CMatrix, QmatError};
use crate::states::{PureState, QState};
use crate::weakcore::{
    self, bob_state_set1, bob_state_set2, total_state_first_order, CouplingSpec, WeakCoreError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of a sampled state in [-CLIP_LIMIT, 0) are clipped to zero
/// and the state renormalized; anything lower means g is too large for
/// perturbative sampling and the run refuses.
pub const CLIP_LIMIT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Mat(#[from] QmatError),
    #[error(transparent)]
    WeakCore(#[from] WeakCoreError),
    #[error("cannot sample from a state with eigenvalue {min_eigenvalue:.3e} (below -{CLIP_LIMIT:.0e}); coupling too strong for perturbative sampling")]
    TooNegative { min_eigenvalue: f64 },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("no post-selection successes in {n} copies")]
    NoSuccesses { n: u64 },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Copies per set per projector plus the master seed. Identical plans give
/// bit-identical runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n_copies: u64,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(n_copies: u64, seed: u64) -> Self {
        Self { n_copies, seed }
    }

    /// Independent sub-stream for round (k, set); ChaCha streams keyed by
    /// the master seed make the derivation counter-based rather than
    /// sequential.
    pub fn round_rng(&self, k: usize, set: u8) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream((k as u64) * 2 + (set as u64 - 1));
        rng
    }
}

/// What a channel use is, for the purpose of counting C.
///
/// The closed expression counts post-selection successes times N, but the
/// wire carries one bit per copy either way; the switch decides which of
/// those tallies the ledger reports as `bits_sent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitAccounting {
    #[default]
    SuccessesOnly,
    AllCopies,
}

/// Per-round channel tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundBits {
    pub k: usize,
    pub set: u8,
    pub n_copies: u64,
    pub successes: u64,
    pub bits_sent: u64,
    pub c_eq6_contrib: f64,
}

/// Classical-communication ledger across all rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BitLedger {
    pub accounting: BitAccounting,
    pub rows: Vec<RoundBits>,
}

impl BitLedger {
    pub fn new(accounting: BitAccounting) -> Self {
        Self { accounting, rows: Vec::new() }
    }

    pub fn total_bits(&self) -> u64 {
        self.rows.iter().map(|r| r.bits_sent).sum()
    }

    pub fn total_c_eq6(&self) -> f64 {
        self.rows.iter().map(|r| r.c_eq6_contrib).sum()
    }

    /// CSV with header `k,set,N,successes,bits_sent,C_eq6_contrib`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,set,N,successes,bits_sent,C_eq6_contrib\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k, r.set, r.n_copies, r.successes, r.bits_sent, r.c_eq6_contrib
            ));
        }
        out
    }
}

/// Clips tiny negative eigenvalues of a would-be density matrix and
/// renormalizes. Returns the re-projected matrix and the clipped mass.
pub fn reproject_density(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let eig = eigh(m)?;
    let min = eig.values.first().copied().unwrap_or(0.0);
    if min < -CLIP_LIMIT {
        return Err(StatsError::TooNegative { min_eigenvalue: min });
    }
    if min >= 0.0 {
        return Ok((m.clone(), 0.0));
    }
    let clipped_mass: f64 = eig.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    log::debug!("re-projecting sampled state: clipped mass {clipped_mass:.3e}");
    let total: f64 = eig.values.iter().map(|&l| l.max(0.0)).sum();
    let fixed = eig.map_spectrum(|l| c64(l.max(0.0) / total, 0.0));
    Ok((fixed, clipped_mass))
}

/// Born-rule sampler for one observable on one state: eigendecompose B,
/// draw outcomes with probabilities <v_j| rho |v_j>.
struct BornSampler {
    eigenvalues: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BornSampler {
    fn new(b_obs: &CMatrix, rho: &CMatrix) -> Result<Self> {
        let (rho, _) = reproject_density(rho)?;
        let eig = eigh(b_obs)?;
        let n = eig.values.len();
        let mut probs = Vec::with_capacity(n);
        for j in 0..n {
            let v = eig.vector(j);
            let proj = CMatrix::projector_from_vec(&v);
            probs.push(expectation(&proj, &rho)?.re.max(0.0));
        }
        let total: f64 = probs.iter().sum();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for p in &probs {
            acc += p / total;
            cumulative.push(acc);
        }
        Ok(Self { eigenvalues: eig.values, cumulative })
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }

    fn value(&self, index: usize) -> f64 {
        self.eigenvalues[index]
    }
}

/// Everything one (k, set) round needs to draw copies: Alice's outcome
/// probabilities and Bob's conditional-state sampler. The same context
/// drives the in-process loop and the source process, which is what makes
/// the two modes bit-identical.
pub struct RoundContext {
    pub set: u8,
    /// P(pi_v fires on the system register).
    pub p_outcome_i: f64,
    /// Set 2 only: P(pi_l fires | pi_v outcome), indexed by failure/success.
    pub p_a_given: [f64; 2],
    sampler: BornSampler,
}

impl RoundContext {
    pub fn prepare(
        psi_true: &PureState,
        rho_ab: &QState,
        cfg: &ProtocolConfig,
        set: u8,
        k: usize,
    ) -> Result<Self> {
        assert!(set == 1 || set == 2, "set must be 1 or 2");
        let rho_i = psi_true.density();
        let coupling = CouplingSpec::new(k, cfg.basis_projector(k), cfg.a_obs.clone(), cfg.g)?;
        let ev = total_state_first_order(&rho_i, rho_ab, &coupling)?;
        let pi_v = cfg.b0.projector();

        let rest: usize = (1..ev.dims.len()).map(|i| ev.dims.get(i)).product();
        let full_pi_v = pi_v.tensor(&CMatrix::identity(rest));
        let p_outcome_i = expectation(&full_pi_v, &ev.mat)?.re.clamp(0.0, 1.0);

        let (bob, p_a_given) = if set == 1 {
            let (bob, _) = bob_state_set1(&ev, &pi_v)?;
            (bob, [0.0, 0.0])
        } else {
            let db = ev.dims.get(ev.dims.len() - 1);
            let joint_op = pi_v.tensor(&cfg.pi_l).tensor(&CMatrix::identity(db));
            let p_joint = expectation(&joint_op, &ev.mat)?.re.clamp(0.0, 1.0);
            let marg_op = CMatrix::identity(cfg.d)
                .tensor(&cfg.pi_l)
                .tensor(&CMatrix::identity(db));
            let p_l = expectation(&marg_op, &ev.mat)?.re.clamp(0.0, 1.0);
            let on_success = if p_outcome_i > 1e-12 { (p_joint / p_outcome_i).clamp(0.0, 1.0) } else { 0.0 };
            let on_failure = if 1.0 - p_outcome_i > 1e-12 {
                ((p_l - p_joint) / (1.0 - p_outcome_i)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (bob, _) = bob_state_set2(&ev, &pi_v, &cfg.pi_l)?;
            (bob, [on_failure, on_success])
        };
        let sampler = BornSampler::new(&cfg.b_obs, &bob)?;
        Ok(Self { set, p_outcome_i, p_a_given, sampler })
    }

    /// Draws Alice's outcome on the system register for one copy.
    pub fn draw_outcome_i(&self, rng: &mut ChaCha12Rng) -> bool {
        rng.gen::<f64>() < self.p_outcome_i
    }

    /// Draws Alice's outcome on her resource half, conditioned on the
    /// system-register outcome (set 2 only).
    pub fn draw_outcome_a(&self, rng: &mut ChaCha12Rng, outcome_i: bool) -> bool {
        rng.gen::<f64>() < self.p_a_given[usize::from(outcome_i)]
    }

    /// Draws the index of one B eigenvalue from Bob's conditional state.
    pub fn draw_b_index(&self, rng: &mut ChaCha12Rng) -> usize {
        self.sampler.draw(rng)
    }

    pub fn b_eigenvalue(&self, index: usize) -> f64 {
        self.sampler.value(index)
    }

    /// Per-copy post-selection bit on the classical channel: the raw
    /// outcome in set 1, the AND of both outcomes in set 2.
    pub fn draw_ps_bit(&self, rng: &mut ChaCha12Rng) -> bool {
        let i = self.draw_outcome_i(rng);
        if self.set == 1 {
            i
        } else {
            let a = self.draw_outcome_a(rng, i);
            i && a
        }
    }
}

/// Incremental accumulator for Bob's conditional sample; shared by the
/// in-process loop and the distributed Bob so the arithmetic is identical.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutcomeAccumulator {
    pub successes: u64,
    sum: f64,
    sum_sq: f64,
}

impl OutcomeAccumulator {
    pub fn push(&mut self, eigenvalue: f64) {
        self.successes += 1;
        self.sum += eigenvalue;
        self.sum_sq += eigenvalue * eigenvalue;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.successes as f64
    }

    /// Sample standard deviation of single outcomes.
    pub fn std_outcome(&self) -> f64 {
        if self.successes < 2 {
            return 0.0;
        }
        let n = self.successes as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        var.sqrt()
    }
}

/// Result of sampling one (k, set) round.
#[derive(Debug, Clone, Copy)]
pub struct RoundSample {
    pub estimate: f64,
    pub std_outcome: f64,
    pub successes: u64,
    pub n_copies: u64,
}

impl RoundSample {
    pub fn bits_sent(&self, accounting: BitAccounting) -> u64 {
        match accounting {
            BitAccounting::SuccessesOnly => self.successes,
            BitAccounting::AllCopies => self.n_copies,
        }
    }
}

/// Samples a full round: N copies, post-selection draw(s) per copy, one B
/// measurement per success. Errors if no copy survives post-selection.
pub fn sample_round(
    psi_true: &PureState,
    rho_ab: &QState,
    cfg: &ProtocolConfig,
    set: u8,
    k: usize,
    plan: &SamplingPlan,
) -> Result<RoundSample> {
    let ctx = RoundContext::prepare(psi_true, rho_ab, cfg, set, k)?;
    let mut rng = plan.round_rng(k, set);
    let mut acc = OutcomeAccumulator::default();
    for _ in 0..plan.n_copies {
        if ctx.draw_ps_bit(&mut rng) {
            let idx = ctx.draw_b_index(&mut rng);
            acc.push(ctx.b_eigenvalue(idx));
        }
    }
    if acc.successes == 0 {
        return Err(StatsError::NoSuccesses { n: plan.n_copies });
    }
    Ok(RoundSample {
        estimate: acc.mean(),
        std_outcome: acc.std_outcome(),
        successes: acc.successes,
        n_copies: plan.n_copies,
    })
}

/// Sample mean and standard error of an observable on a state: B is
/// eigendecomposed and outcomes drawn with Born probabilities.
pub fn sample_expectation(
    rho: &CMatrix,
    b_obs: &CMatrix,
    n: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(StatsError::NoSamples);
    }
    let sampler = BornSampler::new(b_obs, rho)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = OutcomeAccumulator::default();
    for _ in 0..n {
        let idx = sampler.draw(&mut rng);
        acc.push(sampler.value(idx));
    }
    Ok((acc.mean(), acc.std_outcome() / (n as f64).sqrt()))
}

/// First-order expansion of rho_twk^2 contracted with a post-selection
/// operator, as the closed bit-count works with:
/// tr(P (rho_I x rho_AB^2)) + i g tr(P (Pi rho_I x (A x 1) rho_AB^2))
///                          - i g tr(P (rho_I Pi x rho_AB^2 (A x 1))).
fn postselected_overlap(
    proj: &CMatrix,
    cfg: &ProtocolConfig,
    rho_ab: &QState,
    rho_i: &CMatrix,
    k: usize,
) -> Result<f64> {
    let db = rho_ab.dims().get(1);
    let a_full = cfg.a_obs.tensor(&CMatrix::identity(db));
    let rho_ab_sq = rho_ab.mat() * rho_ab.mat();
    let pi_k = cfg.basis_projector(k);
    let zeroth = rho_i.tensor(&rho_ab_sq);
    let plus = (&pi_k * rho_i).tensor(&(&a_full * &rho_ab_sq));
    let minus = (rho_i * &pi_k).tensor(&(&rho_ab_sq * &a_full));
    let ig = c64(0.0, cfg.g);
    let sq = &(&zeroth + &plus.scale(ig)) - &minus.scale(ig);
    Ok(expectation(proj, &sq)?.re)
}

/// Per-round contributions (set 1, set 2) to the closed bit count, without
/// the factor N.
pub fn round_overlap_contributions(
    cfg: &ProtocolConfig,
    rho_ab: &QState,
    psi_true: &PureState,
    k: usize,
) -> Result<(f64, f64)> {
    let rho_i = psi_true.projector();
    let da = rho_ab.dims().get(0);
    let db = rho_ab.dims().get(1);
    let pi_v = cfg.b0.projector();
    let p1 = pi_v.tensor(&CMatrix::identity(da * db));
    let p2 = pi_v.tensor(&cfg.pi_l).tensor(&CMatrix::identity(db));
    let s1 = postselected_overlap(&p1, cfg, rho_ab, &rho_i, k)?;
    let s2 = postselected_overlap(&p2, cfg, rho_ab, &rho_i, k)?;
    Ok((s1, s2))
}

/// Total classical bits by the overlap expression:
/// C = N sum_k [tr(pi_v rho_twk^2) + tr((pi_v x pi_l x 1) rho_twk^2)],
/// with rho_twk^2 expanded to first order.
pub fn classical_bits_overlap(
    cfg: &ProtocolConfig,
    rho_ab: &QState,
    psi_true: &PureState,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..cfg.d {
        let (s1, s2) = round_overlap_contributions(cfg, rho_ab, psi_true, k)?;
        total += s1 + s2;
    }
    Ok(cfg.n_copies as f64 * total)
}

/// Closed form (3/2) N d tr(pi_v rho_I) tr(rho_AB^2), valid for the
/// Bell-diagonal resource family with a Pauli-vector coupling.
pub fn closed_form_bits(cfg: &ProtocolConfig, rho_ab: &QState, psi_true: &PureState) -> f64 {
    let pv = psi_true.overlap(&cfg.b0).norm_sqr();
    1.5 * cfg.n_copies as f64 * cfg.d as f64 * pv * rho_ab.purity()
}

/// Predicted statistical errors (dW_im, dW_re) on one inverted weak value
/// from the measured spreads and classical-bit counts:
///   (dW_I)^2 = (dB_I / X_I)^2 / C_I
///   (dW_R)^2 = (Y1 dB_R / Y4)^2 / C_R + (Y3 dB_I / (Y4 X_I))^2 / C_I.
pub fn error_propagation(
    cfg: &ProtocolConfig,
    rho_ab: &QState,
    c_ik: u64,
    c_rk: u64,
    db_i: f64,
    db_r: f64,
) -> Result<(f64, f64)> {
    if c_ik == 0 || c_rk == 0 {
        return Err(StatsError::NoSuccesses { n: 0 });
    }
    let im = weakcore::im_coefficients(&cfg.a_obs, &cfg.b_obs, rho_ab)?;
    let x_i = 2.0 * cfg.g * im.response;
    if x_i.abs() <= weakcore::DENOM_TOL {
        return Err(WeakCoreError::Vanishing {
            name: "X_Ik (set-1 denominator)",
            magnitude: x_i.abs(),
            threshold: weakcore::DENOM_TOL,
        }
        .into());
    }
    let s2 = weakcore::set2_coefficients(&cfg.a_obs, &cfg.b_obs, &cfg.pi_l, rho_ab, cfg.g)?;
    if s2.y4.abs() <= weakcore::DENOM_TOL {
        return Err(WeakCoreError::Vanishing {
            name: "Y_4Rk (set-2 denominator)",
            magnitude: s2.y4.abs(),
            threshold: weakcore::DENOM_TOL,
        }
        .into());
    }
    let dw_i = (db_i / x_i).abs() / (c_ik as f64).sqrt();
    let t1 = (s2.post_prob * db_r / s2.y4).powi(2) / c_rk as f64;
    let t2 = (s2.y3 * db_i / (s2.y4 * x_i)).powi(2) / c_ik as f64;
    Ok((dw_i, (t1 + t2).sqrt()))
}
