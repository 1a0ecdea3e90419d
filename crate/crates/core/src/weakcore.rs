//! Physics of one protocol round.
//!
//! One round weakly couples the system register to one half of the shared
//! resource through U = exp(i g Pi (x) A), post-selects on Alice's side, and
//! leaves Bob with a conditional state whose expectation values carry one
//! quadrature of the weak value
//!
//! ```text
//!     (Pi)_w = tr(pi_v Pi rho_I) / tr(pi_v rho_I).
//! ```
//!
//! Two computation paths exist side by side. The closed forms below
//! ([`bob_expectation_im`], [`bob_expectation_re`]) are first-order in g and
//! exactly invertible; the numeric path (evolve, project, trace) agrees with
//! them to O(g^2) and is what Monte Carlo sampling and the exact-unitary
//! oracle run on. Tests pin the two together, so a transcription slip in
//! the long formulas cannot survive.

use crate::qmat::{
    anticommutator, commutator, expectation, expm_hermitian_generator, partial_trace, C64,
    CMatrix, QmatError, SubsystemDims,
};
use crate::states::QState;
use thiserror::Error;

/// Thresholds: projector validation, denominator cutoffs, noncommutation.
pub const PROJECTOR_TOL: f64 = 1e-10;
pub const DENOM_TOL: f64 = 1e-12;
pub const NONCOMMUTING_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum WeakCoreError {
    #[error(transparent)]
    Mat(#[from] QmatError),
    #[error("{name} is not a projector: deviation {deviation:.3e}")]
    NotProjector { name: &'static str, deviation: f64 },
    #[error("{name} must be a rank-1 projector (trace {trace:.6})")]
    NotRankOne { name: &'static str, trace: f64 },
    #[error("coupling strength must be positive, got {0}")]
    NonPositiveCoupling(f64),
    #[error("vanishing quantity `{name}`: |{name}| = {magnitude:.3e} <= {threshold:.0e}")]
    Vanishing { name: &'static str, magnitude: f64, threshold: f64 },
    #[error("post-selection projector commutes with the coupling observable (max |[pi_l, A]| = {deviation:.3e})")]
    CommutingPostSelection { deviation: f64 },
    #[error("denominator is not real: imaginary residual {residual:.3e}")]
    NonRealDenominator { residual: f64 },
}

pub type Result<T> = std::result::Result<T, WeakCoreError>;

fn check_projector(name: &'static str, p: &CMatrix, rank_one: bool) -> Result<()> {
    p.ensure_hermitian(PROJECTOR_TOL)?;
    let idem = (&(p * p) - p).max_abs();
    if idem > PROJECTOR_TOL {
        return Err(WeakCoreError::NotProjector { name, deviation: idem });
    }
    if rank_one {
        let trace = p.trace().re;
        if (trace - 1.0).abs() > PROJECTOR_TOL {
            return Err(WeakCoreError::NotRankOne { name, trace });
        }
    }
    Ok(())
}

/// One weak interaction: projector index k, the projector on the system
/// register, the coupling observable on Alice's half of the resource, and
/// the interaction strength g.
#[derive(Debug, Clone)]
pub struct CouplingSpec {
    pub k: usize,
    pub pi_k: CMatrix,
    pub a_obs: CMatrix,
    pub g: f64,
}

impl CouplingSpec {
    pub fn new(k: usize, pi_k: CMatrix, a_obs: CMatrix, g: f64) -> Result<Self> {
        check_projector("Pi_k", &pi_k, false)?;
        a_obs.ensure_hermitian(PROJECTOR_TOL)?;
        if g <= 0.0 {
            return Err(WeakCoreError::NonPositiveCoupling(g));
        }
        Ok(Self { k, pi_k, a_obs, g })
    }
}

/// Post-selection choice: pi_v on the system register always, pi_l on
/// Alice's resource half only in the second set of runs.
#[derive(Debug, Clone)]
pub struct PostSelection {
    pub pi_v: CMatrix,
    pub pi_l: Option<CMatrix>,
}

impl PostSelection {
    pub fn set1(pi_v: CMatrix) -> Result<Self> {
        check_projector("pi_v", &pi_v, true)?;
        Ok(Self { pi_v, pi_l: None })
    }

    /// The noncommutation of `pi_l` with the coupling observable is
    /// checked against `a_obs` here, since the projector alone cannot know it.
    pub fn set2(pi_v: CMatrix, pi_l: CMatrix, a_obs: &CMatrix) -> Result<Self> {
        check_projector("pi_v", &pi_v, true)?;
        check_projector("pi_l", &pi_l, true)?;
        let dev = commutator(&pi_l, a_obs)?.max_abs();
        if dev <= NONCOMMUTING_TOL {
            return Err(WeakCoreError::CommutingPostSelection { deviation: dev });
        }
        Ok(Self { pi_v, pi_l: Some(pi_l) })
    }
}

/// How a weak value came to be known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakValueKind {
    Exact,
    InvertedAnalytic,
    InvertedSampled,
}

/// A weak value for projector index k, with error bars when it was
/// estimated from finite statistics.
#[derive(Debug, Clone)]
pub struct WeakValueRecord {
    pub k: usize,
    pub value: C64,
    pub kind: WeakValueKind,
    /// (re_err, im_err); present exactly when kind is `InvertedSampled`.
    pub std_err: Option<(f64, f64)>,
}

impl WeakValueRecord {
    pub fn new(k: usize, value: C64, kind: WeakValueKind, std_err: Option<(f64, f64)>) -> Self {
        assert_eq!(
            std_err.is_some(),
            kind == WeakValueKind::InvertedSampled,
            "std_err must be present exactly for sampled records"
        );
        Self { k, value, kind, std_err }
    }
}

/// Tripartite state after the weak interaction, ordered (system, A, B).
///
/// The first-order expansion is flagged `perturbative`: its eigenvalues may
/// dip below zero by O(g^2) and it is exempt from the density-matrix
/// positivity gate. All first-order formulas consume it as-is.
#[derive(Debug, Clone)]
pub struct EvolvedState {
    pub mat: CMatrix,
    pub dims: SubsystemDims,
    pub perturbative: bool,
}

/// tr(pi_v Pi rho) / tr(pi_v rho): the complex weak value of a projector for
/// pre-selection rho and post-selection pi_v.
pub fn exact_weak_value(pi: &CMatrix, pi_v: &CMatrix, rho_i: &QState) -> Result<C64> {
    let den = expectation(pi_v, rho_i.mat())?;
    if den.norm() <= DENOM_TOL {
        return Err(WeakCoreError::Vanishing {
            name: "post-selection probability tr(pi_v rho_I)",
            magnitude: den.norm(),
            threshold: DENOM_TOL,
        });
    }
    let num = expectation(&(pi_v * pi), rho_i.mat())?;
    Ok(num / den)
}

/// tr((pi_l A (x) 1) rho_AB) / tr((pi_l (x) 1) rho_AB): observable and
/// post-selection act on one half of a bipartite state while the trace runs
/// over all of it.
pub fn weak_partial_value(a_obs: &CMatrix, pi_l: &CMatrix, rho_ab: &QState) -> Result<C64> {
    let db = rho_ab.dims().get(1);
    let eye_b = CMatrix::identity(db);
    let den = expectation(&pi_l.tensor(&eye_b), rho_ab.mat())?;
    if den.norm() <= DENOM_TOL {
        return Err(WeakCoreError::Vanishing {
            name: "tr((pi_l x 1) rho_AB)",
            magnitude: den.norm(),
            threshold: DENOM_TOL,
        });
    }
    let num = expectation(&(pi_l * a_obs).tensor(&eye_b), rho_ab.mat())?;
    Ok(num / den)
}

fn composite_dims(rho_i: &QState, rho_ab: &QState) -> SubsystemDims {
    rho_i.dims().compose(rho_ab.dims())
}

/// Pi (x) A (x) 1_B on the full (system, A, B) space.
fn coupling_operator(c: &CouplingSpec, db: usize) -> CMatrix {
    c.pi_k.tensor(&c.a_obs).tensor(&CMatrix::identity(db))
}

/// First-order evolved state rho_I (x) rho_AB + i g [Pi (x) A (x) 1, rho_0].
///
/// The commutator is traceless, so the trace stays exactly 1; positivity is
/// only guaranteed up to O(g^2).
pub fn total_state_first_order(
    rho_i: &QState,
    rho_ab: &QState,
    c: &CouplingSpec,
) -> Result<EvolvedState> {
    let dims = composite_dims(rho_i, rho_ab);
    let rho0 = rho_i.mat().tensor(rho_ab.mat());
    let p = coupling_operator(c, rho_ab.dims().get(1));
    let comm = commutator(&p, &rho0)?;
    let mat = &rho0 + &comm.scale(C64::new(0.0, c.g));
    Ok(EvolvedState { mat, dims, perturbative: true })
}

/// Exact unitary evolution U rho_0 U^dagger with U = exp(i g Pi (x) A) (x) 1.
pub fn total_state_exact(rho_i: &QState, rho_ab: &QState, c: &CouplingSpec) -> Result<EvolvedState> {
    let dims = composite_dims(rho_i, rho_ab);
    let rho0 = rho_i.mat().tensor(rho_ab.mat());
    let gen = c.pi_k.tensor(&c.a_obs);
    let u_ia = expm_hermitian_generator(&gen, c.g)?;
    let u = u_ia.tensor(&CMatrix::identity(rho_ab.dims().get(1)));
    let mat = &(&u * &rho0) * &u.dagger();
    Ok(EvolvedState { mat, dims, perturbative: false })
}

fn conditional_bob_state(ev: &EvolvedState, proj: &CMatrix, what: &'static str) -> Result<(CMatrix, f64)> {
    let m = proj * &ev.mat;
    let tr = m.trace();
    let p = tr.re;
    if p <= DENOM_TOL {
        return Err(WeakCoreError::Vanishing { name: what, magnitude: p, threshold: DENOM_TOL });
    }
    let last = ev.dims.len() - 1;
    let reduced = partial_trace(&m, &ev.dims, &[last])?;
    Ok((reduced.scale(C64::new(1.0 / p, 0.0)), p))
}

/// Bob's normalized conditional state and the success probability after
/// post-selecting pi_v on the system register only (first set of runs).
pub fn bob_state_set1(ev: &EvolvedState, pi_v: &CMatrix) -> Result<(CMatrix, f64)> {
    let rest: usize = (1..ev.dims.len()).map(|i| ev.dims.get(i)).product();
    let proj = pi_v.tensor(&CMatrix::identity(rest));
    conditional_bob_state(ev, &proj, "set-1 post-selection probability")
}

/// Bob's normalized conditional state and success probability after the
/// double post-selection pi_v (x) pi_l (second set of runs).
pub fn bob_state_set2(ev: &EvolvedState, pi_v: &CMatrix, pi_l: &CMatrix) -> Result<(CMatrix, f64)> {
    let db = ev.dims.get(ev.dims.len() - 1);
    let proj = pi_v.tensor(pi_l).tensor(&CMatrix::identity(db));
    conditional_bob_state(ev, &proj, "set-2 post-selection probability")
}

/// Which contraction builds the second trace of the set-1 response
/// coefficient. `CouplingOnly` keeps the coupling observable alone inside
/// the partial trace, tr(B tr_A((A x 1) rho)); it is the form consistent
/// with the first-order expansion and the default everywhere.
/// `CoupledReadout` also inserts the readout observable,
/// tr(B tr_A((A x B) rho)) = tr((A x B^2) rho), and is kept only as a
/// comparison switch: with B^2 = 1 it collapses to tr((A x 1) rho), which
/// vanishes on every Bell-diagonal resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImResponseForm {
    #[default]
    CouplingOnly,
    CoupledReadout,
}

/// Coefficients of the set-1 (imaginary-part) relation
/// `<B> = tr(B rho_B_in) + 2 g Im(w) * response`.
#[derive(Debug, Clone, Copy)]
pub struct ImCoefficients {
    /// tr(B rho_B_in), Bob's unconditioned expectation value.
    pub b_in: f64,
    /// tr((A x 1) rho_AB) tr(B rho_B_in) - tr(B tr_A((A x 1) rho_AB)).
    pub response: f64,
}

pub fn im_coefficients(a_obs: &CMatrix, b_obs: &CMatrix, rho_ab: &QState) -> Result<ImCoefficients> {
    im_coefficients_with(a_obs, b_obs, rho_ab, ImResponseForm::CouplingOnly)
}

pub fn im_coefficients_with(
    a_obs: &CMatrix,
    b_obs: &CMatrix,
    rho_ab: &QState,
    form: ImResponseForm,
) -> Result<ImCoefficients> {
    let db = rho_ab.dims().get(1);
    let eye_b = CMatrix::identity(db);
    let a_full = a_obs.tensor(&eye_b);
    let rho_b_in = partial_trace(rho_ab.mat(), rho_ab.dims(), &[1])?;
    let b_in = expectation(b_obs, &rho_b_in)?.re;
    let t1 = expectation(&a_full, rho_ab.mat())?.re;
    let contracted = match form {
        ImResponseForm::CouplingOnly => &a_full * rho_ab.mat(),
        ImResponseForm::CoupledReadout => &a_obs.tensor(b_obs) * rho_ab.mat(),
    };
    let k = partial_trace(&contracted, rho_ab.dims(), &[1])?;
    let t2 = expectation(b_obs, &k)?;
    debug_assert!(t2.im.abs() < 1e-9);
    Ok(ImCoefficients { b_in, response: t1 * b_in - t2.re })
}

/// Coefficients of the set-2 (real-part) relation
/// `<B> * post_prob = b_post + Re(w) * y4 + Im(w) * y3`.
#[derive(Debug, Clone, Copy)]
pub struct Set2Coefficients {
    /// tr((pi_l x 1) rho_AB).
    pub post_prob: f64,
    /// tr((pi_l x B) rho_AB).
    pub b_post: f64,
    /// The weak-partial-value (A)_w'.
    pub wpv: C64,
    /// g (2 Re(A)_w' b_post - tr((pi_l x B) {A x 1, rho_AB})).
    pub y3: f64,
    /// g (2 Im(A)_w' b_post - Im tr((pi_l x B) [A x 1, rho_AB])).
    pub y4: f64,
    /// Residual real part of the commutator trace; nonzero means the
    /// denominator of the real-part inversion is not real.
    pub comm_residual: f64,
}

pub fn set2_coefficients(
    a_obs: &CMatrix,
    b_obs: &CMatrix,
    pi_l: &CMatrix,
    rho_ab: &QState,
    g: f64,
) -> Result<Set2Coefficients> {
    let db = rho_ab.dims().get(1);
    let eye_b = CMatrix::identity(db);
    let a_full = a_obs.tensor(&eye_b);
    let pi_l_b = pi_l.tensor(b_obs);

    let post_prob = expectation(&pi_l.tensor(&eye_b), rho_ab.mat())?.re;
    if post_prob <= DENOM_TOL {
        return Err(WeakCoreError::Vanishing {
            name: "tr((pi_l x 1) rho_AB)",
            magnitude: post_prob,
            threshold: DENOM_TOL,
        });
    }
    let b_post = expectation(&pi_l_b, rho_ab.mat())?.re;
    let wpv = weak_partial_value(a_obs, pi_l, rho_ab)?;

    let comm_tr = expectation(&pi_l_b, &commutator(&a_full, rho_ab.mat())?)?;
    let anti_tr = expectation(&pi_l_b, &anticommutator(&a_full, rho_ab.mat())?)?;
    debug_assert!(anti_tr.im.abs() < 1e-9);

    // Both follow from expanding 1/tr(rho_B_un) to first order:
    //   <B> post_prob = b_post + 2 g Im(w (b_post (A)_w' - tau))
    // with tau = tr((pi_l x B)(A x 1) rho) = (anti_tr + comm_tr)/2.
    let y3 = g * (2.0 * wpv.re * b_post - anti_tr.re);
    let y4 = g * (2.0 * wpv.im * b_post - comm_tr.im);
    Ok(Set2Coefficients { post_prob, b_post, wpv, y3, y4, comm_residual: comm_tr.re.abs() })
}

/// Closed-form first-order expectation value Bob records in the first set
/// of runs: tr(B rho_B_in) + 2 g Im(w) (tr((A x 1) rho) tr(B rho_B_in) -
/// tr(B tr_A((A x 1) rho))).
pub fn bob_expectation_im(
    b_obs: &CMatrix,
    rho_i: &QState,
    rho_ab: &QState,
    c: &CouplingSpec,
    pi_v: &CMatrix,
) -> Result<f64> {
    let w = exact_weak_value(&c.pi_k, pi_v, rho_i)?;
    let coeff = im_coefficients(&c.a_obs, b_obs, rho_ab)?;
    Ok(coeff.b_in + 2.0 * c.g * w.im * coeff.response)
}

/// Closed-form first-order expectation value for the second set of runs,
/// written in the commutator/anticommutator decomposition.
pub fn bob_expectation_re(
    b_obs: &CMatrix,
    rho_i: &QState,
    rho_ab: &QState,
    c: &CouplingSpec,
    pi_v: &CMatrix,
    pi_l: &CMatrix,
) -> Result<f64> {
    let dev = commutator(pi_l, &c.a_obs)?.max_abs();
    if dev <= NONCOMMUTING_TOL {
        return Err(WeakCoreError::CommutingPostSelection { deviation: dev });
    }
    let w = exact_weak_value(&c.pi_k, pi_v, rho_i)?;
    let s2 = set2_coefficients(&c.a_obs, b_obs, pi_l, rho_ab, c.g)?;
    Ok((s2.b_post + w.re * s2.y4 + w.im * s2.y3) / s2.post_prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::c64;
    use crate::states::{bell_diagonal, mub_b0, random_pure, singlet_vector, werner, PureState, QState};

    fn plus_projector() -> CMatrix {
        mub_b0(2).unwrap().projector()
    }

    fn singlet_state() -> QState {
        werner(1.0).unwrap()
    }

    fn default_coupling(k: usize, d: usize, g: f64) -> CouplingSpec {
        CouplingSpec::new(k, CMatrix::basis_projector(d, k), CMatrix::pauli_x(), g).unwrap()
    }

    fn product_state(seed_a: u64, seed_b: u64) -> QState {
        let a = random_pure(2, seed_a).unwrap().projector();
        let b = random_pure(2, seed_b).unwrap().projector();
        QState::new(a.tensor(&b), SubsystemDims::new(vec![2, 2]).unwrap()).unwrap()
    }

    #[test]
    fn weak_value_of_basis_projector_with_plus_postselection() {
        // Direct evaluation of the definition gives (1 - i)/2.
        let s = 1.0 / 2f64.sqrt();
        let psi = PureState::new(vec![c64(s, 0.0), c64(0.0, s)], "computational").unwrap();
        let w = exact_weak_value(
            &CMatrix::basis_projector(2, 0),
            &plus_projector(),
            &psi.density(),
        )
        .unwrap();
        assert!((w - c64(0.5, -0.5)).norm() < 1e-13);
    }

    #[test]
    fn weak_value_of_identity_is_one() {
        for seed in 0..100 {
            let psi = random_pure(3, seed).unwrap();
            let v = random_pure(3, seed + 1000).unwrap();
            let w = exact_weak_value(&CMatrix::identity(3), &v.projector(), &psi.density())
                .unwrap();
            assert!((w - c64(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn weak_values_over_a_complete_basis_sum_to_one() {
        for d in [2usize, 3, 4, 8] {
            let psi = random_pure(d, d as u64).unwrap();
            let v = random_pure(d, 31 + d as u64).unwrap();
            let mut total = c64(0.0, 0.0);
            for k in 0..d {
                total += exact_weak_value(
                    &CMatrix::basis_projector(d, k),
                    &v.projector(),
                    &psi.density(),
                )
                .unwrap();
            }
            assert!((total - c64(1.0, 0.0)).norm() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn weak_value_rejects_orthogonal_postselection() {
        let psi = PureState::new(vec![c64(1.0, 0.0), c64(0.0, 0.0)], "computational").unwrap();
        let pi_v = CMatrix::basis_projector(2, 1);
        assert!(matches!(
            exact_weak_value(&CMatrix::identity(2), &pi_v, &psi.density()),
            Err(WeakCoreError::Vanishing { .. })
        ));
    }

    #[test]
    fn weak_partial_value_factorizes_on_products() {
        let rho = product_state(5, 6);
        let rho_a = rho.marginal(&[0]).unwrap();
        let pi_l = CMatrix::basis_projector(2, 1);
        let a = CMatrix::pauli_x();
        let got = weak_partial_value(&a, &pi_l, &rho).unwrap();
        let num = expectation(&(&pi_l * &a), rho_a.mat()).unwrap();
        let den = expectation(&pi_l, rho_a.mat()).unwrap();
        assert!((got - num / den).norm() < 1e-12);
    }

    #[test]
    fn weak_partial_value_of_identity_is_one() {
        let got = weak_partial_value(
            &CMatrix::identity(2),
            &CMatrix::basis_projector(2, 0),
            &bell_diagonal(-0.4, -0.3, 0.2).unwrap(),
        )
        .unwrap();
        assert!((got - c64(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn weak_partial_value_on_singlet_evaluates_to_zero_for_sigma_x() {
        // Direct evaluation: tr((pi_l sigma_x x 1) rho) vanishes for the
        // singlet with pi_l along z.
        let got = weak_partial_value(
            &CMatrix::pauli_x(),
            &CMatrix::basis_projector(2, 1),
            &singlet_state(),
        )
        .unwrap();
        assert!(got.norm() < 1e-13);
    }

    #[test]
    fn first_order_state_reduces_to_product_at_tiny_g() {
        // g = 0 is rejected by CouplingSpec, so compare the g -> 0 limit
        // structurally: the commutator term carries the only g dependence.
        let psi = random_pure(2, 1).unwrap();
        let rho_ab = bell_diagonal(-0.5, -0.5, -0.5).unwrap();
        let c = default_coupling(0, 2, 1e-300);
        let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
        let rho0 = psi.density().mat().tensor(rho_ab.mat());
        assert!(ev.mat.approx_eq(&rho0, 1e-290));
        assert!(ev.perturbative);
    }

    #[test]
    fn first_order_state_has_unit_trace() {
        for seed in 0..10 {
            let psi = random_pure(2, seed).unwrap();
            let rho_ab = bell_diagonal(-0.6, 0.2, 0.3).unwrap();
            let c = default_coupling(seed as usize % 2, 2, 0.08);
            let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
            let tr = ev.mat.trace();
            assert!((tr - c64(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn exact_evolution_is_unitary() {
        let psi = random_pure(2, 3).unwrap();
        let rho_ab = werner(0.7).unwrap();
        let c = default_coupling(1, 2, 0.3);
        let ev = total_state_exact(&psi.density(), &rho_ab, &c).unwrap();
        let rho0 = psi.density().mat().tensor(rho_ab.mat());
        let purity0: f64 = rho0.entries().iter().map(|z| z.norm_sqr()).sum();
        let purity1: f64 = ev.mat.entries().iter().map(|z| z.norm_sqr()).sum();
        assert!((purity0 - purity1).abs() < 1e-10);
        assert!((ev.mat.trace() - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn first_order_error_scales_quadratically_in_g() {
        let psi = random_pure(2, 11).unwrap();
        let rho_ab = bell_diagonal(-0.7, -0.4, -0.2).unwrap();
        let mut errs = Vec::new();
        for &g in &[0.1, 0.05, 0.025] {
            let c = default_coupling(0, 2, g);
            let fo = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
            let ex = total_state_exact(&psi.density(), &rho_ab, &c).unwrap();
            let err = fo.mat.max_abs_diff(&ex.mat);
            assert!(err <= 2.0 * g * g, "g = {g}: err = {err}");
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio = {ratio}");
        }
    }

    #[test]
    fn set1_state_on_product_resource_is_bobs_marginal() {
        for seed in 0..20 {
            let rho = product_state(seed, seed + 100);
            let rho_b = rho.marginal(&[1]).unwrap();
            let psi = random_pure(2, seed + 200).unwrap();
            let c = default_coupling(0, 2, 0.1);
            let ev = total_state_first_order(&psi.density(), &rho, &c).unwrap();
            let (cond, _p) = bob_state_set1(&ev, &plus_projector()).unwrap();
            assert!(cond.approx_eq(rho_b.mat(), 1e-12), "seed = {seed}");
        }
    }

    #[test]
    fn set2_state_on_product_resource_is_bobs_marginal() {
        for seed in 0..20 {
            let rho = product_state(seed + 300, seed + 400);
            let rho_b = rho.marginal(&[1]).unwrap();
            let psi = random_pure(2, seed + 500).unwrap();
            let c = default_coupling(1, 2, 0.1);
            let ev = total_state_first_order(&psi.density(), &rho, &c).unwrap();
            match bob_state_set2(&ev, &plus_projector(), &CMatrix::basis_projector(2, 1)) {
                Ok((cond, _p)) => assert!(cond.approx_eq(rho_b.mat(), 1e-12), "seed = {seed}"),
                // A product resource may make the double post-selection
                // probability vanish outright; that also carries no signal.
                Err(WeakCoreError::Vanishing { .. }) => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn set1_state_on_singlet_differs_by_traceless_first_order_term() {
        let psi = random_pure(2, 7).unwrap();
        let rho_ab = singlet_state();
        let rho_b_in = rho_ab.marginal(&[1]).unwrap();
        let c = default_coupling(0, 2, 0.05);
        let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
        let (cond, _) = bob_state_set1(&ev, &plus_projector()).unwrap();
        let diff = &cond - rho_b_in.mat();
        assert!(diff.max_abs() > 1e-4, "coupling must leave a signature");
        assert!(diff.trace().norm() < 1e-12);
        assert!(diff.max_abs() < 10.0 * c.g);
    }

    #[test]
    fn set2_probability_is_half_of_set1_on_the_example_instance() {
        // Bell-diagonal resource, coupling along x, pi_l in the z basis.
        let psi = random_pure(2, 13).unwrap();
        let rho_ab = bell_diagonal(-0.8, -0.8, -0.8).unwrap();
        let c = default_coupling(0, 2, 0.07);
        let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
        let (_, p1) = bob_state_set1(&ev, &plus_projector()).unwrap();
        let (_, p2) =
            bob_state_set2(&ev, &plus_projector(), &CMatrix::basis_projector(2, 1)).unwrap();
        assert!((p2 / p1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn im_expectation_collapses_for_real_weak_values() {
        // Real amplitudes and a real post-selection make Im(w) = 0, so the
        // set-1 expectation must equal tr(B rho_B_in).
        let psi = PureState::new(vec![c64(0.6, 0.0), c64(0.8, 0.0)], "computational").unwrap();
        let rho_ab = bell_diagonal(-0.7, -0.5, -0.2).unwrap();
        let c = default_coupling(0, 2, 0.05);
        let b = CMatrix::pauli_dot([0.3, 0.5, (1.0f64 - 0.34).sqrt()]);
        let got = bob_expectation_im(&b, &psi.density(), &rho_ab, &c, &plus_projector()).unwrap();
        let coeff = im_coefficients(&c.a_obs, &b, &rho_ab).unwrap();
        assert!((got - coeff.b_in).abs() < 1e-13);
    }

    #[test]
    fn im_expectation_matches_bell_diagonal_closed_form() {
        // On a Bell-diagonal resource with traceless B = m.sigma and
        // A = n.sigma the relation reduces to <B> = -2 g Im(w) sum m_i n_i c_i.
        let (c1, c2, c3) = (-0.75, -0.45, -0.35);
        let rho_ab = bell_diagonal(c1, c2, c3).unwrap();
        let psi = random_pure(2, 17).unwrap();
        let n = [1.0, 0.0, 0.0];
        let m = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        let g = 0.04;
        let c = CouplingSpec::new(0, CMatrix::basis_projector(2, 0), CMatrix::pauli_dot(n), g)
            .unwrap();
        let b = CMatrix::pauli_dot(m);
        let w = exact_weak_value(&c.pi_k, &plus_projector(), &psi.density()).unwrap();
        let s: f64 = (0..3).map(|i| m[i] * n[i] * [c1, c2, c3][i]).sum();
        let want = -2.0 * g * w.im * s;
        let got = bob_expectation_im(&b, &psi.density(), &rho_ab, &c, &plus_projector()).unwrap();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn im_expectation_cross_checks_against_reduced_state_trace() {
        let psi = random_pure(2, 19).unwrap();
        let rho_ab = werner(0.9).unwrap();
        let b = CMatrix::pauli_dot([0.6, 0.8, 0.0]);
        for &g in &[0.1, 0.05] {
            let c = default_coupling(0, 2, g);
            let closed =
                bob_expectation_im(&b, &psi.density(), &rho_ab, &c, &plus_projector()).unwrap();
            let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
            let (cond, _) = bob_state_set1(&ev, &plus_projector()).unwrap();
            let numeric = expectation(&b, &cond).unwrap();
            assert!(numeric.im.abs() < 1e-10);
            assert!((closed - numeric.re).abs() <= 5.0 * g * g, "g = {g}");
        }
    }

    #[test]
    fn re_expectation_at_vanishing_g_limit_is_conditional_expectation() {
        let psi = random_pure(2, 23).unwrap();
        let rho_ab = bell_diagonal(-0.6, -0.5, -0.4).unwrap();
        let pi_l = CMatrix::basis_projector(2, 1);
        let b = CMatrix::pauli_dot([0.0, 1.0, 0.0]);
        let c = default_coupling(0, 2, 1e-300);
        let got =
            bob_expectation_re(&b, &psi.density(), &rho_ab, &c, &plus_projector(), &pi_l).unwrap();
        let s2 = set2_coefficients(&c.a_obs, &b, &pi_l, &rho_ab, c.g).unwrap();
        assert!((got - s2.b_post / s2.post_prob).abs() < 1e-250);
    }

    #[test]
    fn re_expectation_matches_bell_diagonal_closed_form() {
        // Bell-diagonal reduction of the set-2 relation with
        // pi_l = |sigma_z = -1><sigma_z = -1|:
        //   <B> = -m3 c3 + 2 g Re(w) (c2 m2 n1 - c1 m1 n2)
        //                + 2 g Im(w) (n3 m3 c3 - S),
        // where S = sum_i m_i n_i c_i. Evaluated here from scratch out of
        // the Pauli algebra as an independent oracle.
        let cs = [-0.65, -0.55, -0.25];
        let rho_ab = bell_diagonal(cs[0], cs[1], cs[2]).unwrap();
        let psi = random_pure(2, 29).unwrap();
        let n = [0.8, 0.0, 0.6];
        let mv = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        let g = 0.06;
        let c = CouplingSpec::new(0, CMatrix::basis_projector(2, 0), CMatrix::pauli_dot(n), g)
            .unwrap();
        let b = CMatrix::pauli_dot(mv);
        let pi_l = CMatrix::basis_projector(2, 1);
        let w = exact_weak_value(&c.pi_k, &plus_projector(), &psi.density()).unwrap();
        let s: f64 = (0..3).map(|i| mv[i] * n[i] * cs[i]).sum();
        let want = -mv[2] * cs[2]
            + 2.0 * g * w.re * (cs[1] * mv[1] * n[0] - cs[0] * mv[0] * n[1])
            + 2.0 * g * w.im * (n[2] * mv[2] * cs[2] - s);
        let got =
            bob_expectation_re(&b, &psi.density(), &rho_ab, &c, &plus_projector(), &pi_l).unwrap();
        assert!((got - want).abs() < 1e-13, "got {got}, want {want}");
    }

    #[test]
    fn re_expectation_cross_checks_against_reduced_state_trace() {
        let psi = random_pure(2, 31).unwrap();
        let rho_ab = werner(0.85).unwrap();
        let pi_l = CMatrix::basis_projector(2, 1);
        let b = CMatrix::pauli_dot([0.6, 0.8, 0.0]);
        for &g in &[0.1, 0.05] {
            let c = default_coupling(0, 2, g);
            let closed =
                bob_expectation_re(&b, &psi.density(), &rho_ab, &c, &plus_projector(), &pi_l)
                    .unwrap();
            let ev = total_state_first_order(&psi.density(), &rho_ab, &c).unwrap();
            let (cond, _) = bob_state_set2(&ev, &plus_projector(), &pi_l).unwrap();
            let numeric = expectation(&b, &cond).unwrap();
            assert!(numeric.im.abs() < 1e-10);
            assert!((closed - numeric.re).abs() <= 5.0 * g * g, "g = {g}");
        }
    }

    #[test]
    fn re_expectation_requires_noncommuting_postselection() {
        let psi = random_pure(2, 37).unwrap();
        let rho_ab = werner(0.8).unwrap();
        let c = default_coupling(0, 2, 0.05);
        // pi_l along x commutes with A = sigma_x.
        let pi_l = mub_b0(2).unwrap().projector();
        assert!(matches!(
            bob_expectation_re(
                &CMatrix::pauli_y(),
                &psi.density(),
                &rho_ab,
                &c,
                &plus_projector(),
                &pi_l
            ),
            Err(WeakCoreError::CommutingPostSelection { .. })
        ));
    }

    #[test]
    fn coupled_readout_variant_degenerates_on_bell_diagonal_resources() {
        // With B^2 = 1 the coupled-readout trace collapses to
        // tr((A x 1) rho), which vanishes on any Bell-diagonal state. The
        // coupling-only form stays finite; that is why it is the default.
        let rho_ab = bell_diagonal(-0.7, -0.6, -0.5).unwrap();
        let a = CMatrix::pauli_x();
        let b = CMatrix::pauli_dot([1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0]);
        let standard = im_coefficients_with(&a, &b, &rho_ab, ImResponseForm::CouplingOnly).unwrap();
        let variant = im_coefficients_with(&a, &b, &rho_ab, ImResponseForm::CoupledReadout).unwrap();
        assert!(standard.response.abs() > 0.1);
        assert!(variant.response.abs() < 1e-13);
    }

    #[test]
    fn coupling_spec_validates_inputs() {
        let not_proj = CMatrix::pauli_x().scale(c64(0.5, 0.0));
        assert!(CouplingSpec::new(0, not_proj, CMatrix::pauli_x(), 0.1).is_err());
        assert!(CouplingSpec::new(0, CMatrix::basis_projector(2, 0), CMatrix::pauli_x(), 0.0)
            .is_err());
        let not_herm = CMatrix::from_rows(vec![
            vec![c64(0.0, 0.0), c64(1.0, 0.0)],
            vec![c64(0.0, 0.0), c64(0.0, 0.0)],
        ])
        .unwrap();
        assert!(CouplingSpec::new(0, CMatrix::basis_projector(2, 0), not_herm, 0.1).is_err());
    }

    #[test]
    fn post_selection_requires_noncommutation_in_set2() {
        let pi_v = plus_projector();
        let ok = PostSelection::set2(
            pi_v.clone(),
            CMatrix::basis_projector(2, 1),
            &CMatrix::pauli_x(),
        );
        assert!(ok.is_ok());
        let bad = PostSelection::set2(pi_v, plus_projector(), &CMatrix::pauli_x());
        assert!(matches!(bad, Err(WeakCoreError::CommutingPostSelection { .. })));
    }

    #[test]
    #[should_panic(expected = "std_err must be present")]
    fn weak_value_record_enforces_std_err_invariant() {
        let _ = WeakValueRecord::new(0, c64(0.1, 0.2), WeakValueKind::Exact, Some((0.1, 0.1)));
    }

    #[test]
    fn singlet_vector_is_antisymmetric() {
        let v = singlet_vector();
        assert!((v[1] + v[2]).norm() < 1e-15);
    }
}
