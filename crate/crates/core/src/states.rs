//! Constructors and validators for the states the protocol consumes.
//!
//! A [`QState`] is a density matrix that has passed the usual sanity gates:
//! Hermitian, unit trace, and positive semidefinite up to numerical slack.
//! Rejected states raise errors carrying the offending eigenvalue; nothing
//! is silently clipped.
//!
//! The named constructors cover the whole cast: the mutually unbiased
//! post-selection vector, Bell-diagonal and Werner resources, and the
//! fibre-decohered Werner state.

use crate::qmat::{c64, eigh, partial_trace, C64, CMatrix, QmatError, SubsystemDims};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// Hermiticity / trace tolerance for density-matrix validation.
pub const STATE_TOL: f64 = 1e-10;
/// Numerical positive-semidefiniteness floor.
pub const PSD_FLOOR: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum StateError {
    #[error(transparent)]
    Mat(#[from] QmatError),
    #[error("density matrix trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("state vector norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("input does not match the Werner pattern: max deviation {deviation:.3e}")]
    NotWerner { deviation: f64 },
    #[error("malformed state document: {0}")]
    BadDocument(String),
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Validated density matrix with its subsystem split.
#[derive(Debug, Clone)]
pub struct QState {
    mat: CMatrix,
    dims: SubsystemDims,
    purity_cache: OnceLock<f64>,
}

impl QState {
    /// Validates Hermiticity, unit trace and numerical positivity.
    pub fn new(mat: CMatrix, dims: SubsystemDims) -> Result<Self> {
        dims.check_matrix(&mat)?;
        mat.ensure_hermitian(STATE_TOL)?;
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(StateError::TraceNotOne { trace: trace.re });
        }
        let eig = eigh(&mat)?;
        let min_eigenvalue = eig.values.first().copied().unwrap_or(0.0);
        if min_eigenvalue < PSD_FLOOR {
            return Err(StateError::NotPsd { min_eigenvalue });
        }
        Ok(Self { mat, dims, purity_cache: OnceLock::new() })
    }

    /// Single-subsystem state of dimension d.
    pub fn single(mat: CMatrix) -> Result<Self> {
        let d = mat.rows();
        Self::new(mat, SubsystemDims::new(vec![d])?)
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// tr(rho^2), cached after the first call.
    pub fn purity(&self) -> f64 {
        *self.purity_cache.get_or_init(|| {
            let mut acc = 0.0;
            // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho.
            for z in self.mat.entries() {
                acc += z.norm_sqr();
            }
            acc
        })
    }

    /// Reduced state over the kept subsystems.
    pub fn marginal(&self, keep: &[usize]) -> Result<QState> {
        let reduced = partial_trace(&self.mat, &self.dims, keep)?;
        let dims = SubsystemDims::new(keep.iter().map(|&i| self.dims.get(i)).collect())?;
        QState::new(reduced, dims)
    }

    pub fn to_document(&self) -> StateDocument {
        StateDocument::from_matrix(&self.mat, Some(self.dims.dims().to_vec()))
    }

    pub fn from_document(doc: &StateDocument) -> Result<Self> {
        let mat = doc.to_matrix()?;
        let dims = match &doc.dims {
            Some(d) => SubsystemDims::new(d.clone())?,
            None => SubsystemDims::new(vec![mat.rows()])?,
        };
        Self::new(mat, dims)
    }
}

/// JSON document for a matrix: row-major real and imaginary parts.
///
/// Round-trips exactly at full double precision.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl StateDocument {
    pub fn from_matrix(m: &CMatrix, dims: Option<Vec<usize>>) -> Self {
        let re = (0..m.rows())
            .map(|r| (0..m.cols()).map(|c| m.get(r, c).re).collect())
            .collect();
        let im = (0..m.rows())
            .map(|r| (0..m.cols()).map(|c| m.get(r, c).im).collect())
            .collect();
        Self { dims, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.re.len();
        if rows == 0 || self.im.len() != rows {
            return Err(StateError::BadDocument("re/im row counts differ or empty".into()));
        }
        let cols = self.re[0].len();
        for (r, i) in self.re.iter().zip(&self.im) {
            if r.len() != cols || i.len() != cols {
                return Err(StateError::BadDocument("ragged rows".into()));
            }
        }
        Ok(CMatrix::from_fn(rows, cols, |r, c| c64(self.re[r][c], self.im[r][c])))
    }
}

/// JSON document for an amplitude vector: parallel real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VectorDocument {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl VectorDocument {
    pub fn from_amplitudes(amps: &[C64]) -> Self {
        Self { re: amps.iter().map(|a| a.re).collect(), im: amps.iter().map(|a| a.im).collect() }
    }

    pub fn to_amplitudes(&self) -> Result<Vec<C64>> {
        if self.re.len() != self.im.len() {
            return Err(StateError::BadDocument("re/im lengths differ".into()));
        }
        Ok(self.re.iter().zip(&self.im).map(|(&r, &i)| c64(r, i)).collect())
    }
}

/// Pure state as an amplitude vector over a named basis.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: Vec<C64>,
    basis_label: String,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>, basis_label: impl Into<String>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(StateError::NotNormalized { norm });
        }
        Ok(Self { amplitudes, basis_label: basis_label.into() })
    }

    /// Normalizes the given amplitudes (rejects the zero vector).
    pub fn normalized(amplitudes: Vec<C64>, basis_label: impl Into<String>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(StateError::NotNormalized { norm });
        }
        let amps = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self { amplitudes: amps, basis_label: basis_label.into() })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    /// <self|other>.
    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |<self|other>|^2.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.overlap(other).norm_sqr()
    }

    /// |psi><psi| as a matrix.
    pub fn projector(&self) -> CMatrix {
        CMatrix::projector_from_vec(&self.amplitudes)
    }

    /// Density matrix with a single-subsystem annotation.
    pub fn density(&self) -> QState {
        QState::single(self.projector()).expect("unit vector projector is a valid state")
    }
}

/// Uniform-overlap element of the mutually unbiased partner basis:
/// (1/sqrt d) sum_k |a_k>, the d-dimensional analogue of |+>.
pub fn mub_b0(d: usize) -> Result<PureState> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall(d));
    }
    let a = 1.0 / (d as f64).sqrt();
    PureState::new(vec![c64(a, 0.0); d], "computational")
}

/// Column `j` of the d-dimensional discrete Fourier transform. Column 0 is
/// [`mub_b0`]; every column has overlap magnitude 1/sqrt d with each
/// computational basis vector.
pub fn fourier_column(d: usize, j: usize) -> Result<PureState> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall(d));
    }
    let a = 1.0 / (d as f64).sqrt();
    let amps = (0..d)
        .map(|k| C64::from_polar(a, 2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64))
        .collect();
    PureState::new(amps, "computational")
}

/// Bell-diagonal two-qubit state (1/4)[1 + sum_i c_i sigma_i x sigma_i].
pub fn bell_diagonal(c1: f64, c2: f64, c3: f64) -> Result<QState> {
    for (name, v) in [("c1", c1), ("c2", c2), ("c3", c3)] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(StateError::OutOfRange { name, value: v, range: "[-1, 1]" });
        }
    }
    let mut m = CMatrix::identity(4);
    for (c, s) in [
        (c1, CMatrix::pauli_x()),
        (c2, CMatrix::pauli_y()),
        (c3, CMatrix::pauli_z()),
    ] {
        m = &m + &s.tensor(&s).scale(c64(c, 0.0));
    }
    QState::new(m.scale(c64(0.25, 0.0)), SubsystemDims::new(vec![2, 2])?)
}

/// Singlet amplitude vector (|01> - |10>)/sqrt 2.
pub fn singlet_vector() -> Vec<C64> {
    let s = 1.0 / 2f64.sqrt();
    vec![c64(0.0, 0.0), c64(s, 0.0), c64(-s, 0.0), c64(0.0, 0.0)]
}

/// Werner state z |psi-><psi-| + (1-z)/4 * 1_4.
pub fn werner(z: f64) -> Result<QState> {
    if !(0.0..=1.0).contains(&z) {
        return Err(StateError::OutOfRange { name: "z", value: z, range: "[0, 1]" });
    }
    // Same matrix as bell_diagonal(-z, -z, -z).
    let singlet = CMatrix::projector_from_vec(&singlet_vector());
    let m = &singlet.scale(c64(z, 0.0)) + &CMatrix::identity(4).scale(c64((1.0 - z) / 4.0, 0.0));
    QState::new(m, SubsystemDims::new(vec![2, 2])?)
}

/// Werner state after a decoherent optical fibre with phase spread `dphi`:
/// the diagonal is untouched, the central coherences pick up exp(-4 dphi^2).
///
/// The channel is defined on Werner inputs only; anything else is rejected
/// after a pattern check. The singlet fraction is read off the (|01>,|01>)
/// diagonal entry, which equals (z+1)/4.
pub fn fiber_decohere(w: &QState, dphi: f64) -> Result<QState> {
    if dphi < 0.0 {
        return Err(StateError::OutOfRange { name: "dphi", value: dphi, range: "[0, inf)" });
    }
    let m = w.mat();
    if m.dim() != 4 {
        return Err(StateError::NotWerner { deviation: f64::INFINITY });
    }
    let z = 4.0 * m.get(1, 1).re - 1.0;
    if !(-STATE_TOL..=1.0 + STATE_TOL).contains(&z) {
        return Err(StateError::NotWerner { deviation: z });
    }
    let z = z.clamp(0.0, 1.0);
    let reference = werner(z)?;
    let deviation = m.max_abs_diff(reference.mat());
    if deviation > STATE_TOL {
        return Err(StateError::NotWerner { deviation });
    }

    // exp(-4 dphi^2) underflows to exactly 0 in the telecom regime (dphi
    // of order 200 radians); double precision is kept deliberately.
    let damp = (-4.0 * dphi * dphi).exp();
    let lo = (1.0 - z) / 4.0;
    let hi = (1.0 + z) / 4.0;
    let off = -0.5 * z * damp;
    let out = CMatrix::from_fn(4, 4, |r, c| match (r, c) {
        (0, 0) | (3, 3) => c64(lo, 0.0),
        (1, 1) | (2, 2) => c64(hi, 0.0),
        (1, 2) | (2, 1) => c64(off, 0.0),
        _ => c64(0.0, 0.0),
    });
    QState::new(out, SubsystemDims::new(vec![2, 2])?)
}

/// Haar-style random unit vector, deterministic per seed.
pub fn random_pure(d: usize, seed: u64) -> Result<PureState> {
    if d < 2 {
        return Err(StateError::DimensionTooSmall(d));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let amps: Vec<C64> = (0..d)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c64(re, im)
        })
        .collect();
    PureState::normalized(amps, "computational")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::eigh;

    #[test]
    fn mub_b0_is_plus_state_for_qubits() {
        let b0 = mub_b0(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((b0.amplitudes()[0] - c64(s, 0.0)).norm() < 1e-15);
        assert!((b0.amplitudes()[1] - c64(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mub_b0_amplitudes_for_d4() {
        let b0 = mub_b0(4).unwrap();
        for a in b0.amplitudes() {
            assert!((a - c64(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn mub_b0_overlaps_are_uniform_for_d3() {
        let b0 = mub_b0(3).unwrap();
        for k in 0..3 {
            let mut basis = vec![c64(0.0, 0.0); 3];
            basis[k] = c64(1.0, 0.0);
            let e_k = PureState::new(basis, "computational").unwrap();
            assert!((e_k.overlap(&b0).norm() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn mub_b0_rejects_small_dimension() {
        assert!(mub_b0(1).is_err());
    }

    #[test]
    fn fourier_columns_are_unbiased_and_start_at_b0() {
        let c0 = fourier_column(4, 0).unwrap();
        let b0 = mub_b0(4).unwrap();
        assert!((c0.overlap(&b0).norm() - 1.0).abs() < 1e-14);
        let c2 = fourier_column(4, 2).unwrap();
        for amp in c2.amplitudes() {
            assert!((amp.norm() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn bell_diagonal_all_minus_one_is_singlet() {
        let got = bell_diagonal(-1.0, -1.0, -1.0).unwrap();
        let want = CMatrix::projector_from_vec(&singlet_vector());
        assert!(got.mat().approx_eq(&want, 1e-14));
    }

    #[test]
    fn bell_diagonal_zero_is_maximally_mixed() {
        let got = bell_diagonal(0.0, 0.0, 0.0).unwrap();
        assert!(got.mat().approx_eq(&CMatrix::identity(4).scale(c64(0.25, 0.0)), 1e-15));
    }

    #[test]
    fn bell_diagonal_all_plus_one_violates_positivity() {
        // Oracle: eigendecompose the raw matrix and confirm a negative
        // eigenvalue, then check the constructor reports it.
        let mut m = CMatrix::identity(4);
        for s in [CMatrix::pauli_x(), CMatrix::pauli_y(), CMatrix::pauli_z()] {
            m = &m + &s.tensor(&s);
        }
        let m = m.scale(c64(0.25, 0.0));
        let min_eig = eigh(&m).unwrap().values[0];
        assert!(min_eig < -0.4);

        match bell_diagonal(1.0, 1.0, 1.0) {
            Err(StateError::NotPsd { min_eigenvalue }) => {
                assert!((min_eigenvalue - min_eig).abs() < 1e-12)
            }
            other => panic!("expected positivity failure, got {other:?}"),
        }
    }

    #[test]
    fn werner_limits() {
        let singlet = CMatrix::projector_from_vec(&singlet_vector());
        assert!(werner(1.0).unwrap().mat().approx_eq(&singlet, 1e-15));
        assert!(werner(0.0)
            .unwrap()
            .mat()
            .approx_eq(&CMatrix::identity(4).scale(c64(0.25, 0.0)), 1e-15));
        assert!(werner(1.1).is_err());
        assert!(werner(-0.1).is_err());
    }

    #[test]
    fn werner_purity_matches_closed_form() {
        // (1/4)(1 + 3 z^2) evaluated at z = 0.4 is the oracle.
        let z: f64 = 0.4;
        let want = 0.25 * (1.0 + 3.0 * z * z);
        assert!((want - 0.37).abs() < 1e-15);
        assert!((werner(z).unwrap().purity() - want).abs() < 1e-14);
    }

    #[test]
    fn werner_equals_bell_diagonal_with_negated_parameters() {
        for z in [0.0, 0.3, 1.0] {
            let w = werner(z).unwrap();
            let b = bell_diagonal(-z, -z, -z).unwrap();
            assert!(w.mat().approx_eq(b.mat(), 1e-14));
        }
    }

    #[test]
    fn fiber_with_zero_spread_is_identity_channel() {
        let w = werner(0.7).unwrap();
        let out = fiber_decohere(&w, 0.0).unwrap();
        assert!(out.mat().approx_eq(w.mat(), 1e-14));
    }

    #[test]
    fn fiber_purity_matches_closed_form_in_underflow_regime() {
        // (1/4)[1 + (1 + 2 exp(-8 dphi^2)) z^2] at z = 0.4, dphi = 200.
        let z: f64 = 0.4;
        let dphi: f64 = 200.0;
        let damp = (-8.0 * dphi * dphi).exp();
        let want = 0.25 * (1.0 + (1.0 + 2.0 * damp) * z * z);
        assert!((want - 0.29).abs() < 1e-15);
        let out = fiber_decohere(&werner(z).unwrap(), dphi).unwrap();
        assert!((out.purity() - want).abs() < 1e-14);
        // The coherence -(z/2) exp(-4 dphi^2) underflows to exactly zero.
        assert_eq!(out.mat().get(1, 2).re, 0.0);
    }

    #[test]
    fn fiber_rejects_non_werner_input() {
        let bd = bell_diagonal(-0.3, -0.5, -0.1).unwrap();
        assert!(matches!(fiber_decohere(&bd, 1.0), Err(StateError::NotWerner { .. })));
    }

    #[test]
    fn fiber_strictly_decreases_purity() {
        for i in 1..=10 {
            let z = i as f64 / 10.0;
            for dphi in [0.5, 1.0, 5.0] {
                let w = werner(z).unwrap();
                let out = fiber_decohere(&w, dphi).unwrap();
                assert!(out.purity() < w.purity(), "z={z} dphi={dphi}");
            }
        }
    }

    #[test]
    fn random_pure_is_normalized_and_deterministic() {
        let a = random_pure(5, 42).unwrap();
        let norm: f64 = a.amplitudes().iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let b = random_pure(5, 42).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn random_pure_first_component_mass_averages_to_half() {
        // Monte Carlo over the generator itself: Haar mean of |a_0|^2 is 1/d.
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|s| random_pure(2, s as u64).unwrap().amplitudes()[0].norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn constructors_produce_valid_states() {
        // QState::new re-runs the full invariant gate, so reconstructing
        // each output must succeed.
        for q in [
            bell_diagonal(-0.2, 0.3, -0.4).unwrap(),
            werner(0.35).unwrap(),
            fiber_decohere(&werner(0.9).unwrap(), 2.0).unwrap(),
        ] {
            QState::new(q.mat().clone(), q.dims().clone()).unwrap();
        }
    }

    #[test]
    fn json_document_round_trips_exactly() {
        let q = bell_diagonal(-0.5, 0.123456789012345, -0.3).unwrap();
        let json = serde_json::to_string(&q.to_document()).unwrap();
        let doc: StateDocument = serde_json::from_str(&json).unwrap();
        let back = QState::from_document(&doc).unwrap();
        assert!(back.mat().approx_eq(q.mat(), 0.0));
        assert_eq!(back.dims(), q.dims());
    }

    #[test]
    fn marginals_of_werner_are_maximally_mixed() {
        let w = werner(0.6).unwrap();
        let half = CMatrix::identity(2).scale(c64(0.5, 0.0));
        assert!(w.marginal(&[0]).unwrap().mat().approx_eq(&half, 1e-14));
        assert!(w.marginal(&[1]).unwrap().mat().approx_eq(&half, 1e-14));
    }
}
