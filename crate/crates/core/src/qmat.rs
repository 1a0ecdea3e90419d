//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Every operator and state in this crate travels as a [`CMatrix`]:
//! observables, projectors, unitaries and density matrices alike. Storage is
//! row-major and dimensions stay tiny (a protocol instance is a handful of
//! qubits), so all routines favour exactness over scale. Partial traces walk
//! multi-indices directly instead of building permutation matrices, and the
//! matrix exponential goes through a Hermitian eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// Shorthand for a complex number.
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest total Hilbert-space dimension a single matrix may carry.
/// Protocol instances are tiny; anything bigger is a usage error.
pub const MAX_DIM: usize = 4096;

/// Absolute tolerance for Hermiticity checks on operator inputs.
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QmatError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |m - m\u{2020}| entry is {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("subsystem dims {dims:?} do not multiply to matrix dimension {dim}")]
    BadSubsystemDims { dims: Vec<usize>, dim: usize },
    #[error("subsystem index {index} out of range for {count} subsystems")]
    BadSubsystemIndex { index: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, QmatError>;

/// Dense complex matrix in row-major order.
///
/// Values are immutable once constructed; all arithmetic returns fresh
/// matrices, so sharing across threads is safe.
#[derive(Clone)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self.get(r, c);
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= MAX_DIM * MAX_DIM, "matrix exceeds dimension cap");
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(QmatError::DimMismatch("ragged rows".into()));
        }
        Ok(Self { rows: nr, cols: nc, data: rows.into_iter().flatten().collect() })
    }

    /// Column vector from a slice of amplitudes.
    pub fn col_vector(amps: &[C64]) -> Self {
        Self { rows: amps.len(), cols: 1, data: amps.to_vec() }
    }

    /// Rank-1 projector |v><v| from an amplitude vector (not necessarily normalized).
    pub fn projector_from_vec(amps: &[C64]) -> Self {
        let n = amps.len();
        Self::from_fn(n, n, |r, c| amps[r] * amps[c].conj())
    }

    /// Computational-basis projector |k><k| in dimension `d`.
    pub fn basis_projector(d: usize, k: usize) -> Self {
        assert!(k < d, "basis index out of range");
        let mut m = Self::zeros(d, d);
        m.data[k * d + k] = C64::new(1.0, 0.0);
        m
    }

    pub fn pauli_x() -> Self {
        Self::from_rows(vec![
            vec![c64(0.0, 0.0), c64(1.0, 0.0)],
            vec![c64(1.0, 0.0), c64(0.0, 0.0)],
        ])
        .expect("static")
    }

    pub fn pauli_y() -> Self {
        Self::from_rows(vec![
            vec![c64(0.0, 0.0), c64(0.0, -1.0)],
            vec![c64(0.0, 1.0), c64(0.0, 0.0)],
        ])
        .expect("static")
    }

    pub fn pauli_z() -> Self {
        Self::from_rows(vec![
            vec![c64(1.0, 0.0), c64(0.0, 0.0)],
            vec![c64(0.0, 0.0), c64(-1.0, 0.0)],
        ])
        .expect("static")
    }

    /// Pauli vector contraction n.sigma for a real 3-vector.
    pub fn pauli_dot(n: [f64; 3]) -> Self {
        let sx = Self::pauli_x().scale(c64(n[0], 0.0));
        let sy = Self::pauli_y().scale(c64(n[1], 0.0));
        let sz = Self::pauli_z().scale(c64(n[2], 0.0));
        &(&sx + &sy) + &sz
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Dimension of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * z).collect() }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise difference |a - b|.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Entrywise equality within an explicit absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.rows, self.cols) == (other.rows, other.cols) && self.max_abs_diff(other) <= tol
    }

    /// Max entry magnitude of m - m^dagger.
    pub fn hermiticity_deviation(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                dev = dev.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        dev
    }

    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(QmatError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let deviation = self.hermiticity_deviation();
        if deviation > tol {
            return Err(QmatError::NotHermitian { deviation });
        }
        Ok(())
    }

    /// Kronecker product; `self` indexes the slower-varying (leftmost) subsystem.
    pub fn tensor(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        assert!(rows <= MAX_DIM && cols <= MAX_DIM, "tensor product exceeds dimension cap");
        let mut data = vec![C64::new(0.0, 0.0); rows * cols];
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        data[(r1 * other.rows + r2) * cols + (c1 * other.cols + c2)] =
                            a * other.get(r2, c2);
                    }
                }
            }
        }
        Self { rows, cols, data }
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch in mul");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }
}

/// Ordered list of subsystem dimensions annotating a composite matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemDims(Vec<usize>);

impl SubsystemDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(QmatError::BadSubsystemDims { dims, dim: 0 });
        }
        Ok(Self(dims))
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    /// Concatenation, matching a tensor product of the annotated matrices.
    pub fn compose(&self, other: &Self) -> Self {
        let mut dims = self.0.clone();
        dims.extend_from_slice(&other.0);
        Self(dims)
    }

    pub fn check_matrix(&self, m: &CMatrix) -> Result<()> {
        if !m.is_square() {
            return Err(QmatError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        if self.total() != m.dim() {
            return Err(QmatError::BadSubsystemDims { dims: self.0.clone(), dim: m.dim() });
        }
        Ok(())
    }
}

/// Reduced matrix over the `keep` subsystems, tracing out the rest.
///
/// `keep` may be empty, in which case the result is the 1x1 matrix `[tr m]`.
/// Kept subsystems stay in their original order. Works by direct multi-index
/// arithmetic: O(D^2) time, no intermediate permutation matrices.
pub fn partial_trace(m: &CMatrix, dims: &SubsystemDims, keep: &[usize]) -> Result<CMatrix> {
    dims.check_matrix(m)?;
    let n = dims.len();
    for &k in keep {
        if k >= n {
            return Err(QmatError::BadSubsystemIndex { index: k, count: n });
        }
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let traced: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();

    // Row-major strides of each subsystem digit within the full index.
    let mut stride = vec![1usize; n];
    for i in (0..n - 1).rev() {
        stride[i] = stride[i + 1] * dims.get(i + 1);
    }
    let offset = |subs: &[usize], mut x: usize| -> usize {
        let mut off = 0;
        for &s in subs.iter().rev() {
            let d = dims.get(s);
            off += (x % d) * stride[s];
            x /= d;
        }
        off
    };

    let dk: usize = kept.iter().map(|&i| dims.get(i)).product();
    let dt: usize = traced.iter().map(|&i| dims.get(i)).product();
    let full = m.dim();
    let mut out = CMatrix::zeros(dk, dk);
    for rk in 0..dk {
        let ro = offset(&kept, rk);
        for ck in 0..dk {
            let co = offset(&kept, ck);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                let to = offset(&traced, t);
                acc += m.data[(ro + to) * full + (co + to)];
            }
            out.data[rk * dk + ck] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// Column `j` as an amplitude vector.
    pub fn vector(&self, j: usize) -> Vec<C64> {
        (0..self.vectors.rows()).map(|r| self.vectors.get(r, j)).collect()
    }

    /// Rebuilds V f(lambda) V^dagger for a scalar function on the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        CMatrix::from_fn(n, n, |r, c| {
            (0..n)
                .map(|j| self.vectors.get(r, j) * fv[j] * self.vectors.get(c, j).conj())
                .sum()
        })
    }
}

/// Hermitian eigendecomposition (input checked against [`HERMITICITY_TOL`]).
pub fn eigh(m: &CMatrix) -> Result<HermitianEigen> {
    m.ensure_hermitian(HERMITICITY_TOL)?;
    let n = m.dim();
    // Symmetrize first so round-off in the input cannot leak into nalgebra's
    // tridiagonalization.
    let dm = DMatrix::from_fn(n, n, |r, c| (m.get(r, c) + m.get(c, r).conj()) * 0.5);
    let se = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&j| se.eigenvalues[j]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Unitary exp(i * scale * h) of a Hermitian generator, via eigendecomposition.
pub fn expm_hermitian_generator(h: &CMatrix, scale: f64) -> Result<CMatrix> {
    let eig = eigh(h)?;
    Ok(eig.map_spectrum(|l| C64::from_polar(1.0, scale * l)))
}

fn ensure_same_square(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(QmatError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !b.is_square() {
        return Err(QmatError::NotSquare { rows: b.rows(), cols: b.cols() });
    }
    if a.dim() != b.dim() {
        return Err(QmatError::DimMismatch(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// ab - ba.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_same_square(a, b)?;
    Ok(&(a * b) - &(b * a))
}

/// ab + ba.
pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_same_square(a, b)?;
    Ok(&(a * b) + &(b * a))
}

/// tr(obs * rho), computed without forming the product.
pub fn expectation(obs: &CMatrix, rho: &CMatrix) -> Result<C64> {
    ensure_same_square(obs, rho)?;
    let n = obs.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += obs.get(i, j) * rho.get(j, i);
        }
    }
    Ok(acc)
}
