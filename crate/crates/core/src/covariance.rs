//! Joint covariance of the network's signal variables and the Gaussian
//! information measures evaluated on it.
//!
//! All variables are circularly symmetric complex Gaussian, so the
//! differential entropy of a block `A` given `C` is
//! `log2 det(πe Σ_{A|C})` with no one-half factor. Every quantity is in bits.
//!
//! Conditional covariances are Schur complements obtained by partial
//! Cholesky elimination of the conditioning block. A conditioning block
//! whose pivot-based condition estimate exceeds `1e14` is rejected with
//! [`CovarianceError::SingularConditioning`]; nothing is diagonally loaded,
//! so accepted blocks give exact Schur complements up to rounding.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{LinalgError, Lower};

/// Relative tolerance for the Hermitian check in [`CovarianceMap::validate`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest admissible `λ_min / λ_max`.
pub const PSD_TOL: f64 = 1e-9;

/// Largest number of variables a map can hold (sets are `u128` masks).
pub const MAX_VARIABLES: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CovarianceError {
    #[error("conditioning block is numerically singular (condition estimate {condition:e})")]
    SingularConditioning { condition: f64 },
    #[error("conditional covariance has non-positive determinant")]
    NonPositiveDeterminant,
    #[error("variable {0} is not present in the covariance map")]
    UnknownVariable(VariableId),
    #[error("variable sets must be pairwise disjoint")]
    OverlappingSets,
    #[error("the target variable set is empty")]
    EmptySet,
    #[error("matrix is {rows}x{cols} but {vars} variables were given")]
    DimensionMismatch { rows: usize, cols: usize, vars: usize },
    #[error("variable {0} appears twice")]
    DuplicateVariable(VariableId),
    #[error("at most {MAX_VARIABLES} variables are supported, got {0}")]
    TooManyVariables(usize),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {min:e}, max {max:e})")]
    NotPositiveSemidefinite { min: f64, max: f64 },
}

impl From<LinalgError> for CovarianceError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular { condition } => Self::SingularConditioning { condition },
            LinalgError::NonPositive => Self::NonPositiveDeterminant,
        }
    }
}

/// One signal variable of the network. Relay indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableId {
    /// Source input `X`.
    SourceInput,
    /// Input actually transmitted by relay `k`.
    RelayInput(usize),
    /// Decode-forward codeword of relay `k` that the source superposes on
    /// even while relay `k` compresses. Only present under selective coding.
    DfCodeword(usize),
    /// Relay observation `Z_k`.
    RelayOutput(usize),
    /// Compressed relay observation `Ẑ_k = Z_k + N̂_k`.
    CompressedOutput(usize),
    /// Destination observation `Y_1`.
    DestOutput,
}

impl VariableId {
    /// Relay index for relay-specific variables.
    pub fn relay(&self) -> Option<usize> {
        match *self {
            Self::RelayInput(k) | Self::DfCodeword(k) | Self::RelayOutput(k) | Self::CompressedOutput(k) => Some(k),
            Self::SourceInput | Self::DestOutput => None,
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SourceInput => write!(f, "X"),
            Self::RelayInput(k) => write!(f, "X{k}"),
            Self::DfCodeword(k) => write!(f, "X{k}(df)"),
            Self::RelayOutput(k) => write!(f, "Z{k}"),
            Self::CompressedOutput(k) => write!(f, "Zhat{k}"),
            Self::DestOutput => write!(f, "Y1"),
        }
    }
}

/// Set of row/column indices of a [`CovarianceMap`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct IndexSet(u128);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn single(i: usize) -> Self {
        IndexSet(1u128 << i)
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u128 << i;
    }

    pub fn with(self, i: usize) -> Self {
        IndexSet(self.0 | (1u128 << i))
    }

    pub fn union(self, other: IndexSet) -> Self {
        IndexSet(self.0 | other.0)
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_disjoint(self, other: IndexSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = IndexSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Hermitian joint covariance with a variable → row/column index.
#[derive(Debug, Clone)]
pub struct CovarianceMap {
    matrix: DMatrix<Complex64>,
    vars: Vec<VariableId>,
    index: HashMap<VariableId, usize>,
}

impl CovarianceMap {
    /// Builds a map and checks every invariant: square, one row per
    /// variable, no duplicates, Hermitian, positive semidefinite.
    pub fn new(matrix: DMatrix<Complex64>, vars: Vec<VariableId>) -> Result<Self, CovarianceError> {
        let map = Self::from_parts(matrix, vars)?;
        map.validate()?;
        Ok(map)
    }

    /// Builds a map without the Hermitian/PSD checks. Used when the matrix
    /// is constructed as `A Aᴴ`, which satisfies both by construction.
    pub(crate) fn from_parts(matrix: DMatrix<Complex64>, vars: Vec<VariableId>) -> Result<Self, CovarianceError> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows != vars.len() {
            return Err(CovarianceError::DimensionMismatch { rows, cols, vars: vars.len() });
        }
        if vars.len() > MAX_VARIABLES {
            return Err(CovarianceError::TooManyVariables(vars.len()));
        }
        let mut index = HashMap::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            if index.insert(*v, i).is_some() {
                return Err(CovarianceError::DuplicateVariable(*v));
            }
        }
        Ok(Self { matrix, vars, index })
    }

    /// Re-checks the Hermitian and PSD invariants.
    pub fn validate(&self) -> Result<(), CovarianceError> {
        let n = self.dim();
        let scale = self.matrix.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        if worst > HERMITIAN_TOL * scale {
            return Err(CovarianceError::NotHermitian(worst / scale));
        }
        if n == 0 {
            return Ok(());
        }
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
            return Err(CovarianceError::NotPositiveSemidefinite { min, max });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.vars
    }

    pub fn index_of(&self, v: VariableId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn contains(&self, v: VariableId) -> bool {
        self.index.contains_key(&v)
    }

    /// Covariance entry between two variables.
    pub fn entry(&self, a: VariableId, b: VariableId) -> Option<Complex64> {
        Some(self.matrix[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Resolves variables to an index set.
    pub fn set_of(&self, vars: &[VariableId]) -> Result<IndexSet, CovarianceError> {
        vars.iter()
            .map(|v| self.index_of(*v).ok_or(CovarianceError::UnknownVariable(*v)))
            .collect::<Result<IndexSet, _>>()
    }

    /// Adds `delta` to one diagonal entry.
    pub(crate) fn shift_diagonal(&mut self, i: usize, delta: f64) {
        self.matrix[(i, i)] += Complex64::new(delta, 0.0);
    }

    /// Schur complement `Σ_A − Σ_AC Σ_C⁻¹ Σ_CA`; `C = ∅` returns `Σ_A`.
    pub fn conditional_covariance(&self, a: &[VariableId], c: &[VariableId]) -> Result<DMatrix<Complex64>, CovarianceError> {
        let (a, c) = (self.set_of(a)?, self.set_of(c)?);
        let m = self.conditional_block(a, c)?;
        let n = m.dim();
        Ok(DMatrix::from_column_slice(n, n, &m.to_full_column_major()))
    }

    /// `h(A | C)` in bits.
    pub fn conditional_entropy(&self, a: &[VariableId], c: &[VariableId]) -> Result<f64, CovarianceError> {
        self.entropy(self.set_of(a)?, self.set_of(c)?)
    }

    /// `I(A; B | C)` in bits, clamped at zero from below.
    pub fn conditional_mi(&self, a: &[VariableId], b: &[VariableId], c: &[VariableId]) -> Result<f64, CovarianceError> {
        let (a, b, c) = (self.set_of(a)?, self.set_of(b)?, self.set_of(c)?);
        if a.is_empty() || b.is_empty() {
            return Err(CovarianceError::EmptySet);
        }
        self.mi(a, b, c)
    }

    fn conditional_block(&self, a: IndexSet, c: IndexSet) -> Result<Lower, CovarianceError> {
        if a.is_empty() {
            return Err(CovarianceError::EmptySet);
        }
        if !a.is_disjoint(c) {
            return Err(CovarianceError::OverlappingSets);
        }
        let order: Vec<usize> = c.iter().chain(a.iter()).collect();
        let mut w = Lower::gather(self.matrix.as_slice(), self.dim(), &order);
        w.eliminate(0, c.len(), true)?;
        Ok(w.trailing(c.len()))
    }

    /// Index-level `h(A | C)` in bits.
    pub fn entropy(&self, a: IndexSet, c: IndexSet) -> Result<f64, CovarianceError> {
        let block = self.conditional_block(a, c)?;
        let ld = block.log_det()?;
        Ok((a.len() as f64 * (PI * std::f64::consts::E).ln() + ld) / LN_2)
    }

    /// Index-level `I(A; B | C)` in bits as `h(A|C) − h(A|B,C)`, both read
    /// off Schur complements. Empty `A` or `B` gives zero.
    pub fn mi(&self, a: IndexSet, b: IndexSet, c: IndexSet) -> Result<f64, CovarianceError> {
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        if !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
            return Err(CovarianceError::OverlappingSets);
        }
        let (nc, nb) = (c.len(), b.len());
        let order: Vec<usize> = c.iter().chain(b.iter()).chain(a.iter()).collect();
        let mut w = Lower::gather(self.matrix.as_slice(), self.dim(), &order);
        // Σ_{BA|C}
        w.eliminate(0, nc, true)?;
        let h_a_given_c = w.trailing_log_det(nc + nb)?;
        // Σ_{A|BC}
        w.eliminate(nc, nc + nb, true)?;
        let h_a_given_bc = w.trailing_log_det(nc + nb)?;
        Ok(((h_a_given_c - h_a_given_bc) / LN_2).max(0.0))
    }
}
