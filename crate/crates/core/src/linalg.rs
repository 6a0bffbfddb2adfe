//! Dense real matrix kernel: norms, definiteness, eigenvalues, Gershgorin
//! discs and limit oracles for matrix powers.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance, relative to the matrix ∞-norm.
pub const TOL_SYM: f64 = 1e-9;
/// Eigenvalue threshold for strict definiteness.
pub const TOL_DEF: f64 = 1e-9;
/// Distance at which an eigenvalue counts as equal to one.
pub const TOL_EIG: f64 = 1e-6;
/// Increment threshold for power iteration.
pub const TOL_STEP: f64 = 1e-12;
/// ∞-norm below which a limit is reported as the zero matrix.
pub const TOL_ZERO_MAT: f64 = 1e-8;
/// Entry magnitude above which an iteration is declared divergent.
pub const OVERFLOW_BOUND: f64 = 1e12;

const SCHUR_MAX_ITER: usize = 100_000;
const SCHUR_EPS_LADDER: [f64; 3] = [f64::EPSILON, 1e-14, 1e-12];

/// Row-major dense real matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, v) in diag.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |a_ij - b_ij|; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.assert_same_shape(other);
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    /// Symmetric within `TOL_SYM` relative to the ∞-norm.
    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let tolerance = TOL_SYM * self.inf_norm();
        let asymmetry = self.asymmetry();
        if asymmetry > tolerance {
            return Err(Error::Asymmetric {
                asymmetry,
                tolerance,
            });
        }
        Ok(())
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self * rhs)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Copy of the `size × size` block whose top-left corner is at
    /// `(row0, col0)`.
    pub fn block(&self, row0: usize, col0: usize, size: usize) -> Self {
        let mut b = Self::zeros(size, size);
        for r in 0..size {
            for c in 0..size {
                b[(r, c)] = self[(row0 + r, col0 + c)];
            }
        }
        b
    }

    pub fn set_block(&mut self, row0: usize, col0: usize, block: &Self) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(row0 + r, col0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    fn assert_same_shape(&self, other: &Self) {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.entries[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.entries[r * self.cols + c]
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;

    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.entries[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.assert_same_shape(rhs);
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.assert_same_shape(rhs);
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DenseMatrix) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Dimension("∞-norm of an empty matrix".into()));
    }
    Ok(m.inf_norm())
}

/// Matrix sign function extended with an explicit indefinite outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixSign {
    Positive,
    Negative,
    Zero,
    Indefinite,
}

impl MatrixSign {
    /// `Some(±1 or 0)` for the defined cases, `None` when indefinite.
    pub fn as_int(self) -> Option<i8> {
        match self {
            MatrixSign::Positive => Some(1),
            MatrixSign::Negative => Some(-1),
            MatrixSign::Zero => Some(0),
            MatrixSign::Indefinite => None,
        }
    }

    pub fn is_definite(self) -> bool {
        matches!(self, MatrixSign::Positive | MatrixSign::Negative)
    }
}

fn symmetric_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let a = m.to_nalgebra();
    let sym = (&a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().collect()
}

pub fn matrix_sign(m: &DenseMatrix, tol_def: f64) -> Result<MatrixSign> {
    m.check_symmetric()?;
    if m.entries().iter().all(|v| v.abs() <= tol_def) {
        return Ok(MatrixSign::Zero);
    }
    let eig = symmetric_eigenvalues(m);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if min > tol_def {
        MatrixSign::Positive
    } else if max < -tol_def {
        MatrixSign::Negative
    } else {
        MatrixSign::Indefinite
    })
}

pub fn is_positive_definite(m: &DenseMatrix) -> Result<bool> {
    Ok(matrix_sign(m, TOL_DEF)? == MatrixSign::Positive)
}

pub fn is_negative_definite(m: &DenseMatrix) -> Result<bool> {
    Ok(matrix_sign(m, TOL_DEF)? == MatrixSign::Negative)
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues with |λ − 1| ≤ tol_eig.
    pub count_near_one: usize,
    pub max_modulus: f64,
    /// Largest modulus among eigenvalues not counted as near one.
    pub max_modulus_excluding_near_one: f64,
}

impl SpectrumReport {
    pub fn spectral_radius(&self) -> f64 {
        self.max_modulus
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn min_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, z| m.min(z.re))
    }
}

/// All eigenvalues of a general real square matrix (real Schur form).
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues of a non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let a = m.to_nalgebra();
    // Deflation can stall at machine precision on clusters of eigenvalues
    // near zero; each retry relaxes the subdiagonal test.
    for eps in SCHUR_EPS_LADDER {
        if let Some(schur) = a.clone().try_schur(eps, SCHUR_MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::EigenFailure(m.rows()))
}

pub fn spectrum(m: &DenseMatrix, tol_eig: f64) -> Result<SpectrumReport> {
    let eigenvalues = eigenvalues(m)?;
    let one = Complex::new(1.0, 0.0);
    let mut count_near_one = 0;
    let mut max_modulus = 0.0_f64;
    let mut max_rest = 0.0_f64;
    for z in &eigenvalues {
        let modulus = z.norm();
        max_modulus = max_modulus.max(modulus);
        if (z - one).norm() <= tol_eig {
            count_near_one += 1;
        } else {
            max_rest = max_rest.max(modulus);
        }
    }
    Ok(SpectrumReport {
        eigenvalues,
        count_near_one,
        max_modulus,
        max_modulus_excluding_near_one: max_rest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, z: Complex<f64>, tol: f64) -> bool {
        (z - Complex::new(self.center, 0.0)).norm() <= self.radius + tol
    }
}

/// One disc per row: diagonal entry as center, off-diagonal absolute row sum
/// as radius.
pub fn gershgorin_discs(m: &DenseMatrix) -> Result<Vec<Disc>> {
    if !m.is_square() {
        return Err(Error::Dimension("Gershgorin discs need a square matrix".into()));
    }
    Ok((0..m.rows())
        .map(|i| Disc {
            center: m[(i, i)],
            radius: m
                .row(i)
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.abs())
                .sum(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitStatus {
    ConvergedToMatrix,
    ConvergedToZero,
    Diverged,
    Undecided,
}

impl LimitStatus {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            LimitStatus::ConvergedToMatrix | LimitStatus::ConvergedToZero
        )
    }
}

#[derive(Debug, Clone)]
pub struct ProductLimitResult {
    pub status: LimitStatus,
    /// Present iff the sequence converged.
    pub limit: Option<DenseMatrix>,
    pub iterations_used: usize,
    /// ∞-norm of the last increment.
    pub final_step_delta: f64,
    /// ∞-norm of every increment, in order.
    pub step_deltas: Vec<f64>,
}

/// Iterates `m^t` by repeated right-multiplication with `m`.
pub fn power_limit(m: &DenseMatrix, max_iter: usize, tol_step: f64) -> Result<ProductLimitResult> {
    if !m.is_square() {
        return Err(Error::Dimension("power_limit needs a square matrix".into()));
    }
    let mut current = m.clone();
    let mut step_deltas = Vec::new();
    let diverged = |p: &DenseMatrix| !p.all_finite() || p.max_abs() > OVERFLOW_BOUND;
    if diverged(&current) {
        return Ok(ProductLimitResult {
            status: LimitStatus::Diverged,
            limit: None,
            iterations_used: 1,
            final_step_delta: f64::INFINITY,
            step_deltas,
        });
    }
    for t in 2..=max_iter.max(2) {
        let next = &current * m;
        if diverged(&next) {
            return Ok(ProductLimitResult {
                status: LimitStatus::Diverged,
                limit: None,
                iterations_used: t,
                final_step_delta: f64::INFINITY,
                step_deltas,
            });
        }
        let delta = (&next - &current).inf_norm();
        step_deltas.push(delta);
        current = next;
        if delta < tol_step {
            let status = if current.inf_norm() <= TOL_ZERO_MAT {
                LimitStatus::ConvergedToZero
            } else {
                LimitStatus::ConvergedToMatrix
            };
            return Ok(ProductLimitResult {
                status,
                limit: Some(current),
                iterations_used: t,
                final_step_delta: delta,
                step_deltas,
            });
        }
    }
    Ok(ProductLimitResult {
        status: LimitStatus::Undecided,
        limit: None,
        iterations_used: max_iter.max(2),
        final_step_delta: step_deltas.last().copied().unwrap_or(f64::INFINITY),
        step_deltas,
    })
}

/// Hypothesis checks and outcome for the powers of a sum `A + B`.
#[derive(Debug, Clone)]
pub struct SumProductReport {
    pub norm_a: f64,
    /// ‖A‖∞ ≤ 1 (within `TOL_EIG`).
    pub norm_bound_holds: bool,
    /// `A^t` converges.
    pub a_limit_exists: bool,
    /// `B^t` converges to the zero matrix.
    pub b_vanishes: bool,
    pub a_limit: ProductLimitResult,
    pub b_limit: ProductLimitResult,
    pub sum: ProductLimitResult,
}

impl SumProductReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.norm_bound_holds && self.a_limit_exists && self.b_vanishes
    }
}

pub fn sum_product_limit(
    a: &DenseMatrix,
    b: &DenseMatrix,
    max_iter: usize,
    tol_step: f64,
) -> Result<SumProductReport> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "sum_product_limit needs equal square matrices, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let norm_a = inf_norm(a)?;
    let a_limit = power_limit(a, max_iter, tol_step)?;
    let b_limit = power_limit(b, max_iter, tol_step)?;
    let sum = power_limit(&(a + b), max_iter, tol_step)?;
    Ok(SumProductReport {
        norm_a,
        norm_bound_holds: norm_a <= 1.0 + TOL_EIG,
        a_limit_exists: a_limit.status.is_converged(),
        b_vanishes: b_limit.status == LimitStatus::ConvergedToZero,
        a_limit,
        b_limit,
        sum,
    })
}
