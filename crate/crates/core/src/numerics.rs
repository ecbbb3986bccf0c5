//! Complex linear-algebra carriers, seeded random streams and the Gaussian
//! tail function shared by every other module.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Errors raised by the numeric primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("argument must be finite, got {0}")]
    NonFinite(f64),
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
}

fn mismatch(expected: impl fmt::Display, found: impl fmt::Display) -> NumericsError {
    NumericsError::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    data: Vec<Complex64>,
}

impl ComplexVector {
    pub fn new(data: Vec<Complex64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        Self {
            data: (0..len).map(f).collect(),
        }
    }

    /// Unit-modulus vector `exp(j * phase_k)`.
    pub fn from_phases(phases: &[f64]) -> Self {
        Self {
            data: phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Inner product `selfᴴ · other`.
    pub fn dot_h(&self, other: &ComplexVector) -> Result<Complex64, NumericsError> {
        self.check_len(other.len())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Bilinear product `selfᵀ · other` (no conjugation).
    pub fn dot(&self, other: &ComplexVector) -> Result<Complex64, NumericsError> {
        self.check_len(other.len())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn conj(&self) -> ComplexVector {
        Self {
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> ComplexVector {
        Self {
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn hadamard(&self, other: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        self.check_len(other.len())?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn try_add(&self, other: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        self.check_len(other.len())?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        self.check_len(other.len())?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `Diag(self)` as a square matrix.
    pub fn diag(&self) -> ComplexMatrix {
        let n = self.len();
        ComplexMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.data[r]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// The vector as an `n × 1` matrix.
    pub fn as_column(&self) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.len(),
            cols: 1,
            data: self.data.clone(),
        }
    }

    fn check_len(&self, other: usize) -> Result<(), NumericsError> {
        if self.len() != other {
            return Err(mismatch(
                format!("length {}", self.len()),
                format!("length {other}"),
            ));
        }
        Ok(())
    }
}

impl Index<usize> for ComplexVector {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.data[i]
    }
}

impl From<Vec<Complex64>> for ComplexVector {
    fn from(data: Vec<Complex64>) -> Self {
        Self::new(data)
    }
}

/// Dense row-major complex matrix. The shape is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(mismatch(
                format!("{} elements for {rows}x{cols}", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks vectors as the columns of a matrix.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self, NumericsError> {
        let rows = columns.first().map_or(0, ComplexVector::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(mismatch(format!("columns of length {rows}"), bad.len()));
        }
        Ok(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> ComplexVector {
        ComplexVector::from_fn(self.rows, |r| self.get(r, c))
    }

    pub fn row(&self, r: usize) -> ComplexVector {
        ComplexVector::new(self.data[r * self.cols..(r + 1) * self.cols].to_vec())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.cols != rhs.rows {
            return Err(mismatch(
                format!("{} rows on the right", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        if self.cols != v.len() {
            return Err(mismatch(
                format!("vector of length {}", self.cols),
                format!("length {}", v.len()),
            ));
        }
        Ok(ComplexVector::from_fn(self.rows, |r| {
            (0..self.cols).map(|c| self.get(r, c) * v[c]).sum()
        }))
    }

    pub fn try_add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Largest elementwise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &ComplexMatrix) -> Result<f64, NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on non-conformable shapes; use [`ComplexMatrix::matmul`] to get a `Result`.
    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("non-conformable matrix product")
    }
}

impl<'a> Add<&'a ComplexVector> for &'a ComplexVector {
    type Output = ComplexVector;

    fn add(self, rhs: &'a ComplexVector) -> ComplexVector {
        self.try_add(rhs).expect("vector length mismatch")
    }
}

impl<'a> Sub<&'a ComplexVector> for &'a ComplexVector {
    type Output = ComplexVector;

    fn sub(self, rhs: &'a ComplexVector) -> ComplexVector {
        self.try_sub(rhs).expect("vector length mismatch")
    }
}

/// Counter-based random stream: one ChaCha8 keystream per `(master_seed, stream_id)`.
///
/// Monte Carlo trials use `stream_id = trial index`, so results do not depend on
/// how trials are scheduled across threads.
#[derive(Debug, Clone)]
pub struct SeededRng {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent stream under the same master seed.
    pub fn fork(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform phase in `[0, 2π)`.
    pub fn uniform_phase(&mut self) -> f64 {
        self.inner.random::<f64>() * std::f64::consts::TAU
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Circularly-symmetric complex Gaussian sample; real and imaginary parts are
/// independent zero-mean normals with the given variance each.
pub fn sample_complex_gaussian(
    rng: &mut SeededRng,
    variance_per_component: f64,
) -> Result<Complex64, NumericsError> {
    if !(variance_per_component > 0.0) || !variance_per_component.is_finite() {
        return Err(NumericsError::NonPositiveVariance(variance_per_component));
    }
    let sd = variance_per_component.sqrt();
    let re = rng.standard_normal() * sd;
    let im = rng.standard_normal() * sd;
    Ok(Complex64::new(re, im))
}

/// Gaussian right-tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> Result<f64, NumericsError> {
    if !x.is_finite() {
        return Err(NumericsError::NonFinite(x));
    }
    Ok(0.5 * libm::erfc(x / std::f64::consts::SQRT_2))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
