//! Discretization of the circle and of frequency space, dense operator
//! arithmetic and the spectral quantities everything else is measured with.
//!
//! A [`FourierOperator`] is a dense complex matrix acting on the truncated
//! Fourier modes `|n| <= N` tensored with `k x k` matrix blocks. Row and
//! column index `(n + N) * k + r` carries mode `n` and block coordinate `r`.
//! Compact operators are modeled through tail norms against the mode
//! projections `P_K` onto `|n| <= K`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use faer::Mat;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{LabError, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Spatial sampling `x_j = 2 pi j / J`, frequency cutoff `N` and the size `k`
/// of the matrix coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CircleGrid {
    samples: usize,
    cutoff: usize,
    block: usize,
}

impl CircleGrid {
    pub fn new(cutoff: usize, samples: usize, block: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(LabError::InvalidGrid("frequency cutoff N must be >= 1".into()));
        }
        if block < 1 {
            return Err(LabError::InvalidGrid("block size k must be >= 1".into()));
        }
        if samples % 2 != 0 {
            return Err(LabError::InvalidGrid(format!("J = {samples} must be even")));
        }
        if samples < 4 * cutoff + 4 {
            return Err(LabError::InvalidGrid(format!(
                "J = {samples} violates the oversampling rule J >= 4N + 4 = {}",
                4 * cutoff + 4
            )));
        }
        Ok(Self { samples, cutoff, block })
    }

    /// Grid with the minimal alias-free sampling `J = 4N + 4`.
    pub fn with_cutoff(cutoff: usize, block: usize) -> Result<Self> {
        Self::new(cutoff, 4 * cutoff + 4, block)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn mode_count(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Dimension `(2N + 1) k` of the truncated space.
    pub fn dim(&self) -> usize {
        self.mode_count() * self.block
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> + Clone {
        let n = self.cutoff as i64;
        -n..=n
    }

    pub fn contains_mode(&self, mode: i64) -> bool {
        mode.unsigned_abs() as usize <= self.cutoff
    }

    /// Flat index of `(mode, block row)`.
    pub fn index(&self, mode: i64, component: usize) -> usize {
        debug_assert!(self.contains_mode(mode) && component < self.block);
        ((mode + self.cutoff as i64) as usize) * self.block + component
    }

    /// Inverse of [`CircleGrid::index`].
    pub fn mode_of(&self, index: usize) -> (i64, usize) {
        let mode = (index / self.block) as i64 - self.cutoff as i64;
        (mode, index % self.block)
    }

    pub fn point(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.samples as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.samples).map(|j| self.point(j)).collect()
    }

    /// Same sampling density rule with a larger cutoff `N + pad`.
    pub fn padded(&self, pad: usize) -> Self {
        let cutoff = self.cutoff + pad;
        let samples = self.samples.max(4 * cutoff + 4);
        Self { samples: samples + samples % 2, cutoff, block: self.block }
    }

    /// Same modes, different block size.
    pub fn with_block(&self, block: usize) -> Result<Self> {
        Self::new(self.cutoff, self.samples, block)
    }

    /// Same block size and sampling, smaller cutoff.
    pub fn truncated(&self, cutoff: usize) -> Result<Self> {
        if cutoff > self.cutoff {
            return Err(LabError::CutoffOutOfRange { cutoff, max: self.cutoff });
        }
        Self::new(cutoff.max(1), self.samples, self.block)
    }
}

fn fft_in_place(buffer: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buffer.len())
    } else {
        planner.plan_fft_forward(buffer.len())
    };
    fft.process(buffer);
}

/// Fourier coefficients `c_n, |n| <= N` of the trigonometric interpolant of
/// `samples` (taken at the grid points). Entry `n + N` holds `c_n`.
pub fn fourier_coefficients(samples: &[C64], grid: &CircleGrid) -> Result<Vec<C64>> {
    let j = grid.samples();
    if samples.len() != j {
        return Err(LabError::SampleCount { expected: j, got: samples.len() });
    }
    let mut buffer = samples.to_vec();
    fft_in_place(&mut buffer, false);
    let scale = 1.0 / j as f64;
    Ok(grid
        .modes()
        .map(|n| buffer[n.rem_euclid(j as i64) as usize] * scale)
        .collect())
}

/// Samples of `sum_n c_n e^{i n x}` at the grid points.
pub fn inverse_fourier(coefficients: &[C64], grid: &CircleGrid) -> Result<Vec<C64>> {
    if coefficients.len() != grid.mode_count() {
        return Err(LabError::SampleCount { expected: grid.mode_count(), got: coefficients.len() });
    }
    let j = grid.samples();
    let mut buffer = vec![ZERO; j];
    for (n, c) in grid.modes().zip(coefficients) {
        buffer[n.rem_euclid(j as i64) as usize] += c;
    }
    fft_in_place(&mut buffer, true);
    Ok(buffer)
}

/// Dense operator on the truncated mode space of a [`CircleGrid`].
#[derive(Debug, Clone)]
pub struct FourierOperator {
    grid: CircleGrid,
    matrix: Mat<C64>,
}

impl FourierOperator {
    pub fn zeros(grid: &CircleGrid) -> Self {
        Self { grid: *grid, matrix: Mat::zeros(grid.dim(), grid.dim()) }
    }

    pub fn identity(grid: &CircleGrid) -> Self {
        Self { grid: *grid, matrix: Mat::identity(grid.dim(), grid.dim()) }
    }

    pub fn from_matrix(grid: &CircleGrid, matrix: Mat<C64>) -> Result<Self> {
        if matrix.nrows() != grid.dim() || matrix.ncols() != grid.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} matrix on a grid of dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                grid.dim()
            )));
        }
        if matrix.col_iter().any(|col| col.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(LabError::InvalidParameter("operator has non-finite entries".into()));
        }
        Ok(Self { grid: *grid, matrix })
    }

    /// Diagonal operator with entry `weight(n)` on every block coordinate of mode `n`.
    pub fn mode_diagonal(grid: &CircleGrid, weight: impl Fn(i64) -> C64) -> Self {
        let mut op = Self::zeros(grid);
        for n in grid.modes() {
            let w = weight(n);
            for r in 0..grid.block() {
                let i = grid.index(n, r);
                op.matrix[(i, i)] = w;
            }
        }
        op
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }


    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Entry at (mode `n`, block row `r`) x (mode `m`, block column `c`).
    pub fn entry(&self, n: i64, r: usize, m: i64, c: usize) -> C64 {
        self.matrix[(self.grid.index(n, r), self.grid.index(m, c))]
    }

    pub(crate) fn add_to_entry(&mut self, n: i64, r: usize, m: i64, c: usize, value: C64) {
        let (i, j) = (self.grid.index(n, r), self.grid.index(m, c));
        self.matrix[(i, j)] += value;
    }

    pub fn adjoint(&self) -> Self {
        Self { grid: self.grid, matrix: self.matrix.adjoint().to_owned() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * factor);
        Self { grid: self.grid, matrix }
    }

    pub fn apply(&self, vector: &[C64]) -> Result<Vec<C64>> {
        if vector.len() != self.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "vector of length {} for operator of dimension {}",
                vector.len(),
                self.dim()
            )));
        }
        let mut out = vec![ZERO; self.dim()];
        for (j, &v) in vector.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            let col = self.matrix.col(j);
            for (o, &a) in out.iter_mut().zip(col.iter()) {
                *o += a * v;
            }
        }
        Ok(out)
    }

    /// Compression `P_M X P_M` onto a smaller grid with the same block size.
    pub fn compress(&self, target: &CircleGrid) -> Result<Self> {
        if target.block() != self.grid.block() || target.cutoff() > self.grid.cutoff() {
            return Err(LabError::DimensionMismatch(format!(
                "cannot compress a cutoff-{} operator onto cutoff {}",
                self.grid.cutoff(),
                target.cutoff()
            )));
        }
        let offset = (self.grid.cutoff() - target.cutoff()) * self.grid.block();
        let d = target.dim();
        let matrix = self.matrix.as_ref().submatrix(offset, offset, d, d).to_owned();
        Ok(Self { grid: *target, matrix })
    }

    /// Embeds into a larger grid, padding with zeros.
    pub fn embed(&self, target: &CircleGrid) -> Result<Self> {
        if target.block() != self.grid.block() || target.cutoff() < self.grid.cutoff() {
            return Err(LabError::DimensionMismatch("cannot embed into a smaller grid".into()));
        }
        let offset = (target.cutoff() - self.grid.cutoff()) * self.grid.block();
        let mut out = Self::zeros(target);
        let d = self.dim();
        out.matrix
            .as_mut()
            .submatrix_mut(offset, offset, d, d)
            .copy_from(self.matrix.as_ref());
        Ok(out)
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                worst = worst.max((self.matrix[(i, j)] - other.matrix[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.col_iter().all(|col| col.iter().all(|z| *z == ZERO))
    }

    fn check_same_grid(&self, other: &Self) {
        assert_eq!(self.grid, other.grid, "operators live on different grids");
    }
}

impl Add for &FourierOperator {
    type Output = FourierOperator;

    fn add(self, rhs: &FourierOperator) -> FourierOperator {
        self.check_same_grid(rhs);
        FourierOperator { grid: self.grid, matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &FourierOperator {
    type Output = FourierOperator;

    fn sub(self, rhs: &FourierOperator) -> FourierOperator {
        self.check_same_grid(rhs);
        FourierOperator { grid: self.grid, matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &FourierOperator {
    type Output = FourierOperator;

    fn mul(self, rhs: &FourierOperator) -> FourierOperator {
        self.check_same_grid(rhs);
        FourierOperator { grid: self.grid, matrix: &self.matrix * &rhs.matrix }
    }
}

/// Singular values of an arbitrary dense matrix, nonincreasing.
pub fn matrix_singular_values(matrix: &Mat<C64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Ok(Vec::new());
    }
    matrix
        .singular_values()
        .map_err(|e| LabError::Linalg(format!("{e:?}")))
}

/// Spectral norm of an arbitrary dense matrix.
pub fn matrix_norm(matrix: &Mat<C64>) -> Result<f64> {
    if matrix.col_iter().all(|col| col.iter().all(|z| *z == ZERO)) {
        return Ok(0.0);
    }
    Ok(matrix_singular_values(matrix)?.first().copied().unwrap_or(0.0))
}

pub fn singular_values(op: &FourierOperator) -> Result<Vec<f64>> {
    matrix_singular_values(&op.matrix)
}

/// Largest singular value.
pub fn operator_norm(op: &FourierOperator) -> f64 {
    // faer's SVD only fails on non-finite input, which FourierOperator rules out.
    matrix_norm(&op.matrix).expect("SVD of a finite matrix")
}

/// `max(||X (I - P_K)||, ||(I - P_K) X||)`.
pub fn compact_tail_norm(op: &FourierOperator, cutoff: usize) -> Result<f64> {
    let grid = op.grid();
    if cutoff > grid.cutoff() {
        return Err(LabError::CutoffOutOfRange { cutoff, max: grid.cutoff() });
    }
    let outside: Vec<usize> = (0..grid.dim())
        .filter(|&i| grid.mode_of(i).0.unsigned_abs() as usize > cutoff)
        .collect();
    if outside.is_empty() {
        return Ok(0.0);
    }
    let d = grid.dim();
    let m = &op.matrix;
    let right = Mat::from_fn(d, outside.len(), |i, j| m[(i, outside[j])]);
    let left = Mat::from_fn(outside.len(), d, |i, j| m[(outside[i], j)]);
    Ok(matrix_norm(&right)?.max(matrix_norm(&left)?))
}

/// Number of singular values below `eps`.
pub fn svd_kernel_dim(op: &FourierOperator, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(LabError::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    Ok(singular_values(op)?.iter().filter(|&&s| s < eps).count())
}

/// Euclidean norm of a coefficient vector.
pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Full SVD `X = U diag(S) V^*`, singular values nonincreasing.
pub(crate) struct DenseSvd {
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    pub v: Mat<C64>,
}

pub(crate) fn dense_svd(matrix: &Mat<C64>) -> Result<DenseSvd> {
    let svd = matrix.svd().map_err(|e| LabError::Linalg(format!("{e:?}")))?;
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(DenseSvd { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

/// Eigenvalues of a Hermitian matrix (lower triangle is read), nondecreasing.
pub(crate) fn hermitian_eigenvalues(matrix: &Mat<C64>) -> Result<Vec<f64>> {
    matrix
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| LabError::Linalg(format!("{e:?}")))
}
