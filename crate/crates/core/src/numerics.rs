//! Self-contained dense linear algebra for small matrices.
//!
//! Vector/matrix norms, partial-pivot inversion, the spectral radius of a
//! nonnegative matrix by power iteration (with a repeated-squaring fallback for
//! reducible or nilpotent cases), and the three-way spectral-radius check
//! rho(H) < 1  <=>  H^k -> 0  <=>  (I-H)^{-1} exists with nonnegative entries.

use crate::error::{Error, Result};

/// Relative tolerance for power iterations.
pub const POWER_REL_TOL: f64 = 1e-12;
/// Iteration cap for power iterations.
pub const POWER_MAX_ITER: usize = 10_000;
/// Pivots below this magnitude are treated as singular.
pub const PIVOT_MIN: f64 = 1e-14;

const POWERS_VANISH_TOL: f64 = 1e-6;
const INVERSE_NONNEG_SLACK: f64 = 1e-12;

/// Which norm to use on vectors; induced norms are used on matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    LInf,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::L1 => write!(f, "l1"),
            NormKind::L2 => write!(f, "l2"),
            NormKind::LInf => write!(f, "linf"),
        }
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        assert!(cols > 0, "matrix needs at least one column");
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "all rows must have equal length"
        );
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Scalar 1x1 matrix.
    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * entries.len() + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "incompatible shapes for matrix product"
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = k * rhs.cols;
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[row + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "incompatible shapes for matrix-vector");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.data[i * self.cols + j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Submatrix with rows in `r0..r1` and columns in `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Matrix {
        assert!(r0 < r1 && r1 <= self.rows && c0 < c1 && c1 <= self.cols);
        Matrix::from_fn(r1 - r0, c1 - c0, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// First strictly negative entry, if any.
    pub fn first_negative(&self) -> Option<(usize, usize, f64)> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self.get(i, j);
                if v < 0.0 {
                    return Some((i, j, v));
                }
            }
        }
        None
    }
}

/// Standard l1/l2/linf vector norm.
pub fn vec_norm(x: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::LInf => x.iter().fold(0.0_f64, |m, &v| m.max(v.abs())),
    }
}

/// Induced operator norm. l1 is the max column abs-sum, linf the max row
/// abs-sum; l2 is computed by power iteration on A^T A.
pub fn op_norm(a: &Matrix, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::L1 => {
            let mut best = 0.0_f64;
            for j in 0..a.cols() {
                let mut s = 0.0;
                for i in 0..a.rows() {
                    s += a.get(i, j).abs();
                }
                best = best.max(s);
            }
            Ok(best)
        }
        NormKind::LInf => {
            let mut best = 0.0_f64;
            for i in 0..a.rows() {
                let mut s = 0.0;
                for j in 0..a.cols() {
                    s += a.get(i, j).abs();
                }
                best = best.max(s);
            }
            Ok(best)
        }
        NormKind::L2 => {
            let gram = a.transpose().mul(a);
            Ok(dominant_eigenvalue_psd(&gram)?.max(0.0).sqrt())
        }
    }
}

/// Dominant eigenvalue of a symmetric positive-semidefinite matrix by power
/// iteration with Rayleigh quotients.
fn dominant_eigenvalue_psd(b: &Matrix) -> Result<f64> {
    let n = b.rows();
    if b.max_abs() == 0.0 {
        return Ok(0.0);
    }
    // Slightly asymmetric start so structured matrices cannot place it
    // orthogonal to the dominant eigenvector.
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i + 1) as f64).collect();
    let lambda = rayleigh_iterate(b, start)?;
    // A PSD matrix satisfies rho(B) >= max diagonal entry; restart from the
    // offending axis if the first run settled on a smaller eigenvalue.
    let (jmax, dmax) = (0..n)
        .map(|i| (i, b.get(i, i)))
        .fold((0, f64::NEG_INFINITY), |acc, cur| {
            if cur.1 > acc.1 {
                cur
            } else {
                acc
            }
        });
    if lambda < dmax * (1.0 - 1e-10) {
        let mut axis = vec![0.0; n];
        axis[jmax] = 1.0;
        let lambda2 = rayleigh_iterate(b, axis)?;
        return Ok(lambda.max(lambda2));
    }
    Ok(lambda)
}

fn rayleigh_iterate(b: &Matrix, start: Vec<f64>) -> Result<f64> {
    let mut x = start;
    let norm0 = vec_norm(&x, NormKind::L2);
    for v in &mut x {
        *v /= norm0;
    }
    let mut lambda_prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let y = b.matvec(&x);
        let lambda: f64 = x.iter().zip(&y).map(|(xi, yi)| xi * yi).sum();
        let ny = vec_norm(&y, NormKind::L2);
        if ny == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if lambda_prev.is_finite()
            && (lambda - lambda_prev).abs() <= POWER_REL_TOL * lambda.abs().max(f64::MIN_POSITIVE)
        {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(Error::PowerIterationStalled {
        max_iter: POWER_MAX_ITER,
        last: lambda_prev,
    })
}

/// Spectral radius of a square matrix with nonnegative entries (Perron root).
///
/// Power iteration with a repeated-squaring fallback: `||H^{2^k}||^{1/2^k}`
/// converges to rho(H) for every matrix, which covers reducible and nilpotent
/// cases where the iteration itself stalls.
pub fn spectral_radius(h: &Matrix) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::NotSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    if let Some((row, col, value)) = h.first_negative() {
        return Err(Error::NegativeEntry { row, col, value });
    }
    if h.max_abs() == 0.0 {
        return Ok(0.0);
    }
    match perron_power_iteration(h) {
        Some(rho) => Ok(rho),
        None => Ok(squaring_radius_estimate(h)),
    }
}

/// Power iteration on a nonnegative matrix from the all-ones vector.
/// Returns None when the l1-quotient does not settle (periodic or defective
/// dominant structure) so the caller can fall back.
fn perron_power_iteration(h: &Matrix) -> Option<f64> {
    let n = h.rows();
    let mut x = vec![1.0 / n as f64; n];
    let mut lambda_prev = f64::NAN;
    let mut stable = 0usize;
    for it in 0..POWER_MAX_ITER {
        let y = h.matvec(&x);
        let ny = vec_norm(&y, NormKind::L1);
        if ny == 0.0 {
            // ones is strictly positive, so a zero image on the first sweep
            // means H = 0; later it signals a decaying reducible structure.
            if it == 0 {
                return Some(0.0);
            }
            return None;
        }
        if !ny.is_finite() {
            return None;
        }
        let lambda = ny / vec_norm(&x, NormKind::L1);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if lambda_prev.is_finite()
            && (lambda - lambda_prev).abs() <= POWER_REL_TOL * lambda.abs().max(f64::MIN_POSITIVE)
        {
            stable += 1;
            if stable >= 3 {
                return Some(lambda);
            }
        } else {
            stable = 0;
        }
        lambda_prev = lambda;
    }
    None
}

/// rho(H) via log-scaled repeated squaring of H.
fn squaring_radius_estimate(h: &Matrix) -> f64 {
    let mut b = h.clone();
    let mut log_scale = 0.0_f64;
    let mut est_prev = f64::NAN;
    for k in 0..64u32 {
        let s = match op_norm(&b, NormKind::LInf) {
            Ok(v) => v,
            Err(_) => return est_prev.max(0.0),
        };
        if s == 0.0 {
            return 0.0;
        }
        let scaled = b.scaled(1.0 / s);
        b = scaled.mul(&scaled);
        log_scale = 2.0 * (log_scale + s.ln());
        let bn = op_norm(&b, NormKind::LInf).unwrap_or(0.0);
        let est = if bn == 0.0 {
            0.0
        } else {
            ((log_scale + bn.ln()) / 2f64.powi(k as i32 + 1)).exp()
        };
        if est_prev.is_finite() && (est - est_prev).abs() <= 1e-13 * est.abs().max(1e-300) {
            return est;
        }
        est_prev = est;
    }
    est_prev.max(0.0)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inv(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut out = Matrix::identity(n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = work.get(col, col).abs();
        for r in col + 1..n {
            let v = work.get(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val.is_nan() || pivot_val <= PIVOT_MIN {
            return Err(Error::Singular {
                index: col,
                pivot: work.get(pivot_row, col),
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let (x, y) = (work.get(col, j), work.get(pivot_row, j));
                work.set(col, j, y);
                work.set(pivot_row, j, x);
                let (x, y) = (out.get(col, j), out.get(pivot_row, j));
                out.set(col, j, y);
                out.set(pivot_row, j, x);
            }
        }
        let p = work.get(col, col);
        for j in 0..n {
            work.set(col, j, work.get(col, j) / p);
            out.set(col, j, out.get(col, j) / p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work.get(r, col);
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work.set(r, j, work.get(r, j) - factor * work.get(col, j));
                out.set(r, j, out.get(r, j) - factor * out.get(col, j));
            }
        }
    }
    Ok(out)
}

/// Integer matrix power by binary exponentiation.
pub fn matrix_power(a: &Matrix, k: u64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let mut result = Matrix::identity(a.rows());
    let mut base = a.clone();
    let mut exp = k;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result.mul(&base);
        }
        exp >>= 1;
        if exp > 0 {
            base = base.mul(&base);
        }
    }
    Ok(result)
}

/// The three equivalent views of `rho(H) < 1` for nonnegative H.
#[derive(Clone, Copy, Debug)]
pub struct RadiusTrio {
    pub rho: f64,
    pub powers_vanish: bool,
    pub inverse_nonneg: bool,
}

/// Reports rho(H), whether `||H^k_max||_inf < 1e-6`, and whether `(I-H)^{-1}`
/// exists with entries >= -1e-12. Errors when `I - H` is singular while rho is
/// clearly below one, since that contradicts the equivalence.
pub fn check_radius_trio(h: &Matrix, k_max: u64) -> Result<RadiusTrio> {
    assert!(k_max > 0, "k_max must be positive");
    let rho = spectral_radius(h)?;
    let pow = matrix_power(h, k_max)?;
    let pow_norm = op_norm(&pow, NormKind::LInf)?;
    let powers_vanish = pow_norm < POWERS_VANISH_TOL;
    let eye = Matrix::identity(h.rows());
    let inverse_nonneg = match inv(&eye.sub(h)) {
        Ok(i_minus_h_inv) => i_minus_h_inv.min_entry() >= -INVERSE_NONNEG_SLACK,
        Err(Error::Singular { .. }) => {
            if rho < 1.0 - 1e-3 {
                return Err(Error::RadiusTrioInconsistent { rho });
            }
            false
        }
        Err(e) => return Err(e),
    };
    Ok(RadiusTrio {
        rho,
        powers_vanish,
        inverse_nonneg,
    })
}
