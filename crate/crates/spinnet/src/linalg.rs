//! Minimal dense linear algebra on flat column-major buffers.
//!
//! The simulation spends nearly all of its time in one LAPACK call:
//! the symmetric divide-and-conquer eigensolver `dsyevd`. Matrices here are
//! plain `Vec<f64>` in column-major order so they can be handed to LAPACK
//! without copies. Everything else (dots, sums, small regressions) is a few
//! lines of straightforward Rust.

use crate::{Error, Result};

/// Dense symmetric matrix in column-major storage.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    pub n: usize,
    /// Column-major `n * n` entries; only symmetry-consistent data stored.
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.n]
    }

    /// Set both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.n] = v;
        self.data[j + i * self.n] = v;
    }

    #[inline]
    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.data[i + i * self.n] += v;
    }
}

/// Result of a symmetric eigendecomposition `A = V diag(w) V^T`.
///
/// Eigenvalues ascend; eigenvector `j` is the column slice
/// `vectors[j*n .. (j+1)*n]`.
pub struct SymEig {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymEig {
    /// Eigenvector `j` as a slice.
    #[inline]
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Symmetric eigendecomposition via LAPACK `dsyevd` (divide and conquer).
/// Consumes the matrix buffer (LAPACK overwrites it with the eigenvectors).
pub fn eigh(mat: SymMatrix) -> Result<SymEig> {
    let n = mat.n;
    if n == 0 {
        return Err(Error::Linalg("eigh on empty matrix".into()));
    }
    let mut a = mat.data;
    let mut w = vec![0.0f64; n];
    let nn = n as i32;
    let jobz = b'V' as std::ffi::c_char;
    let uplo = b'L' as std::ffi::c_char;
    let mut info: i32 = 0;

    // Workspace query.
    let mut work_query = 0.0f64;
    let mut iwork_query = 0i32;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            &mut work_query,
            &(-1i32),
            &mut iwork_query,
            &(-1i32),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dsyevd workspace query failed: info = {info}")));
    }
    let lwork = work_query as i32;
    let liwork = iwork_query;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dsyevd failed: info = {info}")));
    }
    Ok(SymEig { n, values: w, vectors: a })
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for i in 0..x.len() {
        s += x[i] * y[i];
    }
    s
}

/// Pairwise (cascade) summation: associativity-fixed and numerically stable,
/// so ensemble averages do not depend on how work was split across threads.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        2 => x[0] + x[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
        }
    }
}

/// Column-wise mean and standard error over equal-length rows; single rows
/// get zero stderr. Pairwise sums keep the means thread-count independent.
pub fn mean_stderr_columns(rows: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let len = rows[0].len();
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    let mut col = vec![0.0; rows.len()];
    for i in 0..len {
        for (c, row) in col.iter_mut().zip(rows) {
            *c = row[i];
        }
        let m = pairwise_sum(&col) / n;
        let var = if rows.len() > 1 {
            col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        stderr.push((var / n).sqrt());
    }
    (mean, stderr)
}

/// Ordinary least squares for `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linfit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!(
            "linfit needs >= 2 paired points, got {} and {}",
            n,
            y.len()
        )));
    }
    let nf = n as f64;
    let mx = pairwise_sum(x) / nf;
    let my = pairwise_sum(y) / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("linfit: degenerate abscissa".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((a, b, r2))
}

/// Standard error of the slope from an OLS fit (same inputs as [`linfit`]).
pub fn slope_stderr(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData("slope stderr needs >= 3 points".into()));
    }
    let (a, b, _) = linfit(x, y)?;
    let nf = n as f64;
    let mx = pairwise_sum(x) / nf;
    let mut sse = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        let resid = y[i] - a - b * x[i];
        sse += resid * resid;
        let dx = x[i] - mx;
        sxx += dx * dx;
    }
    Ok((sse / ((nf - 2.0) * sxx)).sqrt())
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let (_, b, r2) = linfit(x, y)?;
    Ok(b.signum() * r2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_reproduces_two_by_two() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let mut m = SymMatrix::zeros(2);
        m.set_sym(0, 0, 2.0);
        m.set_sym(1, 1, 2.0);
        m.set_sym(0, 1, 1.0);
        let e = eigh(m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        // Eigenvector of lambda=1 is (1, -1)/sqrt(2) up to sign.
        let v = e.vector(0);
        assert!((v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn eigh_reconstructs_random_matrix() {
        // Deterministic pseudo-random symmetric 40x40; check A = V diag(w) V^T.
        let n = 40;
        let mut m = SymMatrix::zeros(n);
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for i in 0..n {
            for j in 0..=i {
                m.set_sym(i, j, next());
            }
        }
        let orig = m.clone();
        let e = eigh(m).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut aij = 0.0;
                for k in 0..n {
                    aij += e.vector(k)[i] * e.values[k] * e.vector(k)[j];
                }
                assert!(
                    (aij - orig.get(i, j)).abs() < 1e-10,
                    "reconstruction mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_and_is_split_invariant() {
        let x: Vec<f64> = (0..1001).map(|i| ((i * 37) % 101) as f64 * 0.01).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-9);
    }

    #[test]
    fn linfit_recovers_exact_line() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| 3.25 - 1.75 * v).collect();
        let (a, b, r2) = linfit(&x, &y).unwrap();
        assert!((a - 3.25).abs() < 1e-12);
        assert!((b + 1.75).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
