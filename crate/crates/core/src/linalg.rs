//! Dense complex linear algebra used by the transmission scheme.
//!
//! Null-space projectors are built from an explicit orthonormal basis of the
//! orthogonal complement of the constraint rows, so `Q = V V^H` is Hermitian
//! to the last bit and idempotent to rounding. Rank, solves and the log-det
//! rate lean on `nalgebra` factorizations.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use thiserror::Error;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;
pub type ComplexRow = RowDVector<Complex64>;

/// Absolute tolerance for annihilation checks.
pub const NULLING_TOL: f64 = 1e-10;
/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-8;
/// Columns of a projector shorter than this cannot serve as a beam.
pub const BEAM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot null {rows} rows in a {dim}-dimensional space")]
    InfeasibleNulling { rows: usize, dim: usize },
    #[error("projector column {column} has norm {norm:e}, too small for a beam")]
    DegenerateBeam { column: usize, norm: f64 },
    #[error("singular system (rank {rank} < {dim})")]
    Singular { rank: usize, dim: usize },
    #[error("noise covariance is not Hermitian positive definite")]
    NotPositiveDefinite,
    #[error("non-finite entry encountered")]
    NonFinite,
}

fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Orthogonal projector onto the common null space of `rows`.
///
/// The result `Q` satisfies `row * Q = 0` for every input row. An empty
/// constraint set gives the identity.
pub fn null_space_projector(rows: &[ComplexRow], k: usize) -> Result<ComplexMatrix, LinalgError> {
    if let Some(bad) = rows.iter().find(|r| r.len() != k) {
        return Err(LinalgError::Dimension(format!("row of length {} in a {k}-dimensional space", bad.len())));
    }
    if rows.len() >= k {
        return Err(LinalgError::InfeasibleNulling { rows: rows.len(), dim: k });
    }
    if rows.iter().any(|r| r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(LinalgError::NonFinite);
    }

    // Orthonormal basis of span{row^H}; dependent rows are dropped.
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(k);
    for row in rows {
        let v = row.adjoint();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let r = orthogonalize(&v, &basis);
        let n = r.norm();
        if n > RANK_TOL * scale {
            basis.push(r.unscale(n));
        }
    }
    let row_rank = basis.len();

    // Extend greedily with the coordinate axis that has the largest
    // component outside the current span.
    let mut complement: Vec<ComplexVector> = Vec::with_capacity(k - row_rank);
    while basis.len() < k {
        let (r, n) = (0..k)
            .map(|j| {
                let r = orthogonalize(&ComplexVector::from_fn(k, |a, _| unit(a == j)), &basis);
                let n = r.norm();
                (r, n)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k > 0");
        let v = r.unscale(n);
        basis.push(v.clone());
        complement.push(v);
    }

    let mut q = ComplexMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for v in &complement {
                acc += v[a] * v[b].conj();
            }
            q[(a, b)] = acc;
        }
    }
    if !all_finite(&q) {
        return Err(LinalgError::NonFinite);
    }
    Ok(q)
}

fn unit(on: bool) -> Complex64 {
    if on {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

// Two passes of modified Gram-Schmidt.
fn orthogonalize(v: &ComplexVector, basis: &[ComplexVector]) -> ComplexVector {
    let mut r = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = b.dotc(&r);
            r -= b * c;
        }
    }
    r
}

/// Column `index` of a projector, used as a beamforming direction.
pub fn beam_column(projector: &ComplexMatrix, index: usize) -> Result<ComplexVector, LinalgError> {
    if index >= projector.ncols() {
        return Err(LinalgError::Dimension(format!("column {index} of a {}-column projector", projector.ncols())));
    }
    let col: ComplexVector = projector.column(index).into_owned();
    let norm = col.norm();
    if !(norm > BEAM_TOL) {
        return Err(LinalgError::DegenerateBeam { column: index, norm });
    }
    Ok(col)
}

/// The first column of a projector: the beam that carries a scalar placed in
/// the first coordinate of the pre-projection vector.
pub fn first_beam_column(projector: &ComplexMatrix) -> Result<ComplexVector, LinalgError> {
    beam_column(projector, 0)
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol` times the largest one.
pub fn rank(m: &ComplexMatrix, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > tol * top).count(),
        _ => 0,
    }
}

/// `row * v` without conjugation.
pub fn row_times(row: &ComplexRow, v: &ComplexVector) -> Complex64 {
    row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

pub fn stack_rows(rows: &[ComplexRow], k: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), k, |i, j| rows[i][j])
}

/// Solves `a x = b` for square full-rank `a`.
pub fn solve(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector, LinalgError> {
    let k = a.nrows();
    if a.ncols() != k || b.len() != k {
        return Err(LinalgError::Dimension(format!(
            "{}x{} system with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !all_finite(a) || b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let r = rank(a, RANK_TOL);
    if r < k {
        return Err(LinalgError::Singular { rank: r, dim: k });
    }
    a.clone().lu().solve(b).ok_or(LinalgError::Singular { rank: r, dim: k })
}

/// `log2 det(I + (P/K) S^{-1/2} G G^H S^{-1/2})` where `K = G.ncols()`.
///
/// `S^{-1/2}` is realized through the Cholesky factor of `S`; the
/// determinant is the same for any square-root choice.
pub fn logdet_rate(gain: &ComplexMatrix, noise_cov: &ComplexMatrix, power: f64) -> Result<f64, LinalgError> {
    let n = gain.nrows();
    let k = gain.ncols();
    if noise_cov.nrows() != n || noise_cov.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "{n} combinations with a {}x{} covariance",
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    if !(power >= 0.0) || !power.is_finite() || k == 0 {
        return Err(LinalgError::Dimension(format!("power {power} with {k} streams")));
    }
    let scale = noise_cov.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = (noise_cov - noise_cov.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > 1e-12 * scale.max(1.0) {
        return Err(LinalgError::NotPositiveDefinite);
    }
    // Complex Cholesky takes square roots of negative pivots, so definiteness is checked separately.
    let min_eig = noise_cov.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) {
        return Err(LinalgError::NotPositiveDefinite);
    }
    let chol = noise_cov.clone().cholesky().ok_or(LinalgError::NotPositiveDefinite)?;
    let whitened = chol.l().solve_lower_triangular(gain).ok_or(LinalgError::NotPositiveDefinite)?;
    // det(I + c W W^H) = prod (1 + c s_i^2) over singular values of W.
    let snr = power / k as f64;
    let bits: f64 =
        singular_values(&whitened).iter().map(|s| (snr * s * s).ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
    if !bits.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    Ok(bits.max(0.0))
}
