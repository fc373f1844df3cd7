//! Closed-form DoF results, bounds and the 3-user DoF-region linear program.
//!
//! Everything here is exact rational arithmetic. The LP has three variables
//! and nine constraint planes, so it is solved by enumerating every vertex
//! (intersection of three planes) and keeping the feasible ones.

use num_traits::{CheckedAdd, CheckedDiv, Zero};
use thiserror::Error;

use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("closed form leaves the box at user {user}: d = {value}")]
    ActiveSetViolation { user: usize, value: Rational },
    #[error("rational overflow evaluating {0}")]
    Overflow(String),
}

fn int(n: usize) -> Rational {
    Rational::from_integer(n as i128)
}

fn one() -> Rational {
    Rational::from_integer(1)
}

/// Per-user DoF tuple and its sum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DofPoint {
    pub d: Vec<Rational>,
    pub sum: Rational,
}

impl DofPoint {
    pub fn new(d: Vec<Rational>) -> Self {
        let sum = d.iter().copied().sum();
        Self { d, sum }
    }
}

/// Per-user perfect-CSIT fractions `gamma_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSpec {
    pub k: usize,
    pub gamma: Vec<Rational>,
}

impl RegionSpec {
    pub fn new(gamma: Vec<Rational>) -> Result<Self, AnalysisError> {
        if gamma.is_empty() {
            return Err(AnalysisError::Argument("at least one user".into()));
        }
        check_unit(&gamma)?;
        Ok(Self { k: gamma.len(), gamma })
    }

    /// The fractions of the ICR pattern: `(K-1)/(2K-1)` for the anchor user
    /// and `(K-2)/(2K-1)` for the others.
    pub fn icr(k: usize) -> Result<Self, AnalysisError> {
        if k == 0 {
            return Err(AnalysisError::Argument("K must be positive".into()));
        }
        let n = 2 * k as i128 - 1;
        let mut gamma = vec![Rational::new((k as i128 - 2).max(0), n); k];
        gamma[0] = Rational::new(k as i128 - 1, n);
        Self::new(gamma)
    }
}

fn check_unit(gamma: &[Rational]) -> Result<(), AnalysisError> {
    for (i, g) in gamma.iter().enumerate() {
        if *g < Rational::zero() || *g > one() {
            return Err(AnalysisError::Argument(format!("gamma_{} = {g} outside [0, 1]", i + 1)));
        }
    }
    Ok(())
}

/// `K^2 / (2K - 1)`.
pub fn achievable_dof(k: usize) -> Result<Rational, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::Argument("K must be positive".into()));
    }
    Ok(Rational::new((k * k) as i128, 2 * k as i128 - 1))
}

/// `(lambda_P, lambda_D, lambda_N)` required by the ICR scheme.
pub fn theorem1_distribution(k: usize) -> Result<(Rational, Rational, Rational), AnalysisError> {
    if k < 2 {
        return Err(AnalysisError::Argument(format!("K must be at least 2, got {k}")));
    }
    let k = k as i128;
    Ok((Rational::new((k - 1) * (k - 1), 2 * k * k - k), Rational::new(k - 1, 2 * k - 1), Rational::new(1, k)))
}

/// `1 + 1/2 + ... + 1/K`.
pub fn harmonic(k: usize) -> Result<Rational, AnalysisError> {
    let mut h = Rational::zero();
    for j in 1..=k {
        h = h.checked_add(&Rational::new(1, j as i128)).ok_or_else(|| AnalysisError::Overflow(format!("H_{k}")))?;
    }
    Ok(h)
}

/// Sum DoF of the all-delayed-CSIT (MAT) scheme, `K / H_K`.
pub fn mat_dof(k: usize) -> Result<Rational, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::Argument("K must be positive".into()));
    }
    int(k).checked_div(&harmonic(k)?).ok_or_else(|| AnalysisError::Overflow(format!("K/H_{k}")))
}

/// `K (M + (min(M,K) - 1) lambda) / (M + K - 1)` with `lambda = min(M,K)/K`.
pub fn tandon_bound(m: usize, k: usize) -> Result<Rational, AnalysisError> {
    if m == 0 || k == 0 {
        return Err(AnalysisError::Argument(format!("need M, K >= 1, got M={m}, K={k}")));
    }
    let mn = m.min(k);
    let lambda = Rational::new(mn as i128, k as i128);
    Ok(int(k) * (int(m) + int(mn - 1) * lambda) / int(m + k - 1))
}

/// Sum of the `K` weighted-sum outer bounds: `(K^2 + (K-1) sum gamma_i) / (2K - 1)`.
pub fn upper_bound_total(spec: &RegionSpec) -> Result<Rational, AnalysisError> {
    check_unit(&spec.gamma)?;
    let k = spec.gamma.len();
    let total: Rational = spec.gamma.iter().copied().sum();
    Ok((int(k * k) + int(k - 1) * total) / int(2 * k - 1))
}

/// Constraint `coeffs . d <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Halfspace {
    pub coeffs: [Rational; 3],
    pub rhs: Rational,
}

impl Halfspace {
    pub fn holds(&self, d: &[Rational; 3]) -> bool {
        self.coeffs[0] * d[0] + self.coeffs[1] * d[1] + self.coeffs[2] * d[2] <= self.rhs
    }
}

/// The nine planes of the 3-user region: three weighted-sum bounds
/// `3 d_i + sum_{j != i} d_j <= 3 + 2 gamma_i`, then `d_i <= 1`, then `-d_i <= 0`.
pub fn region_constraints(gamma: &[Rational; 3]) -> Result<Vec<Halfspace>, AnalysisError> {
    check_unit(gamma)?;
    let z = Rational::zero();
    let mut out = Vec::with_capacity(9);
    for (i, g) in gamma.iter().enumerate() {
        let mut coeffs = [one(); 3];
        coeffs[i] = int(3);
        out.push(Halfspace { coeffs, rhs: int(3) + int(2) * g });
    }
    for i in 0..3 {
        let mut coeffs = [z; 3];
        coeffs[i] = one();
        out.push(Halfspace { coeffs, rhs: one() });
    }
    for i in 0..3 {
        let mut coeffs = [z; 3];
        coeffs[i] = -one();
        out.push(Halfspace { coeffs, rhs: z });
    }
    Ok(out)
}

// Cramer's rule on three planes taken with equality.
fn intersect(a: &Halfspace, b: &Halfspace, c: &Halfspace) -> Option<[Rational; 3]> {
    let m = [a.coeffs, b.coeffs, c.coeffs];
    let rhs = [a.rhs, b.rhs, c.rhs];
    let det3 = |m: &[[Rational; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&m);
    if det.is_zero() {
        return None;
    }
    let mut x = [Rational::zero(); 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = rhs[row];
        }
        *xi = det3(&mc) / det;
    }
    Some(x)
}

/// All vertices of the 3-user region, sorted and deduplicated.
pub fn region_vertices(gamma: &[Rational; 3]) -> Result<Vec<DofPoint>, AnalysisError> {
    let planes = region_constraints(gamma)?;
    let mut verts: Vec<[Rational; 3]> = Vec::new();
    for a in 0..planes.len() {
        for b in a + 1..planes.len() {
            for c in b + 1..planes.len() {
                if let Some(x) = intersect(&planes[a], &planes[b], &planes[c]) {
                    if planes.iter().all(|h| h.holds(&x)) {
                        verts.push(x);
                    }
                }
            }
        }
    }
    verts.sort();
    verts.dedup();
    Ok(verts.into_iter().map(|v| DofPoint::new(v.to_vec())).collect())
}

/// Maximizes `d_1 + d_2 + d_3` over the region; among optimal vertices the
/// lexicographically largest one is returned.
pub fn dof_region_lp(gamma: &[Rational; 3]) -> Result<DofPoint, AnalysisError> {
    let verts = region_vertices(gamma)?;
    let best = verts
        .into_iter()
        .max_by(|x, y| x.sum.cmp(&y.sum).then_with(|| x.d.cmp(&y.d)))
        .expect("origin is always a vertex");
    Ok(best)
}

/// `d_i = (3 + 4 gamma_i - sum_{j != i} gamma_j) / 5`, valid when the three
/// weighted-sum constraints are the active set.
pub fn closed_form_region(gamma: &[Rational; 3]) -> Result<DofPoint, AnalysisError> {
    check_unit(gamma)?;
    let total: Rational = gamma.iter().copied().sum();
    let mut d = Vec::with_capacity(3);
    for (i, g) in gamma.iter().enumerate() {
        let v = (int(3) + int(4) * g - (total - g)) / int(5);
        if v < Rational::zero() || v > one() {
            return Err(AnalysisError::ActiveSetViolation { user: i, value: v });
        }
        d.push(v);
    }
    Ok(DofPoint::new(d))
}

/// One row of the perfect-CSIT distribution table for three users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionRow {
    pub gamma: [Rational; 3],
    pub achieved: [Rational; 3],
    pub scheme: &'static str,
}

/// The eight `(gamma, achieved d, scheme)` rows for the 3-user channel.
pub fn table2_rows() -> Vec<DistributionRow> {
    let r = |n, d| Rational::new(n, d);
    let z = Rational::zero();
    let o = one();
    let third = r(1, 3);
    let icr = [r(3, 5); 3];
    vec![
        DistributionRow { gamma: [o, z, z], achieved: [o, z, z], scheme: "" },
        DistributionRow { gamma: [z, o, z], achieved: [z, o, z], scheme: "" },
        DistributionRow { gamma: [z, z, o], achieved: [z, z, o], scheme: "" },
        DistributionRow { gamma: [third; 3], achieved: [third; 3], scheme: "Time sharing" },
        DistributionRow { gamma: [r(2, 5), r(1, 5), r(1, 5)], achieved: icr, scheme: "ICR" },
        DistributionRow { gamma: [r(1, 5), r(2, 5), r(1, 5)], achieved: icr, scheme: "ICR" },
        DistributionRow { gamma: [r(1, 5), r(1, 5), r(2, 5)], achieved: icr, scheme: "ICR" },
        DistributionRow { gamma: [o, o, o], achieved: [o, o, o], scheme: "Conventional" },
    ]
}
