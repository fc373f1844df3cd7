#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

use miso_icr::channel::IcrLayout;
use miso_icr::linalg::{ComplexMatrix, ComplexRow};

/// Orthogonal projector onto the null space of the stacked rows,
/// `I - A^H (A A^H)^{-1} A`, built without the crate's Gram-Schmidt code.
pub fn projector_oracle(rows: &[&ComplexRow], k: usize) -> ComplexMatrix {
    let a = DMatrix::<Complex64>::from_fn(rows.len(), k, |r, c| rows[r][c]);
    let gram_inv = (&a * a.adjoint()).try_inverse().expect("rows are independent");
    DMatrix::identity(k, k) - a.adjoint() * gram_inv * a
}

/// First entry of `row * M`.
pub fn first_entry(row: &ComplexRow, m: &ComplexMatrix) -> Complex64 {
    (row * m)[0]
}

/// For receiver `i`, the channel user whose phase-one row each combination
/// should be proportional to, in slot order.
pub fn predicted_users(layout: &IcrLayout, i: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(layout.phase1_slot[i], i)];
    for (m, &r) in layout.phase2_user.iter().enumerate() {
        let user = if r == i { layout.anchor } else { r };
        out.push((layout.k + m, user));
    }
    out
}

/// Relative distance of `g` from the line through `h`.
pub fn line_residual(g: &ComplexRow, h: &ComplexRow) -> f64 {
    let s = h.conjugate().dot(g) / h.norm_squared();
    (g - h * s).norm() / g.norm()
}

pub fn ratio(s: &str) -> miso_icr::Rational {
    miso_icr::parse_rational(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

pub fn read_csv(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut rd = csv::Reader::from_path(path).expect("csv opens");
    rd.records().map(|r| r.expect("csv row").iter().map(str::to_string).collect()).collect()
}
