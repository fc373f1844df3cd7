//! Simulation and analysis toolkit for the K-user MISO broadcast channel
//! with alternating CSIT, built around the interference creation-resurrection
//! (ICR) scheme.
//!
//! * [`linalg`]: null-space projectors, rank, solves and log-det rates.
//! * [`channel`]: CSIT patterns, state fractions, pattern enumeration and
//!   seeded complex Gaussian channels.
//! * [`scheme`]: the two-phase ICR transmitter and receivers for any `K >= 2`.
//! * [`analysis`]: closed-form DoF formulas, bounds and the 3-user region LP
//!   in exact rational arithmetic.
//! * [`harness`]: Monte Carlo campaigns, DoF slope estimation and CSV export.

// `!(x > tol)` is used on purpose so NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod harness;
pub mod linalg;
pub mod scheme;

/// Exact rational used for every DoF formula and CSIT fraction.
pub type Rational = num_rational::Ratio<i128>;

/// Renders a rational as `p/q`, always with an explicit denominator.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Renders a float with 12 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{:.11e}", x)
}

/// Parses `p/q` or an integer.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    s.trim().parse::<Rational>().map_err(|e| format!("invalid rational {s:?}: {e}"))
}
