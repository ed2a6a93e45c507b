//! Exact rational durations measured in quarter lengths.
//!
//! One quarter note is `1/1`; an eighth note is `1/2`. Values are kept in
//! lowest terms so the same duration always produces the same token string.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

/// A duration in quarter lengths, stored as an exact rational in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuarterLength(pub(crate) Ratio<i64>);

impl QuarterLength {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "quarter length denominator must be nonzero");
        QuarterLength(Ratio::new(numer, denom))
    }

    pub const ZERO: QuarterLength = QuarterLength(Ratio::new_raw(0, 1));

    pub fn from_integer(n: i64) -> Self {
        QuarterLength(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap()
    }

    /// True when the value is a whole number of `grid` steps.
    pub fn is_multiple_of(&self, grid: QuarterLength) -> bool {
        (self.0 / grid.0).is_integer()
    }

    /// Nearest multiple of `grid`, rounding halves up.
    pub fn snap_to_grid(&self, grid: QuarterLength) -> QuarterLength {
        let steps = self.0 / grid.0;
        QuarterLength(Ratio::from_integer(round_half_up(steps)) * grid.0)
    }

    /// Token form `numerator/denominator`, always with an explicit denominator
    /// (`3/1`, not `3`).
    pub fn token(&self) -> String {
        format!("{}/{}", self.0.numer(), self.0.denom())
    }
}

/// Round a non-negative ratio to the nearest integer, halves away from zero.
fn round_half_up(r: Ratio<i64>) -> i64 {
    let n = *r.numer();
    let d = *r.denom();
    debug_assert!(d > 0);
    (2 * n + d).div_euclid(2 * d)
}

impl fmt::Display for QuarterLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

impl fmt::Debug for QuarterLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuarterLength({})", self.token())
    }
}

/// Error from parsing a duration token.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed quarter-length token {0:?}")]
pub struct ParseQlError(pub String);

impl FromStr for QuarterLength {
    type Err = ParseQlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseQlError(s.to_string());
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let numer: i64 = n.parse().map_err(|_| bad())?;
        let denom: i64 = d.parse().map_err(|_| bad())?;
        if denom <= 0 {
            return Err(bad());
        }
        Ok(QuarterLength::new(numer, denom))
    }
}

impl Add for QuarterLength {
    type Output = QuarterLength;
    fn add(self, rhs: QuarterLength) -> QuarterLength {
        QuarterLength(self.0 + rhs.0)
    }
}

impl Sub for QuarterLength {
    type Output = QuarterLength;
    fn sub(self, rhs: QuarterLength) -> QuarterLength {
        QuarterLength(self.0 - rhs.0)
    }
}

impl Mul<i64> for QuarterLength {
    type Output = QuarterLength;
    fn mul(self, rhs: i64) -> QuarterLength {
        QuarterLength(self.0 * rhs)
    }
}
