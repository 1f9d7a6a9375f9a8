//! Exact rational arithmetic helpers and the threshold parameter used by the
//! fairness checks and graph views.
//!
//! Every magnitude in this crate (values, envy-graph weights, ranks, virtual
//! values, potentials) is an arbitrary-precision rational.  The irrational
//! threshold √2 is never materialised: all comparisons against it are carried
//! out on squares of non-negative rationals.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::fmt;

/// Arbitrary-precision rational, always reduced, denominator > 0.
pub type Rational = num_rational::BigRational;

/// Shorthand for an integer rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Shorthand for the rational `n/d` (`d != 0`).
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Renders a rational as an integer string when integral, else `"p/q"`.
/// Never emits floating point.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"p"` or `"p/q"` into a reduced rational.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let mut parts = s.splitn(2, '/');
    let numer = parts
        .next()
        .ok_or_else(|| format!("empty rational literal `{s}`"))?;
    let numer: BigInt = numer
        .trim()
        .parse()
        .map_err(|e| format!("bad numerator in `{s}`: {e}"))?;
    match parts.next() {
        None => Ok(Rational::from_integer(numer)),
        Some(denom) => {
            let denom: BigInt = denom
                .trim()
                .parse()
                .map_err(|e| format!("bad denominator in `{s}`: {e}"))?;
            if denom.is_zero() {
                return Err(format!("zero denominator in `{s}`"));
            }
            Ok(Rational::new(numer, denom))
        }
    }
}

/// Envy threshold β ∈ {0, 1, √2} selecting a view of the weighted envy graph
/// and the strength of the envy checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Beta {
    Zero,
    One,
    Sqrt2,
}

impl Beta {
    /// Exact test of `β·lhs < rhs` for non-negative `lhs`, `rhs`.
    ///
    /// For β = √2 the comparison is `2·lhs² < rhs²`, which is equivalent on
    /// non-negative operands and avoids irrational arithmetic.
    pub fn scaled_less(self, lhs: &Rational, rhs: &Rational) -> bool {
        debug_assert!(!lhs.is_negative() && !rhs.is_negative());
        match self {
            Beta::Zero => rhs.is_positive(),
            Beta::One => lhs < rhs,
            Beta::Sqrt2 => {
                let two = rat(2);
                lhs * lhs * two < rhs * rhs
            }
        }
    }

    /// Exact test of `w > β` for a non-negative weight `w`.
    pub fn weight_exceeds(self, w: &Rational) -> bool {
        match self {
            Beta::Zero => w.is_positive(),
            Beta::One => *w > rat(1),
            Beta::Sqrt2 => w * w > rat(2),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Zero => write!(f, "0"),
            Beta::One => write!(f, "1"),
            Beta::Sqrt2 => write!(f, "sqrt2"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_integer_and_fraction() {
        assert_eq!(format_rational(&rat(7)), "7");
        assert_eq!(format_rational(&ratio(10, 9)), "10/9");
        assert_eq!(format_rational(&ratio(4, 2)), "2");
        assert_eq!(format_rational(&rat(0)), "0");
        assert_eq!(format_rational(&ratio(-3, 6)), "-1/2");
    }

    #[test]
    fn parse_round_trips() {
        for s in ["7", "10/9", "0", "-1/2", "123456789123456789/2"] {
            let r = parse_rational(s).unwrap();
            assert_eq!(format_rational(&r), s);
        }
        assert_eq!(parse_rational("4/2").unwrap(), rat(2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn beta_zero_threshold() {
        assert!(Beta::Zero.scaled_less(&rat(5), &ratio(1, 100)));
        assert!(!Beta::Zero.scaled_less(&rat(0), &rat(0)));
        assert!(Beta::Zero.weight_exceeds(&ratio(1, 9)));
        assert!(!Beta::Zero.weight_exceeds(&rat(0)));
    }

    #[test]
    fn beta_one_threshold() {
        assert!(Beta::One.scaled_less(&rat(1), &rat(3)));
        assert!(!Beta::One.scaled_less(&rat(3), &rat(3)));
        assert!(Beta::One.weight_exceeds(&ratio(10, 9)));
        assert!(!Beta::One.weight_exceeds(&rat(1)));
    }

    #[test]
    fn beta_sqrt2_threshold_is_exact() {
        // 1.414… < 1.5: a weight of 3/2 exceeds √2, 7/5 = 1.4 does not.
        assert!(Beta::Sqrt2.weight_exceeds(&ratio(3, 2)));
        assert!(!Beta::Sqrt2.weight_exceeds(&ratio(7, 5)));
        // 10/9 squared is 100/81 < 2.
        assert!(!Beta::Sqrt2.weight_exceeds(&ratio(10, 9)));
        // √2·1 < 3/2  ⟺  2 < 9/4.
        assert!(Beta::Sqrt2.scaled_less(&rat(1), &ratio(3, 2)));
        assert!(!Beta::Sqrt2.scaled_less(&rat(1), &ratio(7, 5)));
        // Boundary: √2·v < √2·v is false even though floats would waver.
        assert!(!Beta::Sqrt2.scaled_less(&ratio(99, 70), &rat(2)));
        assert!(Beta::Sqrt2.scaled_less(&ratio(98, 70), &rat(2)));
    }
}
