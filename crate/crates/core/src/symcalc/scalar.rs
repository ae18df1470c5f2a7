//! Exact scalar fields used by the algebra kernel.

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// An exact ordered field. Every `Ratio<T>` over a signed integer type qualifies.
///
/// Text form: integers print as `p`, everything else as `p/q` with `q > 0`.
pub trait Scalar:
    Clone + Eq + Ord + Hash + Debug + Display + Num + Signed + Send + Sync + 'static
{
    fn floor_part(&self) -> Self;

    /// `self - floor(self)`, always in `[0, 1)`.
    fn frac_part(&self) -> Self {
        self.clone() - self.floor_part()
    }

    fn is_integral(&self) -> bool {
        self.frac_part().is_zero()
    }

    /// Parse the text form written by `Display`.
    fn parse_text(s: &str) -> Option<Self>;

    /// `n / d` for small integers. Panics on `d == 0`.
    fn ratio(n: i64, d: i64) -> Self {
        assert!(d != 0, "zero denominator");
        Self::int(n) / Self::int(d)
    }

    fn int(n: i64) -> Self;

    /// Lossy conversion, only used for diagnostics and numeric cross-checks.
    fn approx_f64(&self) -> f64;
}

impl<T> Scalar for Ratio<T>
where
    T: Clone + Integer + Signed + Hash + Debug + Display + FromPrimitive + ToPrimitive + FromStr,
    T: Send + Sync + 'static,
{
    fn floor_part(&self) -> Self {
        self.floor()
    }

    fn int(n: i64) -> Self {
        Ratio::from_integer(T::from_i64(n).expect("integer type holds i64"))
    }

    fn parse_text(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.is_empty() {
            return None;
        }
        match s.split_once('/') {
            Some((n, d)) => {
                let n = T::from_str(n.trim()).ok()?;
                let d = T::from_str(d.trim()).ok()?;
                if d.is_zero() {
                    return None;
                }
                Some(Ratio::new(n, d))
            }
            None => T::from_str(s).ok().map(Ratio::from_integer),
        }
    }

    fn approx_f64(&self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    type Q = Ratio<BigInt>;

    #[test]
    fn reduced_on_parse() {
        let x = Q::parse_text("6/-4").unwrap();
        assert_eq!(x.to_string(), "-3/2");
        assert_eq!(Q::parse_text("0/7").unwrap().to_string(), "0");
        assert!(Q::parse_text("1/0").is_none());
        assert!(Q::parse_text("").is_none());
    }

    #[test]
    fn floor_and_frac() {
        let x = Q::ratio(-7, 3);
        assert_eq!(x.floor_part(), Q::int(-3));
        assert_eq!(x.frac_part(), Q::ratio(2, 3));
        assert!(Q::int(4).is_integral());
        let y: Ratio<i64> = Scalar::ratio(9, 4);
        assert_eq!(y.frac_part(), Ratio::new(1, 4));
    }
}
