//! Linear torus weights `a*L + b*U` in the two equivariant parameters.

use std::fmt;

use super::scalar::Scalar;

/// A linear form `lambda*L + u*U`. Ordering is lexicographic on `(lambda, u)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightForm<S: Scalar> {
    pub lambda: S,
    pub u: S,
}

impl<S: Scalar> WeightForm<S> {
    pub fn new(lambda: S, u: S) -> Self {
        WeightForm { lambda, u }
    }

    pub fn from_ints(lambda: i64, u: i64) -> Self {
        WeightForm::new(S::int(lambda), S::int(u))
    }

    pub fn zero() -> Self {
        WeightForm::new(S::zero(), S::zero())
    }

    /// The pure `L` weight.
    pub fn lam() -> Self {
        WeightForm::new(S::one(), S::zero())
    }

    /// The pure `U` weight.
    pub fn u_unit() -> Self {
        WeightForm::new(S::zero(), S::one())
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.is_zero() && self.u.is_zero()
    }

    /// Nonzero with no `L` component: the factors that decide vanishing as `U -> 0`.
    pub fn is_pure_u(&self) -> bool {
        self.lambda.is_zero() && !self.u.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        WeightForm::new(self.lambda.clone() + o.lambda.clone(), self.u.clone() + o.u.clone())
    }

    pub fn sub(&self, o: &Self) -> Self {
        WeightForm::new(self.lambda.clone() - o.lambda.clone(), self.u.clone() - o.u.clone())
    }

    pub fn scale(&self, c: &S) -> Self {
        WeightForm::new(self.lambda.clone() * c.clone(), self.u.clone() * c.clone())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-S::one())
    }

    /// Split into `(c, w)` with `self = c * w` and the first nonzero coefficient of `w` equal to 1.
    /// Returns `None` for the zero form.
    pub fn canonical(&self) -> Option<(S, Self)> {
        let lead = if !self.lambda.is_zero() {
            self.lambda.clone()
        } else if !self.u.is_zero() {
            self.u.clone()
        } else {
            return None;
        };
        let inv = S::one() / lead.clone();
        Some((lead, self.scale(&inv)))
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.canonical(), Some((c, _)) if c.is_one())
    }

    /// `Some(c)` with `self = c * other` when the two forms are proportional; `other` must be nonzero.
    pub fn ratio_to(&self, other: &Self) -> Option<S> {
        if other.is_zero() {
            return None;
        }
        let c = if !other.lambda.is_zero() {
            self.lambda.clone() / other.lambda.clone()
        } else {
            self.u.clone() / other.u.clone()
        };
        if other.scale(&c) == *self {
            Some(c)
        } else {
            None
        }
    }

    pub fn eval(&self, lambda: &S, u: &S) -> S {
        self.lambda.clone() * lambda.clone() + self.u.clone() * u.clone()
    }

    /// Parse `a*L+b*U`, `a*L-b*U`, with optional surrounding parentheses.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let s = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')).unwrap_or(s);
        let body = s.strip_suffix("*U")?;
        let lpos = body.find("*L")?;
        let a = S::parse_text(&body[..lpos])?;
        let rest = &body[lpos + 2..];
        let (neg, num) = if let Some(t) = rest.strip_prefix('+') {
            (false, t)
        } else if let Some(t) = rest.strip_prefix('-') {
            (true, t)
        } else {
            return None;
        };
        if num.starts_with('-') || num.starts_with('+') {
            return None;
        }
        let b = S::parse_text(num)?;
        Some(WeightForm::new(a, if neg { -b } else { b }))
    }
}

impl<S: Scalar> fmt::Display for WeightForm<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.u.is_negative() {
            write!(f, "{}*L-{}*U", self.lambda, -self.u.clone())
        } else {
            write!(f, "{}*L+{}*U", self.lambda, self.u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;

    fn w(a: i64, b: i64) -> WeightForm<Q> {
        WeightForm::from_ints(a, b)
    }

    #[test]
    fn canonical_leading_one() {
        let (c, v) = w(-2, 4).canonical().unwrap();
        assert_eq!(c, Q::int(-2));
        assert_eq!(v, w(1, -2));
        let (c, v) = w(0, 3).canonical().unwrap();
        assert_eq!(c, Q::int(3));
        assert_eq!(v, w(0, 1));
        assert!(w(0, 0).canonical().is_none());
    }

    #[test]
    fn text_round_trip() {
        for x in [w(1, -2), w(0, 1), w(-3, 0), WeightForm::new(Q::ratio(1, 3), Q::ratio(-5, 2))] {
            let t = x.to_string();
            assert_eq!(WeightForm::<Q>::parse(&t).unwrap(), x, "{t}");
            assert_eq!(WeightForm::<Q>::parse(&format!("({t})")).unwrap(), x);
        }
        assert!(WeightForm::<Q>::parse("1*L+-2*U").is_none());
        assert!(WeightForm::<Q>::parse("1*L").is_none());
    }

    #[test]
    fn proportionality() {
        assert_eq!(w(2, -4).ratio_to(&w(-1, 2)), Some(Q::int(-2)));
        assert_eq!(w(1, 1).ratio_to(&w(1, 2)), None);
        assert_eq!(w(0, 0).ratio_to(&w(1, 0)), Some(Q::int(0)));
    }
}
