//! Rational functions kept as `scalar * prod(weight^e) * prod([symbol]^e)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::scalar::Scalar;
use super::weight::WeightForm;
use super::SymError;

/// Canonical factored rational function.
///
/// Every stored weight is canonical (leading coefficient 1), so proportional factors share a key
/// and cancel syntactically. Exponents are never zero. The zero function has scalar 0 and no
/// factors. Opaque symbols stand for quantities that are never expanded; they have `U`-degree 0.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactoredRat<S: Scalar> {
    scalar: S,
    factors: BTreeMap<WeightForm<S>, i64>,
    opaques: BTreeMap<String, i64>,
}

/// Result of sending `U` to zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LimitU0<S: Scalar> {
    Zero,
    Pole,
    /// A function of `L` (and opaque symbols) only.
    Value(FactoredRat<S>),
}

fn valid_symbol(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '*' | '^' | '[' | ']' | '(' | ')' | '"'))
}

fn bump<K: Ord>(map: &mut BTreeMap<K, i64>, key: K, e: i64) {
    if e == 0 {
        return;
    }
    *map.entry(key).or_insert(0) += e;
}

fn prune<K: Ord + Clone>(map: &mut BTreeMap<K, i64>) {
    map.retain(|_, e| *e != 0);
}

impl<S: Scalar> FactoredRat<S> {
    pub fn zero() -> Self {
        FactoredRat { scalar: S::zero(), factors: BTreeMap::new(), opaques: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::constant(S::one())
    }

    pub fn constant(c: S) -> Self {
        FactoredRat { scalar: c, factors: BTreeMap::new(), opaques: BTreeMap::new() }
    }

    /// `w^e`. A zero form raised to a positive power is the zero function.
    pub fn weight(w: &WeightForm<S>, e: i64) -> Result<Self, SymError> {
        let mut out = Self::one();
        out.mul_weight(w, e)?;
        Ok(out)
    }

    /// `[name]^e` for an opaque symbol.
    pub fn opaque(name: &str, e: i64) -> Result<Self, SymError> {
        let mut out = Self::one();
        out.mul_opaque(name, e)?;
        Ok(out)
    }

    /// Build from parts, canonicalizing every factor.
    pub fn from_parts<'a, I, J>(scalar: S, factors: I, opaques: J) -> Result<Self, SymError>
    where
        I: IntoIterator<Item = (WeightForm<S>, i64)>,
        J: IntoIterator<Item = (&'a str, i64)>,
    {
        let mut out = Self::constant(scalar);
        for (w, e) in factors {
            out.mul_weight(&w, e)?;
        }
        for (n, e) in opaques {
            out.mul_opaque(n, e)?;
        }
        Ok(out)
    }

    /// Multiply in place by `w^e`.
    pub fn mul_weight(&mut self, w: &WeightForm<S>, e: i64) -> Result<(), SymError> {
        if e == 0 {
            return Ok(());
        }
        match w.canonical() {
            None if e < 0 => Err(SymError::DivisionByZero),
            None => {
                *self = Self::zero();
                Ok(())
            }
            Some(_) if self.is_zero() => Ok(()),
            Some((c, base)) => {
                self.scalar = self.scalar.clone() * pow_scalar(&c, e);
                bump(&mut self.factors, base, e);
                prune(&mut self.factors);
                Ok(())
            }
        }
    }

    pub fn mul_opaque(&mut self, name: &str, e: i64) -> Result<(), SymError> {
        if !valid_symbol(name) {
            return Err(SymError::BadSymbol(name.to_string()));
        }
        if e == 0 || self.is_zero() {
            return Ok(());
        }
        bump(&mut self.opaques, name.to_string(), e);
        prune(&mut self.opaques);
        Ok(())
    }

    pub fn mul_scalar(&mut self, c: &S) {
        if c.is_zero() {
            *self = Self::zero();
        } else if !self.is_zero() {
            self.scalar = self.scalar.clone() * c.clone();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.scalar.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.scalar.is_one() && self.factors.is_empty() && self.opaques.is_empty()
    }

    pub fn scalar(&self) -> &S {
        &self.scalar
    }

    pub fn factors(&self) -> impl Iterator<Item = (&WeightForm<S>, i64)> {
        self.factors.iter().map(|(w, e)| (w, *e))
    }

    pub fn opaques(&self) -> impl Iterator<Item = (&str, i64)> {
        self.opaques.iter().map(|(n, e)| (n.as_str(), *e))
    }

    /// Exponent of `w` (after canonicalization) in this function.
    pub fn exponent_of(&self, w: &WeightForm<S>) -> i64 {
        w.canonical().and_then(|(_, b)| self.factors.get(&b).copied()).unwrap_or(0)
    }

    /// Total degree in `(L, U)`; opaque symbols count as degree 0.
    pub fn degree(&self) -> i64 {
        self.factors.values().sum()
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = self.clone();
        out.mul_assign(o);
        out
    }

    /// In-place product.
    pub fn mul_assign(&mut self, o: &Self) {
        if self.is_zero() || o.is_zero() {
            *self = Self::zero();
            return;
        }
        if !o.scalar.is_one() {
            self.scalar = self.scalar.clone() * o.scalar.clone();
        }
        for (w, e) in &o.factors {
            bump(&mut self.factors, w.clone(), *e);
        }
        for (n, e) in &o.opaques {
            bump(&mut self.opaques, n.clone(), *e);
        }
        prune(&mut self.factors);
        prune(&mut self.opaques);
    }

    pub fn inv(&self) -> Result<Self, SymError> {
        if self.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(FactoredRat {
            scalar: S::one() / self.scalar.clone(),
            factors: self.factors.iter().map(|(w, e)| (w.clone(), -e)).collect(),
            opaques: self.opaques.iter().map(|(n, e)| (n.clone(), -e)).collect(),
        })
    }

    pub fn div(&self, o: &Self) -> Result<Self, SymError> {
        Ok(self.mul(&o.inv()?))
    }

    pub fn pow(&self, n: i64) -> Result<Self, SymError> {
        if self.is_zero() {
            return match n {
                0 => Ok(Self::one()),
                n if n > 0 => Ok(Self::zero()),
                _ => Err(SymError::DivisionByZero),
            };
        }
        Ok(FactoredRat {
            scalar: pow_scalar(&self.scalar, n),
            factors: self.factors.iter().filter(|_| n != 0).map(|(w, e)| (w.clone(), e * n)).collect(),
            opaques: self.opaques.iter().filter(|_| n != 0).map(|(k, e)| (k.clone(), e * n)).collect(),
        })
    }

    pub fn product<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self {
        let mut out = Self::one();
        for x in items {
            out.mul_assign(x);
        }
        out
    }

    /// Net exponent of pure-`U` factors. Undefined for the zero function.
    pub fn u_valuation(&self) -> Result<i64, SymError> {
        if self.is_zero() {
            return Err(SymError::ZeroValuation);
        }
        Ok(self.factors.iter().filter(|(w, _)| w.is_pure_u()).map(|(_, e)| *e).sum())
    }

    pub fn limit_u0(&self) -> LimitU0<S> {
        let v = match self.u_valuation() {
            Err(_) => return LimitU0::Zero,
            Ok(v) => v,
        };
        if v > 0 {
            return LimitU0::Zero;
        }
        if v < 0 {
            return LimitU0::Pole;
        }
        let mut out = Self::constant(self.scalar.clone());
        for (w, e) in &self.factors {
            // v == 0 and canonical keys make the pure-U key absent here
            let at0 = WeightForm::new(w.lambda.clone(), S::zero());
            out.mul_weight(&at0, *e).expect("mixed factor survives U=0");
        }
        out.opaques = self.opaques.clone();
        LimitU0::Value(out)
    }

    /// True when no factor involves `U`.
    pub fn is_lambda_only(&self) -> bool {
        self.factors.keys().all(|w| w.u.is_zero())
    }

    /// Exact value at `(L, U)`; opaque symbols are looked up through `opaque`.
    pub fn eval_with<F>(&self, lambda: &S, u: &S, opaque: F) -> Result<S, SymError>
    where
        F: Fn(&str) -> S,
    {
        if self.is_zero() {
            return Ok(S::zero());
        }
        let mut num = self.scalar.clone();
        let mut den = S::one();
        for (w, e) in &self.factors {
            let x = w.eval(lambda, u);
            if *e > 0 {
                num = num * pow_scalar(&x, *e);
            } else if x.is_zero() {
                return Err(SymError::DivisionByZero);
            } else {
                den = den * pow_scalar(&x, -*e);
            }
        }
        for (n, e) in &self.opaques {
            let x = opaque(n);
            if *e > 0 {
                num = num * pow_scalar(&x, *e);
            } else if x.is_zero() {
                return Err(SymError::DivisionByZero);
            } else {
                den = den * pow_scalar(&x, -*e);
            }
        }
        Ok(num / den)
    }

    /// Exact value with every opaque symbol set to 1.
    pub fn eval(&self, lambda: &S, u: &S) -> Result<S, SymError> {
        self.eval_with(lambda, u, |_| S::one())
    }

    /// Canonical text form `c * (a*L+b*U)^e * [sym]^e`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, SymError> {
        let err = || SymError::Parse(text.to_string());
        let mut parts = text.trim().split(" * ");
        let head = parts.next().ok_or_else(err)?;
        let mut out = Self::constant(S::parse_text(head).ok_or_else(err)?);
        let zero = out.is_zero();
        for p in parts {
            if zero {
                return Err(err());
            }
            let (base, exp) = p.rsplit_once('^').ok_or_else(err)?;
            let e: i64 = exp.parse().map_err(|_| err())?;
            if let Some(name) = base.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                out.mul_opaque(name, e)?;
            } else {
                let w = WeightForm::parse(base).ok_or_else(err)?;
                out.mul_weight(&w, e)?;
            }
        }
        Ok(out)
    }
}

fn pow_scalar<S: Scalar>(x: &S, e: i64) -> S {
    let mut acc = S::one();
    for _ in 0..e.unsigned_abs() {
        acc = acc * x.clone();
    }
    if e < 0 {
        S::one() / acc
    } else {
        acc
    }
}

impl<S: Scalar> fmt::Display for FactoredRat<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.scalar)?;
        for (w, e) in &self.factors {
            write!(f, " * ({w})^{e}")?;
        }
        for (n, e) in &self.opaques {
            write!(f, " * [{n}]^{e}")?;
        }
        Ok(())
    }
}

impl<S: Scalar> FromStr for FactoredRat<S> {
    type Err = SymError;
    fn from_str(s: &str) -> Result<Self, SymError> {
        Self::parse(s)
    }
}

impl<S: Scalar> Serialize for FactoredRat<S> {
    fn serialize<Se: Serializer>(&self, s: Se) -> Result<Se::Ok, Se::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de, S: Scalar> Deserialize<'de> for FactoredRat<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;

    fn w(a: i64, b: i64) -> WeightForm<Q> {
        WeightForm::from_ints(a, b)
    }

    fn fr(c: i64, fs: &[((i64, i64), i64)]) -> FactoredRat<Q> {
        FactoredRat::from_parts(Q::int(c), fs.iter().map(|&((a, b), e)| (w(a, b), e)), []).unwrap()
    }

    #[test]
    fn inverse_pair_cancels() {
        let f = fr(1, &[((1, 0), 1)]);
        let g = fr(1, &[((1, 0), -1)]);
        assert!(f.mul(&g).is_one());
    }

    #[test]
    fn exponents_add() {
        assert_eq!(fr(2, &[((0, 1), 1)]).mul(&fr(3, &[((0, 1), 2)])), fr(6, &[((0, 1), 3)]));
    }

    #[test]
    fn mixed_product_keeps_both_factors() {
        let p = fr(1, &[((-1, 2), 1)]).mul(&fr(1, &[((1, 2), 1)]));
        assert_eq!(p.eval(&Q::int(1), &Q::int(1)).unwrap(), Q::int(3));
        assert_eq!(p.exponent_of(&w(-1, 2)), 1);
        assert_eq!(p.exponent_of(&w(1, 2)), 1);
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(fr(1, &[((0, 1), 1), ((1, 0), -3)]).u_valuation().unwrap(), 1);
        assert_eq!(fr(5, &[((-1, 2), 2)]).u_valuation().unwrap(), 0);
        let merged = fr(1, &[((0, 2), 1), ((0, 1), -1)]);
        assert_eq!(merged.u_valuation().unwrap(), 0);
        assert_eq!(merged, FactoredRat::constant(Q::int(2)));
        assert_eq!(FactoredRat::<Q>::zero().u_valuation(), Err(SymError::ZeroValuation));
    }

    #[test]
    fn limit_examples() {
        assert_eq!(fr(1, &[((0, 1), 1), ((1, 0), 1)]).limit_u0(), LimitU0::Zero);
        assert_eq!(fr(1, &[((-1, 2), 1)]).limit_u0(), LimitU0::Value(fr(1, &[((-1, 0), 1)])));
        assert_eq!(fr(1, &[((0, 1), -1), ((1, 1), 1)]).limit_u0(), LimitU0::Pole);
    }

    #[test]
    fn text_is_canonical() {
        let mut f = fr(-3, &[((2, -4), 2), ((0, 3), -1)]);
        f.mul_opaque("vtx.P.k1", 1).unwrap();
        let t = f.to_string();
        assert_eq!(t, "-4 * (0*L+1*U)^-1 * (1*L-2*U)^2 * [vtx.P.k1]^1");
        let back: FactoredRat<Q> = t.parse().unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_string(), t);
        assert_eq!(FactoredRat::<Q>::zero().to_string(), "0");
        assert!(FactoredRat::<Q>::parse("0 * (1*L+0*U)^1").is_err());
        assert!(FactoredRat::<Q>::opaque("a b", 1).is_err());
    }

    #[test]
    fn zero_weight_handling() {
        assert_eq!(FactoredRat::<Q>::weight(&w(0, 0), -1), Err(SymError::DivisionByZero));
        assert!(FactoredRat::<Q>::weight(&w(0, 0), 2).unwrap().is_zero());
    }
}
