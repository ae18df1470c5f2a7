//! Cyclic group actions on coordinate charts, twisted sectors and degree shifting.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::symcalc::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrbError {
    #[error("group order must be positive")]
    ZeroOrder,
    #[error("sector index {k} outside [0, {r})")]
    SectorOutOfRange { k: i64, r: u32 },
}

/// `mu_r(w_1, ..., w_n)`: the generator acts on coordinate `i` by `exp(2 pi i w_i / r)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CyclicAction {
    order: u32,
    weights: Vec<u32>,
}

/// A conjugacy class `k` of a cyclic action with its degree shifting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TwistedSector<S: Scalar> {
    pub k: u32,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub iota: S,
}

pub(crate) fn ser_display<T: fmt::Display, Se: serde::Serializer>(x: &T, s: Se) -> Result<Se::Ok, Se::Error> {
    s.collect_str(x)
}

/// Least nonnegative residue of `x` modulo `m`.
pub fn residue(x: i64, m: u32) -> u32 {
    x.rem_euclid(m as i64) as u32
}

/// Inverse of `a` modulo `m`, if it exists. Modulo 1 every residue is 0.
pub fn inverse_mod(a: i64, m: u32) -> Option<u32> {
    if m == 1 {
        return Some(0);
    }
    let (mut t, mut nt) = (0i64, 1i64);
    let (mut r0, mut r1) = (m as i64, a.rem_euclid(m as i64));
    while r1 != 0 {
        let q = r0 / r1;
        (t, nt) = (nt, t - q * nt);
        (r0, r1) = (r1, r0 - q * r1);
    }
    (r0 == 1).then(|| residue(t, m))
}

pub fn gcd(a: i64, b: i64) -> i64 {
    num_integer::Integer::gcd(&a, &b)
}

impl CyclicAction {
    pub fn new(order: u32, weights: &[i64]) -> Result<Self, OrbError> {
        if order == 0 {
            return Err(OrbError::ZeroOrder);
        }
        Ok(CyclicAction { order, weights: weights.iter().map(|&w| residue(w, order)).collect() })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Weights as canonical residues in `[0, order)`.
    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    /// Characters of the element `g^k` on each coordinate, as residues.
    pub fn characters_of(&self, k: i64) -> Vec<u32> {
        self.weights.iter().map(|&w| residue(k * w as i64, self.order)).collect()
    }

    /// `sum_i frac(k w_i / r)` for `0 <= k < r`.
    pub fn degree_shifting<S: Scalar>(&self, k: i64) -> Result<S, OrbError> {
        if k < 0 || k >= self.order as i64 {
            return Err(OrbError::SectorOutOfRange { k, r: self.order });
        }
        let r = self.order as i64;
        Ok(self
            .weights
            .iter()
            .map(|&w| S::ratio((k * w as i64).rem_euclid(r), r))
            .fold(S::zero(), |a, b| a + b))
    }

    pub fn sector_table<S: Scalar>(&self) -> Vec<TwistedSector<S>> {
        (0..self.order)
            .map(|k| TwistedSector { k, iota: self.degree_shifting(k as i64).expect("k in range") })
            .collect()
    }

    /// Number of coordinates moved by `g^k`.
    pub fn moved_count(&self, k: i64) -> usize {
        self.characters_of(k).iter().filter(|&&c| c != 0).count()
    }
}

impl fmt::Display for CyclicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ws: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        write!(f, "mu_{}({})", self.order, ws.join(","))
    }
}

/// Closed form `1 + k/r` for the chart `mu_r(a, -a, 1)`, defined for `1 <= k <= r-1`.
pub fn closed_form_shifting<S: Scalar>(r: u32, k: i64) -> Result<S, OrbError> {
    if k < 1 || k >= r as i64 {
        return Err(OrbError::SectorOutOfRange { k, r });
    }
    Ok(S::one() + S::ratio(k, r as i64))
}

/// Indices whose character is divisible by `r`, in input order.
pub fn invariant_indices(chars: &[i64], r: u32) -> Vec<usize> {
    chars.iter().enumerate().filter(|(_, &c)| c.rem_euclid(r as i64) == 0).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Q;

    fn act(r: u32, w: &[i64]) -> CyclicAction {
        CyclicAction::new(r, w).unwrap()
    }

    #[test]
    fn shifting_examples() {
        assert_eq!(act(3, &[1, -1, 1]).degree_shifting::<Q>(1).unwrap(), Q::ratio(4, 3));
        assert_eq!(act(3, &[1, -1, 1]).degree_shifting::<Q>(0).unwrap(), Q::int(0));
        assert_eq!(act(4, &[1, 3, 2]).degree_shifting::<Q>(2).unwrap(), Q::int(1));
        assert!(act(3, &[1]).degree_shifting::<Q>(3).is_err());
        assert!(act(3, &[1]).degree_shifting::<Q>(-1).is_err());
    }

    #[test]
    fn tables() {
        let t: Vec<Q> = act(2, &[1, 1, 1]).sector_table().into_iter().map(|s| s.iota).collect();
        assert_eq!(t, vec![Q::int(0), Q::ratio(3, 2)]);
        let t = act(1, &[]).sector_table::<Q>();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].iota, Q::int(0));
        let t: Vec<Q> = act(3, &[1, -1, 1]).sector_table().into_iter().map(|s| s.iota).collect();
        assert_eq!(t, vec![Q::int(0), Q::ratio(4, 3), Q::ratio(5, 3)]);
    }

    #[test]
    fn invariants() {
        assert_eq!(invariant_indices(&[2, 1, 0], 2), vec![0, 2]);
        let d = 3;
        let chars: Vec<i64> = (0..=2 * d - 2).map(|a| d - 1 - a).collect();
        assert_eq!(invariant_indices(&chars, 2), vec![0, 2, 4]);
        assert!(invariant_indices(&[], 5).is_empty());
    }

    #[test]
    fn modular_inverse() {
        assert_eq!(inverse_mod(2, 5), Some(3));
        assert_eq!(inverse_mod(-1, 3), Some(2));
        assert_eq!(inverse_mod(2, 4), None);
        assert_eq!(inverse_mod(0, 1), Some(0));
    }
}
