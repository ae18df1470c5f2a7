//! Virtual dimensions, the per-insertion dimension ledger, admissibility and the case
//! classification of relative data.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::localmodel::{fixed_point_shared, singular_stratum, ModelId, PointId};
use crate::symcalc::Scalar;
use crate::Q;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimError {
    #[error("invalid insertion: {0}")]
    InvalidInsertion(String),
    #[error("datum violates the standing assumption: {0}")]
    Assumption(String),
    #[error("dimension ledger {ledger} disagrees with the index formula {formula}")]
    Mismatch { ledger: Box<Q>, formula: Box<Q> },
}

/// Sector of an absolute marked point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbsSector {
    Untwisted,
    /// The sector `k = alpha` of a cyclic point of order `order` with chart `mu_n(a, -a, 1)`.
    Twisted { alpha: u32, order: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbsInsertion {
    pub sector: AbsSector,
    pub form_degree: u32,
    /// Restricts a twisted class to the sector of one fixed point; `None` allows either.
    pub at: Option<PointId>,
}

impl AbsInsertion {
    pub fn untwisted() -> Self {
        AbsInsertion { sector: AbsSector::Untwisted, form_degree: 0, at: None }
    }

    pub fn twisted(alpha: u32, order: u32) -> Self {
        AbsInsertion { sector: AbsSector::Twisted { alpha, order }, form_degree: 0, at: None }
    }

    pub fn at(mut self, p: PointId) -> Self {
        self.at = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), DimError> {
        if let AbsSector::Twisted { alpha, order } = self.sector {
            if alpha == 0 || alpha >= order {
                return Err(DimError::InvalidInsertion(format!("twisted alpha={alpha} needs 1 <= alpha < {order}")));
            }
        }
        if let Some(p) = self.at {
            if p.on_divisor() {
                return Err(DimError::InvalidInsertion(format!("absolute insertion cannot sit at {p}")));
            }
        }
        Ok(())
    }

    /// Degree shifting of the sector: `0` or `1 + alpha/order`.
    pub fn iota(&self) -> Q {
        match self.sector {
            AbsSector::Untwisted => Q::zero(),
            AbsSector::Twisted { alpha, order } => Q::one() + Q::ratio(alpha as i64, order as i64),
        }
    }

    /// Sector index as an element of `mu_r`, `0` when untwisted.
    pub fn k(&self) -> u32 {
        match self.sector {
            AbsSector::Untwisted => 0,
            AbsSector::Twisted { alpha, .. } => alpha,
        }
    }
}

impl fmt::Display for AbsInsertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sector {
            AbsSector::Untwisted => f.write_str("1")?,
            AbsSector::Twisted { alpha, order } => write!(f, "t{alpha}/{order}")?,
        }
        if let Some(p) = self.at {
            write!(f, "@{p}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AbsWire {
    Plain(String),
    Twisted {
        alpha: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<PointId>,
        #[serde(default, skip_serializing_if = "is_zero_u32")]
        form_degree: u32,
    },
}

fn is_zero_u32(x: &u32) -> bool {
    *x == 0
}

impl Serialize for AbsInsertion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.sector {
            AbsSector::Untwisted if self.at.is_none() && self.form_degree == 0 => {
                AbsWire::Plain("untwisted".into()).serialize(s)
            }
            AbsSector::Untwisted => AbsWire::Twisted { alpha: 0, order: None, at: self.at, form_degree: self.form_degree }
                .serialize(s),
            AbsSector::Twisted { alpha, order } => {
                AbsWire::Twisted { alpha, order: Some(order), at: self.at, form_degree: self.form_degree }.serialize(s)
            }
        }
    }
}

/// Deserialized twisted insertions without an explicit order get `order = 0`; call
/// [`RelDatum::resolve_orders`] to fill in the model's `r`.
impl<'de> Deserialize<'de> for AbsInsertion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match AbsWire::deserialize(d)? {
            AbsWire::Plain(s) if s == "untwisted" => Ok(AbsInsertion::untwisted()),
            AbsWire::Plain(s) => Err(serde::de::Error::custom(format!("unknown absolute sector {s:?}"))),
            AbsWire::Twisted { alpha: 0, at, form_degree, .. } => {
                Ok(AbsInsertion { sector: AbsSector::Untwisted, at, form_degree })
            }
            AbsWire::Twisted { alpha, order, at, form_degree } => Ok(AbsInsertion {
                sector: AbsSector::Twisted { alpha, order: order.unwrap_or(0) },
                at,
                form_degree,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelTarget {
    X,
    Y,
    S,
    Zplus,
    Zminus,
    SmoothZ,
}

impl RelTarget {
    /// Complex dimension of the sector locus in the divisor.
    pub fn sector_dim(self) -> i64 {
        match self {
            RelTarget::X | RelTarget::Y | RelTarget::Zplus | RelTarget::Zminus => 0,
            RelTarget::S => 1,
            RelTarget::SmoothZ => 2,
        }
    }

    pub fn point(self) -> Option<PointId> {
        match self {
            RelTarget::X => Some(PointId::X),
            RelTarget::Y => Some(PointId::Y),
            RelTarget::Zplus => Some(PointId::Zplus),
            RelTarget::Zminus => Some(PointId::Zminus),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelTarget::X => "X",
            RelTarget::Y => "Y",
            RelTarget::S => "S",
            RelTarget::Zplus => "Zplus",
            RelTarget::Zminus => "Zminus",
            RelTarget::SmoothZ => "SmoothZ",
        }
    }
}

/// A relative marked point: sector of the divisor it maps to and its contact order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelInsertion {
    pub target: RelTarget,
    pub alpha: u32,
    #[serde(with = "q_text")]
    pub ell: Q,
}

pub(crate) mod q_text {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(q)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum W {
            S(String),
            I(i64),
        }
        match W::deserialize(d)? {
            W::I(i) => Ok(Q::int(i)),
            W::S(s) => Q::parse_text(&s).ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}"))),
        }
    }
}

impl RelInsertion {
    pub fn new(target: RelTarget, alpha: u32, ell: Q, r: u32) -> Result<Self, DimError> {
        let x = RelInsertion { target, alpha, ell };
        x.validate(r)?;
        Ok(x)
    }

    /// Build from sector and integer part of the contact order.
    pub fn with_int_part(target: RelTarget, alpha: u32, ell_int: u32, r: u32) -> Result<Self, DimError> {
        let n = match target {
            RelTarget::X | RelTarget::Y => (r * r) as i64,
            RelTarget::S | RelTarget::Zplus | RelTarget::Zminus => r as i64,
            RelTarget::SmoothZ => 1,
        };
        Self::new(target, alpha, Q::int(ell_int as i64) + Q::ratio(alpha as i64, n), r)
    }

    pub fn validate(&self, r: u32) -> Result<(), DimError> {
        let bad = |m: String| Err(DimError::InvalidInsertion(format!("{self}: {m}")));
        if !self.ell.is_positive() {
            return bad("contact order must be positive".into());
        }
        let (r, al) = (r as i64, self.alpha as i64);
        match self.target {
            RelTarget::X | RelTarget::Y => {
                if al < 1 || al >= r * r || al % r == 0 {
                    return bad(format!("alpha must lie in [1, {}) and not be divisible by {r}", r * r));
                }
                if self.ell.frac_part() != Q::ratio(al, r * r) {
                    return bad(format!("frac(ell) must equal {al}/{}", r * r));
                }
            }
            RelTarget::S | RelTarget::Zplus | RelTarget::Zminus => {
                if al < 1 || al >= r {
                    return bad(format!("alpha must lie in [1, {r})"));
                }
                if self.ell.frac_part() != Q::ratio(al, r) {
                    return bad(format!("frac(ell) must equal {al}/{r}"));
                }
            }
            RelTarget::SmoothZ => {
                if al != 0 || !self.ell.is_integral() {
                    return bad("smooth contact needs alpha = 0 and integral ell".into());
                }
            }
        }
        Ok(())
    }

    pub fn ell_int(&self) -> i64 {
        self.ell.floor_part().to_integer().try_into().expect("small contact order")
    }

    /// Degree shifting of the relative sector, read from the catalog charts.
    pub fn iota(&self, m: &ModelId) -> Q {
        let k = self.alpha as i64;
        match self.target {
            RelTarget::SmoothZ => Q::zero(),
            RelTarget::S => singular_stratum(m).normal_action.degree_shifting(k).expect("validated"),
            t => {
                let p = t.point().expect("point target");
                fixed_point_shared(m, p).expect("compactified").chart_action.degree_shifting(k).expect("validated")
            }
        }
    }
}

impl fmt::Display for RelInsertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]^{}", self.target.name(), self.alpha, self.ell)
    }
}

/// A genus-zero relative datum `(Gamma, T, a)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct RelDatum {
    #[serde(default)]
    pub gamma_degree: u32,
    #[serde(default)]
    pub abs: Vec<AbsInsertion>,
    #[serde(default)]
    pub rel: Vec<RelInsertion>,
    #[serde(default)]
    pub rel_form_degrees: Vec<u32>,
}

impl RelDatum {
    pub fn new(abs: Vec<AbsInsertion>, rel: Vec<RelInsertion>) -> Self {
        RelDatum { gamma_degree: 0, rel_form_degrees: vec![0; rel.len()], abs, rel }
    }

    pub fn with_gamma_degree(mut self, d: u32) -> Self {
        self.gamma_degree = d;
        self
    }

    /// Fill in `order = r` for twisted insertions read without one.
    pub fn resolve_orders(&mut self, r: u32) {
        for a in &mut self.abs {
            if let AbsSector::Twisted { order, .. } = &mut a.sector {
                if *order == 0 {
                    *order = r;
                }
            }
        }
        if self.rel_form_degrees.len() < self.rel.len() {
            self.rel_form_degrees.resize(self.rel.len(), 0);
        }
    }

    pub fn validate(&self, r: u32) -> Result<(), DimError> {
        for a in &self.abs {
            a.validate()?;
        }
        for x in &self.rel {
            x.validate(r)?;
        }
        Ok(())
    }

    pub fn iota_abs_sum(&self) -> Q {
        self.abs.iter().map(|a| a.iota()).fold(Q::zero(), |s, x| s + x)
    }

    pub fn total_ell(&self) -> Q {
        self.rel.iter().map(|x| x.ell.clone()).fold(Q::zero(), |s, x| s + x)
    }
}

impl fmt::Display for RelDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.abs.iter().map(|x| x.to_string()).collect();
        let r: Vec<String> = self.rel.iter().map(|x| x.to_string()).collect();
        write!(f, "G{} abs[{}] rel[{}]", self.gamma_degree, a.join(","), r.join(","))
    }
}

/// `c_1(A) = (r + 2) * sum of contact orders`.
pub fn chern_pairing(d: &RelDatum, r: u32) -> Q {
    Q::int(r as i64 + 2) * d.total_ell()
}

/// Ledger entry of an absolute insertion: `1 - iota`.
pub fn u_contrib(a: &AbsInsertion, _r: u32) -> Result<Q, DimError> {
    a.validate()?;
    Ok(Q::one() - a.iota())
}

/// Ledger entry of a relative insertion. `mu_x`, `mu_y` are the chart branch constants of the
/// generators at X and Y; the sector `alpha` uses the constant `frac(alpha * mu)` of its own
/// element, which for `alpha = 1` is `mu` itself.
pub fn v_contrib(x: &RelInsertion, r: u32, mu_x: &Q, mu_y: &Q) -> Result<Q, DimError> {
    x.validate(r)?;
    let (ri, al, li) = (r as i64, x.alpha as i64, Q::int(x.ell_int()));
    Ok(match x.target {
        RelTarget::X | RelTarget::Y => {
            let mu = if x.target == RelTarget::X { mu_x } else { mu_y };
            let a2 = Q::ratio(al, ri * ri);
            let mu_a = (Q::int(al) * mu.clone()).frac_part();
            Q::int(ri + 2) * (a2.clone() + li.clone()) + Q::one()
                - (li + a2.clone() + (a2 + mu_a).frac_part() + Q::ratio(al, ri).frac_part())
        }
        RelTarget::S => Q::int(ri + 1) * li + Q::int(al) + Q::one(),
        RelTarget::Zplus | RelTarget::Zminus => Q::int(ri + 1) * li + Q::int(al) + Q::ratio(al, ri),
        RelTarget::SmoothZ => Q::int(ri + 1) * x.ell.clone() + Q::one(),
    })
}

/// The integer `n` in `v = (r+1)[ell] + n - mu` for X and Y targets.
pub fn xy_n(x: &RelInsertion, m: &ModelId) -> Option<Q> {
    let p = x.target.point().filter(|p| matches!(p, PointId::X | PointId::Y))?;
    let mu = fixed_point_shared(m, p).ok()?.mu.clone()?;
    let mu_a = (Q::int(x.alpha as i64) * mu).frac_part();
    let (mx, my) = branch_constants(m);
    let v = v_contrib(x, m.r, &mx, &my).ok()?;
    Some(v - Q::int(m.ri() + 1) * Q::int(x.ell_int()) + mu_a)
}

/// `(mu_X, mu_Y)` of the model.
pub fn branch_constants(m: &ModelId) -> (Q, Q) {
    let g = |p| fixed_point_shared(&ModelId { compactified: true, ..*m }, p).ok().and_then(|f| f.mu.clone()).unwrap_or_default();
    (g(PointId::X), g(PointId::Y))
}

fn check_assumption(d: &RelDatum) -> Result<(), DimError> {
    if d.abs.len() > 3 {
        return Err(DimError::Assumption(format!("{} absolute insertions, at most 3 allowed", d.abs.len())));
    }
    if d.abs.iter().any(|a| a.form_degree != 0) {
        return Err(DimError::Assumption("absolute classes must have form degree 0".into()));
    }
    Ok(())
}

/// `(v, 1 - iota - [ell])` of a relative insertion, memoized per model since the enumerations
/// reuse a few candidates across many data.
fn rel_terms(x: &RelInsertion, m: &ModelId) -> Result<(Q, Q), DimError> {
    type Memo = Mutex<HashMap<(ModelId, RelInsertion), (Q, Q)>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    let key = (*m, x.clone());
    if let Some(t) = memo.lock().expect("memo lock").get(&key) {
        return Ok(t.clone());
    }
    let (mx, my) = branch_constants(m);
    let v = v_contrib(x, m.r, &mx, &my)?;
    let idx = Q::one() - x.iota(m) - Q::int(x.ell_int());
    memo.lock().expect("memo lock").insert(key, (v.clone(), idx.clone()));
    Ok((v, idx))
}

/// `sum u_i + sum v_j`.
pub fn ledger_dim(d: &RelDatum, m: &ModelId) -> Result<Q, DimError> {
    let mut total = Q::zero();
    for a in &d.abs {
        total += u_contrib(a, m.r)?;
    }
    for x in &d.rel {
        total += rel_terms(x, m)?.0;
    }
    Ok(total)
}

/// The index formula `c_1(A) + (n - 3)(1 - g) + sum(1 - iota(h_i)) + sum(1 - iota(g_j) - [ell_j])`
/// in complex units, with `n = 3` and `g = 0`.
pub fn index_formula_dim(d: &RelDatum, m: &ModelId) -> Result<Q, DimError> {
    d.validate(m.r)?;
    let mut total = chern_pairing(d, m.r);
    for a in &d.abs {
        total += Q::one() - a.iota();
    }
    for x in &d.rel {
        total += rel_terms(x, m)?.1;
    }
    Ok(total)
}

/// Complex virtual dimension; both computations must agree.
pub fn virtual_dim_complex(d: &RelDatum, m: &ModelId) -> Result<Q, DimError> {
    let ledger = ledger_dim(d, m)?;
    let formula = index_formula_dim(d, m)?;
    if ledger != formula {
        return Err(DimError::Mismatch { ledger: Box::new(ledger), formula: Box::new(formula) });
    }
    Ok(ledger)
}

/// Real virtual dimension, computed directly in real units.
pub fn virtual_dim_real(d: &RelDatum, m: &ModelId) -> Result<Q, DimError> {
    d.validate(m.r)?;
    let two = Q::int(2);
    let mut total = two.clone() * chern_pairing(d, m.r);
    for a in &d.abs {
        total += two.clone() - two.clone() * a.iota();
    }
    for x in &d.rel {
        total += two.clone() - two.clone() * x.iota(m) - two.clone() * Q::int(x.ell_int());
    }
    Ok(total)
}

/// `(N, N')`: dimension minus absolute form degrees, and total sector-locus dimension.
pub fn n_values(d: &RelDatum, m: &ModelId) -> Result<(Q, i64), DimError> {
    let dim = virtual_dim_complex(d, m)?;
    let forms: i64 = d.abs.iter().map(|a| a.form_degree as i64).sum();
    let np = d.rel.iter().map(|x| x.target.sector_dim()).sum();
    Ok((dim - Q::int(forms), np))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Case {
    Case1,
    Case2,
    Case3,
    Inadmissible,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Admissibility and case of a datum: inadmissible when `N > N'`; otherwise Case1 if some contact
/// is with the smooth part of the divisor, Case2 if some contact is at `Zplus`/`Zminus`, Case3 else.
pub fn classify(d: &RelDatum, m: &ModelId) -> Result<Case, DimError> {
    check_assumption(d)?;
    let (n, np) = n_values(d, m)?;
    if n > Q::int(np) {
        return Ok(Case::Inadmissible);
    }
    Ok(admissible_case(&d.rel))
}

fn admissible_case(rel: &[RelInsertion]) -> Case {
    let has = |t: &[RelTarget]| rel.iter().any(|x| t.contains(&x.target));
    if has(&[RelTarget::SmoothZ]) {
        Case::Case1
    } else if has(&[RelTarget::Zplus, RelTarget::Zminus]) {
        Case::Case2
    } else {
        Case::Case3
    }
}

/// A structural claim about a classified datum that does not hold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CaseViolation {
    pub case: Case,
    pub claim: &'static str,
    pub datum: String,
}

/// Checks the shape each admissible case is expected to have:
/// Case1 has a single smooth contact, three absolute points with total shifting 5 and `r = 2`;
/// Case2 contacts at `Z+-` have `alpha = 1`, `[ell] = 0`, and the absolute shiftings sum to
/// `3 + 1/r` (two points) or `4 + 1/r` (three points); Case3 contacts are at X, Y, S with
/// `[ell] = 0`; every admissible contact has `ell <= 1`.
pub fn case_violations(d: &RelDatum, m: &ModelId, case: Case) -> Vec<CaseViolation> {
    let mut out = Vec::new();
    let mut flag = |claim| out.push(CaseViolation { case, claim, datum: d.to_string() });
    if case == Case::Inadmissible {
        return out;
    }
    if d.rel.iter().any(|x| x.ell > Q::one()) {
        flag("every contact order is at most 1");
    }
    let iota = d.iota_abs_sum();
    let r = Q::int(m.ri());
    match case {
        Case::Case1 => {
            let smooth = d.rel.iter().filter(|x| x.target == RelTarget::SmoothZ).count();
            if smooth != 1 {
                flag("Case1 has exactly one smooth contact");
            }
            if d.abs.len() != 3 || iota != Q::int(5) {
                flag("Case1 has three absolute points with total shifting 5");
            }
            if m.r != 2 {
                flag("Case1 occurs only for r = 2");
            }
        }
        Case::Case2 => {
            let zs = d.rel.iter().filter(|x| matches!(x.target, RelTarget::Zplus | RelTarget::Zminus));
            if zs.clone().any(|x| x.alpha != 1) {
                flag("Case2 contacts at Z+- have alpha = 1");
            }
            if zs.clone().any(|x| x.ell_int() != 0) {
                flag("Case2 contacts at Z+- have [ell] = 0");
            }
            let ok = match d.abs.len() {
                2 => iota == Q::int(3) + Q::one() / r.clone(),
                3 => iota == Q::int(4) + Q::one() / r,
                _ => false,
            };
            if !ok {
                flag("Case2 absolute shiftings sum to 3+1/r (two points) or 4+1/r (three points)");
            }
        }
        Case::Case3 => {
            if d.rel.iter().any(|x| !matches!(x.target, RelTarget::X | RelTarget::Y | RelTarget::S) || x.ell_int() != 0) {
                flag("Case3 contacts are at X, Y or S with [ell] = 0");
            }
        }
        Case::Inadmissible => {}
    }
    out
}

/// Candidate relative insertions with integer part of `ell` at most `max_ell_int`, each with its
/// net contribution `v - dim Z_g` to `N - N'`.
pub fn rel_candidates(m: &ModelId, max_ell_int: u32) -> Vec<(RelInsertion, Q)> {
    let r = m.r;
    let (mx, my) = branch_constants(m);
    let mut out = Vec::new();
    for li in 0..=max_ell_int {
        for al in 1..r * r {
            if al % r == 0 {
                continue;
            }
            for t in [RelTarget::X, RelTarget::Y] {
                out.push(RelInsertion::with_int_part(t, al, li, r).expect("valid"));
            }
        }
        for al in 1..r {
            for t in [RelTarget::S, RelTarget::Zplus, RelTarget::Zminus] {
                out.push(RelInsertion::with_int_part(t, al, li, r).expect("valid"));
            }
        }
        if li >= 1 {
            out.push(RelInsertion::with_int_part(RelTarget::SmoothZ, 0, li, r).expect("valid"));
        }
    }
    out.into_iter()
        .map(|x| {
            let v = v_contrib(&x, r, &mx, &my).expect("valid") - Q::int(x.target.sector_dim());
            (x, v)
        })
        .collect()
}

/// Absolute insertions available on the model: untwisted and `mu_r` sectors.
pub fn abs_candidates(r: u32) -> Vec<AbsInsertion> {
    let mut out = vec![AbsInsertion::untwisted()];
    out.extend((1..r).map(|al| AbsInsertion::twisted(al, r)));
    out
}

fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All admissible data (as multisets of insertions, `gamma_degree = 0`) with contact integer parts
/// at most `max_ell_int` and at most `max_abs` absolute points, classified, in deterministic order.
pub fn enumerate_admissible(m: &ModelId, max_ell_int: u32, max_abs: u32) -> Result<Vec<(RelDatum, Case)>, DimError> {
    if max_abs > 3 {
        return Err(DimError::Assumption("at most 3 absolute insertions".into()));
    }
    let m = ModelId { compactified: true, ..*m };
    let r = m.r;
    let mut rels = rel_candidates(&m, max_ell_int);
    rels.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let absc = abs_candidates(r);
    let abs_sets: Vec<(Vec<AbsInsertion>, Q)> = (0..=max_abs as usize)
        .flat_map(|k| multisets(absc.len(), k))
        .map(|ix| {
            let v: Vec<AbsInsertion> = ix.iter().map(|&i| absc[i].clone()).collect();
            let u = v.iter().map(|a| u_contrib(a, r).expect("valid")).fold(Q::zero(), |s, x| s + x);
            (v, u)
        })
        .collect();
    let mut abs_sets = abs_sets;
    abs_sets.sort_by(|a, b| a.1.cmp(&b.1));
    let budget = abs_sets.first().map(|(_, u)| -u.clone()).unwrap_or_default();
    // relative multisets whose net contribution fits the largest absolute budget
    let mut rel_sets: Vec<(Vec<usize>, Q)> = Vec::new();
    fn rec(start: usize, rels: &[(RelInsertion, Q)], budget: &Q, cur: &mut Vec<usize>, tot: Q, out: &mut Vec<(Vec<usize>, Q)>) {
        out.push((cur.clone(), tot.clone()));
        for i in start..rels.len() {
            let t = tot.clone() + rels[i].1.clone();
            if &t > budget {
                break;
            }
            cur.push(i);
            rec(i, rels, budget, cur, t, out);
            cur.pop();
        }
    }
    rec(0, &rels, &budget, &mut Vec::new(), Q::zero(), &mut rel_sets);
    let mut found: Vec<(RelDatum, Case)> = rel_sets
        .par_iter()
        .flat_map_iter(|(ix, tot)| {
            let mut rel: Vec<RelInsertion> = ix.iter().map(|&i| rels[i].0.clone()).collect();
            rel.sort();
            let mut local = Vec::new();
            // tot + u is N - N', so every set within the room is admissible
            let room = -tot.clone();
            let case = admissible_case(&rel);
            for (abs, _) in abs_sets.iter().take_while(|(_, u)| u <= &room) {
                let d = RelDatum::new(abs.clone(), rel.clone());
                local.push((d, case));
            }
            local
        })
        .collect();
    found.sort();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: u32, a: i64) -> ModelId {
        ModelId::m(r, a).unwrap()
    }

    fn rel(t: RelTarget, al: u32, ell: Q, r: u32) -> RelInsertion {
        RelInsertion::new(t, al, ell, r).unwrap()
    }

    #[test]
    fn chern_examples() {
        let d = RelDatum::new(vec![], vec![rel(RelTarget::SmoothZ, 0, Q::int(1), 2)]);
        assert_eq!(chern_pairing(&d, 2), Q::int(4));
        assert_eq!(chern_pairing(&RelDatum::default(), 2), Q::zero());
        let d = RelDatum::new(vec![], vec![rel(RelTarget::S, 1, Q::ratio(1, 3), 3), rel(RelTarget::S, 2, Q::ratio(2, 3), 3)]);
        assert_eq!(chern_pairing(&d, 3), Q::int(5));
    }

    #[test]
    fn u_examples() {
        assert_eq!(u_contrib(&AbsInsertion::twisted(1, 2), 2).unwrap(), Q::ratio(-1, 2));
        assert_eq!(u_contrib(&AbsInsertion::untwisted(), 2).unwrap(), Q::one());
        assert_eq!(u_contrib(&AbsInsertion::twisted(2, 3), 3).unwrap(), Q::ratio(-2, 3));
        assert!(u_contrib(&AbsInsertion::twisted(3, 3), 3).is_err());
    }

    #[test]
    fn v_examples() {
        let z = Q::zero();
        assert_eq!(v_contrib(&rel(RelTarget::SmoothZ, 0, Q::int(1), 2), 2, &z, &z).unwrap(), Q::int(4));
        assert_eq!(v_contrib(&rel(RelTarget::S, 1, Q::ratio(1, 2), 2), 2, &z, &z).unwrap(), Q::int(2));
        assert_eq!(v_contrib(&rel(RelTarget::Zplus, 1, Q::ratio(1, 3), 3), 3, &z, &z).unwrap(), Q::ratio(4, 3));
    }

    #[test]
    fn rejects_inconsistent_contact() {
        assert!(RelInsertion::new(RelTarget::X, 1, Q::ratio(1, 2), 2).is_err());
        assert!(RelInsertion::new(RelTarget::X, 2, Q::ratio(2, 4), 2).is_err());
        assert!(RelInsertion::new(RelTarget::SmoothZ, 0, Q::ratio(1, 2), 2).is_err());
        assert!(RelInsertion::new(RelTarget::S, 1, Q::ratio(-1, 2), 2).is_err());
    }

    #[test]
    fn dimension_examples() {
        let mm = m(2, 1);
        // three twisted points of order 3, each shifting 5/3, total 5
        let abs = vec![AbsInsertion::twisted(2, 3); 3];
        let d = RelDatum::new(abs, vec![rel(RelTarget::SmoothZ, 0, Q::int(1), 2)]);
        assert_eq!(d.iota_abs_sum(), Q::int(5));
        assert_eq!(n_values(&d, &mm).unwrap(), (Q::int(2), 2));
        assert_eq!(classify(&d, &mm).unwrap(), Case::Case1);
        assert_eq!(virtual_dim_complex(&RelDatum::default(), &mm).unwrap(), Q::zero());
        let d = RelDatum::new(vec![AbsInsertion::untwisted()], vec![]);
        assert_eq!(virtual_dim_complex(&d, &m(3, 1)).unwrap(), Q::one());
    }

    #[test]
    fn n_prime_examples() {
        let mm = m(2, 1);
        let d = RelDatum::new(vec![], vec![rel(RelTarget::X, 1, Q::ratio(1, 4), 2)]);
        assert_eq!(n_values(&d, &mm).unwrap().1, 0);
        assert_eq!(classify(&d, &mm).unwrap(), Case::Inadmissible);
        let d = RelDatum::new(vec![], vec![rel(RelTarget::S, 1, Q::ratio(1, 2), 2)]);
        assert_eq!(n_values(&d, &mm).unwrap().1, 1);
    }

    #[test]
    fn case2_example() {
        let mm = m(2, 1);
        let d = RelDatum::new(
            vec![AbsInsertion::twisted(1, 2); 3],
            vec![rel(RelTarget::Zminus, 1, Q::ratio(1, 2), 2)],
        );
        assert_eq!(d.iota_abs_sum(), Q::int(4) + Q::ratio(1, 2));
        assert_eq!(classify(&d, &mm).unwrap(), Case::Case2);
        assert!(case_violations(&d, &mm, Case::Case2).is_empty());
    }

    #[test]
    fn assumption_enforced() {
        let d = RelDatum::new(vec![AbsInsertion::untwisted(); 4], vec![]);
        assert!(matches!(classify(&d, &m(2, 1)), Err(DimError::Assumption(_))));
        let mut a = AbsInsertion::twisted(1, 2);
        a.form_degree = 2;
        let d = RelDatum::new(vec![a], vec![]);
        assert!(matches!(classify(&d, &m(2, 1)), Err(DimError::Assumption(_))));
    }

    #[test]
    fn xy_integer_n() {
        for r in 2..=6u32 {
            for a in 1..r as i64 {
                let Ok(mm) = ModelId::m(r, a) else { continue };
                for (x, _) in rel_candidates(&mm, 1) {
                    if let Some(n) = xy_n(&x, &mm) {
                        assert!(n.is_integral() && n >= Q::one(), "{x} at {mm}: n = {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn smooth_model_enumeration() {
        let out = enumerate_admissible(&m(1, 0), 2, 3).unwrap();
        assert_eq!(out, vec![(RelDatum::default(), Case::Case3)]);
    }

    #[test]
    fn datum_json_round_trip() {
        let text = r#"{"abs":["untwisted",{"alpha":1}],"rel":[{"target":"X","alpha":1,"ell":"1/4"}]}"#;
        let mut d: RelDatum = serde_json::from_str(text).unwrap();
        d.resolve_orders(2);
        assert_eq!(d.abs[1], AbsInsertion::twisted(1, 2));
        assert_eq!(d.rel[0].ell, Q::ratio(1, 4));
        let back: RelDatum = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    // Totals and Case2 shape failures frozen from an independent enumeration oracle.
    #[test]
    fn admissible_counts() {
        for (r, a, total, case2_bad) in [(1u32, 0i64, 1usize, 0usize), (2, 1, 27, 0), (3, 1, 314, 22), (3, 2, 314, 22)] {
            let mm = m(r, a);
            let out = enumerate_admissible(&mm, 2, 3).unwrap();
            assert_eq!(out.len(), total, "r={r}");
            let bad = out.iter().filter(|(d, c)| *c == Case::Case2 && !case_violations(d, &mm, *c).is_empty()).count();
            assert_eq!(bad, case2_bad, "r={r}");
        }
    }

    #[test]
    fn r2_admissible_shapes() {
        let mm = m(2, 1);
        for (d, c) in enumerate_admissible(&mm, 2, 3).unwrap() {
            assert!(case_violations(&d, &mm, c).is_empty(), "{d} {c}");
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let mm = m(3, 1);
        assert_eq!(enumerate_admissible(&mm, 1, 3).unwrap(), enumerate_admissible(&mm, 1, 3).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn model() -> impl Strategy<Value = ModelId> {
            (1u32..=6, 1i64..6).prop_filter_map("coprime", |(r, a)| {
                let a = if r == 1 { 0 } else { a % r as i64 };
                ModelId::m(r, a).ok()
            })
        }

        fn datum(m: ModelId) -> impl Strategy<Value = (ModelId, RelDatum)> {
            let cands: Vec<RelInsertion> = rel_candidates(&m, 2).into_iter().map(|x| x.0).collect();
            let absc = abs_candidates(m.r);
            (
                proptest::collection::vec(proptest::sample::select(absc), 0..=3),
                proptest::collection::vec(proptest::sample::select(cands), 0..=4),
            )
                .prop_map(move |(a, r)| (m, RelDatum::new(a, r)))
        }

        proptest! {
            #[test]
            fn ledger_matches_index_formula((m, d) in model().prop_flat_map(datum)) {
                prop_assert_eq!(ledger_dim(&d, &m).unwrap(), index_formula_dim(&d, &m).unwrap());
            }

            #[test]
            fn real_is_twice_complex((m, d) in model().prop_flat_map(datum)) {
                prop_assert_eq!(virtual_dim_real(&d, &m).unwrap(), Q::int(2) * virtual_dim_complex(&d, &m).unwrap());
            }

            #[test]
            fn relative_contributions_positive(m in model()) {
                for (x, net) in rel_candidates(&m, 2) {
                    prop_assert!(net.is_positive(), "{} has net {}", x, net);
                }
            }

            #[test]
            fn n_prime_is_sector_dim_sum((m, d) in model().prop_flat_map(datum)) {
                let want: i64 = d.rel.iter().map(|x| match x.target {
                    RelTarget::S => 1, RelTarget::SmoothZ => 2, _ => 0 }).sum();
                prop_assert_eq!(n_values(&d, &m).unwrap().1, want);
            }

        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn enumeration_matches_classify((m, d) in model().prop_filter("small", |m| m.r <= 3).prop_flat_map(datum)) {
                let mut d = d;
                d.rel.retain(|x| x.ell_int() <= 1);
                d.rel.sort();
                d.abs.sort();
                d.rel_form_degrees = vec![0; d.rel.len()];
                let case = classify(&d, &m).unwrap();
                let all = enumerate_admissible(&m, 1, 3).unwrap();
                let hit = all.iter().find(|(e, _)| e == &d).map(|x| x.1);
                match case {
                    Case::Inadmissible => prop_assert!(hit.is_none()),
                    c => prop_assert_eq!(hit, Some(c)),
                }
            }
        }
    }
}
