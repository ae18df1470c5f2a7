//! Splitting bookkeeping for the degeneration of a global three-point function into a local
//! piece near the flopped curve and an opaque far side, and the symbolic comparison of both
//! sides of the flop.
//!
//! A splitting glues local components (relative data on the local model) to far components
//! through contact points with the divisor. Far-side invariants are never computed: each far
//! component becomes an opaque symbol keyed by its contacts and the chosen dual-basis indices,
//! so the comparison tests exactly whether the local pieces agree.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use itertools::Itertools;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::{classify, q_text, rel_candidates, AbsInsertion, AbsSector, Case, DimError, RelDatum, RelInsertion, RelTarget};
use crate::localize::{survivors, LocError};
use crate::localmodel::{sector_shifting_at, ModelError, ModelId, PointId, Side};
use crate::symcalc::Scalar;
use crate::{Factored, LimitU0, Q};

#[derive(Debug, Error)]
pub enum DegenError {
    #[error(transparent)]
    Dim(#[from] DimError),
    #[error(transparent)]
    Loc(#[from] LocError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid splitting: {0}")]
    InvalidSplit(String),
    #[error("class is a multiple of the exceptional curve: graphs meeting it vanish in the u -> 0 limit, so no comparison is made")]
    ClassInGamma,
    #[error("local sides disagree on {} splitting(s)", .0.splittings.iter().filter(|s| !s.equal).count())]
    Mismatch(Box<FlopSumReport>),
}

/// How `|Aut(T)|` counts symmetries of the contact data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutConvention {
    /// Permutations of contact points with identical sector and contact order.
    #[default]
    IdenticalContacts,
    /// No symmetry factor.
    Trivial,
}

/// A genus-zero global type with up to three absolute insertions. `gamma_degree` is the
/// coefficient of the flopped curve and `contact` the total contact order with the divisor of the
/// remaining part of the class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThreePointType {
    #[serde(default)]
    pub abs: Vec<AbsInsertion>,
    #[serde(default)]
    pub gamma_degree: i64,
    #[serde(with = "q_text")]
    pub contact: Q,
}

impl ThreePointType {
    pub fn new(abs: Vec<AbsInsertion>, gamma_degree: i64, contact: Q) -> Self {
        ThreePointType { abs, gamma_degree, contact }
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
    }

    pub fn validate(&self, r: u32) -> Result<(), DegenError> {
        if self.abs.len() > 3 {
            return Err(DimError::Assumption("at most 3 absolute insertions".into()).into());
        }
        for a in &self.abs {
            a.validate()?;
            if let AbsSector::Twisted { order, .. } = a.sector {
                if order != r && order != r * r {
                    return Err(DimError::InvalidInsertion(format!("sector order {order} does not occur for r = {r}")).into());
                }
            }
        }
        if self.contact < Q::zero() {
            return Err(DegenError::InvalidSplit("negative total contact".into()));
        }
        Ok(())
    }

    /// True when the class is a multiple of the flopped curve.
    pub fn class_in_gamma(&self) -> bool {
        self.contact.is_zero()
    }
}

impl fmt::Display for ThreePointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{} abs[{}] contact {}", self.gamma_degree, self.abs.iter().join(","), self.contact)
    }
}

/// A connected piece of the local side: its share of the flopped-curve degree, the absolute
/// insertions it carries (indices into the type) and its contact points (indices into `T`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalComponent {
    pub gamma_degree: i64,
    pub abs: Vec<usize>,
    pub contacts: Vec<usize>,
}

/// `(Γ⁺, Γ⁻, ρ)`: local components, far components and the pairing of contact points.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitTriple {
    /// The type being split; its absolute insertions are referenced by index.
    pub ty: ThreePointType,
    /// Contact data `T`, shared by both sides.
    pub contacts: Vec<RelInsertion>,
    pub gamma_plus: Vec<LocalComponent>,
    /// Far components as lists of their contact points.
    pub gamma_minus: Vec<Vec<usize>>,
    /// Local contact `j` is glued to far contact `rho[j]`.
    pub rho: Vec<usize>,
}

impl SplitTriple {
    /// Relative datum of a local component on the given side; `None` when its curve class is not
    /// effective there.
    pub fn component_datum(&self, i: usize, side_sign: i64) -> Option<RelDatum> {
        let c = &self.gamma_plus[i];
        let gd = c.gamma_degree * side_sign;
        if gd < 0 {
            return None;
        }
        let d = RelDatum::new(
            c.abs.iter().map(|&j| self.ty.abs[j].clone()).collect(),
            c.contacts.iter().map(|&j| self.contacts[j].clone()).collect(),
        )
        .with_gamma_degree(gd as u32);
        Some(d)
    }

    fn canonical(&self) -> SplitTriple {
        // relabel contacts into sorted order in every possible way and sort components
        let k = self.contacts.len();
        let mut best: Option<SplitTriple> = None;
        let mut sorted = self.contacts.clone();
        sorted.sort();
        for perm in (0..k).permutations(k) {
            // old contact j becomes contact perm[j] of the sorted list
            if (0..k).any(|j| sorted[perm[j]] != self.contacts[j]) {
                continue;
            }
            let minus_of: Vec<usize> = {
                let mut inv = vec![0; k];
                for (j, &m) in self.rho.iter().enumerate() {
                    inv[m] = j;
                }
                inv
            };
            let mut plus: Vec<LocalComponent> = self
                .gamma_plus
                .iter()
                .map(|c| {
                    let mut cs: Vec<usize> = c.contacts.iter().map(|&j| perm[j]).collect();
                    cs.sort();
                    let mut abs = c.abs.clone();
                    abs.sort();
                    LocalComponent { gamma_degree: c.gamma_degree, abs, contacts: cs }
                })
                .collect();
            plus.sort();
            let mut minus: Vec<Vec<usize>> = self
                .gamma_minus
                .iter()
                .map(|b| {
                    let mut cs: Vec<usize> = b.iter().map(|&m| perm[minus_of[m]]).collect();
                    cs.sort();
                    cs
                })
                .collect();
            minus.sort();
            let cand = SplitTriple { ty: self.ty.clone(), contacts: sorted.clone(), gamma_plus: plus, gamma_minus: minus, rho: (0..k).collect() };
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
        best.expect("identity preserves T")
    }
}

impl fmt::Display for SplitTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.contacts.iter().join(",");
        let plus = self.gamma_plus.iter().map(|c| format!("(G{} a{:?} c{:?})", c.gamma_degree, c.abs, c.contacts)).join(" ");
        let minus = self.gamma_minus.iter().map(|b| format!("{b:?}")).join(" ");
        write!(f, "T[{t}] +{{{plus}}} -{{{minus}}} rho{:?}", self.rho)
    }
}

/// `|Aut(T)|` under the given convention.
pub fn aut_t(contacts: &[RelInsertion], conv: AutConvention) -> u64 {
    match conv {
        AutConvention::Trivial => 1,
        AutConvention::IdenticalContacts => {
            let mut counts: BTreeMap<&RelInsertion, u64> = BTreeMap::new();
            for c in contacts {
                *counts.entry(c).or_default() += 1;
            }
            counts.values().map(|&n| (1..=n).product::<u64>()).product()
        }
    }
}

/// `C_eta = |Aut(T)| * prod ell_i`.
pub fn c_eta(t: &SplitTriple, conv: AutConvention) -> Q {
    t.contacts.iter().fold(Q::int(aut_t(&t.contacts, conv) as i64), |acc, c| acc * c.ell.clone())
}

/// Glues the two sides back together: checks that the pairing preserves `T`, that the glued
/// curve is connected of genus zero, and returns the glued type.
pub fn glue(t: &SplitTriple) -> Result<ThreePointType, DegenError> {
    let k = t.contacts.len();
    let bad = |s: &str| Err(DegenError::InvalidSplit(s.to_string()));
    let mut rs = t.rho.clone();
    rs.sort();
    if rs != (0..k).collect::<Vec<_>>() {
        return bad("pairing is not a bijection of contact points");
    }
    if (0..k).any(|j| t.contacts[j] != t.contacts[t.rho[j]]) {
        return bad("pairing does not preserve sectors and contact orders");
    }
    let mut seen_plus = vec![0usize; k];
    for c in &t.gamma_plus {
        for &j in &c.contacts {
            if j >= k {
                return bad("contact index out of range");
            }
            seen_plus[j] += 1;
        }
    }
    let mut seen_minus = vec![0usize; k];
    for b in &t.gamma_minus {
        for &j in b {
            if j >= k {
                return bad("contact index out of range");
            }
            seen_minus[j] += 1;
        }
    }
    if seen_plus.iter().chain(&seen_minus).any(|&n| n != 1) {
        return bad("every contact point lies on exactly one component per side");
    }
    let mut abs_seen = vec![0usize; t.ty.abs.len()];
    for c in &t.gamma_plus {
        for &j in &c.abs {
            if j >= abs_seen.len() {
                return bad("absolute insertion index out of range");
            }
            abs_seen[j] += 1;
        }
    }
    if abs_seen.iter().any(|&n| n != 1) {
        return bad("every absolute insertion lies on exactly one local component");
    }
    if t.gamma_plus.iter().map(|c| c.gamma_degree).sum::<i64>() != t.ty.gamma_degree {
        return bad("flopped-curve degrees do not add up");
    }
    let total = t.contacts.iter().fold(Q::zero(), |s, c| s + c.ell.clone());
    if total != t.ty.contact {
        return bad("contact orders do not add up to the total contact");
    }
    // bipartite gluing graph: local components 0..p, far components p..p+q, one edge per contact
    let p = t.gamma_plus.len();
    let n = p + t.gamma_minus.len();
    if n == 0 {
        return bad("no components");
    }
    let mut plus_of = vec![0; k];
    for (i, c) in t.gamma_plus.iter().enumerate() {
        for &j in &c.contacts {
            plus_of[j] = i;
        }
    }
    let mut minus_of = vec![0; k];
    for (i, b) in t.gamma_minus.iter().enumerate() {
        for &m in b {
            minus_of[m] = p + i;
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..k {
        let (a, b) = (root(&mut parent, plus_of[j]), root(&mut parent, minus_of[t.rho[j]]));
        if a == b {
            return bad("gluing creates a loop, so the glued curve is not of genus zero");
        }
        parent[a] = b;
    }
    if (0..n).map(|x| root(&mut parent, x)).collect::<BTreeSet<_>>().len() != 1 {
        return bad("glued curve is disconnected");
    }
    Ok(t.ty.clone())
}

/// Bounds for splitting enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub max_contacts: usize,
    pub max_ell_int: u32,
    pub max_edge_degree: u32,
}

impl Default for SplitBounds {
    fn default() -> Self {
        SplitBounds { max_contacts: 2, max_ell_int: 1, max_edge_degree: 2 }
    }
}

fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    // restricted growth strings: block index of each element
    fn go(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max {
            cur.push(b);
            go(i + 1, n, max.max(b + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, 0, &mut Vec::new(), &mut out);
    out
}

fn blocks(labels: &[usize]) -> Vec<Vec<usize>> {
    let n = labels.iter().map(|&b| b + 1).max().unwrap_or(0);
    let mut out = vec![Vec::new(); n];
    for (j, &b) in labels.iter().enumerate() {
        out[b].push(j);
    }
    out
}

/// Ordered splittings of `n` into `parts` integers of the sign of `n`.
fn signed_compositions(n: i64, parts: usize) -> Vec<Vec<i64>> {
    let s = n.signum();
    let m = n.unsigned_abs() as usize;
    if parts == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    (0..parts)
        .map(|_| 0..=m)
        .multi_cartesian_product()
        .filter(|v| v.iter().sum::<usize>() == m)
        .map(|v| v.into_iter().map(|x| s * x as i64).collect())
        .collect()
}

fn classify_memo(d: &RelDatum, m: &ModelId) -> Result<Case, DimError> {
    type Memo = Mutex<HashMap<(ModelId, RelDatum), Case>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    // the classification does not see the flopped-curve degree
    let key = (*m, d.clone().with_gamma_degree(0));
    if let Some(c) = memo.lock().expect("case memo").get(&key) {
        return Ok(*c);
    }
    let c = classify(&key.1, m)?;
    memo.lock().expect("case memo").insert(key, c);
    Ok(c)
}

/// Contact profiles `T`: multisets of candidate contacts with at most `max_contacts` points and
/// total order equal to the type's total contact.
fn contact_profiles(m: &ModelId, ty: &ThreePointType, b: &SplitBounds) -> Vec<Vec<RelInsertion>> {
    let mut cands: Vec<RelInsertion> = rel_candidates(m, b.max_ell_int).into_iter().map(|x| x.0).collect();
    cands.sort();
    (1..=b.max_contacts)
        .flat_map(|k| cands.iter().cloned().combinations_with_replacement(k))
        .filter(|t| t.iter().fold(Q::zero(), |s, c| s + c.ell.clone()) == ty.contact)
        .collect()
}

/// All splittings of the type within bounds up to relabeling, each with the classification of
/// its local components. Mixed-sign shares of the flopped-curve degree are left out: such a
/// splitting has a non-effective component on both sides of the flop.
pub fn enumerate_splittings(m: &ModelId, ty: &ThreePointType, b: &SplitBounds) -> Result<Vec<(SplitTriple, Vec<Case>)>, DegenError> {
    let m = ModelId { compactified: true, ..*m };
    ty.validate(m.r)?;
    if b.max_contacts == 0 {
        return Ok(Vec::new());
    }
    let na = ty.abs.len();
    let found: BTreeSet<SplitTriple> = contact_profiles(&m, ty, b)
        .par_iter()
        .flat_map_iter(|t| {
            let k = t.len();
            let mut out = Vec::new();
            for pl in set_partitions(k) {
                let pb = blocks(&pl);
                for ml in set_partitions(k) {
                    let mb = blocks(&ml);
                    if pb.len() + mb.len() != k + 1 {
                        continue;
                    }
                    for asg in (0..na).map(|_| 0..pb.len()).multi_cartesian_product_or_unit() {
                        for gds in signed_compositions(ty.gamma_degree, pb.len()) {
                            let plus = pb
                                .iter()
                                .enumerate()
                                .map(|(i, cs)| LocalComponent {
                                    gamma_degree: gds[i],
                                    abs: (0..na).filter(|&j| asg[j] == i).collect(),
                                    contacts: cs.clone(),
                                })
                                .collect();
                            let s = SplitTriple { ty: ty.clone(), contacts: t.clone(), gamma_plus: plus, gamma_minus: mb.clone(), rho: (0..k).collect() };
                            if glue(&s).is_ok() {
                                out.push(s.canonical());
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    found
        .into_iter()
        .map(|s| {
            let cases = (0..s.gamma_plus.len())
                .map(|i| {
                    let d = s.component_datum(i, 1).or_else(|| s.component_datum(i, -1)).expect("one side is effective");
                    classify_memo(&d, &m)
                })
                .collect::<Result<Vec<_>, DimError>>()?;
            Ok((s, cases))
        })
        .collect()
}

trait ProductOrUnit<I: Iterator + Clone> {
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<I::Item>>>;
}

impl<O, I> ProductOrUnit<I> for O
where
    O: Iterator<Item = I>,
    I: Iterator + Clone + 'static,
    I::Item: Clone + 'static,
{
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<I::Item>>> {
        let v: Vec<I> = self.collect();
        if v.is_empty() {
            Box::new(std::iter::once(Vec::new()))
        } else {
            Box::new(v.into_iter().multi_cartesian_product())
        }
    }
}

/// The sector and class correspondence across the flop.
#[derive(Clone, Debug, Serialize)]
pub struct SectorMap {
    pub model: ModelId,
    pub pairs: Vec<SectorPair>,
    /// Multiplier of the flopped-curve class.
    pub gamma_sign: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorPair {
    pub point: PointId,
    pub k: u32,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub iota_here: Q,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub iota_there: Q,
}

impl SectorMap {
    pub fn new(m: &ModelId) -> Result<Self, DegenError> {
        let other = m.with_side(m.side.other());
        let mut pairs = Vec::new();
        for point in [PointId::P, PointId::Q] {
            for k in 1..m.r {
                pairs.push(SectorPair {
                    point,
                    k,
                    iota_here: sector_shifting_at(m, point, k as i64)?,
                    iota_there: sector_shifting_at(&other, point, k as i64)?,
                });
            }
        }
        Ok(SectorMap { model: *m, pairs, gamma_sign: -1 })
    }

    /// True when each sector keeps its degree shifting.
    pub fn preserves_shifting(&self) -> bool {
        self.pairs.iter().all(|p| p.iota_here == p.iota_there)
    }

    /// Image of an absolute insertion: the same sector label at the corresponding point.
    pub fn map_abs(&self, a: &AbsInsertion) -> AbsInsertion {
        a.clone()
    }

    pub fn map_gamma_degree(&self, n: i64) -> i64 {
        self.gamma_sign * n
    }

    pub fn map_type(&self, ty: &ThreePointType) -> ThreePointType {
        ThreePointType {
            abs: ty.abs.iter().map(|a| self.map_abs(a)).collect(),
            gamma_degree: self.map_gamma_degree(ty.gamma_degree),
            contact: ty.contact.clone(),
        }
    }
}

/// A finite formal sum of factored terms, with like terms merged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FormalSum {
    /// Unit-scalar term text -> (unit-scalar term, coefficient).
    terms: BTreeMap<String, (Factored, Q)>,
}

impl FormalSum {
    pub fn one() -> Self {
        let mut s = FormalSum::default();
        s.add(&Factored::one());
        s
    }

    pub fn add(&mut self, f: &Factored) {
        if f.is_zero() {
            return;
        }
        let c = f.scalar().clone();
        let mut unit = f.clone();
        unit.mul_scalar(&(Q::one() / c.clone()));
        let e = self.terms.entry(unit.to_text()).or_insert_with(|| (unit, Q::zero()));
        e.1 = e.1.clone() + c;
        if e.1.is_zero() {
            let key = e.0.to_text();
            self.terms.remove(&key);
        }
    }

    pub fn extend(&mut self, o: &FormalSum) {
        for (u, c) in o.terms.values() {
            let mut f = u.clone();
            f.mul_scalar(c);
            self.add(&f);
        }
    }

    pub fn mul(&self, o: &FormalSum) -> FormalSum {
        let mut out = FormalSum::default();
        for (a, ca) in self.terms.values() {
            for (b, cb) in o.terms.values() {
                let mut f = a.mul(b);
                f.mul_scalar(&(ca.clone() * cb.clone()));
                out.add(&f);
            }
        }
        out
    }

    pub fn scale(&self, f: &Factored) -> FormalSum {
        self.mul(&FormalSum::from(f.clone()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .values()
            .map(|(u, c)| {
                let mut f = u.clone();
                f.mul_scalar(c);
                f.to_text()
            })
            .join(" + ")
    }
}

impl From<Factored> for FormalSum {
    fn from(f: Factored) -> Self {
        let mut s = FormalSum::default();
        s.add(&f);
        s
    }
}

impl fmt::Display for FormalSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Sum of the `u -> 0` limits of the surviving graphs of a local datum; zero for inadmissible
/// data.
pub fn local_value(m: &ModelId, d: &RelDatum, bound: u32) -> Result<FormalSum, DegenError> {
    type Memo = Mutex<HashMap<(ModelId, RelDatum, u32), FormalSum>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    let key = (ModelId { compactified: true, ..*m }, d.clone(), bound);
    if let Some(v) = memo.lock().expect("local value memo").get(&key) {
        return Ok(v.clone());
    }
    let mut out = FormalSum::default();
    if classify_memo(d, &key.0)? != Case::Inadmissible {
        for s in survivors(&key.0, d, bound)? {
            match s.contribution.limit_u0() {
                LimitU0::Value(v) => out.add(&v),
                LimitU0::Zero => {}
                LimitU0::Pole => unreachable!("survivors have u-valuation zero"),
            }
        }
    }
    memo.lock().expect("local value memo").insert(key, out.clone());
    Ok(out)
}

/// Number of dual-basis elements of the sector locus a contact maps to.
pub fn basis_size(t: RelTarget) -> usize {
    match t {
        RelTarget::X | RelTarget::Y | RelTarget::Zplus | RelTarget::Zminus => 1,
        RelTarget::S => 2,
        RelTarget::SmoothZ => 4,
    }
}

fn contact_label(c: &RelInsertion) -> String {
    format!("{}.{}.{}", c.target.name(), c.alpha, c.ell)
}

/// One splitting in a flop comparison.
#[derive(Clone, Debug, Serialize)]
pub struct SplitTerm {
    pub eta: String,
    #[serde(rename = "C_eta", serialize_with = "crate::orbact::ser_display")]
    pub c_eta: Q,
    pub case: Vec<Case>,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub lhs: FormalSum,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub rhs: FormalSum,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlopSumReport {
    pub model: ModelId,
    #[serde(rename = "type")]
    pub ty: ThreePointType,
    pub bounds: SplitBounds,
    pub aut_convention: AutConvention,
    pub splittings: Vec<SplitTerm>,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub lhs_total: FormalSum,
    #[serde(serialize_with = "crate::orbact::ser_display")]
    pub rhs_total: FormalSum,
    pub all_terms_equal: bool,
    pub total_equal: bool,
}

/// One side of a splitting's term: `C_eta` times the local components times the far symbols,
/// summed over dual-basis choices.
fn side_term(m: &ModelId, s: &SplitTriple, sign: i64, c: &Q, bound: u32) -> Result<FormalSum, DegenError> {
    let mut local = FormalSum::from(Factored::constant(c.clone()));
    for i in 0..s.gamma_plus.len() {
        match s.component_datum(i, sign) {
            None => return Ok(FormalSum::default()),
            Some(d) => local = local.mul(&local_value(m, &d, bound)?),
        }
        if local.is_zero() {
            return Ok(local);
        }
    }
    let mut out = FormalSum::default();
    for idx in s.contacts.iter().map(|c| 0..basis_size(c.target)).multi_cartesian_product_or_unit() {
        let mut far = Factored::one();
        for (j, c) in s.contacts.iter().enumerate() {
            if basis_size(c.target) > 1 {
                far.mul_opaque(&format!("beta{j}#{}", idx[j]), 1).expect("valid symbol");
            }
        }
        for b in &s.gamma_minus {
            let name = format!("Yfar:{}", b.iter().map(|&j| format!("{}#{}", contact_label(&s.contacts[j]), idx[j])).join(","));
            far.mul_opaque(&name, 1).expect("valid symbol");
        }
        out.extend(&local.scale(&far));
    }
    Ok(out)
}

/// Assembles both sides of the degeneration sum for the type and its flop image and compares them
/// splitting by splitting. Fails with the full report when some splitting disagrees.
pub fn compare_flop_sum(m: &ModelId, ty: &ThreePointType, b: &SplitBounds, conv: AutConvention) -> Result<FlopSumReport, DegenError> {
    let m = ModelId { compactified: true, ..*m };
    ty.validate(m.r)?;
    if ty.class_in_gamma() {
        return Err(DegenError::ClassInGamma);
    }
    let other = m.with_side(match m.side {
        Side::S => Side::Sf,
        Side::Sf => Side::S,
    });
    let splits = enumerate_splittings(&m, ty, b)?;
    let terms: Vec<SplitTerm> = splits
        .par_iter()
        .map(|(s, cases)| {
            let c = c_eta(s, conv);
            let lhs = side_term(&m, s, 1, &c, b.max_edge_degree)?;
            let rhs = side_term(&other, s, -1, &c, b.max_edge_degree)?;
            let equal = lhs == rhs;
            Ok(SplitTerm { eta: s.to_string(), c_eta: c, case: cases.clone(), lhs, rhs, equal })
        })
        .collect::<Result<_, DegenError>>()?;
    let mut lhs_total = FormalSum::default();
    let mut rhs_total = FormalSum::default();
    for t in &terms {
        lhs_total.extend(&t.lhs);
        rhs_total.extend(&t.rhs);
    }
    let all = terms.iter().all(|t| t.equal);
    let report = FlopSumReport {
        model: m,
        ty: ty.clone(),
        bounds: *b,
        aut_convention: conv,
        total_equal: lhs_total == rhs_total,
        lhs_total,
        rhs_total,
        all_terms_equal: all,
        splittings: terms,
    };
    if !all {
        return Err(DegenError::Mismatch(Box::new(report)));
    }
    Ok(report)
}
