//! Geometry catalog of the local models: torus-fixed points with stabilizers and chart data,
//! invariant curves with end data, and the flop correspondence.
//!
//! Chart weights are not tabulated. Each chart coordinate is a Laurent monomial in the ambient
//! coordinates `(x, y, z, t, w)` of the weighted projective compactification with weights
//! `(r, r, 1, r, 1)`; torus weights and stabilizer characters are read off from the monomial.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbact::{gcd, inverse_mod, residue, CyclicAction};
use crate::symcalc::Scalar;
use crate::{Factored, Weight, Q};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("r must be at least 1")]
    BadOrder,
    #[error("a = {a} is not a unit modulo r = {r}")]
    NotCoprime { r: u32, a: i64 },
    #[error("{0} lies on the divisor and does not exist on the open model")]
    NotCompactified(PointId),
    #[error("{0} is not an invariant curve of this model")]
    MissingCurve(CurveId),
    #[error("sector {k} outside [0, {n}) at {pt}")]
    SectorOutOfRange { pt: PointId, k: i64, n: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "s")]
    S,
    #[serde(rename = "sf")]
    Sf,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::S => Side::Sf,
            Side::Sf => Side::S,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::S => "s",
            Side::Sf => "sf",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PointId {
    P,
    Q,
    X,
    Y,
    #[serde(rename = "Zplus")]
    Zplus,
    #[serde(rename = "Zminus")]
    Zminus,
}

impl PointId {
    pub const ALL: [PointId; 6] = [PointId::P, PointId::Q, PointId::X, PointId::Y, PointId::Zplus, PointId::Zminus];

    pub fn on_divisor(self) -> bool {
        !matches!(self, PointId::P | PointId::Q)
    }

    pub fn name(self) -> &'static str {
        match self {
            PointId::P => "P",
            PointId::Q => "Q",
            PointId::X => "X",
            PointId::Y => "Y",
            PointId::Zplus => "Zplus",
            PointId::Zminus => "Zminus",
        }
    }

    pub fn parse(s: &str) -> Option<PointId> {
        PointId::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CurveId {
    Gamma,
    Lpy,
    Lqx,
    Lpz,
    Lqz,
}

impl CurveId {
    pub const ALL: [CurveId; 5] = [CurveId::Gamma, CurveId::Lpy, CurveId::Lqx, CurveId::Lpz, CurveId::Lqz];

    pub fn name(self) -> &'static str {
        match self {
            CurveId::Gamma => "Gamma",
            CurveId::Lpy => "Lpy",
            CurveId::Lqx => "Lqx",
            CurveId::Lpz => "Lpz",
            CurveId::Lqz => "Lqz",
        }
    }

    pub fn parse(s: &str) -> Option<CurveId> {
        CurveId::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for CurveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId {
    pub r: u32,
    pub a: u32,
    pub side: Side,
    pub compactified: bool,
}

impl ModelId {
    /// Validates `r >= 1` and reduces `a` to a unit residue (`a = 0` when `r = 1`).
    pub fn new(r: u32, a: i64, side: Side, compactified: bool) -> Result<Self, ModelError> {
        if r == 0 {
            return Err(ModelError::BadOrder);
        }
        let red = residue(a, r);
        if r > 1 && (red == 0 || gcd(red as i64, r as i64) != 1) {
            return Err(ModelError::NotCoprime { r, a });
        }
        Ok(ModelId { r, a: red, side, compactified })
    }

    /// Compactified model on side `s`.
    pub fn m(r: u32, a: i64) -> Result<Self, ModelError> {
        Self::new(r, a, Side::S, true)
    }

    pub fn with_side(self, side: Side) -> Self {
        ModelId { side, ..self }
    }

    pub fn ri(&self) -> i64 {
        self.r as i64
    }

    pub fn ai(&self) -> i64 {
        self.a as i64
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(r={},a={},{})", if self.compactified { "M" } else { "W" }, self.r, self.a, self.side)
    }
}

/// Ambient coordinates of the compactification.
const AMBIENT: [&str; 5] = ["x", "y", "z", "t", "w"];

fn ambient_weight(r: i64, i: usize) -> Weight {
    match i {
        0 => Weight::from_ints(1, r),
        1 => Weight::from_ints(-1, r),
        2 => Weight::from_ints(0, 1),
        3 => Weight::from_ints(0, r),
        _ => Weight::zero(),
    }
}

fn ambient_proj_weight(r: i64, i: usize) -> i64 {
    if i == 2 || i == 4 {
        1
    } else {
        r
    }
}

fn ambient_char(a: i64, i: usize) -> i64 {
    [a, -a, 1, 0, 0][i]
}

/// One coordinate direction of an orbifold chart at a fixed point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ChartDir {
    pub label: String,
    /// Exponents over `(x, y, z, t, w)`.
    #[serde(skip)]
    pub monomial: [Q; 5],
    #[serde(serialize_with = "ser_weight")]
    pub weight: Weight,
    /// Character of the stabilizer generator, as a residue mod the stabilizer order.
    pub character: u32,
}

fn ser_weight<Se: serde::Serializer>(w: &Weight, s: Se) -> Result<Se::Ok, Se::Error> {
    s.collect_str(&weight_text(w))
}

/// Canonical factored text of a single weight.
pub fn weight_text(w: &Weight) -> String {
    Factored::weight(w, 1).map(|f| f.to_string()).unwrap_or_else(|_| "0".into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FixedPointRec {
    pub id: PointId,
    pub stabilizer_order: u32,
    pub chart_action: CyclicAction,
    pub coords: [ChartDir; 3],
    /// Branch constant of the chart twist at X and Y.
    #[serde(serialize_with = "ser_opt_q")]
    pub mu: Option<Q>,
}

fn ser_opt_q<Se: serde::Serializer>(q: &Option<Q>, s: Se) -> Result<Se::Ok, Se::Error> {
    match q {
        Some(q) => s.collect_str(q),
        None => s.serialize_none(),
    }
}

impl FixedPointRec {
    pub fn tangent_weights(&self) -> [Weight; 3] {
        [self.coords[0].weight.clone(), self.coords[1].weight.clone(), self.coords[2].weight.clone()]
    }

    pub fn characters(&self) -> [u32; 3] {
        [self.coords[0].character, self.coords[1].character, self.coords[2].character]
    }
}

fn unit(i: usize) -> [Q; 5] {
    let mut e: [Q; 5] = Default::default();
    e[i] = Q::one();
    e
}

fn monomial_weight(r: i64, e: &[Q; 5]) -> Weight {
    let mut out = Weight::zero();
    for (i, c) in e.iter().enumerate() {
        out = out.add(&ambient_weight(r, i).scale(c));
    }
    out
}

fn dot_int(e: &[Q; 5], f: impl Fn(usize) -> i64) -> Q {
    e.iter().enumerate().fold(Q::zero(), |acc, (i, c)| acc + c.clone() * Q::int(f(i)))
}

/// Chart at `P` or `Q`, where only the finite group acts.
fn affine_chart(m: &ModelId, dirs: [(&str, [Q; 5]); 3]) -> ([ChartDir; 3], u32) {
    let (r, a) = (m.ri(), m.ai());
    let make = |(label, mono): (&str, [Q; 5])| {
        let ch = dot_int(&mono, |i| ambient_char(a, i));
        assert!(ch.is_integral(), "character must be integral");
        ChartDir {
            label: label.to_string(),
            weight: monomial_weight(r, &mono),
            character: residue(ch.to_integer().try_into().expect("small"), m.r),
            monomial: mono,
        }
    };
    let [d0, d1, d2] = dirs;
    ([make(d0), make(d1), make(d2)], m.r)
}

/// Chart of the weighted projective compactification around the point where coordinate `i0` is
/// nonzero. The stabilizer is the subgroup of `mu_{p0 r} x mu_r` fixing the normalized coordinate;
/// its generator is chosen to act on `w` by `exp(2 pi i / n)`.
fn projective_chart(m: &ModelId, i0: usize, chart: [usize; 3]) -> ([ChartDir; 3], u32) {
    let (r, a) = (m.ri(), m.ai());
    let p0 = ambient_proj_weight(r, i0);
    let c0 = ambient_char(a, i0);
    let big = p0 * r;
    let mut elements: Vec<[Q; 3]> = Vec::new();
    for g in 0..big {
        for h in 0..r {
            if (g + h * c0).rem_euclid(r) != 0 {
                continue;
            }
            let phase = chart.map(|j| {
                (Q::ratio(g * ambient_proj_weight(r, j), big) + Q::ratio(h * ambient_char(a, j), r)).frac_part()
            });
            if !elements.contains(&phase) {
                elements.push(phase);
            }
        }
    }
    let n = elements.len() as i64;
    let w_pos = chart.iter().position(|&j| j == 4).expect("w is a chart coordinate");
    let gen = elements
        .iter()
        .find(|ph| ph[w_pos] == Q::ratio(1, n).frac_part())
        .expect("stabilizer is cyclic with a generator acting on w by 1/n")
        .clone();
    let dirs = [0, 1, 2].map(|slot| {
        let j = chart[slot];
        let mut mono = unit(j);
        mono[i0] = -Q::ratio(ambient_proj_weight(r, j), p0);
        let ch = gen[slot].clone() * Q::int(n);
        ChartDir {
            label: format!("{}'", AMBIENT[j]),
            weight: monomial_weight(r, &mono),
            character: residue(ch.to_integer().try_into().expect("small"), n as u32),
            monomial: mono,
        }
    });
    (dirs, n as u32)
}

fn branch_mu(m: &ModelId, pt: PointId) -> Option<Q> {
    if m.r == 1 {
        return Some(Q::zero());
    }
    let inv = inverse_mod(m.ai(), m.r).expect("a is a unit") as i64;
    let s = match pt {
        PointId::X => (-inv).rem_euclid(m.ri()),
        PointId::Y => inv,
        _ => return None,
    };
    Some(Q::ratio(s, m.ri()))
}

/// Full record of one fixed point.
pub fn fixed_point(m: &ModelId, pt: PointId) -> Result<FixedPointRec, ModelError> {
    fixed_point_shared(m, pt).map(|rec| (*rec).clone())
}

/// [`fixed_point`] without the copy; records are built once per model and point.
pub fn fixed_point_shared(m: &ModelId, pt: PointId) -> Result<Arc<FixedPointRec>, ModelError> {
    if pt.on_divisor() && !m.compactified {
        return Err(ModelError::NotCompactified(pt));
    }
    type Memo = Mutex<HashMap<(ModelId, PointId), Arc<FixedPointRec>>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    if let Some(rec) = memo.lock().expect("memo lock").get(&(*m, pt)) {
        return Ok(rec.clone());
    }
    let rec = Arc::new(derive_fixed_point(m, pt));
    memo.lock().expect("memo lock").insert((*m, pt), rec.clone());
    Ok(rec)
}

fn derive_fixed_point(m: &ModelId, pt: PointId) -> FixedPointRec {
    let r = m.ri();
    let q = |v: [i64; 5]| v.map(Q::int);
    let (coords, n) = match pt {
        // u_c = x/(z^r -+ t): z^r and t carry equal weight and character, so z^r stands in for both.
        PointId::P => affine_chart(m, [("u_c", q([1, 0, -r, 0, 0])), ("z", unit(2)), ("y", unit(1))]),
        PointId::Q => affine_chart(m, [("v", q([-1, 0, r, 0, 0])), ("z", unit(2)), ("x", unit(0))]),
        PointId::X => projective_chart(m, 0, [2, 3, 4]),
        PointId::Y => projective_chart(m, 1, [2, 3, 4]),
        PointId::Zplus | PointId::Zminus => projective_chart(m, 2, [0, 1, 4]),
    };
    let chars: Vec<i64> = coords.iter().map(|c| c.character as i64).collect();
    FixedPointRec {
        id: pt,
        stabilizer_order: n,
        chart_action: CyclicAction::new(n, &chars).expect("positive order"),
        coords,
        mu: branch_mu(m, pt).filter(|_| matches!(pt, PointId::X | PointId::Y)),
    }
}

pub fn fixed_points(m: &ModelId) -> Vec<FixedPointRec> {
    PointId::ALL
        .into_iter()
        .filter(|p| m.compactified || !p.on_divisor())
        .map(|p| fixed_point(m, p).expect("filtered"))
        .collect()
}

/// The curve singular stratum `S` of the divisor with its transverse action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SingularStratumRec {
    pub normal_action: CyclicAction,
}

pub fn singular_stratum(m: &ModelId) -> SingularStratumRec {
    SingularStratumRec { normal_action: CyclicAction::new(m.r, &[1, 1]).expect("positive order") }
}

/// An invariant curve with its chart data at both ends. End `A` is always `P` or `Q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurveRec {
    pub id: CurveId,
    pub endpoints: (PointId, PointId),
    pub orbifold_orders_at_ends: (u32, u32),
    /// Chart slot of the tangent direction at each end.
    pub tangent_slots: (usize, usize),
    /// Chart slots `(at A, at B)` of the two normal line bundles.
    pub normal_slots: [(usize, usize); 2],
    #[serde(serialize_with = "ser_pairs")]
    pub normal_weights_at_ends: [(Weight, Weight); 2],
    #[serde(serialize_with = "ser_pair")]
    pub tangent_weights_at_ends: (Weight, Weight),
}

fn ser_pair<Se: serde::Serializer>(p: &(Weight, Weight), s: Se) -> Result<Se::Ok, Se::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&weight_text(&p.0))?;
    t.serialize_element(&weight_text(&p.1))?;
    t.end()
}

fn ser_pairs<Se: serde::Serializer>(p: &[(Weight, Weight); 2], s: Se) -> Result<Se::Ok, Se::Error> {
    use serde::ser::SerializeSeq;
    let mut t = s.serialize_seq(Some(2))?;
    for (a, b) in p {
        t.serialize_element(&[weight_text(a), weight_text(b)])?;
    }
    t.end()
}

/// How the normal bundle of `Gamma` splits, read off from the linear part of the transition
/// `x = -v^2 y + 2 v z^r` in the normal coordinates. For `r >= 2` the `z^r` term is not linear and
/// the bundle is `O + O(-2)` with `z <-> z`, `y <-> x`. For `r = 1` the extension is nonsplit as a
/// holomorphic bundle; its equivariant splitting is `O(-1) + O(-1)` pairing `z <-> x` and `y <-> z`.
fn gamma_normal_slots(r: u32) -> [(usize, usize); 2] {
    if r >= 2 {
        [(1, 1), (2, 2)]
    } else {
        [(1, 2), (2, 1)]
    }
}

fn curve_layout(m: &ModelId, c: CurveId) -> (PointId, PointId, (usize, usize), [(usize, usize); 2]) {
    let (zp, zq) = match m.side {
        Side::S => (PointId::Zminus, PointId::Zplus),
        Side::Sf => (PointId::Zplus, PointId::Zminus),
    };
    match c {
        CurveId::Gamma => (PointId::P, PointId::Q, (0, 0), gamma_normal_slots(m.r)),
        CurveId::Lpy => (PointId::P, PointId::Y, (2, 2), [(0, 1), (1, 0)]),
        CurveId::Lqx => (PointId::Q, PointId::X, (2, 2), [(0, 1), (1, 0)]),
        CurveId::Lpz => (PointId::P, zp, (1, 2), [(0, 0), (2, 1)]),
        CurveId::Lqz => (PointId::Q, zq, (1, 2), [(0, 1), (2, 0)]),
    }
}

pub fn curve(m: &ModelId, c: CurveId) -> Result<CurveRec, ModelError> {
    if c != CurveId::Gamma && !m.compactified {
        return Err(ModelError::MissingCurve(c));
    }
    let (pa, pb, t, ns) = curve_layout(m, c);
    let fa = fixed_point(m, pa)?;
    let fb = fixed_point(m, pb)?;
    let wa = |i: usize| fa.coords[i].weight.clone();
    let wb = |i: usize| fb.coords[i].weight.clone();
    Ok(CurveRec {
        id: c,
        endpoints: (pa, pb),
        orbifold_orders_at_ends: (fa.stabilizer_order, fb.stabilizer_order),
        tangent_slots: t,
        normal_slots: ns,
        normal_weights_at_ends: [(wa(ns[0].0), wb(ns[0].1)), (wa(ns[1].0), wb(ns[1].1))],
        tangent_weights_at_ends: (wa(t.0), wb(t.1)),
    })
}

pub fn invariant_curves(m: &ModelId) -> Vec<CurveRec> {
    CurveId::ALL.into_iter().filter_map(|c| curve(m, c).ok()).collect()
}

/// The flop correspondence: points and curves are matched by name; `Gamma` flips class sign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopCorrespondence {
    pub points: Vec<(PointId, PointId)>,
    /// `(curve, image, sign of the class)`.
    pub curves: Vec<(CurveId, CurveId, i8)>,
}

impl FlopCorrespondence {
    pub fn point(&self, p: PointId) -> PointId {
        self.points.iter().find(|(a, _)| *a == p).map(|(_, b)| *b).expect("total")
    }

    pub fn curve(&self, c: CurveId) -> (CurveId, i8) {
        self.curves.iter().find(|(a, _, _)| *a == c).map(|(_, b, s)| (*b, *s)).expect("total")
    }
}

pub fn flop(m: &ModelId) -> (ModelId, FlopCorrespondence) {
    let corr = FlopCorrespondence {
        points: PointId::ALL.into_iter().map(|p| (p, p)).collect(),
        curves: CurveId::ALL
            .into_iter()
            .map(|c| (c, c, if c == CurveId::Gamma { -1 } else { 1 }))
            .collect(),
    };
    (m.with_side(m.side.other()), corr)
}

pub fn sector_shifting_at(m: &ModelId, pt: PointId, k: i64) -> Result<Q, ModelError> {
    let rec = fixed_point(m, pt)?;
    rec.chart_action
        .degree_shifting(k)
        .map_err(|_| ModelError::SectorOutOfRange { pt, k, n: rec.stabilizer_order })
}

/// Structured catalog export.
#[derive(Clone, Debug, Serialize)]
pub struct Catalog {
    pub model: ModelId,
    pub points: Vec<FixedPointRec>,
    pub curves: Vec<CurveRec>,
    pub singular_stratum: Option<SingularStratumRec>,
}

pub fn catalog(m: &ModelId) -> Catalog {
    Catalog {
        model: *m,
        points: fixed_points(m),
        curves: invariant_curves(m),
        singular_stratum: m.compactified.then(|| singular_stratum(m)),
    }
}

/// `n` with `a = n * b` for proportional nonzero weights.
pub fn weight_ratio(a: &Weight, b: &Weight) -> Option<Q> {
    a.ratio_to(b)
}

/// Degree of a normal line bundle over a smooth degree-one parametrization, i.e. the number of
/// tangent steps separating its two end weights. Negative for negative bundles.
pub fn end_steps(n_a: &Weight, n_b: &Weight, tangent_a: &Weight) -> Option<Q> {
    n_a.sub(n_b).ratio_to(tangent_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    fn w(a: i64, b: i64) -> Weight {
        Weight::from_ints(a, b)
    }

    #[test]
    fn stabilizer_orders_r2() {
        let m = ModelId::m(2, 1).unwrap();
        let ords: Vec<(PointId, u32)> = fixed_points(&m).iter().map(|p| (p.id, p.stabilizer_order)).collect();
        assert_eq!(
            ords,
            vec![
                (PointId::P, 2),
                (PointId::Q, 2),
                (PointId::X, 4),
                (PointId::Y, 4),
                (PointId::Zplus, 2),
                (PointId::Zminus, 2)
            ]
        );
    }

    #[test]
    fn smooth_case_trivial() {
        let m = ModelId::new(1, 0, Side::S, true).unwrap();
        assert!(fixed_points(&m).iter().all(|p| p.stabilizer_order == 1));
    }

    #[test]
    fn zplus_chart_r3_a2() {
        let m = ModelId::new(3, 2, Side::Sf, true).unwrap();
        let z = fixed_point(&m, PointId::Zplus).unwrap();
        assert_eq!(z.chart_action, CyclicAction::new(3, &[1, 2, 1]).unwrap());
        assert_eq!(z.chart_action, CyclicAction::new(3, &[-2, 2, 1]).unwrap());
    }

    #[test]
    fn gamma_weights_at_p() {
        let m = ModelId::m(3, 1).unwrap();
        let g = curve(&m, CurveId::Gamma).unwrap();
        let at_p: Vec<Weight> = g.normal_weights_at_ends.iter().map(|p| p.0.clone()).collect();
        assert_eq!(at_p, vec![w(0, 1), w(-1, 3)]);
        assert_eq!(g.normal_weights_at_ends[1].1, w(1, 3));
    }

    #[test]
    fn lpz_endpoint_tables() {
        let s = ModelId::m(2, 1).unwrap();
        assert_eq!(curve(&s, CurveId::Lpz).unwrap().endpoints, (PointId::P, PointId::Zminus));
        assert_eq!(curve(&s, CurveId::Lqz).unwrap().endpoints, (PointId::Q, PointId::Zplus));
        let sf = s.with_side(Side::Sf);
        assert_eq!(curve(&sf, CurveId::Lpz).unwrap().endpoints, (PointId::P, PointId::Zplus));
        assert_eq!(curve(&sf, CurveId::Lqz).unwrap().endpoints, (PointId::Q, PointId::Zminus));
    }

    #[test]
    fn divisor_charts() {
        let m = ModelId::m(3, 1).unwrap();
        let x = fixed_point(&m, PointId::X).unwrap();
        // s = -a^{-1} mod r = 2, so z' carries character 1 + r s = 7 mod 9
        assert_eq!(x.characters(), [7, 3, 1]);
        assert_eq!(x.tangent_weights(), [Weight::new(Q::ratio(-1, 3), Q::zero()), w(-1, 0), Weight::new(Q::ratio(-1, 3), Q::int(-1))]);
        assert_eq!(x.mu, Some(Q::ratio(2, 3)));
        let y = fixed_point(&m, PointId::Y).unwrap();
        assert_eq!(y.characters(), [4, 3, 1]);
        assert_eq!(y.mu, Some(Q::ratio(1, 3)));
        let z = fixed_point(&m, PointId::Zminus).unwrap();
        assert_eq!(z.tangent_weights(), [w(1, 0), w(-1, 0), w(0, -1)]);
    }

    #[test]
    fn shifting_examples() {
        let m = ModelId::m(3, 1).unwrap();
        assert_eq!(sector_shifting_at(&m, PointId::P, 2).unwrap(), Q::ratio(5, 3));
        let m2 = ModelId::m(2, 1).unwrap();
        assert_eq!(sector_shifting_at(&m2, PointId::Zplus, 1).unwrap(), Q::ratio(3, 2));
        for p in PointId::ALL {
            assert_eq!(sector_shifting_at(&m2, p, 0).unwrap(), Q::zero());
        }
        assert!(sector_shifting_at(&m2, PointId::P, 2).is_err());
    }

    #[test]
    fn open_model_has_no_divisor() {
        let m = ModelId::new(2, 1, Side::S, false).unwrap();
        assert_eq!(fixed_points(&m).len(), 2);
        assert!(matches!(fixed_point(&m, PointId::X), Err(ModelError::NotCompactified(_))));
        assert_eq!(invariant_curves(&m).len(), 1);
    }

    #[test]
    fn model_validation() {
        assert!(ModelId::m(4, 2).is_err());
        assert!(ModelId::m(0, 1).is_err());
        assert_eq!(ModelId::m(5, -1).unwrap().a, 4);
        assert_eq!(ModelId::m(1, 7).unwrap().a, 0);
    }

    #[test]
    fn flop_involution_and_sign() {
        let m = ModelId::m(3, 2).unwrap();
        let (f, corr) = flop(&m);
        assert_eq!(f.side, Side::Sf);
        assert_eq!(flop(&f).0, m);
        assert_eq!(corr.curve(CurveId::Gamma), (CurveId::Gamma, -1));
        assert_eq!(corr.curve(CurveId::Lpy), (CurveId::Lpy, 1));
        assert_eq!(curve(&m, CurveId::Lpy).unwrap(), curve(&f, CurveId::Lpy).unwrap());
    }

    #[test]
    fn end_steps_consistent() {
        for r in 1..=5u32 {
            for a in 0..r.max(2) as i64 {
                let Ok(m) = ModelId::m(r, a) else { continue };
                for c in invariant_curves(&m) {
                    let ta = &c.tangent_weights_at_ends.0;
                    for (na, nb) in &c.normal_weights_at_ends {
                        let st = end_steps(na, nb, ta);
                        assert!(st.is_some(), "{m} {:?}: end weights not proportional to tangent", c.id);
                        let st = st.unwrap();
                        assert!(!st.is_negative() || c.id == CurveId::Gamma);
                    }
                }
            }
        }
    }
}
