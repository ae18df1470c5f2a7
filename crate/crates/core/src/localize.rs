//! Torus-fixed loci of relative stable maps into the compactified local model.
//!
//! A fixed locus is described by a graph: a tree of vertices at `P`/`Q` joined by covers of
//! `Gamma`, with one leaf edge along an `L` line for every relative marking. Each edge contributes
//! `e(H^1)/e(H^0)` of the pulled back tangent and normal bundles, restricted to `Z_r`-invariant
//! sections for orbifold covers. Vertices contribute the usual node and Hodge terms, with moduli
//! integrals kept as opaque symbols. Everything about vanishing is read off the `u`-valuation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use itertools::Itertools;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dimension::{AbsSector, DimError, RelDatum, RelTarget};
use crate::localmodel::{curve, fixed_point, flop, CurveId, CurveRec, FixedPointRec, ModelError, ModelId, PointId, Side};
use crate::orbact::{gcd, inverse_mod, residue};
use crate::symcalc::{Scalar, SymError};
use crate::{Factored, Weight, Q};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dim(#[from] DimError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph is not supported on Lpy/Lqx: {0}")]
    NotSurvivor(String),
    #[error("survivor with edges off Lpy/Lqx: {0}")]
    SurvivorOffLines(String),
    #[error("class is a multiple of the exceptional curve; survivors are only confined to Lpy/Lqx outside that case")]
    ClassInGamma,
}

/// Catalog data of one model and a cache of edge factors, shared by all graphs of that model.
struct Ctx {
    points: HashMap<PointId, FixedPointRec>,
    curves: HashMap<CurveId, CurveRec>,
    edges: Mutex<HashMap<Edge, Result<Factored, LocError>>>,
    vertices: Mutex<HashMap<VertexKey, Factored>>,
}

type VertexKey = (PointId, Vec<u32>, Vec<u32>);

fn ctx(m: &ModelId) -> Arc<Ctx> {
    static MEMO: OnceLock<Mutex<HashMap<ModelId, Arc<Ctx>>>> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    if let Some(c) = memo.lock().expect("ctx lock").get(m) {
        return c.clone();
    }
    let c = Arc::new(Ctx {
        points: PointId::ALL.into_iter().filter_map(|p| fixed_point(m, p).ok().map(|f| (p, f))).collect(),
        curves: CurveId::ALL.into_iter().filter_map(|c| curve(m, c).ok().map(|r| (c, r))).collect(),
        edges: Mutex::new(HashMap::new()),
        vertices: Mutex::new(HashMap::new()),
    });
    memo.lock().expect("ctx lock").insert(*m, c.clone());
    c
}

impl Ctx {
    fn point(&self, p: PointId) -> Result<&FixedPointRec, LocError> {
        self.points.get(&p).ok_or(LocError::Model(ModelError::NotCompactified(p)))
    }

    fn curve(&self, c: CurveId) -> Result<&CurveRec, LocError> {
        self.curves.get(&c).ok_or(LocError::Model(ModelError::MissingCurve(c)))
    }
}

fn ser_weight<S: Serializer>(w: &Weight, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(w)
}

/// A monomial section `x^a y^b` with its torus weight and `mu_r` character.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Section {
    pub a: u32,
    pub b: u32,
    #[serde(serialize_with = "ser_weight")]
    pub weight: Weight,
    pub character: u32,
}

/// Sections of `O(2d-2)` over a degree-`d` cover of a line whose tangent weight is `lam_scale * lambda`
/// at one end: `x^a y^b` has weight `((d-1-a)/d) lam_scale lambda - r u` and character `d-1-a mod r`.
/// Empty for `d = 0`.
#[allow(non_snake_case)]
pub fn h0_sections_O2dm2(d: u32, r: u32, lam_scale: &Q) -> Vec<Section> {
    if d == 0 {
        return Vec::new();
    }
    let (di, ri) = (d as i64, r as i64);
    (0..=2 * d - 2)
        .map(|a| {
            let e = di - 1 - a as i64;
            Section {
                a,
                b: 2 * d - 2 - a,
                weight: Weight::new(Q::ratio(e, di) * lam_scale.clone(), Q::int(-ri)),
                character: residue(e, r.max(1)),
            }
        })
        .collect()
}

/// Weights of `H^1(O(-2d))`, dual to the invariant part of `H^0(O(2d-2))`.
pub fn h1_dual_weights(d: u32, r: u32) -> Vec<Weight> {
    h0_sections_O2dm2(d, r, &Q::one())
        .into_iter()
        .filter(|s| s.character == 0)
        .map(|s| s.weight.neg())
        .collect()
}

/// A cover of an invariant curve: `d` is the degree of the map onto the curve in the uniformizing
/// chart at the first endpoint; `orb` marks covers that are `Z_r`-quotients of a cover there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub curve: CurveId,
    pub d: u32,
    pub orb: bool,
}

impl Edge {
    pub fn new(curve: CurveId, d: u32, orb: bool) -> Self {
        Edge { curve, d, orb }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}{}", self.curve, self.d, if self.orb { "o" } else { "s" })
    }
}

/// One cohomology class of the edge, `j` counting uniformizer steps away from the first endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CohSection {
    /// 0 for the tangent summand, 1 and 2 for the normal summands.
    pub summand: usize,
    /// Exponents of the monomial in the two homogeneous coordinates of the cover.
    pub monomial: (u32, u32),
    #[serde(serialize_with = "ser_weight")]
    pub weight: Weight,
    pub character: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Default)]
pub struct EdgeCohomology {
    pub h0: Vec<CohSection>,
    pub h1: Vec<CohSection>,
}

fn check_edge(m: &ModelId, e: &Edge) -> Result<(), LocError> {
    if e.d == 0 {
        return Err(LocError::InvalidEdge(format!("{e}: degree must be positive")));
    }
    if e.orb && (m.r < 2 || gcd(e.d as i64, m.ri()) != 1) {
        return Err(LocError::InvalidEdge(format!("{e}: orbifold cover needs r >= 2 and gcd(d, r) = 1 (r = {})", m.r)));
    }
    ctx(m).curve(e.curve)?;
    Ok(())
}

/// Sector of the cover's node branch at an end of the curve lying at `P` or `Q`.
fn end_sector(m: &ModelId, e: &Edge, end: PointId) -> Result<u32, LocError> {
    if !e.orb {
        return Ok(0);
    }
    let cx = ctx(m);
    let c = cx.curve(e.curve)?;
    let slot = if end == c.endpoints.0 { c.tangent_slots.0 } else { c.tangent_slots.1 };
    let chi = cx.point(end)?.coords[slot].character;
    let inv = inverse_mod(chi as i64, m.r).expect("tangent characters are units");
    Ok(residue(e.d as i64 * inv as i64, m.r))
}

/// `Z_r`-sector carried by the edge's flag at its first endpoint.
pub fn edge_flag_sector(m: &ModelId, e: &Edge) -> Result<u32, LocError> {
    check_edge(m, e)?;
    end_sector(m, e, ctx(m).curve(e.curve)?.endpoints.0)
}

/// Sections of `H^0` and `H^1` of the pulled back tangent (logarithmic along the divisor) and
/// normal bundles, with invariance filtering for orbifold covers. Zero weights are the fixed parts
/// and are dropped.
pub fn edge_cohomology(m: &ModelId, e: &Edge) -> Result<EdgeCohomology, LocError> {
    check_edge(m, e)?;
    let cx = ctx(m);
    let c = cx.curve(e.curve)?;
    let fa = cx.point(c.endpoints.0)?;
    let fb = cx.point(c.endpoints.1)?;
    let r = m.r.max(1);
    let tan = &fa.coords[c.tangent_slots.0];
    let tau = tan.weight.scale(&Q::ratio(1, e.d as i64));
    let chi_inv = inverse_mod(tan.character as i64, r).unwrap_or(0) as i64;
    let t_b = if c.endpoints.1.on_divisor() { Weight::zero() } else { fb.coords[c.tangent_slots.1].weight.clone() };
    let mut summands = vec![(tan.weight.clone(), tan.character, t_b)];
    for (sa, sb) in c.normal_slots {
        summands.push((fa.coords[sa].weight.clone(), fa.coords[sa].character, fb.coords[sb].weight.clone()));
    }
    let mut out = EdgeCohomology::default();
    for (i, (n_a, c_a, n_b)) in summands.into_iter().enumerate() {
        let diff = n_a.sub(&n_b);
        let steps = if diff.is_zero() {
            Q::zero()
        } else {
            diff.ratio_to(&tau)
                .ok_or_else(|| LocError::InvalidEdge(format!("{e}: end weights {n_a}, {n_b} not along the curve")))?
        };
        let c_dom = if e.orb { c_a as i64 * e.d as i64 * chi_inv } else { 0 };
        let keep = |ch: i64| !e.orb || residue(ch, r) == 0;
        if !steps.is_negative() {
            let top: u32 = steps.floor_part().to_integer().try_into().expect("small degree");
            for j in 0..=top {
                let w = n_a.sub(&tau.scale(&Q::int(j as i64)));
                if keep(c_dom - j as i64) && !w.is_zero() {
                    out.h0.push(CohSection { summand: i, monomial: (j, top - j), weight: w, character: residue(c_dom - j as i64, r) });
                }
            }
        } else {
            let count: u32 = ((-steps).ceil().to_integer() - num_bigint::BigInt::one()).try_into().expect("small degree");
            for j in 1..=count {
                let w = n_a.add(&tau.scale(&Q::int(j as i64)));
                if keep(c_dom + j as i64) && !w.is_zero() {
                    out.h1.push(CohSection { summand: i, monomial: (j - 1, count - j), weight: w, character: residue(c_dom + j as i64, r) });
                }
            }
        }
    }
    Ok(out)
}

/// `e(H^1) / e(H^0)` of the edge.
pub fn edge_factor(m: &ModelId, e: &Edge) -> Result<Factored, LocError> {
    let cx = ctx(m);
    if let Some(f) = cx.edges.lock().expect("edge cache").get(e) {
        return f.clone();
    }
    let f = compute_edge_factor(m, e);
    cx.edges.lock().expect("edge cache").insert(*e, f.clone());
    f
}

fn compute_edge_factor(m: &ModelId, e: &Edge) -> Result<Factored, LocError> {
    let coh = edge_cohomology(m, e)?;
    let mut f = Factored::one();
    for s in &coh.h1 {
        f.mul_weight(&s.weight, 1)?;
    }
    for s in &coh.h0 {
        f.mul_weight(&s.weight, -1)?;
    }
    Ok(f)
}

/// The relative contact realized at the divisor end of an `L` edge, if any:
/// orbifold covers of `Lpy`/`Lqx` reach `Y`/`X` with contact `d/r^2`; smooth ones reach `S` with
/// contact `d/r`; orbifold covers of `Lpz`/`Lqz` reach `Z+-` with contact `d/r`; smooth covers with
/// integral contact meet the smooth part of the divisor.
pub fn edge_contact(m: &ModelId, e: &Edge) -> Option<(RelTarget, u32, Q)> {
    if e.curve == CurveId::Gamma || check_edge(m, e).is_err() {
        return None;
    }
    let (r, d) = (m.ri(), e.d as i64);
    let (end, on_line) = match e.curve {
        CurveId::Lpy => (RelTarget::Y, true),
        CurveId::Lqx => (RelTarget::X, true),
        _ => {
            let pt = ctx(m).curve(e.curve).ok()?.endpoints.1;
            (if pt == PointId::Zplus { RelTarget::Zplus } else { RelTarget::Zminus }, false)
        }
    };
    let ell = Q::ratio(d, r);
    if r == 1 || (!e.orb && d % r == 0) {
        return Some((RelTarget::SmoothZ, 0, ell));
    }
    match (on_line, e.orb) {
        (true, true) => Some((end, residue(d, (r * r) as u32), Q::ratio(d, r * r))),
        (true, false) => Some((RelTarget::S, residue(d, r as u32), ell)),
        (false, true) => Some((end, residue(d, r as u32), ell)),
        (false, false) => None,
    }
}

/// All `L` edges of degree at most `bound` realizing the given contact.
pub fn realizations(m: &ModelId, target: RelTarget, alpha: u32, ell: &Q, bound: u32) -> Vec<Edge> {
    let mut out = Vec::new();
    for c in [CurveId::Lpy, CurveId::Lqx, CurveId::Lpz, CurveId::Lqz] {
        for d in 1..=bound {
            for orb in [false, true] {
                let e = Edge::new(c, d, orb);
                if edge_contact(m, &e).is_some_and(|(t, a, l)| t == target && a == alpha && &l == ell) {
                    out.push(e);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MarkRef {
    /// Index into the datum's absolute insertions.
    Abs(usize),
    /// Index into the datum's relative insertions.
    Rel(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GVertex {
    pub pt: PointId,
    pub marks: Vec<MarkRef>,
}

/// An edge of the graph; `ends.0` sits at the curve's first endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GEdge {
    #[serde(flatten)]
    pub edge: Edge,
    pub ends: (usize, usize),
}

/// A fixed-locus graph realizing a relative datum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocGraph {
    pub model: ModelId,
    pub datum: Arc<RelDatum>,
    pub vertices: Vec<GVertex>,
    pub edges: Vec<GEdge>,
}

#[derive(Serialize)]
struct FlagWire {
    edge: usize,
    k: u32,
}

#[derive(Serialize)]
struct VertexWire<'a> {
    pt: PointId,
    flags: Vec<FlagWire>,
    marks: &'a [MarkRef],
}

#[derive(Serialize)]
struct GraphWire<'a> {
    vertices: Vec<VertexWire<'a>>,
    edges: &'a [GEdge],
    aut: u64,
}

impl Serialize for LocGraph {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flags = self.flags().map_err(serde::ser::Error::custom)?;
        GraphWire {
            vertices: self
                .vertices
                .iter()
                .zip(flags)
                .map(|(v, fl)| VertexWire { pt: v.pt, flags: fl.into_iter().map(|(edge, k)| FlagWire { edge, k }).collect(), marks: &v.marks })
                .collect(),
            edges: &self.edges,
            aut: self.aut_order(),
        }
        .serialize(s)
    }
}

impl fmt::Display for LocGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vs = self.vertices.iter().map(|v| {
            let ms = v.marks.iter().map(|m| match m {
                MarkRef::Abs(i) => format!("a{i}"),
                MarkRef::Rel(i) => format!("b{i}"),
            });
            format!("{}{{{}}}", v.pt, ms.format(","))
        });
        let es = self.edges.iter().map(|e| format!("{}:{}-{}", e.edge, e.ends.0, e.ends.1));
        write!(f, "[{}] [{}]", vs.format(" "), es.format(" "))
    }
}

type Key = (Vec<(PointId, Vec<usize>)>, Vec<(usize, usize, Edge)>, Vec<(usize, usize, Edge)>);

impl LocGraph {
    /// The graph with no vertices; its contribution is the empty product.
    pub fn empty(model: ModelId) -> Self {
        LocGraph { model, datum: Arc::new(RelDatum::default()), vertices: Vec::new(), edges: Vec::new() }
    }

    fn pq(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&i| !self.vertices[i].pt.on_divisor()).collect()
    }

    /// Flags `(edge index, sector)` at each vertex.
    pub fn flags(&self) -> Result<Vec<Vec<(usize, u32)>>, LocError> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            for v in [e.ends.0, e.ends.1] {
                let pt = self.vertices.get(v).ok_or_else(|| LocError::InvalidGraph(format!("edge {i} ends at missing vertex {v}")))?.pt;
                let k = if pt.on_divisor() { 0 } else { end_sector(&self.model, &e.edge, pt)? };
                out[v].push((i, k));
            }
        }
        Ok(out)
    }

    pub fn gamma_degree(&self) -> u32 {
        self.edges.iter().filter(|e| e.edge.curve == CurveId::Gamma).map(|e| e.edge.d).sum()
    }

    pub fn has_gamma_edge(&self) -> bool {
        self.edges.iter().any(|e| e.edge.curve == CurveId::Gamma)
    }

    fn key_under(&self, perm: &[usize]) -> Key {
        // perm[i] is the new position of the i-th P/Q vertex
        let pq = self.pq();
        let pos = |v: usize| pq.iter().position(|&x| x == v).map(|i| perm[i]);
        let mut verts = vec![(PointId::P, Vec::new()); pq.len()];
        for (i, &v) in pq.iter().enumerate() {
            let mut abs: Vec<usize> = self.vertices[v].marks.iter().filter_map(|m| if let MarkRef::Abs(j) = m { Some(*j) } else { None }).collect();
            abs.sort();
            verts[perm[i]] = (self.vertices[v].pt, abs);
        }
        let rel_of = |v: usize| {
            self.vertices[v].marks.iter().find_map(|m| if let MarkRef::Rel(j) = m { Some(*j) } else { None }).unwrap_or(usize::MAX)
        };
        let mut gam = Vec::new();
        let mut leaves = Vec::new();
        for e in &self.edges {
            match (pos(e.ends.0), pos(e.ends.1)) {
                (Some(a), Some(b)) => gam.push((a, b, e.edge)),
                (Some(a), None) => leaves.push((a, rel_of(e.ends.1), e.edge)),
                _ => leaves.push((usize::MAX, usize::MAX, e.edge)),
            }
        }
        gam.sort();
        leaves.sort();
        (verts, gam, leaves)
    }

    fn perms(&self) -> impl Iterator<Item = Vec<usize>> {
        let n = self.pq().len();
        (0..n).permutations(n)
    }

    /// Isomorphism-invariant key (marks are labeled).
    fn canonical_key(&self) -> Key {
        self.perms().map(|p| self.key_under(&p)).min().unwrap_or_default()
    }

    /// Permutations of the `P`/`Q` vertices that preserve points, absolute marks and leaves.
    fn label_preserving_perms(&self) -> Vec<Vec<usize>> {
        let pq = self.pq();
        let sig: Vec<(PointId, Vec<MarkRef>, Vec<Edge>)> = pq
            .iter()
            .map(|&v| {
                let mut leaves: Vec<Edge> = self.edges.iter().filter(|e| e.ends.0 == v && self.vertices[e.ends.1].pt.on_divisor()).map(|e| e.edge).collect();
                leaves.sort();
                (self.vertices[v].pt, self.vertices[v].marks.clone(), leaves)
            })
            .collect();
        // marked vertices are fixed, so only unmarked ones can move
        if sig.iter().filter(|s| s.1.is_empty() && s.2.is_empty()).count() < 2 {
            return vec![(0..pq.len()).collect()];
        }
        self.perms().filter(|p| (0..pq.len()).all(|i| sig[p[i]] == sig[i])).collect()
    }

    /// Order of the graph's symmetry group fixing all labeled marks.
    pub fn symmetry_order(&self) -> u64 {
        let perms = self.label_preserving_perms();
        if perms.len() == 1 {
            return 1;
        }
        let id: Vec<usize> = (0..self.pq().len()).collect();
        let base = self.key_under(&id);
        perms.iter().filter(|p| self.key_under(p) == base).count() as u64
    }

    /// `|Aut|`: graph symmetries times the product of edge degrees.
    pub fn aut_order(&self) -> u64 {
        self.symmetry_order() * self.edges.iter().map(|e| e.edge.d as u64).product::<u64>()
    }

    /// Checks the structure against the model catalog and the datum.
    pub fn validate(&self) -> Result<(), LocError> {
        let bad = |m: String| Err(LocError::InvalidGraph(format!("{self}: {m}")));
        let m = &self.model;
        let (nv, ne) = (self.vertices.len(), self.edges.len());
        if nv == 0 {
            return if *self.datum == RelDatum::default() { Ok(()) } else { bad("empty graph for a nonempty datum".into()) };
        }
        if ne + 1 != nv {
            return bad("not a tree".into());
        }
        let mut seen_v = vec![false; nv];
        let mut stack = vec![0usize];
        seen_v[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                for (x, y) in [(e.ends.0, e.ends.1), (e.ends.1, e.ends.0)] {
                    if x == v && y < nv && !seen_v[y] {
                        seen_v[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        if seen_v.iter().any(|s| !s) {
            return bad("disconnected".into());
        }
        for e in &self.edges {
            check_edge(m, &e.edge)?;
            let cx = ctx(m);
            let c = cx.curve(e.edge.curve)?;
            if self.vertices[e.ends.0].pt != c.endpoints.0 || self.vertices[e.ends.1].pt != c.endpoints.1 {
                return bad(format!("{} does not join {} and {}", e.edge, c.endpoints.0, c.endpoints.1));
            }
        }
        if self.gamma_degree() != self.datum.gamma_degree {
            return bad(format!("Gamma degree {} but datum asks {}", self.gamma_degree(), self.datum.gamma_degree));
        }
        let mut abs_seen = vec![0; self.datum.abs.len()];
        let mut rel_seen = vec![0; self.datum.rel.len()];
        let flags = self.flags()?;
        for (vi, v) in self.vertices.iter().enumerate() {
            for mk in &v.marks {
                match *mk {
                    MarkRef::Abs(j) => {
                        let Some(ins) = self.datum.abs.get(j) else { return bad(format!("no absolute insertion {j}")) };
                        abs_seen[j] += 1;
                        if v.pt.on_divisor() || ins.at.is_some_and(|p| p != v.pt) {
                            return bad(format!("absolute insertion {j} cannot sit at {}", v.pt));
                        }
                    }
                    MarkRef::Rel(j) => {
                        let Some(ins) = self.datum.rel.get(j) else { return bad(format!("no relative insertion {j}")) };
                        rel_seen[j] += 1;
                        if !v.pt.on_divisor() || flags[vi].len() != 1 {
                            return bad(format!("relative insertion {j} must end a single L edge"));
                        }
                        let e = &self.edges[flags[vi][0].0].edge;
                        if edge_contact(m, e) != Some((ins.target, ins.alpha, ins.ell.clone())) {
                            return bad(format!("{e} does not realize {ins}"));
                        }
                    }
                }
            }
            if v.pt.on_divisor() {
                if v.marks.len() != 1 || !matches!(v.marks[0], MarkRef::Rel(_)) {
                    return bad(format!("divisor vertex {vi} must carry exactly one relative marking"));
                }
                continue;
            }
            let ks: Vec<u32> = v.marks.iter().map(|mk| self.mark_sector(*mk)).collect::<Result<_, _>>()?;
            let lhs: i64 = ks.iter().map(|&k| k as i64).sum();
            let rhs: i64 = flags[vi].iter().map(|f| f.1 as i64).sum();
            if residue(lhs - rhs, m.r) != 0 {
                return bad(format!("sectors at vertex {vi} do not balance"));
            }
            if flags[vi].is_empty() && (nv != 1 || v.marks.len() < 3) {
                return bad(format!("vertex {vi} is an unstable isolated point"));
            }
        }
        if abs_seen.iter().chain(&rel_seen).any(|&c| c != 1) {
            return bad("every insertion must be placed exactly once".into());
        }
        Ok(())
    }

    fn mark_sector(&self, mk: MarkRef) -> Result<u32, LocError> {
        match mk {
            MarkRef::Rel(_) => Ok(0),
            MarkRef::Abs(j) => match self.datum.abs[j].sector {
                AbsSector::Untwisted => Ok(0),
                AbsSector::Twisted { alpha, order } if order == self.model.r => Ok(alpha),
                AbsSector::Twisted { order, .. } => {
                    Err(LocError::InvalidGraph(format!("order-{order} sector has no point on the model with r = {}", self.model.r)))
                }
            },
        }
    }
}

/// Vertex term. Divisor vertices carry one relative marking and contribute 1. At `P`/`Q` with chart
/// weights `w_i` and characters `c_i`: an unstable vertex with one flag contributes 1, one joining
/// two flags contributes the weights invariant under the node sector; a stable vertex contributes
/// the invariant weights at each flag, divides by the weights of summands untwisted at all special
/// points and multiplies by `w_i^(sum of ages - 1)` for the others, times an opaque moduli integral.
pub fn vertex_factor(g: &LocGraph, v: usize) -> Result<Factored, LocError> {
    vertex_factor_with(g, v, &g.flags()?[v])
}

fn vertex_factor_with(g: &LocGraph, v: usize, flags: &[(usize, u32)]) -> Result<Factored, LocError> {
    let mut f = Factored::one();
    mul_vertex_into(g, v, flags, &mut f)?;
    Ok(f)
}

fn mul_vertex_into(g: &LocGraph, v: usize, flags: &[(usize, u32)], acc: &mut Factored) -> Result<(), LocError> {
    let m = &g.model;
    let vert = g.vertices.get(v).ok_or_else(|| LocError::InvalidGraph(format!("no vertex {v}")))?;
    if vert.pt.on_divisor() {
        return Ok(());
    }
    let marks: Vec<u32> = vert.marks.iter().map(|mk| g.mark_sector(*mk)).collect::<Result<_, _>>()?;
    let (val, n) = (flags.len(), marks.len());
    if val + n < 3 && !(val == 1 || (val == 2 && n == 0)) {
        return Err(LocError::InvalidGraph(format!("unstable vertex {v} with {val} flags and {n} marks")));
    }
    let mut fk: Vec<u32> = flags.iter().map(|f| f.1).collect();
    fk.sort_unstable();
    let mut mk = marks.clone();
    mk.sort_unstable();
    let cx = ctx(m);
    let key = (vert.pt, fk, mk);
    {
        let mut cache = cx.vertices.lock().expect("vertex cache");
        if !cache.contains_key(&key) {
            let f = vertex_weights(cx.point(vert.pt)?, m.r, &key.1, &key.2)?;
            cache.insert(key.clone(), f);
        }
        acc.mul_assign(&cache[&key]);
    }
    if val + n < 3 {
        return Ok(());
    }
    let mut parts: Vec<String> = flags.iter().map(|&(i, k)| format!("f{}.k{k}", g.edges[i].edge)).collect();
    parts.extend(vert.marks.iter().zip(&marks).map(|(mk, k)| match mk {
        MarkRef::Abs(j) => format!("a{j}.k{k}"),
        MarkRef::Rel(j) => format!("b{j}"),
    }));
    parts.sort();
    acc.mul_opaque(&format!("M0:{}:{}", vert.pt, parts.join(",")), 1)?;
    Ok(())
}

/// The weight part of a `P`/`Q` vertex term from its flag and mark sectors.
fn vertex_weights(fp: &FixedPointRec, r: u32, flags: &[u32], marks: &[u32]) -> Result<Factored, LocError> {
    let invariant_at = |k: u32| fp.coords.iter().filter(move |c| residue(c.character as i64 * k as i64, r) == 0);
    let mut f = Factored::one();
    if flags.len() + marks.len() < 3 {
        if flags.len() == 2 {
            for c in invariant_at(flags[0]) {
                f.mul_weight(&c.weight, 1)?;
            }
        }
        return Ok(f);
    }
    for &k in flags {
        for c in invariant_at(k) {
            f.mul_weight(&c.weight, 1)?;
        }
    }
    for c in &fp.coords {
        let ch = c.character as i64;
        let ages = marks.iter().map(|&k| ch * k as i64).chain(flags.iter().map(|&k| -ch * k as i64));
        // ages in units of 1/r
        let ages: Vec<i64> = ages.map(|x| residue(x, r) as i64).collect();
        if ages.iter().all(|&a| a == 0) {
            f.mul_weight(&c.weight, -1)?;
        } else {
            let total: i64 = ages.iter().sum();
            debug_assert_eq!(total % r as i64, 0);
            f.mul_weight(&c.weight, total / r as i64 - 1)?;
        }
    }
    Ok(f)
}

/// Full contribution: edges, vertices, `1/|Aut|`, and opaque classes for relative insertions on
/// positive-dimensional sector loci.
pub fn graph_contribution(g: &LocGraph) -> Result<Factored, LocError> {
    g.validate()?;
    contribution_unchecked(g)
}

fn contribution_unchecked(g: &LocGraph) -> Result<Factored, LocError> {
    let mut f = Factored::one();
    if g.vertices.is_empty() {
        return Ok(f);
    }
    let cx = ctx(&g.model);
    for e in &g.edges {
        let mut cache = cx.edges.lock().expect("edge cache");
        let ef = cache.entry(e.edge).or_insert_with(|| compute_edge_factor(&g.model, &e.edge));
        f.mul_assign(ef.as_ref().map_err(Clone::clone)?);
    }
    let flags = g.flags()?;
    for (v, fl) in flags.iter().enumerate() {
        mul_vertex_into(g, v, fl, &mut f)?;
    }
    f.mul_scalar(&Q::ratio(1, g.aut_order() as i64));
    for (j, x) in g.datum.rel.iter().enumerate() {
        if x.target.sector_dim() > 0 {
            f.mul_opaque(&format!("b{j}.{}", x.target.name()), 1)?;
        }
    }
    Ok(f)
}

fn trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    // labeled trees on n vertices from Pruefer sequences
    if n == 1 {
        return vec![vec![]];
    }
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let mut out = Vec::new();
    for seq in (0..n - 2).map(|_| 0..n).multi_cartesian_product() {
        let mut deg = vec![1usize; n];
        for &s in &seq {
            deg[s] += 1;
        }
        let mut edges = Vec::new();
        for &s in &seq {
            let leaf = (0..n).find(|&i| deg[i] == 1).expect("leaf");
            edges.push((leaf, s));
            deg[leaf] -= 1;
            deg[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| deg[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(edges);
    }
    out
}

fn compositions(total: u32, parts: usize, max: u32) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=max.min(total) {
        for mut rest in compositions(total - first, parts - 1, max) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `P`/`Q` trees joined by `Gamma` covers of total degree `gamma_degree`.
fn skeletons(m: &ModelId, gamma_degree: u32, bound: u32) -> Vec<(Vec<PointId>, Vec<(usize, usize, Edge)>)> {
    if gamma_degree == 0 {
        return vec![(vec![PointId::P], vec![]), (vec![PointId::Q], vec![])];
    }
    let mut out = Vec::new();
    for ne in 1..=gamma_degree as usize {
        for tree in trees(ne + 1) {
            // two-colour from vertex 0
            let mut colour = vec![None; ne + 1];
            colour[0] = Some(false);
            while colour.iter().any(|c| c.is_none()) {
                for &(a, b) in &tree {
                    match (colour[a], colour[b]) {
                        (Some(x), None) => colour[b] = Some(!x),
                        (None, Some(x)) => colour[a] = Some(!x),
                        _ => {}
                    }
                }
            }
            for flip in [false, true] {
                let pts: Vec<PointId> = colour.iter().map(|c| if c.unwrap() ^ flip { PointId::Q } else { PointId::P }).collect();
                for degs in compositions(gamma_degree, ne, bound) {
                    for orbs in (0..ne).map(|_| [false, true]).multi_cartesian_product() {
                        let es: Option<Vec<(usize, usize, Edge)>> = tree
                            .iter()
                            .zip(&degs)
                            .zip(&orbs)
                            .map(|((&(a, b), &d), &orb)| {
                                let e = Edge::new(CurveId::Gamma, d, orb);
                                check_edge(m, &e).ok()?;
                                Some(if pts[a] == PointId::P { (a, b, e) } else { (b, a, e) })
                            })
                            .collect();
                        if let Some(es) = es {
                            out.push((pts.clone(), es));
                        }
                    }
                }
            }
        }
    }
    out
}

type Skeleton = (Vec<PointId>, Vec<(usize, usize, Edge)>, Vec<Vec<usize>>);

/// Skeletons up to isomorphism with their automorphisms, keyed by canonical form.
fn skeleton_classes(m: &ModelId, gamma_degree: u32, bound: u32) -> Arc<Vec<(Key, Skeleton)>> {
    type Memo = Mutex<HashMap<(ModelId, u32, u32), Arc<Vec<(Key, Skeleton)>>>>;
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    if let Some(s) = memo.lock().expect("skeleton memo").get(&(*m, gamma_degree, bound)) {
        return s.clone();
    }
    let classes: BTreeMap<Key, Skeleton> = skeletons(m, gamma_degree, bound)
        .into_iter()
        .map(|(pts, gam)| {
            let g = LocGraph {
                model: *m,
                datum: Arc::new(RelDatum::default()),
                vertices: pts.iter().map(|&pt| GVertex { pt, marks: vec![] }).collect(),
                edges: gam.iter().map(|&(a, b, edge)| GEdge { edge, ends: (a, b) }).collect(),
            };
            let id: Vec<usize> = (0..pts.len()).collect();
            let base = g.key_under(&id);
            let auts = g.perms().filter(|p| g.key_under(p) == base).collect();
            (g.canonical_key(), (pts, gam, auts))
        })
        .collect();
    let out = Arc::new(classes.into_iter().collect::<Vec<_>>());
    memo.lock().expect("skeleton memo").insert((*m, gamma_degree, bound), out.clone());
    out
}

/// All fixed-locus graphs realizing the datum with every edge degree at most `bound`, up to
/// isomorphism, ordered by edge count, total degree and canonical key.
pub fn enumerate_graphs(m: &ModelId, d: &RelDatum, bound: u32) -> Result<Vec<LocGraph>, LocError> {
    let m = ModelId { compactified: true, ..*m };
    d.validate(m.r)?;
    let r = m.r;
    let cx = ctx(&m);
    let datum = Arc::new(d.clone());
    let rel_opts: Vec<Vec<(Edge, u32)>> = d
        .rel
        .iter()
        .map(|x| {
            realizations(&m, x.target, x.alpha, &x.ell, bound)
                .into_iter()
                .map(|e| (e, edge_flag_sector(&m, &e).expect("realized edges are valid")))
                .collect()
        })
        .collect();
    let mut abs_k = Vec::new();
    for a in &d.abs {
        match a.sector {
            AbsSector::Untwisted => abs_k.push(0),
            AbsSector::Twisted { alpha, order } if order == r => abs_k.push(alpha),
            AbsSector::Twisted { .. } => return Ok(Vec::new()),
        }
    }
    if rel_opts.iter().any(|o| o.is_empty()) {
        return Ok(Vec::new());
    }
    // skeletons up to isomorphism
    let skel = skeleton_classes(&m, d.gamma_degree, bound);
    // two marked graphs on one skeleton are isomorphic exactly when a skeleton automorphism maps one to the other
    let mut found: Vec<LocGraph> = skel
        .par_iter()
        .flat_map_iter(|(_, (pts, gam, auts))| {
            let npq = pts.len();
            let pts = &pts;
            let mut base = vec![0i64; npq];
            let mut nflags = vec![0usize; npq];
            for &(a, b, e) in gam {
                for v in [a, b] {
                    base[v] += end_sector(&m, &e, pts[v]).expect("valid skeleton") as i64;
                    nflags[v] += 1;
                }
            }
            let rel_choices: Vec<Vec<(Edge, u32, usize)>> = rel_opts
                .iter()
                .map(|opts| {
                    opts.iter()
                        .flat_map(|&(e, k)| {
                            let a = cx.curve(e.curve).expect("L curve").endpoints.0;
                            (0..npq).filter(move |&v| pts[v] == a).map(move |v| (e, k, v))
                        })
                        .collect()
                })
                .collect();
            let abs_choices: Vec<Vec<usize>> = d
                .abs
                .iter()
                .map(|a| (0..npq).filter(|&v| a.at.is_none_or(|p| p == pts[v])).collect())
                .collect();
            let mut local = Vec::new();
            let mut seen: HashSet<Key> = HashSet::new();
            let mut bal = vec![0i64; npq];
            let mut nmarks = vec![0usize; npq];
            for rc in rel_choices.iter().multi_cartesian_product_or_unit() {
                let mut flagsum = base.clone();
                let mut count = nflags.clone();
                for &(_, k, v) in &rc {
                    flagsum[v] += k as i64;
                    count[v] += 1;
                }
                for ac in abs_choices.iter().multi_cartesian_product_or_unit() {
                    bal.copy_from_slice(&flagsum);
                    nmarks.fill(0);
                    for (j, &v) in ac.iter().enumerate() {
                        bal[v] -= abs_k[j] as i64;
                        nmarks[v] += 1;
                    }
                    if bal.iter().any(|&b| residue(b, r) != 0) {
                        continue;
                    }
                    if (0..npq).any(|v| count[v] == 0 && (npq != 1 || nmarks[v] < 3 || !rc.is_empty())) {
                        continue;
                    }
                    let mut vertices: Vec<GVertex> = pts.iter().map(|&pt| GVertex { pt, marks: vec![] }).collect();
                    let mut edges: Vec<GEdge> = gam.iter().map(|&(a, b, edge)| GEdge { edge, ends: (a, b) }).collect();
                    for (j, &v) in ac.iter().enumerate() {
                        vertices[v].marks.push(MarkRef::Abs(j));
                    }
                    for (j, &(e, _, v)) in rc.iter().enumerate() {
                        let pt = cx.curve(e.curve).expect("L curve").endpoints.1;
                        vertices.push(GVertex { pt, marks: vec![MarkRef::Rel(j)] });
                        edges.push(GEdge { edge: e, ends: (v, vertices.len() - 1) });
                    }
                    let g = LocGraph { model: m, datum: datum.clone(), vertices, edges };
                    debug_assert!(g.validate().is_ok(), "{g}");
                    // with only the identity automorphism every labeled placement is distinct
                    if auts.len() > 1 && !seen.insert(auts.iter().map(|p| g.key_under(p)).min().expect("identity")) {
                        continue;
                    }
                    local.push(g);
                }
            }
            local
        })
        .collect();
    // skeletons come in canonical order and placements in a fixed order, so a stable sort is deterministic
    found.sort_by_cached_key(|g| (g.edges.len(), g.edges.iter().map(|e| e.edge.d).sum::<u32>()));
    Ok(found)
}

trait CartesianOrUnit<'a, T: 'a + Clone> {
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<T>> + 'a>;
}

impl<'a, T: 'a + Clone, I: Iterator<Item = &'a Vec<T>> + 'a> CartesianOrUnit<'a, T> for I {
    /// Like `multi_cartesian_product`, but the product of no factors is one empty tuple.
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<T>> + 'a> {
        let v: Vec<&'a Vec<T>> = self.collect();
        if v.is_empty() {
            Box::new(std::iter::once(Vec::new()))
        } else {
            Box::new(v.into_iter().map(|x| x.iter().cloned()).multi_cartesian_product())
        }
    }
}

/// A graph with its contribution.
#[derive(Clone, Debug, Serialize)]
pub struct GraphReport {
    pub graph: LocGraph,
    pub contribution: Factored,
    pub u_valuation: Option<i64>,
    pub survivor: bool,
}

pub fn graph_report(g: LocGraph) -> Result<GraphReport, LocError> {
    g.validate()?;
    report_unchecked(g)
}

fn report_unchecked(g: LocGraph) -> Result<GraphReport, LocError> {
    let contribution = contribution_unchecked(&g)?;
    let u_valuation = contribution.u_valuation().ok();
    Ok(GraphReport { survivor: u_valuation == Some(0), graph: g, contribution, u_valuation })
}

/// Reports for every enumerated graph, in enumeration order.
pub fn graph_reports(m: &ModelId, d: &RelDatum, bound: u32) -> Result<Vec<GraphReport>, LocError> {
    // enumerated graphs are valid by construction
    enumerate_graphs(m, d, bound)?.into_par_iter().map(report_unchecked).collect()
}

/// True when every edge lies on `Lpy` or `Lqx`.
pub fn on_shared_lines(g: &LocGraph) -> bool {
    g.edges.iter().all(|e| matches!(e.edge.curve, CurveId::Lpy | CurveId::Lqx))
}

/// Graphs whose contribution has `u`-valuation zero. Fails if one of them uses an edge off
/// `Lpy`/`Lqx`. Data without relative insertions and with positive `Γ`-degree are refused.
pub fn survivors(m: &ModelId, d: &RelDatum, bound: u32) -> Result<Vec<GraphReport>, LocError> {
    if d.rel.is_empty() && d.gamma_degree > 0 {
        return Err(LocError::ClassInGamma);
    }
    let out: Vec<GraphReport> = graph_reports(m, d, bound)?.into_iter().filter(|r| r.survivor).collect();
    if let Some(bad) = out.iter().find(|r| !on_shared_lines(&r.graph)) {
        return Err(LocError::SurvivorOffLines(bad.graph.to_string()));
    }
    Ok(out)
}

/// Transports a graph supported on `Lpy`/`Lqx` to the other side of the flop and compares the
/// canonical contributions.
pub fn flop_match(g: &LocGraph) -> Result<(LocGraph, bool), LocError> {
    if !on_shared_lines(g) || g.vertices.is_empty() {
        return Err(LocError::NotSurvivor(g.to_string()));
    }
    let (other, corr) = flop(&g.model);
    let moved = LocGraph {
        model: other,
        datum: g.datum.clone(),
        vertices: g.vertices.iter().map(|v| GVertex { pt: corr.point(v.pt), marks: v.marks.clone() }).collect(),
        edges: g
            .edges
            .iter()
            .map(|e| GEdge { edge: Edge { curve: corr.curve(e.edge.curve).0, ..e.edge }, ends: e.ends })
            .collect(),
    };
    let equal = graph_contribution(g)?.to_text() == graph_contribution(&moved)?.to_text();
    Ok((moved, equal))
}

/// Survivors on both sides matched through the flop.
#[derive(Clone, Debug, Serialize)]
pub struct FlopCheck {
    pub pairs: Vec<(String, bool)>,
    pub bijective: bool,
}

impl FlopCheck {
    pub fn all_equal(&self) -> bool {
        self.bijective && self.pairs.iter().all(|p| p.1)
    }
}

pub fn check_flop(m: &ModelId, d: &RelDatum, bound: u32) -> Result<FlopCheck, LocError> {
    let here = survivors(m, d, bound)?;
    let there = survivors(&m.with_side(match m.side {
        Side::S => Side::Sf,
        Side::Sf => Side::S,
    }), d, bound)?;
    let mut pairs = Vec::new();
    let mut images = Vec::new();
    for s in &here {
        let (moved, equal) = flop_match(&s.graph)?;
        pairs.push((s.graph.to_string(), equal));
        images.push(moved.canonical_key());
    }
    images.sort();
    let mut targets: Vec<Key> = there.iter().map(|s| s.graph.canonical_key()).collect();
    targets.sort();
    Ok(FlopCheck { pairs, bijective: images == targets })
}
