//! Acceptance checks. Each criterion prints one `PASS`/`FAIL` line to stderr (uncaptured) and
//! fails its test when the property or its time budget is not met.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use itertools::Itertools;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use flopcalc::degen::{compare_flop_sum, AutConvention, SplitBounds, ThreePointType};
use flopcalc::dimension::*;
use flopcalc::localize::*;
use flopcalc::localmodel::*;
use flopcalc::orbact::gcd;
use flopcalc::{Factored, LimitU0, Scalar, Weight, Q};

/// Criteria run one at a time so their timings do not compete for cores.
static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, name: &str, ok: bool, budget: Duration, elapsed: Duration, detail: &str) {
    let pass = ok && elapsed < budget;
    let line = format!(
        "criterion {n} [{name}]: {} ({detail}; {:.2}s of {}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {n}: {detail}");
    assert!(elapsed < budget, "criterion {n}: {:.2}s over budget", elapsed.as_secs_f64());
}

fn models(r: u32) -> Vec<ModelId> {
    if r == 1 {
        return vec![ModelId::m(1, 0).unwrap()];
    }
    (1..r as i64).filter(|&a| gcd(a, r as i64) == 1).map(|a| ModelId::m(r, a).unwrap()).collect()
}

#[test]
fn criterion_1_degree_shifting() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (mut checked, mut bad) = (0, Vec::new());
    for r in 2..=12u32 {
        for m in models(r) {
            for side in [Side::S, Side::Sf] {
                let m = m.with_side(side);
                for k in 1..r as i64 {
                    for pt in [PointId::P, PointId::Q] {
                        let iota = sector_shifting_at(&m, pt, k).unwrap();
                        checked += 1;
                        if iota != Q::one() + Q::ratio(k, r as i64) {
                            bad.push(format!("{m} {pt} k={k}: {iota}"));
                        }
                    }
                }
            }
        }
    }
    let detail = format!("{checked} sectors, {} mismatches {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(1, "degree shifting", bad.is_empty(), Duration::from_secs(1), t.elapsed(), &detail);
}

#[test]
fn criterion_2_invariant_sections() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut bad = Vec::new();
    let mut checked = 0;
    for r in 1..=10u32 {
        for d in 1..=20u32 {
            let (di, ri) = (d as i64, r as i64);
            let secs = h0_sections_O2dm2(d, r, &Q::one());
            let invariant: BTreeSet<u32> = secs.iter().filter(|s| s.character == 0).map(|s| s.a).collect();
            let expected: BTreeSet<u32> = (0..=2 * d - 2).filter(|&a| (di - 1 - a as i64).rem_euclid(ri) == 0).collect();
            if invariant != expected {
                bad.push(format!("d={d} r={r}: invariant set"));
            }
            for s in secs.iter().filter(|s| s.character == 0) {
                checked += 1;
                let w = Weight::new(Q::ratio(di - 1 - s.a as i64, di), Q::int(-ri));
                if s.weight != w {
                    bad.push(format!("d={d} r={r} a={}: {}", s.a, s.weight));
                }
            }
            if !h1_dual_weights(d, r).contains(&Weight::from_ints(0, ri)) {
                bad.push(format!("d={d} r={r}: ru missing from the dual list"));
            }
        }
    }
    let detail = format!("{checked} invariant sections over d<=20, r<=10, {} mismatches", bad.len());
    report(2, "invariant sections", bad.is_empty(), Duration::from_secs(1), t.elapsed(), &detail);
}

#[test]
fn criterion_3_dimension_double_entry() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (mut checked, mut bad) = (0usize, Vec::new());
    for r in 1..=5u32 {
        for m in models(r) {
            // every single-contact datum, plus every admissible datum of the exhaustive search
            let abs_sets: Vec<Vec<AbsInsertion>> = (0..=3).flat_map(|k| abs_candidates(r).into_iter().combinations_with_replacement(k)).collect();
            let rels = rel_candidates(&m, 2);
            let mut data: Vec<RelDatum> = Vec::new();
            for abs in &abs_sets {
                data.push(RelDatum::new(abs.clone(), vec![]));
                for (x, _) in &rels {
                    data.push(RelDatum::new(abs.clone(), vec![x.clone()]));
                }
            }
            data.extend(enumerate_admissible(&m, 2, 3).unwrap().into_iter().map(|x| x.0));
            checked += data.len();
            bad.par_extend(data.par_iter().filter_map(|d| {
                let (l, f) = (ledger_dim(d, &m).unwrap(), index_formula_dim(d, &m).unwrap());
                (l != f).then(|| format!("{m} {d}: {l} vs {f}"))
            }));
        }
    }
    let detail = format!("{checked} data, {} mismatches {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(3, "dimension double entry", bad.is_empty(), Duration::from_secs(10), t.elapsed(), &detail);
}

#[test]
fn criterion_4_classification() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut total = 0;
    let mut per_r = Vec::new();
    let mut examples = Vec::new();
    for r in 1..=5u32 {
        let mut bad = 0;
        for m in models(r) {
            for (d, case) in enumerate_admissible(&m, 2, 3).unwrap() {
                total += 1;
                assert_ne!(case, Case::Inadmissible);
                let v = case_violations(&d, &m, case);
                if !v.is_empty() {
                    bad += 1;
                    if examples.len() < 2 {
                        examples.push(format!("{m} {}: {}", v[0].datum, v[0].claim));
                    }
                }
            }
        }
        per_r.push(format!("r={r}: {bad}"));
    }
    let ok = examples.is_empty();
    let detail = format!("{total} admissible data; violating data per r [{}]; e.g. {:?}", per_r.join(", "), examples);
    report(4, "case classification", ok, Duration::from_secs(30), t.elapsed(), &detail);
}

#[test]
fn criterion_5_vanishing() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (mut graphs, mut bad) = (0usize, Vec::new());
    for r in 1..=4u32 {
        for m in models(r) {
            for (d0, case) in enumerate_admissible(&m, 1, 3).unwrap() {
                if d0.rel.is_empty() {
                    continue;
                }
                for gd in 0..=3 {
                    let d = d0.clone().with_gamma_degree(gd);
                    for rep in graph_reports(&m, &d, 3).unwrap() {
                        graphs += 1;
                        let vanishes = rep.u_valuation.is_none_or(|v| v >= 1);
                        if rep.graph.has_gamma_edge() && !vanishes {
                            bad.push(format!("Gamma edge survives: {m} {d} {}", rep.graph));
                        }
                        if matches!(case, Case::Case1 | Case::Case2) && !vanishes {
                            bad.push(format!("{case} graph survives: {m} {d} {}", rep.graph));
                        }
                        if rep.survivor && !on_shared_lines(&rep.graph) {
                            bad.push(format!("survivor off Lpy/Lqx: {m} {d} {}", rep.graph));
                        }
                    }
                }
            }
        }
    }
    let detail = format!("{graphs} graphs, {} violations {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(5, "vanishing", bad.is_empty(), Duration::from_secs(120), t.elapsed(), &detail);
}

#[test]
fn criterion_6_flop_matching() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (mut data, mut types, mut bad) = (0usize, 0usize, Vec::new());
    let bounds = SplitBounds { max_contacts: 2, max_ell_int: 1, max_edge_degree: 2 };
    for r in 1..=3u32 {
        for m in models(r) {
            for (d0, _) in enumerate_admissible(&m, 1, 3).unwrap() {
                if d0.rel.is_empty() {
                    continue;
                }
                for gd in 0..=3 {
                    let d = d0.clone().with_gamma_degree(gd);
                    data += 1;
                    let fc = check_flop(&m, &d, 3).unwrap();
                    if !fc.all_equal() {
                        bad.push(format!("survivor matching: {m} {d}"));
                    }
                }
            }
            let ells: Vec<Q> = rel_candidates(&m, bounds.max_ell_int).into_iter().map(|x| x.0.ell).collect();
            let totals: BTreeSet<Q> = ells.iter().cloned().chain(ells.iter().cartesian_product(&ells).map(|(x, y)| x.clone() + y.clone())).collect();
            for abs in abs_candidates(r).into_iter().combinations_with_replacement(3) {
                for gd in -1..=1 {
                    for c in &totals {
                        types += 1;
                        let ty = ThreePointType::new(abs.clone(), gd, c.clone());
                        match compare_flop_sum(&m, &ty, &bounds, AutConvention::default()) {
                            Ok(rep) if rep.total_equal => {}
                            Ok(_) => bad.push(format!("totals differ: {m} {ty}")),
                            Err(e) => bad.push(format!("{m} {ty}: {e}")),
                        }
                    }
                }
            }
        }
    }
    let detail = format!("{data} data matched, {types} three-point types compared, {} failures {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(6, "flop matching", bad.is_empty(), Duration::from_secs(120), t.elapsed(), &detail);
}

/// Degree-one edge factors of the smooth conifold, from the splitting of each line bundle on
/// the line by hand (log tangent bundle at the divisor end).
fn smooth_edge_oracle(c: CurveId, l: &Q, u: &Q) -> Q {
    let l2 = l.clone() * l.clone();
    match c {
        CurveId::Gamma => -Q::one() / l2,
        CurveId::Lpy => Q::one() / (l2 * u.clone() * (u.clone() - l.clone())),
        CurveId::Lqx => Q::one() / (l2 * u.clone() * (u.clone() + l.clone())),
        CurveId::Lpz => -Q::one() / (l2 * u.clone() * (u.clone() - l.clone())),
        CurveId::Lqz => -Q::one() / (l2 * u.clone() * (u.clone() + l.clone())),
    }
}

#[test]
fn criterion_7_smooth_regression() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut bad = Vec::new();
    let m = ModelId::m(1, 0).unwrap();
    for side in [Side::S, Side::Sf] {
        let m = m.with_side(side);
        for p in fixed_points(&m) {
            if p.stabilizer_order != 1 || p.chart_action.sector_table::<Q>().len() != 1 {
                bad.push(format!("{m} {}: twisted sectors", p.id));
            }
        }
        let pts = [(Q::int(2), Q::int(7)), (Q::ratio(-3, 5), Q::int(4)), (Q::int(11), Q::ratio(1, 3))];
        for c in [CurveId::Gamma, CurveId::Lpy, CurveId::Lqx, CurveId::Lpz, CurveId::Lqz] {
            let f = edge_factor(&m, &Edge::new(c, 1, false)).unwrap();
            for (l, u) in &pts {
                if f.eval(l, u).unwrap() != smooth_edge_oracle(c, l, u) {
                    bad.push(format!("{m} {c}: {f}"));
                }
            }
        }
    }
    if abs_candidates(1) != vec![AbsInsertion::untwisted()] {
        bad.push("twisted absolute insertions at r = 1".into());
    }
    if rel_candidates(&m, 2).iter().any(|(x, _)| x.target != RelTarget::SmoothZ) {
        bad.push("twisted contacts at r = 1".into());
    }
    // the whole pipeline runs: admissible data, graphs, survivors across the flop, degeneration
    for (d0, _) in enumerate_admissible(&m, 2, 3).unwrap() {
        if d0.rel.is_empty() {
            continue;
        }
        for gd in 0..=2 {
            let d = d0.clone().with_gamma_degree(gd);
            if !check_flop(&m, &d, 3).unwrap().all_equal() {
                bad.push(format!("flop: {d}"));
            }
        }
    }
    let ty = ThreePointType::new(vec![AbsInsertion::untwisted(); 3], 0, Q::one());
    if !compare_flop_sum(&m, &ty, &SplitBounds::default(), AutConvention::default()).is_ok_and(|r| r.total_equal) {
        bad.push("degeneration comparison".into());
    }
    let detail = format!("{} problems {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(7, "smooth regression", bad.is_empty(), Duration::from_secs(5), t.elapsed(), &detail);
}

fn random_factored(rng: &mut ChaCha8Rng) -> Factored {
    let mut f = Factored::constant(Q::ratio(rng.gen_range(-9..=9i64).max(1) * if rng.gen() { 1 } else { -1 }, rng.gen_range(1..=7)));
    for _ in 0..rng.gen_range(0..4) {
        let w = Weight::from_ints(rng.gen_range(-3..=3), rng.gen_range(-3..=3));
        if !w.is_zero() {
            f.mul_weight(&w, rng.gen_range(-2..=2)).unwrap();
        }
    }
    f
}

#[test]
fn criterion_8_algebra_kernel() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = Vec::new();
    let mut runs = 0;
    while runs < 500 {
        let (f, g) = (random_factored(&mut rng), random_factored(&mut rng));
        let (l, u) = (Q::ratio(rng.gen_range(1..=50), rng.gen_range(1..=9)), Q::ratio(rng.gen_range(-40..=40), rng.gen_range(1..=9)));
        // skip points where some factor vanishes
        let (Ok(ef), Ok(eg)) = (f.eval(&l, &u), g.eval(&l, &u)) else { continue };
        runs += 1;
        let fg = f.mul(&g);
        if fg.eval(&l, &u).unwrap() != ef.clone() * eg.clone() {
            bad.push(format!("mul: {f} * {g}"));
        }
        if f.div(&g).unwrap().eval(&l, &u).unwrap() != ef.clone() / eg.clone() {
            bad.push(format!("div: {f} / {g}"));
        }
        if fg.u_valuation().unwrap() != f.u_valuation().unwrap() + g.u_valuation().unwrap() {
            bad.push(format!("valuation: {f} * {g}"));
        }
        if Factored::parse(&f.to_text()).unwrap() != f {
            bad.push(format!("text: {f}"));
        }
        match (f.limit_u0(), g.limit_u0(), fg.limit_u0()) {
            (LimitU0::Value(a), LimitU0::Value(b), LimitU0::Value(c)) => {
                if a.mul(&b) != c {
                    bad.push(format!("limit: {f} * {g}"));
                }
                // the limit is the value at u = 0 when no factor vanishes there
                if let Ok(at0) = f.eval(&l, &Q::zero()) {
                    if a.eval(&l, &Q::zero()).unwrap() != at0 {
                        bad.push(format!("limit value: {f}"));
                    }
                }
            }
            (LimitU0::Zero, LimitU0::Value(_), c) | (LimitU0::Value(_), LimitU0::Zero, c) if c != LimitU0::Zero => {
                bad.push(format!("limit zero: {f} * {g}"));
            }
            _ => {}
        }
    }
    let detail = format!("{runs} random identity checks, {} failures {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>());
    report(8, "algebra kernel", bad.is_empty(), Duration::from_secs(5), t.elapsed(), &detail);
}
