//! `flopcalc` command-line front end.
//!
//! Exit codes: 0 success, 1 a checked property failed (the report is still written), 2 invalid
//! input or configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use flopcalc::degen::{compare_flop_sum, AutConvention, DegenError, SplitBounds, ThreePointType};
use flopcalc::dimension::{
    case_violations, classify, enumerate_admissible, index_formula_dim, ledger_dim, n_values, virtual_dim_complex, virtual_dim_real, Case,
    RelDatum,
};
use flopcalc::localize::{check_flop, graph_reports, on_shared_lines, LocError};
use flopcalc::localmodel::{catalog, fixed_points, weight_text, ModelId, Side};
use flopcalc::Q;

/// Environment variable holding the default worker count.
const JOBS_ENV: &str = "FLOPCALC_JOBS";

#[derive(Parser, Debug)]
#[command(name = "flopcalc", version, about = "Exact localization computations on cyclic-quotient conifold flops")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML (or `.json`) config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Order of the cyclic group.
    #[arg(long, global = true)]
    r: Option<u32>,
    /// Weight of the action, coprime to r.
    #[arg(long, global = true, allow_negative_numbers = true)]
    a: Option<i64>,
    #[arg(long, global = true)]
    side: Option<SideArg>,
    #[arg(long, global = true)]
    max_edge_degree: Option<u32>,
    #[arg(long, global = true)]
    max_contacts: Option<usize>,
    #[arg(long, global = true)]
    max_ell_int: Option<u32>,
    #[arg(long, global = true)]
    max_abs: Option<u32>,
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: $FLOPCALC_JOBS, else all cores). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Twisted sectors and degree shiftings at every fixed point.
    Sectors,
    /// Fixed points and invariant curves with their weights.
    Catalog,
    /// Virtual dimension of a relative datum, computed two ways.
    Dim(DatumArg),
    /// Enumerate admissible data and check the case classification.
    Admissible {
        /// Keep only this case (1, 2 or 3).
        #[arg(long)]
        case: Option<u8>,
    },
    /// Fixed-locus graphs of a datum with contributions and u-valuations.
    Graphs {
        #[command(flatten)]
        datum: DatumArg,
        /// Also match survivors across the flop.
        #[arg(long)]
        check_flop: bool,
    },
    /// Splittings of a three-point type and the flop comparison of both degeneration sums.
    Degeneration {
        /// JSON file with the type.
        #[arg(long = "type")]
        ty: Option<PathBuf>,
        /// The type as inline JSON.
        #[arg(long)]
        type_json: Option<String>,
        #[arg(long)]
        aut_convention: Option<AutArg>,
    },
}

#[derive(Args, Debug)]
struct DatumArg {
    /// JSON file with the relative datum.
    #[arg(long)]
    datum: Option<PathBuf>,
    /// The datum as inline JSON.
    #[arg(long)]
    datum_json: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum SideArg {
    S,
    Sf,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum AutArg {
    IdenticalContacts,
    Trivial,
}

/// Config file contents; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    model: FileModel,
    #[serde(default)]
    bounds: FileBounds,
    format: Option<Format>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    datum: Option<PathBuf>,
    #[serde(rename = "type")]
    ty: Option<PathBuf>,
    case: Option<u8>,
    check_flop: Option<bool>,
    aut_convention: Option<AutConvention>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    r: Option<u32>,
    a: Option<i64>,
    side: Option<SideArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBounds {
    max_edge_degree: Option<u32>,
    max_contacts: Option<usize>,
    max_ell_int: Option<u32>,
    max_abs: Option<u32>,
}

/// Effective settings after merging flags over the config file.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    model: ModelId,
    max_edge_degree: u32,
    max_contacts: usize,
    max_ell_int: u32,
    max_abs: u32,
    #[serde(skip)]
    format: Format,
    #[serde(skip)]
    out: Option<PathBuf>,
    #[serde(skip)]
    jobs: Option<usize>,
}

enum Fail {
    Input(String),
    Violation(String),
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Input(e.to_string())
    }
}

fn input<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Input(e.to_string())
}

fn load_file_config(path: &Path) -> Result<FileConfig, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail::Input(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Fail::Input(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Fail::Input(format!("{}: {e}", path.display())))
    }
}

fn resolve(c: &Common, f: &FileConfig) -> Result<RunConfig, Fail> {
    let r = c.r.or(f.model.r).ok_or_else(|| Fail::Input("missing --r (or model.r in the config file)".into()))?;
    let a = c.a.or(f.model.a).unwrap_or(1);
    let side = match c.side.or(f.model.side).unwrap_or(SideArg::S) {
        SideArg::S => Side::S,
        SideArg::Sf => Side::Sf,
    };
    let model = ModelId::new(r, a, side, true).map_err(input)?;
    let jobs = match c.jobs.or(f.jobs) {
        Some(j) => Some(j),
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Fail::Input(format!("{JOBS_ENV}={v} is not a count")))?),
            Err(_) => None,
        },
    };
    if jobs == Some(0) {
        return Err(Fail::Input("jobs must be positive".into()));
    }
    Ok(RunConfig {
        model,
        max_edge_degree: c.max_edge_degree.or(f.bounds.max_edge_degree).unwrap_or(2),
        max_contacts: c.max_contacts.or(f.bounds.max_contacts).unwrap_or(2),
        max_ell_int: c.max_ell_int.or(f.bounds.max_ell_int).unwrap_or(1),
        max_abs: c.max_abs.or(f.bounds.max_abs).unwrap_or(3),
        format: c.format.or(f.format).unwrap_or_default(),
        out: c.out.clone().or_else(|| f.out.clone()),
        jobs,
    })
}

/// A finished report: its JSON form and a flat table for CSV.
struct Report {
    json: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn write_report(cfg: &RunConfig, rep: &Report) -> Result<(), Fail> {
    let mut buf: Vec<u8> = Vec::new();
    match cfg.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &rep.json).map_err(input)?;
            buf.push(b'\n');
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&rep.header).map_err(input)?;
            for row in &rep.rows {
                w.write_record(row).map_err(input)?;
            }
            w.flush()?;
        }
    }
    match &cfg.out {
        Some(p) => fs::write(p, &buf).map_err(|e| Fail::Input(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: Option<&Path>, inline: Option<&str>, what: &str) -> Result<T, Fail> {
    match (path, inline) {
        (_, Some(text)) => serde_json::from_str(text).map_err(|e| Fail::Input(format!("inline {what}: {e}"))),
        (Some(p), None) => {
            let text = fs::read_to_string(p).map_err(|e| Fail::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Fail::Input(format!("{}: {e}", p.display())))
        }
        (None, None) => Err(Fail::Input(format!("no {what} given"))),
    }
}

fn load_datum(cfg: &RunConfig, arg: &DatumArg, file: &FileConfig) -> Result<RelDatum, Fail> {
    let path = arg.datum.clone().or_else(|| file.datum.clone());
    let mut d: RelDatum = read_json(path.as_deref(), arg.datum_json.as_deref(), "datum")?;
    d.resolve_orders(cfg.model.r);
    d.validate(cfg.model.r).map_err(input)?;
    Ok(d)
}

fn cmd_sectors(cfg: &RunConfig) -> Report {
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for p in fixed_points(&cfg.model) {
        let table = p.chart_action.sector_table::<Q>();
        for s in &table {
            rows.push(vec![p.id.to_string(), p.stabilizer_order.to_string(), s.k.to_string(), s.iota.to_string()]);
        }
        points.push(json!({ "point": p.id, "order": p.stabilizer_order, "action": p.chart_action.to_string(), "sectors": table }));
    }
    Report { json: json!({ "model": cfg.model, "points": points }), header: vec!["point", "order", "k", "iota"], rows }
}

fn cmd_catalog(cfg: &RunConfig) -> Result<Report, Fail> {
    let cat = catalog(&cfg.model);
    let mut rows = Vec::new();
    for p in &cat.points {
        let w = p.tangent_weights().iter().map(weight_text).collect::<Vec<_>>().join(";");
        let c = p.characters().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
        rows.push(vec!["point".into(), p.id.to_string(), p.stabilizer_order.to_string(), w, c]);
    }
    for cv in &cat.curves {
        let (a, b) = &cv.tangent_weights_at_ends;
        rows.push(vec![
            "curve".into(),
            cv.id.to_string(),
            format!("{};{}", cv.orbifold_orders_at_ends.0, cv.orbifold_orders_at_ends.1),
            format!("{};{}", weight_text(a), weight_text(b)),
            format!("{};{}", cv.endpoints.0, cv.endpoints.1),
        ]);
    }
    Ok(Report { json: serde_json::to_value(&cat).map_err(input)?, header: vec!["kind", "id", "order", "weights", "detail"], rows })
}

fn cmd_dim(cfg: &RunConfig, d: &RelDatum) -> Result<(Report, Option<String>), Fail> {
    let m = &cfg.model;
    let ledger = ledger_dim(d, m).map_err(input)?;
    let formula = index_formula_dim(d, m).map_err(input)?;
    let mut problem = None;
    if let Err(e) = virtual_dim_complex(d, m) {
        problem = Some(e.to_string());
    }
    let real = virtual_dim_real(d, m).map_err(input)?;
    let case = classify(d, m).map_err(input)?;
    let (n, np) = n_values(d, m).map_err(input)?;
    let violations = case_violations(d, m, case);
    if problem.is_none() && !violations.is_empty() {
        problem = Some(format!("{} classification claim(s) fail", violations.len()));
    }
    let json = json!({
        "model": m,
        "datum": d,
        "ledger": ledger.to_string(),
        "formula": formula.to_string(),
        "real": real.to_string(),
        "N": n.to_string(),
        "N_prime": np,
        "case": case,
        "violations": violations,
    });
    let rows = vec![vec![d.to_string(), ledger.to_string(), formula.to_string(), real.to_string(), n.to_string(), np.to_string(), case.to_string()]];
    Ok((Report { json, header: vec!["datum", "ledger", "formula", "real", "N", "N_prime", "case"], rows }, problem))
}

fn cmd_admissible(cfg: &RunConfig, case: Option<u8>) -> Result<(Report, Option<String>), Fail> {
    let want = match case {
        None => None,
        Some(1) => Some(Case::Case1),
        Some(2) => Some(Case::Case2),
        Some(3) => Some(Case::Case3),
        Some(c) => return Err(Fail::Input(format!("--case {c}: expected 1, 2 or 3"))),
    };
    let m = &cfg.model;
    let all = enumerate_admissible(m, cfg.max_ell_int, cfg.max_abs).map_err(input)?;
    let mut data = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut counts = std::collections::BTreeMap::new();
    for (d, c) in &all {
        *counts.entry(c.to_string()).or_insert(0usize) += 1;
        let v = case_violations(d, m, *c);
        if want.is_some_and(|w| w != *c) {
            continue;
        }
        let dim = virtual_dim_complex(d, m).map_err(input)?;
        rows.push(vec![d.to_string(), c.to_string(), dim.to_string(), v.len().to_string()]);
        data.push(json!({ "datum": d, "case": c, "dim": dim.to_string() }));
        violations.extend(v);
    }
    let problem = (!violations.is_empty()).then(|| format!("{} classification claim(s) fail", violations.len()));
    let json = json!({ "config": cfg, "counts": counts, "data": data, "violations": violations });
    Ok((Report { json, header: vec!["datum", "case", "dim", "violations"], rows }, problem))
}

fn cmd_graphs(cfg: &RunConfig, d: &RelDatum, flop: bool) -> Result<(Report, Option<String>), Fail> {
    let m = &cfg.model;
    let bound = cfg.max_edge_degree;
    let reps = graph_reports(m, d, bound).map_err(input)?;
    let class_in_gamma = d.rel.is_empty() && d.gamma_degree > 0;
    let mut problem = None;
    let off: Vec<String> = reps.iter().filter(|r| r.survivor && !on_shared_lines(&r.graph)).map(|r| r.graph.to_string()).collect();
    if !class_in_gamma && !off.is_empty() {
        problem = Some(format!("{} survivor(s) use edges off Lpy/Lqx", off.len()));
    }
    let mut flop_json = Value::Null;
    let mut flop_equal: std::collections::HashMap<String, bool> = Default::default();
    if flop {
        match check_flop(m, d, bound) {
            Ok(fc) => {
                if problem.is_none() && !fc.all_equal() {
                    problem = Some("flop matching fails".into());
                }
                flop_equal.extend(fc.pairs.iter().cloned());
                flop_json = json!({ "pairs": fc.pairs.iter().map(|(g, e)| json!({"graph": g, "equal": e})).collect::<Vec<_>>(), "bijective": fc.bijective, "all_equal": fc.all_equal() });
            }
            Err(e @ LocError::ClassInGamma) => flop_json = json!({ "diagnostic": e.to_string() }),
            Err(LocError::SurvivorOffLines(g)) => {
                problem.get_or_insert_with(|| format!("survivor off Lpy/Lqx: {g}"));
            }
            Err(e) => return Err(input(e)),
        }
    }
    let rows = reps
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = r.graph.to_string();
            let fe = flop_equal.get(&g).map(|b| b.to_string()).unwrap_or_default();
            vec![i.to_string(), g, r.contribution.to_text(), r.u_valuation.map(|v| v.to_string()).unwrap_or_default(), r.survivor.to_string(), fe]
        })
        .collect();
    let survivors = reps.iter().filter(|r| r.survivor).count();
    let json = json!({
        "config": cfg,
        "datum": d,
        "graphs": reps,
        "survivors": survivors,
        "survivors_on_shared_lines": off.is_empty(),
        "class_in_gamma": class_in_gamma,
        "flop": flop_json,
    });
    Ok((Report { json, header: vec!["index", "graph", "contribution", "u_valuation", "survivor", "flop_equal"], rows }, problem))
}

fn cmd_degeneration(cfg: &RunConfig, ty: &ThreePointType, conv: AutConvention) -> Result<(Report, Option<String>), Fail> {
    let b = SplitBounds { max_contacts: cfg.max_contacts, max_ell_int: cfg.max_ell_int, max_edge_degree: cfg.max_edge_degree };
    let header = vec!["eta", "C_eta", "case", "lhs", "rhs", "equal"];
    let (rep, problem) = match compare_flop_sum(&cfg.model, ty, &b, conv) {
        Ok(r) => (r, None),
        Err(DegenError::Mismatch(r)) => (*r, Some("local sides of the flop disagree".to_string())),
        Err(e @ DegenError::ClassInGamma) => {
            let json = json!({ "config": cfg, "type": ty, "diagnostic": e.to_string() });
            return Ok((Report { json, header, rows: vec![] }, None));
        }
        Err(e) => return Err(input(e)),
    };
    let rows = rep
        .splittings
        .iter()
        .map(|s| {
            let cases = s.case.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
            vec![s.eta.clone(), s.c_eta.to_string(), cases, s.lhs.to_text(), s.rhs.to_text(), s.equal.to_string()]
        })
        .collect();
    Ok((Report { json: serde_json::to_value(&rep).map_err(input)?, header, rows }, problem))
}

fn run(cli: Cli) -> Result<(), Fail> {
    let file = match &cli.common.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let cfg = resolve(&cli.common, &file)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(input)?;
    }
    let (report, problem) = match &cli.cmd {
        Cmd::Sectors => (cmd_sectors(&cfg), None),
        Cmd::Catalog => (cmd_catalog(&cfg)?, None),
        Cmd::Dim(arg) => cmd_dim(&cfg, &load_datum(&cfg, arg, &file)?)?,
        Cmd::Admissible { case } => cmd_admissible(&cfg, case.or(file.case))?,
        Cmd::Graphs { datum, check_flop } => cmd_graphs(&cfg, &load_datum(&cfg, datum, &file)?, *check_flop || file.check_flop.unwrap_or(false))?,
        Cmd::Degeneration { ty, type_json, aut_convention } => {
            let path = ty.clone().or_else(|| file.ty.clone());
            let mut t: ThreePointType = read_json(path.as_deref(), type_json.as_deref(), "type")?;
            t.resolve_orders(cfg.model.r);
            let conv = match aut_convention {
                Some(AutArg::IdenticalContacts) => AutConvention::IdenticalContacts,
                Some(AutArg::Trivial) => AutConvention::Trivial,
                None => file.aut_convention.unwrap_or_default(),
            };
            cmd_degeneration(&cfg, &t, conv)?
        }
    };
    write_report(&cfg, &report)?;
    match problem {
        Some(p) => Err(Fail::Violation(p)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Violation(msg)) => {
            eprintln!("property violation: {msg}");
            ExitCode::from(1)
        }
        Err(Fail::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
