//! Command-line driver: class sets, Hecke matrices (level 1, general level N,
//! weight-k blocks), eigensystem extraction, and cache management.
//!
//! Exit codes: 0 success, 2 usage/validation error, 1 internal invariant
//! failure. Output on stdout is deterministic byte-for-byte for a fixed
//! configuration and cache; timings go to stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::BigRational;
use quathecke::arith;
use quathecke::cache::{self, CacheFile, CachedData};
use quathecke::fpk::{simultaneous_eigensystems, Eigensystem, Fp2Ctx, Fp2Matrix};
use quathecke::hecke::{GeneralHecke, HeckeEngine, HeckeMatrix};
use quathecke::lattice::left_ideal_classes;
use quathecke::quat::{build_algebra, maximal_order_basis};
use quathecke::split::SplittingData;
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

const CACHE_DIR_ENV: &str = "QUATHECKE_CACHE_DIR";
/// Dense matrices above this dimension are only available as streamed CSV.
const DENSE_GUARD: usize = 4096;

#[derive(Parser)]
#[command(name = "quathecke")]
#[command(about = "Mod-p Hecke operators on the quaternion side: Brandt-type matrices, \
levels, weights, and Hecke eigensystems over F_{p^2}", version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Args)]
struct CommonOpts {
    /// Output format
    #[arg(long, value_enum, default_value = "pretty")]
    format: Format,
    /// Cache directory (overridden by QUATHECKE_CACHE_DIR)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Print stage timings to stderr
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Commands {
    /// Compute the left ideal class set of the maximal order for p
    Classset {
        #[arg(short)]
        p: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute Hecke matrices T_{ell0} at level N (weight-k block on request)
    Hecke {
        #[arg(short)]
        p: u64,
        /// Level N, coprime to p
        #[arg(short = 'N', long, default_value = "1")]
        level: u64,
        /// Comma-separated Hecke primes, each coprime to p·N
        #[arg(long, value_delimiter = ',', required = true)]
        ell: Vec<u64>,
        /// Emit the weight-k block (entries in F_{p^2}); k is reduced mod p²−1
        #[arg(long)]
        weight: Option<u64>,
        /// Include the integer Brandt companion ell0·T (level-1 runs)
        #[arg(long)]
        brandt: bool,
        /// Include the witness solutions per (i, j, k) cell (level-1 runs)
        #[arg(long)]
        witnesses: bool,
        /// Extract simultaneous eigensystems over F_{p^2}
        #[arg(long)]
        eigen: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Verify or rebuild the cache file for p
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Verify {
        #[arg(short)]
        p: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
    Rebuild {
        #[arg(short)]
        p: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    };
    std::process::exit(code);
}

struct CliError {
    code: i32,
    error: anyhow::Error,
}

fn usage_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError { code: 2, error: e.into() }
}

fn internal_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError { code: 1, error: e.into() }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Commands::Classset { p, common } => cmd_classset(p, &common),
        Commands::Hecke { p, level, ell, weight, brandt, witnesses, eigen, common } => {
            cmd_hecke(p, level, &ell, weight, brandt, witnesses, eigen, &common)
        }
        Commands::Cache { action } => match action {
            CacheAction::Verify { p, common } => cmd_cache_verify(p, &common),
            CacheAction::Rebuild { p, common } => cmd_cache_rebuild(p, &common),
        },
    }
}

fn cache_dir(common: &CommonOpts) -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| common.cache_dir.clone())
}

fn validate_p(p: u64) -> Result<(), CliError> {
    if !arith::is_prime(p) {
        return Err(usage_err(anyhow::anyhow!("p = {p} is not prime")));
    }
    Ok(())
}

/// Load the per-p data from cache when possible, otherwise compute it (and
/// persist when a cache directory is configured).
fn load_or_compute(
    p: u64,
    common: &CommonOpts,
) -> Result<(CachedData, bool), CliError> {
    let dir = cache_dir(common);
    if let Some(dir) = &dir {
        match cache::load(dir, p) {
            Ok(Some(file)) => {
                let data = cache::from_cache(&file).map_err(internal_err)?;
                return Ok((data, true));
            }
            Ok(None) => {}
            Err(e) => return Err(internal_err(e)),
        }
    }
    let t0 = Instant::now();
    let params = build_algebra(p).map_err(usage_err)?;
    let order = maximal_order_basis(&params).map_err(internal_err)?;
    let classes = left_ideal_classes(&params, &order).map_err(internal_err)?;
    if common.timing {
        eprintln!("class set computed in {:?}", t0.elapsed());
    }
    let data = CachedData { params, order, classes, splittings: Vec::new() };
    if let Some(dir) = &dir {
        let file = cache::to_cache(&data.params, &data.order, &data.classes, &data.splittings);
        cache::save(dir, &file).map_err(internal_err)?;
    }
    Ok((data, false))
}

fn class_json(data: &CachedData) -> Value {
    let classes: Vec<Value> = data
        .classes
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            json!({
                "index": k + 1,
                "nrd": c.lattice.nrd().map(|n| n.to_string()).unwrap_or_default(),
                "hnf": c.lattice.rows.iter()
                    .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "denominator": c.lattice.den.to_string(),
                "unit_order": c.unit_order,
                "local_gens": c.local_gens.iter().map(|(l, w)| {
                    (l.to_string(), Value::from(w.c.iter().map(|x| x.to_string()).collect::<Vec<_>>()))
                }).collect::<serde_json::Map<String, Value>>(),
            })
        })
        .collect();
    json!({
        "schema_version": cache::SCHEMA_VERSION,
        "p": data.params.p,
        "eps": data.params.eps,
        "r": data.params.r,
        "a": data.params.a,
        "h": data.classes.h(),
        "mass": data.classes.mass().to_string(),
        "classes": classes,
    })
}

fn cmd_classset(p: u64, common: &CommonOpts) -> Result<(), CliError> {
    validate_p(p)?;
    let (data, _) = load_or_compute(p, common)?;
    let expected = BigRational::new(num::BigInt::from(p as i64 - 1), num::BigInt::from(24));
    if data.classes.mass() != expected {
        return Err(internal_err(anyhow::anyhow!(
            "mass {} does not match (p-1)/24",
            data.classes.mass()
        )));
    }
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&class_json(&data)).unwrap()),
        Format::Csv => {
            println!("index,nrd,unit_order");
            for (k, c) in data.classes.classes.iter().enumerate() {
                println!("{},{},{}", k + 1, c.lattice.nrd().unwrap(), c.unit_order);
            }
        }
        Format::Pretty => {
            println!("p = {p}: h = {} classes, mass = {}", data.classes.h(), data.classes.mass());
            for (k, c) in data.classes.classes.iter().enumerate() {
                println!(
                    "  I{} : nrd = {}, |O_r(I)^x| = {}, local generators at {:?}",
                    k + 1,
                    c.lattice.nrd().unwrap(),
                    c.unit_order,
                    c.local_gens.keys().collect::<Vec<_>>()
                );
            }
        }
    }
    Ok(())
}

fn fp2_string(x: quathecke::fpk::Fp2) -> String {
    format!("[{},{}]", x.s, x.t)
}

fn eigen_json(ells: &[u64], systems: &[Eigensystem]) -> Value {
    let list: Vec<Value> = systems
        .iter()
        .map(|s| {
            let values: serde_json::Map<String, Value> = ells
                .iter()
                .zip(&s.values)
                .map(|(l, v)| (l.to_string(), Value::from(fp2_string(*v))))
                .collect();
            json!({
                "values": values,
                "multiplicity": s.multiplicity,
                "diagonalizable": s.diagonalizable,
            })
        })
        .collect();
    Value::from(list)
}

enum ComputedMatrix {
    Level1(HeckeMatrix),
    Weight(Fp2Matrix),
    General(GeneralHecke),
}

#[allow(clippy::too_many_arguments)]
fn cmd_hecke(
    p: u64,
    level: u64,
    ells: &[u64],
    weight: Option<u64>,
    brandt: bool,
    witnesses: bool,
    eigen: bool,
    common: &CommonOpts,
) -> Result<(), CliError> {
    validate_p(p)?;
    if level == 0 || num::integer::gcd(p, level) != 1 {
        return Err(usage_err(anyhow::anyhow!("level N = {level} must be coprime to p = {p}")));
    }
    for &l in ells {
        if !arith::is_prime(l) || l == p || level % l == 0 {
            return Err(usage_err(anyhow::anyhow!(
                "ell0 = {l} must be a prime coprime to p·N"
            )));
        }
    }
    if (weight.is_some() || level > 1 || eigen) && p == 2 {
        return Err(usage_err(anyhow::anyhow!(
            "p = 2 supports only the level-1 weight-0 matrix (F_4 bookkeeping is degenerate)"
        )));
    }

    let (data, from_cache) = load_or_compute(p, common)?;
    let t0 = Instant::now();
    let engine = HeckeEngine::build(data.params, data.order, data.classes, level, ells)
        .map_err(internal_err)?;
    if common.timing {
        eprintln!(
            "splittings ready in {:?} (class set {})",
            t0.elapsed(),
            if from_cache { "from cache" } else { "computed" }
        );
    }
    // persist newly computed splittings alongside the class data
    if let Some(dir) = cache_dir(common) {
        let splits: Vec<SplittingData> = engine.splittings.values().cloned().collect();
        let file = cache::to_cache(&engine.params, &engine.order, &engine.classes, &splits);
        cache::save(&dir, &file).map_err(internal_err)?;
    }

    let mut results = Vec::new();
    for &l0 in ells {
        let t1 = Instant::now();
        let computed = if weight.is_some() {
            ComputedMatrix::Weight(engine.general(l0).map_err(internal_err)?.weight_matrix(weight.unwrap()))
        } else if level == 1 {
            ComputedMatrix::Level1(engine.level1_matrix(l0).map_err(internal_err)?)
        } else {
            ComputedMatrix::General(engine.general(l0).map_err(internal_err)?)
        };
        if common.timing {
            eprintln!("T_{l0} computed in {:?}", t1.elapsed());
        }
        results.push((l0, computed));
    }

    let eigensystems = if eigen {
        Some(compute_eigensystems(&engine, &results)?)
    } else {
        None
    };

    match common.format {
        Format::Csv => emit_csv(&engine, &results),
        Format::Json | Format::Pretty => {
            emit_structured(&engine, &results, weight, brandt, witnesses, eigensystems, ells, common)?
        }
    }
    Ok(())
}

fn compute_eigensystems(
    engine: &HeckeEngine,
    results: &[(u64, ComputedMatrix)],
) -> Result<Vec<Eigensystem>, CliError> {
    let ctx = Fp2Ctx::new(engine.params.p, engine.params.eps).map_err(usage_err)?;
    let mats: Vec<Fp2Matrix> = results
        .iter()
        .map(|(_, m)| match m {
            ComputedMatrix::Level1(h) => Ok(Fp2Matrix::from_fp_rows(&ctx, &h.entries)),
            ComputedMatrix::Weight(w) => Ok(w.clone()),
            ComputedMatrix::General(g) => g.dense_matrix(DENSE_GUARD).map_err(internal_err),
        })
        .collect::<Result<_, CliError>>()?;
    simultaneous_eigensystems(&ctx, &mats).map_err(internal_err)
}

fn matrix_json(engine: &HeckeEngine, m: &ComputedMatrix, brandt: bool, witnesses: bool, l0: u64) -> Result<Value, CliError> {
    match m {
        ComputedMatrix::Level1(h) => {
            let mut obj = serde_json::Map::new();
            obj.insert("matrix_mod_p".into(), json!(h.entries));
            if brandt {
                obj.insert("brandt_integer".into(), json!(h.counts));
            }
            if witnesses {
                let mut cells = Vec::new();
                for i in 0..engine.h() {
                    for j in 0..engine.h() {
                        let cell = engine.cell(i, j, l0).map_err(internal_err)?;
                        let sols: Vec<Value> = cell
                            .per_k
                            .iter()
                            .enumerate()
                            .map(|(k, s)| {
                                json!({
                                    "k": k,
                                    "solutions": s.iter().map(|v| {
                                        v.iter().map(|x| x.to_string()).collect::<Vec<_>>()
                                    }).collect::<Vec<_>>(),
                                })
                            })
                            .collect();
                        cells.push(json!({
                            "i": i + 1,
                            "j": j + 1,
                            "M": cell.m_scale.to_string(),
                            "K": cell.k_norm.to_string(),
                            "cosets": sols,
                        }));
                    }
                }
                obj.insert("witnesses".into(), Value::from(cells));
            }
            Ok(Value::Object(obj))
        }
        ComputedMatrix::Weight(w) => {
            let rows: Vec<Vec<String>> = (0..w.n)
                .map(|r| (0..w.n).map(|c| fp2_string(w.at(r, c))).collect())
                .collect();
            Ok(json!({ "matrix_mod_p": rows }))
        }
        ComputedMatrix::General(g) => {
            let dim = g.dim();
            if dim > DENSE_GUARD {
                return Err(usage_err(anyhow::anyhow!(
                    "general matrix dimension {dim} exceeds {DENSE_GUARD}; use --format csv (streamed) or --weight"
                )));
            }
            let dense = g.dense_matrix(DENSE_GUARD).map_err(internal_err)?;
            let rows: Vec<Vec<u64>> = (0..dim)
                .map(|r| (0..dim).map(|c| dense.at(r, c).s).collect())
                .collect();
            Ok(json!({ "matrix_mod_p": rows }))
        }
    }
}

fn basis_desc(engine: &HeckeEngine, m: &ComputedMatrix) -> Vec<String> {
    match m {
        ComputedMatrix::Level1(_) => (1..=engine.h()).map(|j| format!("w{j}")).collect(),
        ComputedMatrix::Weight(_) => {
            let g = quathecke::hecke::gl2_elements(engine.level);
            let mut out = Vec::new();
            for j in 1..=engine.h() {
                for gi in 0..g.len() {
                    if engine.level == 1 {
                        out.push(format!("f(w{j})"));
                    } else {
                        out.push(format!("f(w{j},g{gi})"));
                    }
                }
            }
            out
        }
        ComputedMatrix::General(g) => (0..g.dim())
            .map(|idx| {
                let (class, mu, gi) = g.label_desc(idx);
                if g.level == 1 {
                    format!("(w{},mu=[{},{}])", class + 1, mu.s, mu.t)
                } else {
                    format!("(w{},mu=[{},{}],g{})", class + 1, mu.s, mu.t, gi)
                }
            })
            .collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_structured(
    engine: &HeckeEngine,
    results: &[(u64, ComputedMatrix)],
    weight: Option<u64>,
    brandt: bool,
    witnesses: bool,
    eigensystems: Option<Vec<Eigensystem>>,
    ells: &[u64],
    common: &CommonOpts,
) -> Result<(), CliError> {
    let mut objects = Vec::new();
    for (l0, m) in results {
        let mut obj = serde_json::Map::new();
        obj.insert("schema_version".into(), json!(cache::SCHEMA_VERSION));
        obj.insert("p".into(), json!(engine.params.p));
        obj.insert("N".into(), json!(engine.level));
        obj.insert("ell0".into(), json!(l0));
        obj.insert("weight".into(), weight.map(Value::from).unwrap_or(Value::Null));
        obj.insert("basis".into(), json!(basis_desc(engine, m)));
        let body = matrix_json(engine, m, brandt, witnesses, *l0)?;
        for (k, v) in body.as_object().unwrap() {
            obj.insert(k.clone(), v.clone());
        }
        if let Some(sys) = &eigensystems {
            obj.insert("eigensystems".into(), eigen_json(ells, sys));
        }
        objects.push(Value::Object(obj));
    }
    let out = if objects.len() == 1 {
        objects.pop().unwrap()
    } else {
        Value::from(objects)
    };
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&out).unwrap()),
        Format::Pretty => print_pretty(&out),
        Format::Csv => unreachable!(),
    }
    Ok(())
}

fn print_pretty(v: &Value) {
    let objs: Vec<&Value> = match v {
        Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    for obj in objs {
        let p = obj["p"].as_u64().unwrap();
        let n = obj["N"].as_u64().unwrap();
        let l0 = obj["ell0"].as_u64().unwrap();
        match &obj["weight"] {
            Value::Null => println!("T_{l0} for p = {p}, N = {n} (mod {p}):"),
            w => println!("T_{l0} for p = {p}, N = {n}, weight {w} (entries in F_{{{p}^2}}):"),
        }
        if let Some(rows) = obj["matrix_mod_p"].as_array() {
            for row in rows {
                let cells: Vec<String> = row
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|x| match x {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                println!("  [{}]", cells.join(", "));
            }
        }
        if let Some(b) = obj.get("brandt_integer").and_then(|b| b.as_array()) {
            println!("integer companion {l0}*T:");
            for row in b {
                println!("  {row}");
            }
        }
        if let Some(sys) = obj.get("eigensystems").and_then(|s| s.as_array()) {
            println!("eigensystems (a_ell as [s,t] = s + t*i in F_{{{p}^2}}):");
            for s in sys {
                println!(
                    "  values {} multiplicity {} diagonalizable {}",
                    s["values"], s["multiplicity"], s["diagonalizable"]
                );
            }
        }
    }
}

fn emit_csv(engine: &HeckeEngine, results: &[(u64, ComputedMatrix)]) {
    // a closed pipe (e.g. | head) is not an error for a streaming emitter
    let _ = engine;
    let stdout = std::io::stdout();
    let mut w = std::io::BufWriter::new(stdout.lock());
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "ell0,row,col,value")?;
        for (l0, m) in results {
            match m {
                ComputedMatrix::Level1(h) => {
                    for (r, row) in h.entries.iter().enumerate() {
                        for (c, v) in row.iter().enumerate() {
                            writeln!(w, "{l0},{r},{c},{v}")?;
                        }
                    }
                }
                ComputedMatrix::Weight(wm) => {
                    for r in 0..wm.n {
                        for c in 0..wm.n {
                            writeln!(w, "{l0},{r},{c},{}", fp2_string(wm.at(r, c)))?;
                        }
                    }
                }
                ComputedMatrix::General(g) => {
                    // streamed: one sparse row at a time
                    for row in 0..g.dim() {
                        for (col, val) in g.row_entries(row) {
                            writeln!(w, "{l0},{row},{col},{}", val.s)?;
                        }
                    }
                }
            }
        }
        w.flush()
    };
    if let Err(e) = emit() {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error writing CSV: {e}");
            std::process::exit(1);
        }
    }
}

fn cmd_cache_verify(p: u64, common: &CommonOpts) -> Result<(), CliError> {
    validate_p(p)?;
    let dir = cache_dir(common)
        .ok_or_else(|| usage_err(anyhow::anyhow!("no cache directory configured")))?;
    let file: CacheFile = cache::load(&dir, p)
        .map_err(internal_err)?
        .ok_or_else(|| usage_err(anyhow::anyhow!("no cache file for p = {p} in {dir:?}")))?;
    cache::verify(&file).map_err(internal_err)?;
    println!("cache for p = {p} verified: h = {}, {} splittings", file.classes.len(), file.splittings.len());
    Ok(())
}

fn cmd_cache_rebuild(p: u64, common: &CommonOpts) -> Result<(), CliError> {
    validate_p(p)?;
    let dir = cache_dir(common)
        .ok_or_else(|| usage_err(anyhow::anyhow!("no cache directory configured")))?;
    let params = build_algebra(p).map_err(usage_err)?;
    let order = maximal_order_basis(&params).map_err(internal_err)?;
    let classes = left_ideal_classes(&params, &order).map_err(internal_err)?;
    let file = cache::to_cache(&params, &order, &classes, &[]);
    cache::verify(&file).map_err(internal_err)?;
    let path = cache::save(&dir, &file).map_err(internal_err)?;
    println!("cache for p = {p} rebuilt at {path:?}");
    Ok(())
}
