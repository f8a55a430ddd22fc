//! `redcoh`: batch front end for the correlation-function, reduction and
//! reduction-cohomology engine.
//!
//! Every command prints one JSON document (or a flattened CSV table) with
//! sorted keys and rationals serialized as strings, so repeated runs with the
//! same arguments are byte-identical.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error
//! (including unparseable state or insertion literals).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use redcoh::cohomology::{cluster_check, cohomology_rank, euler_poincare, DirectionFamily};
use redcoh::elliptic::{eisenstein, weierstrass_p};
use redcoh::genus2::{gen_weierstrass, z2_partition, Chart, SewingModuli};
use redcoh::reduction::{
    cocycle_residual, genus0_direct, genus1_direct, parse_insertions, unwind_to_partition,
    CorrelationFn, Genus, Insertion,
};
use redcoh::scalar::{parse_rat, to_f64};
use redcoh::schottky::{genus_g_partition, kernel_json, SchottkyData, SchottkyKernel};
use redcoh::series::Series;
use redcoh::voa::GradedVector;
use redcoh::{Error, Rational};

/// Truncation orders must be positive.
fn positive() -> clap::builder::RangedI64ValueParser<i64> {
    clap::value_parser!(i64).range(1..)
}

/// Directory for cached Eisenstein tables.
const CACHE_ENV: &str = "REDCOH_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "redcoh",
    version,
    about = "Exact VOA correlation functions, reduction recursions and reduction cohomology"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Add floating-point approximations next to every coefficient table (display only).
    #[arg(long, global = true)]
    approx: bool,
    /// Write the output to a file instead of stdout.
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Genus-0/1 n-point function.
    Npoint(NpointArgs),
    /// Cocycle residual `H(x_{n+1}) F` of an n-point function.
    Residual(ResidualArgs),
    /// Eisenstein series and Weierstrass functions.
    #[command(subcommand, arg_required_else_help = true)]
    Elliptic(EllipticCmd),
    /// Genus-two ε-sewing.
    #[command(subcommand, arg_required_else_help = true)]
    Genus2(Genus2Cmd),
    /// Genus-g Schottky kernels.
    #[command(subcommand, arg_required_else_help = true)]
    Schottky(SchottkyCmd),
    /// Reduction-cohomology ranks and Euler–Poincaré ledgers.
    #[command(subcommand, arg_required_else_help = true)]
    Cohomology(CohomologyCmd),
    /// Cluster mutation checks.
    #[command(subcommand, arg_required_else_help = true)]
    Cluster(ClusterCmd),
}

#[derive(Args, Debug)]
struct NpointArgs {
    #[arg(long, value_parser = parse_genus)]
    genus: Genus,
    /// Insertions `state@point`, comma separated, outermost first.
    #[arg(long)]
    insertions: String,
    /// q-order (genus one).
    #[arg(long, default_value_t = 4, value_parser = positive())]
    qorder: i64,
    /// Point windows `[-zorder, zorder]` (default: 4 at genus zero, 2·qorder at genus one).
    #[arg(long, value_parser = positive())]
    zorder: Option<i64>,
    /// Use the brute-force mode-sum oracle.
    #[arg(long, conflicts_with = "reduce")]
    oracle: bool,
    /// Use the reduction recursion (default).
    #[arg(long)]
    reduce: bool,
}

#[derive(Args, Debug)]
struct ResidualArgs {
    #[arg(long, value_parser = parse_genus, default_value = "1")]
    genus: Genus,
    /// The new insertion `state@point`.
    #[arg(long)]
    direction: String,
    /// Insertions of the function, outermost first (empty: the partition function).
    #[arg(long, default_value = "")]
    insertions: String,
    #[arg(long, default_value_t = 4, value_parser = positive())]
    qorder: i64,
    #[arg(long, value_parser = positive())]
    zorder: Option<i64>,
}

#[derive(Subcommand, Debug)]
enum EllipticCmd {
    /// `E_k(q)` to `q^order`.
    Eisenstein {
        #[arg(long, value_parser = positive())]
        k: i64,
        #[arg(long, value_parser = positive())]
        order: i64,
    },
    /// `P_m(z, q)` in `(z, q)`.
    Pm {
        #[arg(long, value_parser = positive())]
        m: i64,
        #[arg(long, default_value_t = 6, value_parser = positive())]
        zorder: i64,
        #[arg(long, default_value_t = 8, value_parser = positive())]
        qorder: i64,
    },
}

#[derive(Args, Debug)]
struct ModuliArgs {
    #[arg(long, default_value_t = 2, value_parser = positive())]
    eps_order: i64,
    #[arg(long, default_value_t = 2, value_parser = positive())]
    q1_order: i64,
    #[arg(long, default_value_t = 2, value_parser = positive())]
    q2_order: i64,
    /// Moment-matrix cutoff (at least twice the ε-order).
    #[arg(short = 'N', long = "matrix-cutoff", default_value_t = 4)]
    matrix_cutoff: usize,
}

#[derive(Subcommand, Debug)]
enum Genus2Cmd {
    /// `Z^{(2)}(τ1, τ2, ε)`.
    Partition(ModuliArgs),
    /// Generalized Weierstrass function `𝒫_{j+1}(p; x, y)`.
    Pweier {
        #[arg(long)]
        p: i64,
        #[arg(long)]
        j: i64,
        /// Charts of `x` and `y`.
        #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [1, 1])]
        charts: Vec<u8>,
        /// Order in the local coordinates `x`, `y`.
        #[arg(long, default_value_t = 2, value_parser = positive())]
        xy_order: i64,
        #[command(flatten)]
        moduli: ModuliArgs,
    },
}

#[derive(Subcommand, Debug)]
enum SchottkyCmd {
    /// `Ψ_p(x, y)` as a series in the multipliers.
    Psi {
        #[arg(long)]
        p: i64,
        #[arg(long, default_value_t = 2, value_parser = positive())]
        rho_order: i64,
        #[arg(short = 'g', long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        genus: u64,
        #[arg(long, default_value = "1/2")]
        x: String,
        #[arg(long, default_value = "1/3")]
        y: String,
    },
    /// Genus-g partition function with a per-handle weight cutoff.
    Partition {
        #[arg(short = 'g', long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        genus: u64,
        #[arg(long, default_value_t = 2, value_parser = positive())]
        weight_cutoff: i64,
    },
}

#[derive(Subcommand, Debug)]
enum CohomologyCmd {
    /// Dimensions `q_{n,m}`, `p_{n,m}` and the ranks around one slice.
    Rank {
        #[arg(long, value_parser = parse_genus, default_value = "1")]
        genus: Genus,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(short = 'm', long)]
        m: u32,
        /// Direction(s) `state[@point]`, comma separated.
        #[arg(long, default_value = "a")]
        direction: String,
        /// `single`, `sum` or `stack`.
        #[arg(long, default_value = "single")]
        mode: String,
        /// z-window half-width (genus 0, default 6) or q-order (genus 1, default 2).
        #[arg(long, value_parser = positive())]
        order: Option<i64>,
    },
    /// Euler–Poincaré ledger for `n = 0..=N`.
    Euler {
        #[arg(short = 'm', long)]
        m: u32,
        #[arg(short = 'N', long = "top")]
        top: usize,
        #[arg(long, value_parser = parse_genus, default_value = "1")]
        genus: Genus,
        #[arg(long, default_value = "omega")]
        direction: String,
        /// `single` or `sum`.
        #[arg(long, default_value = "single")]
        mode: String,
        /// z-window half-width (genus 0, default 6) or q-order (genus 1, default 1).
        #[arg(long, value_parser = positive())]
        order: Option<i64>,
    },
}

#[derive(Subcommand, Debug)]
enum ClusterCmd {
    /// Involution check `μ∘μ = Id` with `u = 1` on random seeds.
    Check {
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        #[arg(long, default_value_t = 2024)]
        rng_seed: u64,
        /// Override the random signs `ξ = ±1` (e.g. `2` as a negative control).
        #[arg(long)]
        xi: Option<String>,
    },
}

fn parse_genus(s: &str) -> Result<Genus, String> {
    match s {
        "0" => Ok(Genus::Zero),
        "1" => Ok(Genus::One),
        _ => Err(format!("genus must be 0 or 1, got `{s}`")),
    }
}

fn rational(s: &str) -> Result<Rational, Error> {
    parse_rat(s).ok_or_else(|| Error::Parse(format!("bad rational `{s}`")))
}

fn genus_json(g: Genus) -> Value {
    json!(g.as_u8())
}

fn point_windows(genus: Genus, zorder: Option<i64>, qorder: i64, n: usize) -> Vec<(i64, i64)> {
    let z = zorder.unwrap_or(match genus {
        Genus::Zero => 4,
        Genus::One => 2 * qorder,
    });
    vec![(-z, z); n]
}

fn npoint_function(
    genus: Genus,
    insertions: &[Insertion],
    windows: &[(i64, i64)],
    qorder: i64,
    oracle: bool,
) -> Result<CorrelationFn, Error> {
    if oracle {
        let vac = GradedVector::vacuum();
        match genus {
            Genus::Zero => genus0_direct(insertions, (&vac, &vac), windows),
            Genus::One => genus1_direct(insertions, qorder, windows),
        }
    } else {
        let steps: Vec<(Insertion, (i64, i64))> = insertions
            .iter()
            .cloned()
            .zip(windows.iter().copied())
            .rev()
            .collect();
        Ok(unwind_to_partition(genus, &steps, qorder)?.function)
    }
}

fn eisenstein_cached(k: i64, order: i64) -> Result<Series<Rational>, Error> {
    let Some(dir) = std::env::var_os(CACHE_ENV) else {
        return eisenstein(k, order);
    };
    let path = Path::new(&dir).join(format!("eisenstein-k{k}-q{order}.json"));
    if let Some(series) = read_cached_series(&path) {
        return Ok(series);
    }
    let series = eisenstein(k, order)?;
    // The cache is an optimization only; failures to write it are ignored.
    let _ = fs::create_dir_all(&dir);
    let _ = fs::write(
        &path,
        serde_json::to_string(&series.to_json()).unwrap_or_default(),
    );
    Ok(series)
}

fn read_cached_series(path: &Path) -> Option<Series<Rational>> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    let var = v["var"].as_str()?;
    let lo = v["window"][0].as_i64()?;
    let hi = v["window"][1].as_i64()?;
    let mut terms = Vec::new();
    for (e, c) in v["coeffs"].as_object()? {
        terms.push((e.parse::<i64>().ok()?, parse_rat(c.as_str()?)?));
    }
    Series::from_terms(var, lo, hi, terms).ok()
}

fn run(command: &Command) -> Result<(String, Value, Value), Error> {
    match command {
        Command::Npoint(a) => {
            let insertions = parse_insertions(&a.insertions)?;
            let windows = point_windows(a.genus, a.zorder, a.qorder, insertions.len());
            let f = npoint_function(a.genus, &insertions, &windows, a.qorder, a.oracle)?;
            let params = json!({
                "genus": genus_json(a.genus),
                "insertions": a.insertions,
                "qorder": a.qorder,
                "windows": windows.iter().map(|w| json!([w.0, w.1])).collect::<Vec<_>>(),
                "method": if a.oracle { "oracle" } else { "reduce" },
            });
            Ok(("npoint".into(), params, f.to_json()))
        }
        Command::Residual(a) => {
            let insertions = parse_insertions(&a.insertions)?;
            let direction = Insertion::parse(&a.direction)?;
            let windows = point_windows(a.genus, a.zorder, a.qorder, insertions.len() + 1);
            let f = npoint_function(a.genus, &insertions, &windows[1..], a.qorder, false)?;
            let residual = cocycle_residual(&direction, windows[0], &f)?;
            let params = json!({
                "genus": genus_json(a.genus),
                "direction": direction.spec(),
                "insertions": a.insertions,
                "qorder": a.qorder,
            });
            Ok((
                "residual".into(),
                params,
                json!({"is_cocycle": residual.is_zero(), "residual": residual.to_json()}),
            ))
        }
        Command::Elliptic(EllipticCmd::Eisenstein { k, order }) => {
            let s = eisenstein_cached(*k, *order)?;
            let result = json!({"pretty": s.pretty(), "series": s.to_json()});
            Ok((
                "elliptic eisenstein".into(),
                json!({"k": k, "order": order}),
                result,
            ))
        }
        Command::Elliptic(EllipticCmd::Pm { m, zorder, qorder }) => {
            let p = weierstrass_p(*m, *zorder, *qorder)?;
            let params = json!({"m": m, "zorder": zorder, "qorder": qorder});
            Ok((
                "elliptic pm".into(),
                params,
                json!({"m": p.m, "expansion": p.expansion.to_json()}),
            ))
        }
        Command::Genus2(Genus2Cmd::Partition(m)) => {
            let moduli = SewingModuli::new(m.q1_order, m.q2_order, m.eps_order, m.matrix_cutoff)?;
            let z = z2_partition(&moduli)?;
            Ok(("genus2 partition".into(), moduli_json(m), z.to_json()))
        }
        Command::Genus2(Genus2Cmd::Pweier {
            p,
            j,
            charts,
            xy_order,
            moduli: m,
        }) => {
            let moduli = SewingModuli::new(m.q1_order, m.q2_order, m.eps_order, m.matrix_cutoff)?;
            let chart = Chart::from_index;
            let value = gen_weierstrass(
                *p,
                *j,
                chart(charts[0])?,
                chart(charts[1])?,
                *xy_order,
                &moduli,
            )?;
            let mut params = moduli_json(m);
            params["p"] = json!(p);
            params["j"] = json!(j);
            params["charts"] = json!(charts);
            params["xy_order"] = json!(xy_order);
            Ok((
                "genus2 pweier".into(),
                params,
                json!({"value": value.to_json()}),
            ))
        }
        Command::Schottky(SchottkyCmd::Psi {
            p,
            rho_order,
            genus,
            x,
            y,
        }) => {
            let data = SchottkyData::standard(*genus as usize, *rho_order)?;
            let (xv, yv) = (rational(x)?, rational(y)?);
            let kernel = SchottkyKernel::new(*p, &data)?;
            let value = kernel.psi(&xv, &yv)?;
            let params = json!({
                "p": p,
                "rho_order": rho_order,
                "genus": genus,
                "x": x,
                "y": y,
                "w_plus": data.w_plus.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                "w_minus": data.w_minus.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            });
            Ok((
                "schottky psi".into(),
                params,
                kernel_json(&value, &format!("dx^{{{p}}} dy^{{{}}}", 1 - p)),
            ))
        }
        Command::Schottky(SchottkyCmd::Partition {
            genus,
            weight_cutoff,
        }) => {
            let data = SchottkyData::standard(*genus as usize, *weight_cutoff)?;
            let z = genus_g_partition(&data)?;
            let params = json!({
                "genus": genus,
                "weight_cutoff": weight_cutoff,
                "w_plus": data.w_plus.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                "w_minus": data.w_minus.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            });
            Ok((
                "schottky partition".into(),
                params,
                json!({"value": z.to_json()}),
            ))
        }
        Command::Cohomology(CohomologyCmd::Rank {
            genus,
            n,
            m,
            direction,
            mode,
            order,
        }) => {
            let family = DirectionFamily::parse(direction, mode)?;
            let order = order.unwrap_or(if *genus == Genus::Zero { 6 } else { 2 });
            let r = cohomology_rank(*genus, *n, *m, &family, order)?;
            let params = json!({"genus": genus_json(*genus), "n": n, "m": m, "direction": direction, "mode": mode, "order": order});
            Ok(("cohomology rank".into(), params, r.to_json()))
        }
        Command::Cohomology(CohomologyCmd::Euler {
            m,
            top,
            genus,
            direction,
            mode,
            order,
        }) => {
            let family = DirectionFamily::parse(direction, mode)?;
            let order = order.unwrap_or(if *genus == Genus::Zero { 6 } else { 1 });
            let r = euler_poincare(*genus, *m, *top, &family, order)?;
            let params = json!({"genus": genus_json(*genus), "m": m, "N": top, "direction": direction, "mode": mode, "order": order});
            Ok(("cohomology euler".into(), params, r.to_json()))
        }
        Command::Cluster(ClusterCmd::Check {
            seeds,
            rng_seed,
            xi,
        }) => {
            let xi = xi.as_deref().map(rational).transpose()?;
            let reports = cluster_check(*seeds, *rng_seed, xi.clone())?;
            let involutive = reports.iter().filter(|r| r.involutive()).count();
            let params =
                json!({"seeds": seeds, "rng_seed": rng_seed, "xi": xi.map(|x| x.to_string())});
            let result = json!({
                "all_involutive": involutive == reports.len(),
                "involutive": involutive,
                "total": reports.len(),
                "reports": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
            });
            Ok(("cluster check".into(), params, result))
        }
    }
}

fn moduli_json(m: &ModuliArgs) -> Value {
    json!({"eps_order": m.eps_order, "q1_order": m.q1_order, "q2_order": m.q2_order, "N": m.matrix_cutoff})
}

/// Adds `coeffs_approx` (floats) next to every `coeffs` table.
fn add_approx(v: &mut Value) {
    match v {
        Value::Object(map) => {
            let approx = map.get("coeffs").and_then(Value::as_object).map(|coeffs| {
                let mut out = Map::new();
                for (k, c) in coeffs {
                    if let Some(x) = c.as_str().and_then(parse_rat) {
                        out.insert(k.clone(), json!(to_f64(&x)));
                    }
                }
                Value::Object(out)
            });
            for (_, child) in map.iter_mut() {
                add_approx(child);
            }
            if let Some(a) = approx {
                map.insert("coeffs_approx".into(), a);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(add_approx),
        _ => {}
    }
}

/// Flattens a JSON document into `(path, value)` rows in key order.
fn flatten(v: &Value, path: &str, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if path.is_empty() {
            k.to_string()
        } else {
            format!("{path}.{k}")
        }
    };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, c)| flatten(c, &join(k), rows)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, c)| flatten(c, &join(&i.to_string()), rows)),
        Value::String(s) => rows.push((path.to_string(), s.clone())),
        Value::Null => rows.push((path.to_string(), String::new())),
        other => rows.push((path.to_string(), other.to_string())),
    }
}

fn render(doc: &Value, format: Format) -> Result<String, String> {
    match format {
        Format::Json => serde_json::to_string_pretty(doc)
            .map(|s| s + "\n")
            .map_err(|e| e.to_string()),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten(doc, "", &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])
                .map_err(|e| e.to_string())?;
            for (k, v) in rows {
                w.write_record([k, v]).map_err(|e| e.to_string())?;
            }
            String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (name, params, result) = match run(&cli.command) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::Parse(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            };
        }
    };
    let mut doc = json!({"command": name, "params": params, "result": result});
    if cli.approx {
        add_approx(&mut doc);
    }
    let text = match render(&doc, cli.format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, text.as_bytes()),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
