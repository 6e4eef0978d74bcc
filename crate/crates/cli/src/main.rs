mod quantities;
mod report;

use ambientlab::conformal::{integrate, torus_nodes, TorusSpec};
use ambientlab::geometry::MetricJet;
use ambientlab::suites::{registry, run_suites, SuiteConfig, SUITES};
use ambientlab::zoo::{
    builtin_metric, default_variables, parse_metric_spec, Builtin, MetricSpec, BUILTIN_NAMES,
};
use ambientlab::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use quantities::{Quantity, QUANTITY_FORMS};
use report::{Failure, Report};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "ambientlab",
    version,
    about = "Ambient metric expansions, volume coefficients and conformal identity checks"
)]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "AMBIENTLAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute quantities at a point.
    Compute(ComputeArgs),
    /// Run verification suites.
    Verify(VerifyArgs),
    /// Evaluate per-node quantities over a torus grid.
    Sweep(SweepArgs),
    /// Enumerate builtins, suites, checks and quantities.
    List,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct MetricArgs {
    /// Builtin name (e.g. `sphere`, `random_jet:seed=7,amplitude=0.05`,
    /// `conf_flat:phi=sin(x1)`) or path to a JSON metric spec.
    #[arg(long)]
    metric: String,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Comma-separated base point (default: origin).
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Metric jet order (default: the least order the quantities need).
    #[arg(long)]
    order: Option<u8>,
    /// Comma-separated list such as `vk:3,omega:2,g_coeff:2,L:2,obstruction`.
    #[arg(long, required = true)]
    quantities: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite names or `all`; may be repeated or comma-separated.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// A number overriding every tolerance, or `check=value` for one check.
    #[arg(long)]
    tol: Vec<String>,
    /// Torus grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    metric: MetricArgs,
    /// Conformal factor for `dvk` columns.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    omega: String,
    #[arg(long, default_value_t = 8)]
    grid: usize,
    /// `vk:K` and/or `dvk:K`.
    #[arg(long, default_value = "vk:1")]
    quantities: String,
    /// CSV destination, one row per node.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Report::fail("list", Failure::usage("--jobs must be positive")).emit(None);
        }
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    let t0 = Instant::now();
    let (report, out) = match cli.cmd {
        Cmd::Compute(a) => {
            let out = a.out.clone().map(|p| (p, a.format));
            (compute(&a), out)
        }
        Cmd::Verify(a) => {
            let out = a.out.clone().map(|p| (p, a.format));
            (verify(&a), out)
        }
        Cmd::Sweep(a) => (sweep(&a), None),
        Cmd::List => (list(), None),
    };
    report.with_time(t0.elapsed().as_secs_f64()).emit(out)
}

fn parse_point(s: Option<&str>, n: usize) -> Result<Vec<f64>, Error> {
    let Some(s) = s else {
        return Ok(vec![0.0; n]);
    };
    let p = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad coordinate '{x}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if p.len() != n {
        return Err(Error::Input(format!(
            "point has {} coordinates, dimension is {n}",
            p.len()
        )));
    }
    Ok(p)
}

enum Source {
    Builtin(Builtin),
    Spec(MetricSpec),
}

fn metric_source(m: &MetricArgs) -> Result<(Source, usize), Error> {
    let path = std::path::Path::new(&m.metric);
    if m.metric.ends_with(".json") || path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read '{}': {e}", m.metric)))?;
        let spec = parse_metric_spec(&text)?;
        if let Some(d) = m.dim {
            if d != spec.dimension {
                return Err(Error::Input(format!(
                    "--dim {d} disagrees with the spec dimension {}",
                    spec.dimension
                )));
            }
        }
        let n = spec.dimension;
        return Ok((Source::Spec(spec), n));
    }
    let b = Builtin::parse(&m.metric)?;
    let n = m
        .dim
        .ok_or_else(|| Error::Input("builtin metrics need --dim".into()))?;
    if n < 2 {
        return Err(Error::Input("dimension must be at least 2".into()));
    }
    Ok((Source::Builtin(b), n))
}

fn instantiate(src: &Source, n: usize, point: &[f64], order: u8) -> Result<MetricJet, Error> {
    match src {
        Source::Builtin(b) => builtin_metric(b, n, point, order),
        Source::Spec(s) => ambientlab::zoo::instantiate_jets(s, point, order),
    }
}

fn compute(a: &ComputeArgs) -> Report {
    let mut r = Report::new("compute");
    let run = || -> Result<Value, Error> {
        let (src, n) = metric_source(&a.metric)?;
        let point = parse_point(a.point.as_deref(), n)?;
        let qs = a
            .quantities
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Quantity::parse)
            .collect::<Result<Vec<_>, _>>()?;
        if qs.is_empty() {
            return Err(Error::Input("no quantities requested".into()));
        }
        for q in &qs {
            q.capability(n)?;
        }
        let need = qs
            .iter()
            .map(|q| q.required_order(n))
            .max()
            .unwrap_or(0)
            .max(2);
        let order = match a.order {
            Some(o) if (o as usize) < need => {
                return Err(Error::Capability(format!(
                    "order {o} is too low: the requested quantities need order >= {need}"
                )))
            }
            Some(o) => o,
            None => need as u8,
        };
        let g = instantiate(&src, n, &point, order)?;
        let mut results = serde_json::Map::new();
        for q in &qs {
            results.insert(q.label(), q.evaluate(&g)?);
        }
        Ok(json!({
            "request": { "metric": a.metric.metric, "dim": n, "point": point, "order": order,
                         "quantities": qs.iter().map(|q| q.label()).collect::<Vec<_>>() },
            "results": results,
        }))
    };
    match run() {
        Ok(v) => {
            r.body = v;
            r
        }
        Err(e) => r.error(e),
    }
}

fn verify(a: &VerifyArgs) -> Report {
    let mut r = Report::new("verify");
    let mut cfg = SuiteConfig {
        seed: a.seed,
        grid: a.grid,
        ..Default::default()
    };
    for t in &a.tol {
        let parsed = match t.split_once('=') {
            Some((k, v)) => v.parse().map(|v| {
                cfg.overrides.insert(k.to_string(), v);
            }),
            None => t.parse().map(|v| cfg.tolerance = Some(v)),
        };
        if parsed.is_err() {
            return r.error(Error::Usage(format!("bad tolerance '{t}'")));
        }
    }
    if a.grid == Some(0) {
        return r.error(Error::Usage("--grid must be positive".into()));
    }
    match run_suites(&a.suite, &cfg) {
        Ok(results) => {
            let passed = results.iter().filter(|c| c.pass).count();
            r.body = json!({
                "request": { "suites": a.suite, "seed": a.seed, "tol": a.tol, "grid": a.grid },
                "checks": results,
                "summary": { "total": results.len(), "passed": passed, "failed": results.len() - passed },
            });
            r.verification_failed = passed != results.len();
            r
        }
        Err(e) => r.error(e),
    }
}

fn sweep(a: &SweepArgs) -> Report {
    let mut r = Report::new("sweep");
    let run = || -> Result<Value, Error> {
        let (src, n) = metric_source(&a.metric)?;
        let spec = match src {
            Source::Spec(s) => s,
            Source::Builtin(b) => b.spec(n)?.ok_or_else(|| {
                Error::Input(format!(
                    "'{}' has no expression form to sweep",
                    a.metric.metric
                ))
            })?,
        };
        let mut columns = Vec::new();
        for q in a.quantities.split(',').filter(|s| !s.trim().is_empty()) {
            let (name, k) = q.trim().split_once(':').unwrap_or((q, ""));
            let k: usize = k.parse().ok().filter(|&k| k >= 1).ok_or_else(|| {
                Error::Input(format!("sweep quantity '{q}' needs an order, e.g. vk:1"))
            })?;
            match name {
                "vk" | "dvk" => columns.push((name == "dvk", k)),
                _ => return Err(Error::Input(format!("unknown sweep quantity '{name}'"))),
            }
        }
        let k_max = columns.iter().map(|c| c.1).max().unwrap_or(1);
        let torus = TorusSpec::new(spec, &a.omega, a.grid)?;
        let nodes = torus_nodes(&torus, k_max)?;
        let labels: Vec<String> = columns
            .iter()
            .map(|&(d, k)| format!("{}{k}", if d { "dv_" } else { "v_" }))
            .collect();
        let pick = |nd: &ambientlab::conformal::TorusNode, c: &(bool, usize)| {
            if c.0 {
                nd.dv[c.1 - 1]
            } else {
                nd.v[c.1 - 1]
            }
        };
        let mut w = csv::Writer::from_path(&a.out)
            .map_err(|e| Error::Input(format!("cannot write '{}': {e}", a.out.display())))?;
        let io = |e: csv::Error| Error::Input(format!("cannot write '{}': {e}", a.out.display()));
        let header: Vec<String> = default_variables(n)
            .into_iter()
            .chain(labels.iter().cloned())
            .collect();
        w.write_record(&header).map_err(io)?;
        for nd in &nodes {
            let row: Vec<String> =
                nd.x.iter()
                    .copied()
                    .chain(columns.iter().map(|c| pick(nd, c)))
                    .map(|v| format!("{v:.17e}"))
                    .collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Input(format!("cannot write '{}': {e}", a.out.display())))?;
        let volume = integrate(&torus, &nodes, |_| 1.0);
        let mut stats = serde_json::Map::new();
        for (c, l) in columns.iter().zip(&labels) {
            let vals: Vec<f64> = nodes.iter().map(|nd| pick(nd, c)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            stats.insert(
                l.clone(),
                json!({ "mean": mean, "min": lo, "max": hi,
                        "integral": integrate(&torus, &nodes, |nd| pick(nd, c)) }),
            );
        }
        Ok(json!({
            "request": { "metric": a.metric.metric, "dim": n, "omega": a.omega, "grid": a.grid,
                         "quantities": a.quantities, "out": a.out.display().to_string() },
            "rows": nodes.len(),
            "volume": volume,
            "summary": stats,
        }))
    };
    match run() {
        Ok(v) => {
            r.body = v;
            r
        }
        Err(e) => r.error(e),
    }
}

fn list() -> Report {
    let mut r = Report::new("list");
    let mut checks: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    for d in registry() {
        checks
            .entry(d.suite)
            .or_default()
            .push(json!({ "name": d.name, "tolerance": d.tolerance }));
    }
    r.body = json!({
        "builtins": BUILTIN_NAMES,
        "suites": SUITES,
        "checks": checks,
        "quantities": QUANTITY_FORMS,
        "sweep_quantities": ["vk:K", "dvk:K"],
    });
    r
}
