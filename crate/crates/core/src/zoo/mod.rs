//! Built-in metric families and user metrics from expression documents.

mod expr;

pub use expr::{BinOp, Expr, Func};

use crate::error::{Error, Result};
use crate::geometry::MetricJet;
use crate::jet::{Jet, JetMatrix, JetShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// A metric given by component expressions over named chart variables.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    pub dimension: usize,
    pub variables: Vec<String>,
    /// Full symmetric `n×n` matrix.
    pub components: Vec<Vec<Expr>>,
    pub description: String,
}

#[derive(Serialize, Deserialize)]
struct SpecDoc {
    dimension: usize,
    variables: Vec<String>,
    components: Vec<Vec<String>>,
    #[serde(default)]
    description: String,
}

pub fn default_variables(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Parse a JSON metric document. Rows may be lower-triangular (row `i` has
/// `i+1` entries) or full; full rows must be symmetric.
pub fn parse_metric_spec(source: &str) -> Result<MetricSpec> {
    let doc: SpecDoc =
        serde_json::from_str(source).map_err(|e| Error::Input(format!("metric document: {e}")))?;
    let n = doc.dimension;
    if n == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    if doc.variables.len() != n {
        return Err(Error::Input(format!(
            "dimension mismatch: {n} dimensions but {} variables",
            doc.variables.len()
        )));
    }
    if doc.components.len() != n {
        return Err(Error::Input(format!(
            "dimension mismatch: {n} dimensions but {} component rows",
            doc.components.len()
        )));
    }
    for (k, v) in doc.variables.iter().enumerate() {
        let ok = v
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok || v == "pi" || doc.variables[..k].contains(v) {
            return Err(Error::Input(format!("invalid variable name '{v}'")));
        }
    }
    let parse = |i: usize, j: usize, s: &str| {
        Expr::parse(s, &doc.variables)
            .map_err(|e| Error::Input(format!("component ({}, {}): {e}", i + 1, j + 1)))
    };
    let mut comps: Vec<Vec<Option<Expr>>> = vec![vec![None; n]; n];
    for (i, row) in doc.components.iter().enumerate() {
        if row.len() != i + 1 && row.len() != n {
            return Err(Error::Input(format!(
                "dimension mismatch: row {} has {} entries",
                i + 1,
                row.len()
            )));
        }
        for (j, s) in row.iter().enumerate().take(i + 1) {
            let e = parse(i, j, s)?;
            comps[i][j] = Some(e.clone());
            comps[j][i] = Some(e);
        }
    }
    for (i, row) in doc.components.iter().enumerate() {
        for (j, s) in row.iter().enumerate().skip(i + 1) {
            if parse(i, j, s)? != *comps[i][j].as_ref().unwrap() {
                return Err(Error::Input(format!(
                    "component matrix not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(MetricSpec {
        dimension: n,
        variables: doc.variables,
        components: comps
            .into_iter()
            .map(|r| r.into_iter().map(Option::unwrap).collect())
            .collect(),
        description: doc.description,
    })
}

impl MetricSpec {
    /// Lower-triangular JSON document that parses back to this spec.
    pub fn to_json(&self) -> String {
        let doc = SpecDoc {
            dimension: self.dimension,
            variables: self.variables.clone(),
            components: (0..self.dimension)
                .map(|i| (0..=i).map(|j| self.components[i][j].to_string()).collect())
                .collect(),
            description: self.description.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("spec serializes")
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|r| r.iter().map(|e| e.eval(x)))
            .collect()
    }

    /// Largest deviation of `g(x + 2π e_i)` from `g(x)` over `samples` points.
    pub fn periodicity_defect(&self, samples: usize, seed: u64) -> f64 {
        let n = self.dimension;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let g0 = self.eval(&x);
            for i in 0..n {
                let mut y = x.clone();
                y[i] += std::f64::consts::TAU;
                for (a, b) in g0.iter().zip(self.eval(&y)) {
                    worst = worst.max((a - b).abs() / a.abs().max(1.0));
                }
            }
        }
        worst
    }
}

/// Evaluate the spec in jet arithmetic about `point`.
pub fn instantiate_jets(spec: &MetricSpec, point: &[f64], order: u8) -> Result<MetricJet> {
    let n = spec.dimension;
    if point.len() != n {
        return Err(Error::Input(format!(
            "point has {} coordinates, metric dimension is {n}",
            point.len()
        )));
    }
    let shape = JetShape::graded(n, order);
    let vars: Vec<Jet> = (0..n).map(|v| Jet::variable(&shape, v, point[v])).collect();
    let mut entries = vec![Jet::zero(&shape); n * n];
    for i in 0..n {
        for j in 0..=i {
            let e = spec.components[i][j].eval_jet(&vars).map_err(|e| {
                Error::Input(format!(
                    "component ({}, {}) at the point: {e}",
                    i + 1,
                    j + 1
                ))
            })?;
            if e.coeffs().iter().any(|c| !c.is_finite()) {
                return Err(Error::Input(format!(
                    "component ({}, {}) is not defined at the point",
                    i + 1,
                    j + 1
                )));
            }
            entries[i * n + j] = e.clone();
            entries[j * n + i] = e;
        }
    }
    MetricJet::new(JetMatrix::new(n, entries, true)?)
}

/// Named metric families.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    Flat,
    /// `4(1+|x|²)^{-2} δ`, the round unit sphere.
    Sphere,
    /// `e^{2φ} δ` with `φ` over `x1..xn`.
    ConfFlat(String),
    TorusPerturbed {
        seed: u64,
        amplitude: f64,
    },
    RandomJet {
        seed: u64,
        amplitude: f64,
    },
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "flat",
    "sphere_stereographic",
    "conf_flat",
    "torus_perturbed",
    "random_jet",
];

impl Builtin {
    /// Parse `name` or `name:key=value,key=value`.
    pub fn parse(text: &str) -> Result<Builtin> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut params = std::collections::BTreeMap::new();
        if name == "conf_flat" {
            let phi = rest.strip_prefix("phi=").unwrap_or(rest);
            if phi.is_empty() {
                return Err(Error::Input("conf_flat needs phi=<expression>".into()));
            }
            return Ok(Builtin::ConfFlat(phi.to_string()));
        }
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("malformed metric parameter '{kv}'")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let seed = |p: &std::collections::BTreeMap<String, String>| -> Result<u64> {
            p.get("seed").map_or(Ok(0), |s| {
                s.parse()
                    .map_err(|_| Error::Input(format!("bad seed '{s}'")))
            })
        };
        let amp = |p: &std::collections::BTreeMap<String, String>| -> Result<f64> {
            p.get("amplitude").map_or(Ok(0.05), |s| {
                s.parse()
                    .map_err(|_| Error::Input(format!("bad amplitude '{s}'")))
            })
        };
        let b = match name {
            "flat" => Builtin::Flat,
            "sphere" | "sphere_stereographic" => Builtin::Sphere,
            "torus_perturbed" => Builtin::TorusPerturbed {
                seed: seed(&params)?,
                amplitude: amp(&params)?,
            },
            "random_jet" => Builtin::RandomJet {
                seed: seed(&params)?,
                amplitude: amp(&params)?,
            },
            _ => return Err(Error::Input(format!("unknown builtin metric '{name}'"))),
        };
        for k in params.keys() {
            if k != "seed" && k != "amplitude" || matches!(b, Builtin::Flat | Builtin::Sphere) {
                return Err(Error::Input(format!(
                    "unknown parameter '{k}' for '{name}'"
                )));
            }
        }
        Ok(b)
    }

    /// Expression form; `None` for `random_jet`, which is defined by its jet.
    pub fn spec(&self, n: usize) -> Result<Option<MetricSpec>> {
        let vars = default_variables(n);
        let diag = |f: &str, description: String| -> Result<MetricSpec> {
            let e = Expr::parse(f, &vars)?;
            let zero = Expr::Num(0.0);
            Ok(MetricSpec {
                dimension: n,
                variables: vars.clone(),
                components: (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| if i == j { e.clone() } else { zero.clone() })
                            .collect()
                    })
                    .collect(),
                description,
            })
        };
        Ok(Some(match self {
            Builtin::Flat => diag("1", "flat metric".into())?,
            Builtin::Sphere => {
                let r2: Vec<String> = vars.iter().map(|v| format!("{v}^2")).collect();
                diag(
                    &format!("4/(1 + {})^2", r2.join(" + ")),
                    "round unit sphere, stereographic chart".into(),
                )?
            }
            Builtin::ConfFlat(phi) => diag(
                &format!("exp(2*({phi}))"),
                format!("conformally flat, phi = {phi}"),
            )?,
            Builtin::TorusPerturbed { seed, amplitude } => torus_spec(n, *seed, *amplitude)?,
            Builtin::RandomJet { .. } => return Ok(None),
        }))
    }
}

fn torus_spec(n: usize, seed: u64, amplitude: f64) -> Result<MetricSpec> {
    let vars = default_variables(n);
    let mut comps = vec![vec![Expr::Num(0.0); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut rng = component_rng(seed ^ 0x746f_7275_73, i, j);
            let mut terms = Vec::new();
            if i == j {
                terms.push("1".to_string());
            }
            for _ in 0..2 {
                let c = amplitude * rng.gen_range(-1.0..1.0) / 2.0;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut freq: Vec<String> = Vec::new();
                loop {
                    freq.clear();
                    for v in &vars {
                        match rng.gen_range(-1i32..=1) {
                            1 => freq.push(format!("+ {v}")),
                            -1 => freq.push(format!("- {v}")),
                            _ => {}
                        }
                    }
                    if !freq.is_empty() {
                        break;
                    }
                }
                terms.push(format!("{c:?}*cos({phase:?} {})", freq.join(" ")));
            }
            let e = Expr::parse(&terms.join(" + "), &vars)?;
            comps[i][j] = e.clone();
            comps[j][i] = e;
        }
    }
    Ok(MetricSpec {
        dimension: n,
        variables: vars,
        components: comps,
        description: format!("perturbed flat torus, seed {seed}, amplitude {amplitude}"),
    })
}

fn component_rng(seed: u64, i: usize, j: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((i as u64) << 32) | j as u64);
    rng
}

/// `δ_ij + Σ_α c_α (x−p)^α` with `|c_α| ≤ amplitude/α!`, drawn per component
/// in storage order so lower coefficients do not depend on `order`.
pub fn random_jet_metric(n: usize, seed: u64, amplitude: f64, order: u8) -> Result<MetricJet> {
    let shape = JetShape::graded(n, order);
    let mut entries = vec![Jet::zero(&shape); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut rng = component_rng(seed, i, j);
            let mut c = vec![0.0; shape.len()];
            for (k, ck) in c.iter_mut().enumerate() {
                let afact: f64 = shape
                    .exps(k)
                    .iter()
                    .map(|&e| crate::jet::factorial(e as usize))
                    .product();
                *ck = amplitude * rng.gen_range(-1.0..1.0) / afact;
            }
            if i == j {
                c[0] += 1.0;
            }
            let e = Jet::from_coeffs(&shape, c)?;
            entries[i * n + j] = e.clone();
            entries[j * n + i] = e;
        }
    }
    MetricJet::new(JetMatrix::new(n, entries, true)?).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("random_jet amplitude too large: {m}")),
        other => other,
    })
}

pub fn builtin_metric(b: &Builtin, n: usize, point: &[f64], order: u8) -> Result<MetricJet> {
    match b {
        Builtin::RandomJet { seed, amplitude } => {
            if point.len() != n {
                return Err(Error::Input(format!(
                    "point has {} coordinates, metric dimension is {n}",
                    point.len()
                )));
            }
            random_jet_metric(n, *seed, *amplitude, order)
        }
        _ => {
            let spec = b.spec(n)?.expect("expression builtin");
            instantiate_jets(&spec, point, order).map_err(|e| match (b, e) {
                (Builtin::TorusPerturbed { .. }, Error::Input(m)) => {
                    Error::Input(format!("torus_perturbed amplitude too large: {m}"))
                }
                (_, e) => e,
            })
        }
    }
}
