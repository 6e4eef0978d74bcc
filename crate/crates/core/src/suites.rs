//! Registry of named identity checks grouped into suites.

use crate::ambient::{extended_obstruction, omega2_classical, CurvatureTable};
use crate::conformal::{
    conformal_rescale, finite_difference_check, flat_y_check, functional_gradient_from_nodes,
    lcf_variation_check, newton_divergence_check, second_jet_dependence_check, torus_nodes,
    transformation_law_check, variation_of_expansion, variation_of_volume_coefficients,
    ConformalFactor, Law, TorusNode, TorusSpec, VariationReport,
};
use crate::error::{Error, Result};
use crate::fg::{closed_form_series, expansion_residual, obstruction_residual, solve_expansion};
use crate::geometry::{Geometry, MetricJet, Slot, TensorJet};
use crate::jet::{Jet, JetMatrix};
use crate::volume::{
    building_block_forms, linearization_coefficients, schouten_endomorphism, sigma_and_newton,
    volume_coefficients, BuildingBlocks,
};
use crate::zoo::{builtin_metric, random_jet_metric, Builtin};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

pub const SUITES: [&str; 8] = [
    "conventions",
    "curvature",
    "fg",
    "conformal_curvature",
    "volume",
    "transformation",
    "variation",
    "torus",
];

/// Default torus grid per axis for the 3-torus checks.
pub const DEFAULT_GRID: usize = 16;
/// Default torus grid per axis for the 4-torus check.
pub const DEFAULT_GRID_4D: usize = 8;

/// Run-wide settings.
#[derive(Clone, Debug, Default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Replaces every default tolerance.
    pub tolerance: Option<f64>,
    /// Per-check tolerance, keyed by `suite/name` or `name`.
    pub overrides: BTreeMap<String, f64>,
    pub grid: Option<usize>,
}

pub struct CheckInput {
    /// Seed derived from the run seed and the check name.
    pub seed: u64,
    pub run_seed: u64,
    pub tolerance: f64,
    pub grid: Option<usize>,
    nodes: Arc<NodeCache>,
}

type NodeCache = HashMap<String, std::result::Result<Arc<Vec<TorusNode>>, Error>>;

pub struct CheckDef {
    pub suite: &'static str,
    pub name: &'static str,
    pub tolerance: f64,
    pub run: fn(&CheckInput) -> Result<VariationReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<VariationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
}

fn seed_for(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    }) % 1_000_000_007
}

fn tol_for(cfg: &SuiteConfig, d: &CheckDef) -> f64 {
    let full = format!("{}/{}", d.suite, d.name);
    cfg.overrides
        .get(&full)
        .or_else(|| cfg.overrides.get(d.name))
        .copied()
        .or(cfg.tolerance)
        .unwrap_or(d.tolerance)
}

/// Expand `all` and validate suite names.
pub fn resolve_suites(names: &[String]) -> Result<Vec<&'static str>> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            return Ok(SUITES.to_vec());
        }
        let s = SUITES
            .iter()
            .find(|s| **s == n)
            .ok_or_else(|| Error::Usage(format!("unknown suite '{n}'")))?;
        if !out.contains(s) {
            out.push(*s);
        }
    }
    Ok(out)
}

/// Run the named suites; results follow registry order.
pub fn run_suites(names: &[String], cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let suites = resolve_suites(names)?;
    for key in cfg.overrides.keys() {
        if !registry()
            .iter()
            .any(|d| key == d.name || *key == format!("{}/{}", d.suite, d.name))
        {
            return Err(Error::Usage(format!(
                "tolerance override for unknown check '{key}'"
            )));
        }
    }
    let mut cache = NodeCache::new();
    if suites.contains(&"torus") {
        // shared node sets are evaluated up front, outside the per-check parallel loop
        for (key, spec) in [
            ("torus3", torus3(cfg.seed, cfg.grid)),
            ("torus4", torus4(cfg.seed, cfg.grid)),
        ] {
            let nodes = spec.and_then(|s| Ok(Arc::new(torus_nodes(&s, 2)?)));
            cache.insert(key.to_string(), nodes);
        }
    }
    let cache = Arc::new(cache);
    let defs: Vec<&CheckDef> = registry()
        .iter()
        .filter(|d| suites.contains(&d.suite))
        .collect();
    Ok(defs
        .par_iter()
        .map(|d| {
            let input = CheckInput {
                seed: seed_for(cfg.seed, d.name),
                run_seed: cfg.seed,
                tolerance: tol_for(cfg, d),
                grid: cfg.grid,
                nodes: cache.clone(),
            };
            let t0 = Instant::now();
            let out = (d.run)(&input);
            let seconds = t0.elapsed().as_secs_f64();
            let (pass, report, error) = match out {
                Ok(r) => (r.pass, Some(r), None),
                Err(e) => (false, None, Some(e.to_string())),
            };
            CheckResult {
                suite: d.suite.into(),
                name: d.name.into(),
                tolerance: input.tolerance,
                pass,
                report,
                error,
                seconds,
            }
        })
        .collect())
}

fn random_metric(inp: &CheckInput, n: usize, order: u8) -> Result<MetricJet> {
    random_jet_metric(n, inp.seed, 0.05, order)
}

fn random_omega(inp: &CheckInput, n: usize, order: u8) -> ConformalFactor {
    ConformalFactor::random(n, inp.seed.wrapping_add(7919), order, 0.3).truncated(4)
}

fn lcf_metric(n: usize, order: u8) -> Result<MetricJet> {
    let phi = "0.3*sin(x1) + 0.2*x2*x3 - 0.1*x3^2";
    let phi = if n > 3 {
        format!("{phi} + 0.15*cos(x{n})")
    } else {
        phi.to_string()
    };
    let point: Vec<f64> = (0..n)
        .map(|i| 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    builtin_metric(&Builtin::ConfFlat(phi), n, &point, order)
}

fn sphere(n: usize, order: u8) -> Result<MetricJet> {
    let point: Vec<f64> = (0..n).map(|i| 0.3 - 0.17 * i as f64).collect();
    builtin_metric(&Builtin::Sphere, n, &point, order)
}

fn flat_coeffs(t: &TensorJet, o: u8) -> Vec<f64> {
    t.restrict(o)
        .comps()
        .iter()
        .flat_map(|j| j.coeffs().to_vec())
        .collect()
}

fn vals(t: &TensorJet) -> Vec<f64> {
    t.values()
}

fn zero_check(name: &str, lhs: Vec<f64>, scale: f64, tol: f64) -> VariationReport {
    let z = vec![0.0; lhs.len()];
    VariationReport::compare_scaled(name, lhs, z, scale, tol)
}

/// `g^{ij} t_{ij…}` over the first two slots, at the base point.
fn first_trace(t: &TensorJet, gi: &JetMatrix) -> Vec<f64> {
    let n = t.n();
    let rest = n.pow(t.rank() as u32 - 2);
    (0..rest)
        .map(|r| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gi.get(i, j).value() * t.comps()[(i * n + j) * rest + r].value();
                }
            }
            s
        })
        .collect()
}

fn pp(gi: &JetMatrix, p: &TensorJet) -> Vec<f64> {
    let n = p.n();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    out[i * n + j] +=
                        p.get(&[i, k]).value() * gi.get(k, l).value() * p.get(&[l, j]).value();
                }
            }
        }
    }
    out
}

fn table_tensor(
    t: &CurvatureTable,
    rank: usize,
    f: impl Fn(&[usize]) -> Vec<u8> + Sync,
) -> Result<TensorJet> {
    let n = t.n();
    let idx: Vec<Vec<u8>> = crate::geometry::multi_indices(n, rank)
        .map(|i| f(&i))
        .collect();
    let comps = idx
        .iter()
        .map(|i| t.at_rho0(i))
        .collect::<Result<Vec<Jet>>>()?;
    TensorJet::new(n, vec![Slot::Down; rank], comps)
}

fn omega_tensor(t: &CurvatureTable, k: usize) -> Result<TensorJet> {
    let inf = t.inf();
    table_tensor(t, 2, |i| {
        let mut v = vec![inf, i[0] as u8 + 1, i[1] as u8 + 1, inf];
        v.extend(std::iter::repeat(inf).take(k - 1));
        v
    })
}

/// Perturbed flat 3-torus used by the torus suite.
pub fn torus3(seed: u64, grid: Option<usize>) -> Result<TorusSpec> {
    let spec = Builtin::TorusPerturbed {
        seed: seed_for(seed, "torus3"),
        amplitude: 0.1,
    }
    .spec(3)?
    .expect("torus family has an expression form");
    TorusSpec::new(
        spec,
        "0.3*sin(x1) + 0.2*cos(x2 - x3) + 0.1*sin(x1 + x3)",
        grid.unwrap_or(DEFAULT_GRID),
    )
}

/// Perturbed flat 4-torus; its grid is capped at [`DEFAULT_GRID_4D`].
pub fn torus4(seed: u64, grid: Option<usize>) -> Result<TorusSpec> {
    let spec = Builtin::TorusPerturbed {
        seed: seed_for(seed, "torus4"),
        amplitude: 0.1,
    }
    .spec(4)?
    .expect("torus family has an expression form");
    TorusSpec::new(
        spec,
        "0.3*sin(x1 - x4) + 0.2*cos(x2) + 0.1*sin(x3)",
        grid.map_or(DEFAULT_GRID_4D, |g| g.min(DEFAULT_GRID_4D)),
    )
}

fn nodes_for(inp: &CheckInput, key: &str) -> Result<(TorusSpec, Arc<Vec<TorusNode>>)> {
    let spec = match key {
        "torus3" => torus3(inp.run_seed, inp.grid)?,
        _ => torus4(inp.run_seed, inp.grid)?,
    };
    let nodes = match inp.nodes.get(key) {
        Some(r) => r.clone()?,
        None => Arc::new(torus_nodes(&spec, 2)?),
    };
    Ok((spec, nodes))
}

fn check_g1(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 5, 4)?;
    let s = solve_expansion(&g, 1)?;
    let p2 = Geometry::new(&g)?.p()?.scale(2.0);
    let g1 = s.coeff(1).expect("solved");
    let o = g1.order().min(p2.order());
    Ok(VariationReport::compare(
        "g1_equals_2P",
        flat_coeffs(g1, o),
        flat_coeffs(&p2, o),
        inp.tolerance,
    ))
}

fn check_sphere_schouten(inp: &CheckInput) -> Result<VariationReport> {
    let g = sphere(4, 2)?;
    let p = Geometry::new(&g)?.p()?.restrict(0);
    let half: Vec<f64> = g.values().iter().map(|v| 0.5 * v).collect();
    Ok(VariationReport::compare(
        "sphere_P_half_g",
        vals(&p),
        half,
        inp.tolerance,
    ))
}

fn check_sphere_riemann(inp: &CheckInput) -> Result<VariationReport> {
    let n = 4;
    let g = sphere(n, 2)?;
    let geo = Geometry::new(&g)?;
    let r = &geo.curvature()?.riemann;
    let gv = |a: usize, b: usize| g.get(a, b).value();
    let want: Vec<f64> = crate::geometry::multi_indices(n, 4)
        .map(|i| gv(i[0], i[2]) * gv(i[1], i[3]) - gv(i[0], i[3]) * gv(i[1], i[2]))
        .collect();
    Ok(VariationReport::compare(
        "sphere_riemann_sign",
        vals(r),
        want,
        inp.tolerance,
    ))
}

fn check_weyl_weight(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 5, 3)?;
    let w = random_omega(inp, 5, 3);
    let wh = Geometry::new(&conformal_rescale(&g, &w)?)?
        .weyl()?
        .restrict(0);
    let e = (2.0 * w.value()).exp();
    let want: Vec<f64> = vals(Geometry::new(&g)?.weyl()?)
        .iter()
        .map(|v| e * v)
        .collect();
    Ok(VariationReport::compare(
        "weyl_conformal_weight",
        vals(&wh),
        want,
        inp.tolerance,
    ))
}

fn check_bach_symmetric(inp: &CheckInput) -> Result<VariationReport> {
    let n = 5;
    let g = random_metric(inp, n, 4)?;
    let geo = Geometry::new(&g)?;
    let b = geo.bach()?;
    let mut lhs = first_trace(b, geo.ginv());
    for i in 0..n {
        for j in 0..i {
            lhs.push(b.get(&[i, j]).value() - b.get(&[j, i]).value());
        }
    }
    Ok(zero_check(
        "bach_symmetric_trace_free",
        lhs,
        b.max_abs_value(),
        inp.tolerance,
    ))
}

fn check_g2(inp: &CheckInput) -> Result<VariationReport> {
    let n = 5;
    let g = random_metric(inp, n, 4)?;
    let s = solve_expansion(&g, 2)?;
    let geo = Geometry::new(&g)?;
    let b = geo.bach()?;
    let ppv = pp(geo.ginv(), geo.p()?);
    let want: Vec<f64> = (0..n * n)
        .map(|q| 2.0 * b.comps()[q].value() / (4.0 - n as f64) + 2.0 * ppv[q])
        .collect();
    Ok(VariationReport::compare(
        "g2_formula",
        vals(s.coeff(2).expect("solved")),
        want,
        inp.tolerance,
    ))
}

fn check_residual(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 7, 6)?;
    let r = expansion_residual(&solve_expansion(&g, 3)?)?;
    Ok(zero_check("einstein_residual", r, 1.0, inp.tolerance))
}

fn check_closed_form(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(5, 6)?;
    let a = solve_expansion(&g, 3)?;
    let b = closed_form_series(&g, 3)?;
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 0..=3 {
        l.extend(vals(a.coeff(k).expect("solved")));
        r.extend(vals(b.coeff(k).expect("closed form")));
    }
    Ok(VariationReport::compare(
        "closed_form_lcf",
        l,
        r,
        inp.tolerance,
    ))
}

fn check_trace_n4(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 4, 4)?;
    let s = solve_expansion(&g, 2)?;
    let tr = s.even_trace.as_ref().expect("n = 4 at K = 2").value();
    let geo = Geometry::new(&g)?;
    let p = geo.p()?;
    let pu = geo.raise_all(p);
    let want: f64 = (0..16)
        .map(|q| 2.0 * pu.comps()[q].value() * p.comps()[q].value())
        .sum();
    Ok(VariationReport::compare(
        "obstruction_trace_n4",
        vec![tr],
        vec![want],
        inp.tolerance,
    ))
}

fn check_bach_n4(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 4, 4)?;
    let o = obstruction_residual(&g)?;
    let dev = o.bach_deviation.expect("n = 4");
    Ok(zero_check(
        "obstruction_proportional_to_bach",
        vec![dev],
        1.0,
        inp.tolerance,
    )
    .with_note("proportionality", o.bach_proportionality.unwrap_or(0.0)))
}

fn check_curv0(inp: &CheckInput) -> Result<VariationReport> {
    let n = 5;
    let g = random_metric(inp, n, 4)?;
    let t = CurvatureTable::for_metric(&g, 0, 0)?;
    let geo = Geometry::new(&g)?;
    let inf = t.inf();
    let u = |i: usize| (i + 1) as u8;
    let w = table_tensor(&t, 4, |x| vec![u(x[0]), u(x[1]), u(x[2]), u(x[3])])?;
    let c = table_tensor(&t, 3, |x| vec![inf, u(x[0]), u(x[1]), u(x[2])])?;
    let b = table_tensor(&t, 2, |x| vec![inf, u(x[0]), u(x[1]), inf])?;
    let mut l = vals(&w);
    l.extend(vals(&c));
    l.extend(vals(&b));
    let mut r = vals(geo.weyl()?);
    r.extend(vals(geo.cotton()?));
    r.extend(vals(&geo.bach()?.scale(1.0 / (4.0 - n as f64))));
    Ok(VariationReport::compare(
        "ambient_curvature_level0",
        l,
        r,
        inp.tolerance,
    ))
}

fn trace_free(inp: &CheckInput, cotton: bool) -> Result<VariationReport> {
    let n = 9;
    let g = random_metric(inp, n, 8)?;
    let t = CurvatureTable::for_metric(&g, 2, 0)?;
    let gi = g.inverse()?;
    let mut lhs = Vec::new();
    let mut scale: f64 = 0.0;
    let mut breakdown = Vec::new();
    for k in 1..=3 {
        let x = if cotton {
            t.higher_cotton_jets(k)?.restrict(0)
        } else {
            omega_tensor(&t, k)?
        };
        let tr = first_trace(&x, &gi);
        let m = x.max_abs_value();
        breakdown.push((
            format!("k={k}"),
            tr.iter().fold(0.0f64, |a, b| a.max(b.abs())) / m.max(1e-300),
        ));
        scale = scale.max(m);
        lhs.extend(tr);
    }
    let name = if cotton {
        "higher_cotton_trace_free"
    } else {
        "extended_obstruction_trace_free"
    };
    let mut r = zero_check(name, lhs, scale, inp.tolerance);
    r.breakdown = breakdown;
    Ok(r)
}

fn check_omega_trace(inp: &CheckInput) -> Result<VariationReport> {
    trace_free(inp, false)
}

fn check_cotton_trace(inp: &CheckInput) -> Result<VariationReport> {
    trace_free(inp, true)
}

fn check_omega2(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 7, 6)?;
    let a = extended_obstruction(&g, 2)?;
    let b = omega2_classical(&g)?;
    Ok(VariationReport::compare(
        "omega2_closed_form",
        vals(&a),
        vals(&b),
        inp.tolerance,
    ))
}

fn check_einstein_vanishing(inp: &CheckInput) -> Result<VariationReport> {
    let g = sphere(5, 6)?;
    let t = CurvatureTable::for_metric(&g, 1, 0)?;
    let mut lhs = vals(&omega_tensor(&t, 1)?);
    lhs.extend(vals(&omega_tensor(&t, 2)?));
    lhs.extend(vals(&t.higher_cotton_jets(1)?.restrict(0)));
    lhs.extend(vals(&t.higher_cotton_jets(2)?.restrict(0)));
    Ok(zero_check(
        "einstein_tensors_vanish",
        lhs,
        1.0,
        inp.tolerance,
    ))
}

fn check_sphere_volume(inp: &CheckInput) -> Result<VariationReport> {
    let g = sphere(5, 6)?;
    let v = volume_coefficients(&solve_expansion(&g, 3)?, 3)?.values();
    Ok(VariationReport::compare(
        "sphere_binomial",
        v,
        vec![2.5, 2.5, 1.25],
        inp.tolerance,
    ))
}

fn lcf_pieces(g: &MetricJet) -> Result<(JetMatrix, crate::volume::SymmetricFunctions)> {
    let geo = Geometry::new(g)?;
    let gi0 = geo.ginv().map(|e| e.restrict(0));
    let sf = sigma_and_newton(&schouten_endomorphism(&gi0, &geo.p()?.restrict(0)));
    Ok((gi0, sf))
}

fn check_lcf_volume(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(3, 6)?;
    let v = volume_coefficients(&solve_expansion(&g, 3)?, 3)?.values();
    let (_, sf) = lcf_pieces(&g)?;
    let want = (1..=3).map(|k| sf.sigma(k).value()).collect();
    Ok(VariationReport::compare(
        "lcf_sigma_k",
        v,
        want,
        inp.tolerance,
    ))
}

fn check_v3(inp: &CheckInput) -> Result<VariationReport> {
    let n = 5;
    let g = random_metric(inp, n, 6)?;
    let v = volume_coefficients(&solve_expansion(&g, 3)?, 3)?;
    let geo = Geometry::new(&g)?;
    let pu = geo.raise_all(geo.p()?);
    let b = geo.bach()?;
    let pb: f64 = (0..n * n)
        .map(|q| pu.comps()[q].value() * b.comps()[q].value())
        .sum();
    let (_, sf) = lcf_pieces(&g)?;
    let want = sf.sigma(3).value() + pb / (3.0 * (n as f64 - 4.0));
    Ok(VariationReport::compare(
        "v3_formula",
        vec![v.v[3].value()],
        vec![want],
        inp.tolerance,
    ))
}

fn check_building_blocks(inp: &CheckInput) -> Result<VariationReport> {
    let n = 9;
    let g = random_metric(inp, n, 8)?;
    let s = solve_expansion(&g, 4)?;
    let vol = volume_coefficients(&s, 4)?;
    let t = CurvatureTable::for_metric(&g, 2, 0)?;
    let omegas = (1..=3)
        .map(|k| omega_tensor(&t, k))
        .collect::<Result<Vec<_>>>()?;
    let geo = Geometry::new(&g)?;
    let gi0 = geo.ginv().map(|e| e.restrict(0));
    let p0 = geo.p()?.restrict(0);
    let bb = BuildingBlocks {
        ginv: &gi0,
        p: &p0,
        omegas: &omegas,
    };
    let (g3, _) = building_block_forms(&bb, 3)?;
    let mut l = vals(s.coeff(3).expect("solved"));
    let mut r = vals(&g3);
    let mut breakdown = vec![(
        "G_3".to_string(),
        VariationReport::compare("", l.clone(), r.clone(), 1.0).rel_err,
    )];
    for k in 1..=4 {
        let a = vol.v[k].value();
        let b = bb.v_form(k)?.value();
        breakdown.push((
            format!("V_{k}"),
            (a - b).abs() / a.abs().max(b.abs()).max(1e-300),
        ));
        l.push(a);
        r.push(b);
    }
    let mut rep = VariationReport::compare("building_blocks", l, r, inp.tolerance);
    rep.breakdown = breakdown;
    // each block is judged on its own scale
    rep.rel_err = rep.breakdown.iter().map(|b| b.1).fold(0.0, f64::max);
    rep.pass = rep.rel_err < inp.tolerance;
    Ok(rep)
}

fn check_l12(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 5, 5)?;
    let s = solve_expansion(&g, 2)?;
    let (gi0, sf) = lcf_pieces(&g)?;
    let mut l = vals(&linearization_coefficients(&s, 1)?);
    l.extend(vals(&linearization_coefficients(&s, 2)?));
    let mut r: Vec<f64> = gi0.values().iter().map(|v| -v).collect();
    r.extend(vals(&sf.newton_raised(1, &gi0).scale(-1.0)));
    Ok(VariationReport::compare("L1_L2", l, r, inp.tolerance))
}

fn check_l_lcf(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(3, 7)?;
    let s = solve_expansion(&g, 3)?;
    let (gi0, sf) = lcf_pieces(&g)?;
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 1..=3 {
        l.extend(vals(&linearization_coefficients(&s, k)?));
        r.extend(vals(&sf.newton_raised(k - 1, &gi0).scale(-1.0)));
    }
    Ok(VariationReport::compare(
        "lcf_L_equals_minus_T",
        l,
        r,
        inp.tolerance,
    ))
}

fn law(inp: &CheckInput, law: Law, order: u8) -> Result<VariationReport> {
    let n = 7;
    let g = random_metric(inp, n, order)?;
    let w = random_omega(inp, n, order);
    transformation_law_check(&g, &w, law, inp.tolerance)
}

fn check_schouten_law(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::Schouten, 4)
}
fn check_bach_law(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::Bach, 4)
}
fn check_omega_full_1(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::OmegaFull(1), 4)
}
fn check_omega_full_2(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::OmegaFull(2), 6)
}
fn check_omega_linear_1(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::OmegaLinear(1), 4)
}
fn check_omega_linear_2(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::OmegaLinear(2), 6)
}
fn check_omega_linear_3(inp: &CheckInput) -> Result<VariationReport> {
    law(inp, Law::OmegaLinear(3), 8)
}

fn check_newlaw(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 7, 7)?;
    let w = random_omega(inp, 7, 7);
    variation_of_expansion(&g, &w, 3, inp.tolerance)
}

fn check_yflat(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(7, 7)?;
    let w = random_omega(inp, 7, 7);
    let a = flat_y_check(&g, &w, 3, inp.tolerance)?;
    let b = variation_of_expansion(&g, &w, 3, inp.tolerance)?;
    let mut rep = a;
    rep.breakdown.push(("newlaw_rel_err".into(), b.rel_err));
    rep.pass = rep.pass && b.pass;
    rep.rel_err = rep.rel_err.max(b.rel_err);
    Ok(rep)
}

fn check_dvk(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 7, 7)?;
    let w = random_omega(inp, 7, 7);
    let reps = (1..=3)
        .map(|k| variation_of_volume_coefficients(&g, &w, k, inp.tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("dvkform", reps, "k=", inp.tolerance))
}

fn merge(name: &str, reps: Vec<VariationReport>, label: &str, tol: f64) -> VariationReport {
    let mut out = VariationReport::compare(
        name,
        reps.iter().flat_map(|r| r.lhs.clone()).collect(),
        reps.iter().flat_map(|r| r.rhs.clone()).collect(),
        tol,
    );
    out.breakdown = reps
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{label}{}", i + 1), r.rel_err))
        .collect();
    out.rel_err = reps.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    out.pass = reps.iter().all(|r| r.pass);
    out
}

fn check_deltasigma(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(3, 7)?;
    let w = ConformalFactor::random(3, inp.seed, 7, 0.3);
    let reps = (1..=3)
        .map(|k| lcf_variation_check(&g, &w, k, inp.tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("deltasigmak", reps, "k=", inp.tolerance))
}

fn check_newton_div(inp: &CheckInput) -> Result<VariationReport> {
    let g = lcf_metric(3, 3)?;
    let reps = (1..=3)
        .map(|k| newton_divergence_check(&g, k, inp.tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("newton_divergence_free", reps, "k=", inp.tolerance))
}

fn check_atmost2_52(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 5, 4)?;
    let w = ConformalFactor::random(5, inp.seed.wrapping_add(1), 4, 0.3);
    second_jet_dependence_check(&g, &w, 2, 5, inp.seed, inp.tolerance)
}

fn check_atmost2_73(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 7, 6)?;
    let w = ConformalFactor::random(7, inp.seed.wrapping_add(1), 6, 0.3);
    second_jet_dependence_check(&g, &w, 3, 5, inp.seed, inp.tolerance)
}

fn check_fd(inp: &CheckInput) -> Result<VariationReport> {
    let g = random_metric(inp, 5, 5)?;
    let w = random_omega(inp, 5, 5);
    let reps = (1..=2)
        .map(|k| finite_difference_check(&g, &w, k, 1e-4, inp.tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("parameter_jet_vs_fd", reps, "k=", inp.tolerance))
}

fn torus_k(inp: &CheckInput, k: usize) -> Result<VariationReport> {
    let (spec, nodes) = nodes_for(inp, "torus3")?;
    Ok(functional_gradient_from_nodes(
        &spec,
        &nodes,
        k,
        inp.tolerance,
    ))
}

fn check_torus_k1(inp: &CheckInput) -> Result<VariationReport> {
    torus_k(inp, 1)
}

fn check_torus_k2(inp: &CheckInput) -> Result<VariationReport> {
    torus_k(inp, 2)
}

fn check_divergence_integral(inp: &CheckInput) -> Result<VariationReport> {
    let (spec, nodes) = nodes_for(inp, "torus3")?;
    let (mut lhs, mut scale) = (Vec::new(), 0.0f64);
    for k in 1..=2 {
        let kf = k as f64;
        // δv_k + 2kωv_k is the divergence term at each node
        let div = crate::conformal::integrate(&spec, &nodes, |nd| {
            nd.dv[k - 1] + 2.0 * kf * nd.omega * nd.v[k - 1]
        });
        let s = crate::conformal::integrate(&spec, &nodes, |nd| {
            (nd.dv[k - 1] + 2.0 * kf * nd.omega * nd.v[k - 1]).abs()
        });
        lhs.push(div);
        scale = scale.max(s);
    }
    Ok(zero_check("divergence_integral", lhs, scale, inp.tolerance))
}

fn check_torus4(inp: &CheckInput) -> Result<VariationReport> {
    let (spec, nodes) = nodes_for(inp, "torus4")?;
    Ok(functional_gradient_from_nodes(
        &spec,
        &nodes,
        2,
        inp.tolerance,
    ))
}

impl VariationReport {
    fn with_note(mut self, key: &str, v: f64) -> VariationReport {
        self.breakdown.push((key.into(), v));
        self
    }
}

macro_rules! check {
    ($suite:literal, $name:literal, $tol:expr, $f:ident) => {
        CheckDef {
            suite: $suite,
            name: $name,
            tolerance: $tol,
            run: $f,
        }
    };
}

static REGISTRY: [CheckDef; 40] = [
    check!("conventions", "g1_equals_2P", 1e-10, check_g1),
    check!(
        "conventions",
        "sphere_schouten",
        1e-10,
        check_sphere_schouten
    ),
    check!(
        "conventions",
        "sphere_riemann_sign",
        1e-10,
        check_sphere_riemann
    ),
    check!(
        "curvature",
        "weyl_conformal_weight",
        1e-10,
        check_weyl_weight
    ),
    check!(
        "curvature",
        "bach_symmetric_trace_free",
        1e-10,
        check_bach_symmetric
    ),
    check!("fg", "g2_formula", 1e-8, check_g2),
    check!("fg", "einstein_residual", 1e-10, check_residual),
    check!("fg", "closed_form_lcf", 1e-9, check_closed_form),
    check!("fg", "obstruction_trace_n4", 1e-9, check_trace_n4),
    check!("fg", "obstruction_bach_n4", 1e-8, check_bach_n4),
    check!(
        "conformal_curvature",
        "level0_weyl_cotton_bach",
        1e-9,
        check_curv0
    ),
    check!(
        "conformal_curvature",
        "omega_trace_free",
        1e-10,
        check_omega_trace
    ),
    check!(
        "conformal_curvature",
        "cotton_trace_free",
        1e-10,
        check_cotton_trace
    ),
    check!(
        "conformal_curvature",
        "omega2_closed_form",
        1e-8,
        check_omega2
    ),
    check!(
        "conformal_curvature",
        "einstein_vanishing",
        1e-10,
        check_einstein_vanishing
    ),
    check!("volume", "sphere_binomial", 1e-10, check_sphere_volume),
    check!("volume", "lcf_sigma", 1e-8, check_lcf_volume),
    check!("volume", "v3_formula", 1e-8, check_v3),
    check!("volume", "building_blocks", 1e-8, check_building_blocks),
    check!("volume", "linearization_L1_L2", 1e-9, check_l12),
    check!("volume", "linearization_lcf", 1e-8, check_l_lcf),
    check!("transformation", "schouten", 1e-8, check_schouten_law),
    check!("transformation", "bach", 1e-8, check_bach_law),
    check!("transformation", "omega_full_1", 1e-8, check_omega_full_1),
    check!("transformation", "omega_full_2", 1e-8, check_omega_full_2),
    check!(
        "transformation",
        "omega_linear_1",
        1e-8,
        check_omega_linear_1
    ),
    check!(
        "transformation",
        "omega_linear_2",
        1e-8,
        check_omega_linear_2
    ),
    check!(
        "transformation",
        "omega_linear_3",
        1e-8,
        check_omega_linear_3
    ),
    check!("variation", "newlaw", 1e-8, check_newlaw),
    check!("variation", "yflat", 1e-9, check_yflat),
    check!("variation", "dvkform", 1e-8, check_dvk),
    check!("variation", "deltasigmak", 1e-8, check_deltasigma),
    check!("variation", "newton_divergence", 1e-8, check_newton_div),
    check!("variation", "atmost2_n5_k2", 1e-11, check_atmost2_52),
    check!("variation", "atmost2_n7_k3", 1e-11, check_atmost2_73),
    check!("variation", "parameter_jet_vs_fd", 1e-6, check_fd),
    check!("torus", "deltavk_k1", 1e-6, check_torus_k1),
    check!("torus", "deltavk_k2", 1e-6, check_torus_k2),
    check!(
        "torus",
        "divergence_integral",
        1e-8,
        check_divergence_integral
    ),
    check!("torus", "conformal_invariance_n4", 1e-6, check_torus4),
];

/// Every check, in suite order.
pub fn registry() -> &'static [CheckDef] {
    &REGISTRY
}
