//! Conformal transformation and variation identities.
//!
//! Infinitesimal variations thread a first-order parameter `t` through the
//! whole pipeline: the metric `e^{2tω}g` is solved as a jet in `(x, t)` and
//! `δ` is the `t^1` coefficient.

use crate::ambient::{cotractor_transport, CurvatureTable};
use crate::error::{insufficient, Error, Result};
use crate::fg::solve_expansion;
use crate::geometry::{Geometry, MetricJet, Slot, TensorJet};
use crate::jet::{factorial, Jet, JetMatrix, JetShape, VarKind};
use crate::volume::{
    linearization_coefficients, rho_family, schouten_endomorphism, sigma_and_newton,
    volume_coefficients,
};
use crate::zoo::{instantiate_jets, Expr, MetricSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;

/// Floor in the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-30;

/// A conformal factor `ω` as a jet over the metric's variables.
#[derive(Clone, Debug)]
pub struct ConformalFactor {
    pub omega: Jet,
    pub source: Option<Expr>,
}

impl ConformalFactor {
    pub fn from_jet(omega: Jet) -> ConformalFactor {
        ConformalFactor {
            omega,
            source: None,
        }
    }

    pub fn from_expr(
        src: &str,
        vars: &[String],
        point: &[f64],
        order: u8,
    ) -> Result<ConformalFactor> {
        let e = Expr::parse(src, vars)?;
        if point.len() != vars.len() {
            return Err(Error::Input(
                "point and variable list differ in length".into(),
            ));
        }
        let shape = JetShape::graded(vars.len(), order);
        let xs: Vec<Jet> = (0..vars.len())
            .map(|v| Jet::variable(&shape, v, point[v]))
            .collect();
        Ok(ConformalFactor {
            omega: e.eval_jet(&xs)?,
            source: Some(e),
        })
    }

    /// Random polynomial factor with degree-`α` coefficients bounded by
    /// `amplitude/α!`.
    pub fn random(n: usize, seed: u64, order: u8, amplitude: f64) -> ConformalFactor {
        let shape = JetShape::graded(n, order);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let omega = Jet::from_fn(&shape, |e| {
            let a: f64 = e.iter().map(|&k| factorial(k as usize)).product();
            amplitude * rng.gen_range(-1.0..1.0) / a
        });
        ConformalFactor::from_jet(omega)
    }

    /// Drop every monomial of total degree above `degree`.
    pub fn truncated(&self, degree: usize) -> ConformalFactor {
        let om = &self.omega;
        let omega = Jet::from_fn(om.shape(), |e| {
            if e.iter().map(|&k| k as usize).sum::<usize>() <= degree {
                om.coeff(e)
            } else {
                0.0
            }
        });
        ConformalFactor {
            omega,
            source: self.source.clone(),
        }
    }

    pub fn value(&self) -> f64 {
        self.omega.value()
    }

    /// `∂_i ω` at the base point.
    pub fn differential(&self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|i| Ok(self.omega.partial(i)?.value())).collect()
    }
}

fn matching(g: &MetricJet, w: &Jet) -> Result<Jet> {
    let s = g.shape();
    if w.shape().kinds() != s.kinds() || w.order() < g.order() {
        return Err(Error::Usage(format!(
            "chart mismatch: conformal factor over {:?} at order {}, metric over {:?} at order {}",
            w.shape().kinds(),
            w.order(),
            s.kinds(),
            g.order()
        )));
    }
    Ok(w.to_shape(s))
}

/// `ĝ = e^{2ω}g`.
pub fn conformal_rescale(g: &MetricJet, w: &ConformalFactor) -> Result<MetricJet> {
    let f = matching(g, &w.omega)?.scale(2.0).exp();
    g.map(|c| c.mul(&f))
}

/// `e^{2tω}g` with `t` appended as a first-order parameter; returns the
/// metric and the index of `t`.
pub fn variation_family(g: &MetricJet, w: &ConformalFactor) -> Result<(MetricJet, usize)> {
    let om = matching(g, &w.omega)?;
    let tv = om.n_vars();
    let lifted = om.lift(&[VarKind::Capped(1)]);
    let t = Jet::variable(lifted.shape(), tv, 0.0);
    let f = t.mul(&lifted).scale(2.0).exp();
    let gt = g.map(|c| c.lift(&[VarKind::Capped(1)]).mul(&f))?;
    Ok((gt, tv))
}

/// Outcome of comparing two sides of an identity.
#[derive(Clone, Debug, Serialize)]
pub struct VariationReport {
    pub identity: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub breakdown: Vec<(String, f64)>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl VariationReport {
    /// `rel_err = max|lhs − rhs| / max(‖lhs‖, ‖rhs‖, floor)`.
    pub fn compare(
        identity: &str,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        tolerance: f64,
    ) -> VariationReport {
        VariationReport::compare_scaled(identity, lhs, rhs, 0.0, tolerance)
    }

    /// As [`compare`](Self::compare) with an extra candidate `scale` in the
    /// denominator, for identities whose sides both vanish.
    pub fn compare_scaled(
        identity: &str,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        scale: f64,
        tolerance: f64,
    ) -> VariationReport {
        let abs_err = lhs
            .iter()
            .zip(&rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let denom = sup(&lhs).max(sup(&rhs)).max(scale).max(REL_FLOOR);
        let rel_err = abs_err / denom;
        let finite = lhs.iter().chain(&rhs).all(|v| v.is_finite());
        VariationReport {
            identity: identity.to_string(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tolerance,
            pass: finite && rel_err < tolerance,
            y: None,
            breakdown: Vec::new(),
        }
    }

    fn with_breakdown(mut self, b: Vec<(String, f64)>) -> VariationReport {
        self.breakdown = b;
        self
    }
}

fn values(t: &TensorJet) -> Vec<f64> {
    t.comps().iter().map(|c| c.value()).collect()
}

fn t_values(t: &TensorJet, tv: usize) -> Vec<f64> {
    t.comps().iter().map(|c| c.slice(tv, 1).value()).collect()
}

/// Named transformation laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Law {
    Schouten,
    Bach,
    OmegaFull(usize),
    OmegaLinear(usize),
}

impl Law {
    /// `schouten`, `bach`, `omega_full:k`, `omega_linear:k`.
    pub fn parse(s: &str) -> Result<Law> {
        let (name, k) = s.split_once(':').unwrap_or((s, ""));
        let k = || -> Result<usize> {
            k.parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::Usage(format!("law '{s}' needs an order k >= 1")))
        };
        match name {
            "schouten" => Ok(Law::Schouten),
            "bach" => Ok(Law::Bach),
            "omega_full" => Ok(Law::OmegaFull(k()?)),
            "omega_linear" => Ok(Law::OmegaLinear(k()?)),
            _ => Err(Error::Usage(format!("unknown transformation law '{s}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Law::Schouten => "schouten".into(),
            Law::Bach => "bach".into(),
            Law::OmegaFull(k) => format!("omega_full:{k}"),
            Law::OmegaLinear(k) => format!("omega_linear:{k}"),
        }
    }
}

fn one_form(n: usize, w: &Jet) -> Result<TensorJet> {
    let comps = (0..n).map(|i| w.partial(i)).collect::<Result<Vec<_>>>()?;
    TensorJet::new(n, vec![Slot::Down], comps)
}

fn raise_vec(ginv: &JetMatrix, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|a| (0..n).map(|b| ginv.get(a, b).value() * v[b]).sum())
        .collect()
}

fn omega_index(inf: u8, i: usize, j: usize, k: usize) -> Vec<u8> {
    let mut v = vec![inf, (i + 1) as u8, (j + 1) as u8, inf];
    v.extend(std::iter::repeat(inf).take(k - 1));
    v
}

fn omega_values(t: &CurvatureTable, k: usize) -> Result<Vec<f64>> {
    let n = t.n();
    let inf = t.inf();
    (0..n * n)
        .map(|q| Ok(t.at_rho0(&omega_index(inf, q / n, q % n, k))?.value()))
        .collect()
}

fn check_omega_dimension(n: usize, k: usize) -> Result<()> {
    if n % 2 == 0 && n <= 2 * (k + 1) {
        return Err(Error::Capability(format!(
            "Omega^({k}) needs n odd or n > {} for even n, got n = {n}",
            2 * (k + 1)
        )));
    }
    Ok(())
}

/// Compare the two sides of a transformation law for `ĝ = e^{2ω}g` at the
/// base point. The left side is always computed from `ĝ` directly.
pub fn transformation_law_check(
    g: &MetricJet,
    w: &ConformalFactor,
    law: Law,
    tolerance: f64,
) -> Result<VariationReport> {
    let n = g.n();
    let om = matching(g, &w.omega)?;
    let dw = w.differential(n)?;
    let w0 = om.value();
    match law {
        Law::Schouten => {
            let gh = conformal_rescale(g, w)?;
            let ph = Geometry::new(&gh)?.p()?.restrict(0);
            let geo = Geometry::new(g)?;
            let p = geo.p()?;
            let hess = geo.nabla(&one_form(n, &om)?)?;
            let dwu = raise_vec(geo.ginv(), &dw);
            let w2: f64 = dw.iter().zip(&dwu).map(|(a, b)| a * b).sum();
            let rhs: Vec<f64> = (0..n * n)
                .map(|q| {
                    let (i, j) = (q / n, q % n);
                    p.get(&[i, j]).value() - hess.get(&[i, j]).value() + dw[i] * dw[j]
                        - 0.5 * w2 * g.get(i, j).value()
                })
                .collect();
            Ok(VariationReport::compare(
                &law.name(),
                values(&ph),
                rhs,
                tolerance,
            ))
        }
        Law::Bach => {
            if n == 4 {
                return Err(Error::Capability(
                    "Omega^(1) = B/(4-n) is undefined for n = 4".into(),
                ));
            }
            let gh = conformal_rescale(g, w)?;
            let s = 1.0 / (4.0 - n as f64);
            let bh = Geometry::new(&gh)?.bach()?.restrict(0).scale(s);
            let geo = Geometry::new(g)?;
            let om1 = geo.bach()?.restrict(0).scale(s);
            let c = geo.cotton()?;
            let wt = geo.weyl()?;
            let dwu = raise_vec(geo.ginv(), &dw);
            let e = (2.0 * w0).exp();
            let lhs: Vec<f64> = values(&bh).iter().map(|v| e * v).collect();
            let rhs: Vec<f64> = (0..n * n)
                .map(|q| {
                    let (i, j) = (q / n, q % n);
                    let mut v = om1.get(&[i, j]).value();
                    for k in 0..n {
                        let cs = c.get(&[i, j, k]).value() + c.get(&[j, i, k]).value();
                        v -= dwu[k] * cs;
                        for l in 0..n {
                            v += dwu[k] * dwu[l] * wt.get(&[k, i, j, l]).value();
                        }
                    }
                    v
                })
                .collect();
            Ok(VariationReport::compare(&law.name(), lhs, rhs, tolerance))
        }
        Law::OmegaFull(k) => {
            check_omega_dimension(n, k)?;
            let gh = conformal_rescale(g, w)?;
            let t = CurvatureTable::for_metric(g, k - 1, 0)?;
            let th = CurvatureTable::for_metric(&gh, k - 1, 0)?;
            let base = omega_values(&t, k)?;
            let hat = omega_values(&th, k)?;
            let e = (2.0 * k as f64 * w0).exp();
            let inf = t.inf();
            let lhs: Vec<f64> = hat.iter().zip(&base).map(|(h, b)| e * h - b).collect();
            let rhs = (0..n * n)
                .into_par_iter()
                .map(|q| {
                    let idx = omega_index(inf, q / n, q % n, k);
                    Ok(cotractor_transport(&t, &dw, &idx)? - base[q])
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(VariationReport::compare(&law.name(), lhs, rhs, tolerance))
        }
        Law::OmegaLinear(k) => {
            check_omega_dimension(n, k)?;
            let (gt, tv) = variation_family(g, w)?;
            let tt = CurvatureTable::for_metric(&gt, k - 1, 0)?;
            let inf = tt.inf();
            let t = CurvatureTable::for_metric(g, k - 1, 0)?;
            let c = crate::ambient::higher_cotton_jet(g, k, 0)?;
            let dwu = raise_vec(&g.inverse()?, &dw);
            let kf = k as f64;
            let mut lhs = Vec::with_capacity(n * n);
            let mut rhs = Vec::with_capacity(n * n);
            for q in 0..n * n {
                let (i, j) = (q / n, q % n);
                let idx = omega_index(inf, i, j, k);
                let delta = tt.at_rho0(&idx)?.slice(tv, 1).value();
                let o = t.at_rho0(&idx)?.value();
                lhs.push(delta + 2.0 * kf * w0 * o);
                rhs.push(
                    -(0..n)
                        .map(|l| dwu[l] * c.get(&[i, j, l]).value())
                        .sum::<f64>(),
                );
            }
            Ok(VariationReport::compare(&law.name(), lhs, rhs, tolerance))
        }
    }
}

/// `Γ^k_{ij}` of a metric given as jets, flattened as `(k·n + i)·n + j`.
fn christoffel(g: &JetMatrix, ginv: &JetMatrix) -> Result<Vec<Jet>> {
    let n = g.dim();
    let mut dg = Vec::with_capacity(n * n * n);
    for c in 0..n {
        for q in 0..n * n {
            dg.push(g.get(q / n, q % n).partial(c)?);
        }
    }
    let d = |c: usize, a: usize, b: usize| &dg[c * n * n + a * n + b];
    let low: Vec<Jet> = (0..n * n * n)
        .map(|q| {
            let (l, i, j) = (q / (n * n), (q / n) % n, q % n);
            d(i, j, l).add(d(j, i, l)).sub(d(l, i, j)).scale(0.5)
        })
        .collect();
    let o = low[0].order();
    Ok((0..n * n * n)
        .map(|q| {
            let (k, i, j) = (q / (n * n), (q / n) % n, q % n);
            let mut acc = Jet::zero(low[0].shape());
            for l in 0..n {
                acc.axpy(1.0, &ginv.get(k, l).mul_to(&low[(l * n + i) * n + j], o));
            }
            acc
        })
        .collect())
}

fn embed_in(j: &Jet, like: &Jet) -> Jet {
    let extra: Vec<VarKind> = like.shape().kinds()[j.n_vars()..].to_vec();
    j.lift(&extra)
        .to_shape(&JetShape::get(crate::jet::ShapeKey {
            order: j.order().min(like.order()),
            kinds: like.shape().kinds().to_vec(),
        }))
}

/// `δg_ρ` from the parameter-jet solve against
/// `2ω(1 − ρ∂_ρ)g_ρ + 2∇_{(i}Y_{j)}` with `Y^i = −∫_0^ρ g^{ij} ∂_jω`,
/// compared ρ-coefficient by ρ-coefficient at the base point.
pub fn variation_of_expansion(
    g: &MetricJet,
    w: &ConformalFactor,
    k_max: usize,
    tolerance: f64,
) -> Result<VariationReport> {
    let n = g.n();
    if n % 2 == 0 && k_max >= n / 2 {
        return Err(Error::Capability(format!(
            "the variation of g^(k) is determined for k < n/2 = {}, got {k_max}",
            n / 2
        )));
    }
    let (gt, tv) = variation_family(g, w)?;
    let st = solve_expansion(&gt, k_max)?;
    let mut lhs = Vec::new();
    for m in 0..=k_max {
        let c = st.coeff(m).expect("solved");
        lhs.extend(t_values(c, tv).iter().map(|v| v / factorial(m)));
    }
    let (rhs_series, y) = newlaw_rhs(g, w, k_max)?;
    let mut breakdown = Vec::new();
    for m in 0..=k_max {
        let a = &lhs[m * n * n..(m + 1) * n * n];
        let b = &rhs_series[m * n * n..(m + 1) * n * n];
        let r = VariationReport::compare("", a.to_vec(), b.to_vec(), 1.0);
        breakdown.push((format!("rho^{m}"), r.rel_err));
    }
    let mut rep =
        VariationReport::compare("newlaw", lhs, rhs_series, tolerance).with_breakdown(breakdown);
    rep.y = Some(y);
    Ok(rep)
}

struct YField {
    fam: crate::volume::RhoFamily,
    w: Jet,
    y_low: Vec<Jet>,
    y_up: Vec<Jet>,
}

fn y_field(g: &MetricJet, w: &ConformalFactor, k_max: usize) -> Result<YField> {
    let n = g.n();
    let series = solve_expansion(g, k_max)?;
    let fam = rho_family(&series, k_max)?;
    if fam.g.order() < 1 {
        return Err(insufficient(format!(
            "the vector field Y to rho-order {k_max} needs metric order >= {}",
            2 * k_max + 1
        )));
    }
    let like = fam.g.get(0, 0).clone();
    let om = matching(g, &w.omega)?;
    let wj = embed_in(&om, &like);
    let dw: Vec<Jet> = (0..n)
        .map(|j| Ok(embed_in(&om.partial(j)?, &like)))
        .collect::<Result<_>>()?;
    let int: Vec<Jet> = fam
        .ginv
        .entries()
        .iter()
        .map(|e| e.integrate(fam.rho))
        .collect();
    let y_up: Vec<Jet> = (0..n)
        .map(|i| {
            let mut acc = Jet::zero(like.shape());
            for j in 0..n {
                acc.axpy(-1.0, &int[i * n + j].mul(&dw[j]));
            }
            acc
        })
        .collect();
    let y_low: Vec<Jet> = (0..n)
        .map(|j| {
            let mut acc = Jet::zero(like.shape());
            for i in 0..n {
                acc.axpy(1.0, &fam.g.get(i, j).mul(&y_up[i]));
            }
            acc
        })
        .collect();
    Ok(YField {
        fam,
        w: wj,
        y_low,
        y_up,
    })
}

fn newlaw_rhs(
    g: &MetricJet,
    w: &ConformalFactor,
    k_max: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = g.n();
    let yf = y_field(g, w, k_max)?;
    let fam = &yf.fam;
    let rho = fam.rho;
    let gam = christoffel(&fam.g, &fam.ginv)?;
    let nabla_y = |i: usize, j: usize| -> Result<Jet> {
        let mut v = yf.y_low[j].partial(i)?;
        for k in 0..n {
            v.axpy(-1.0, &gam[(k * n + i) * n + j].mul(&yf.y_low[k]));
        }
        Ok(v)
    };
    let mut per = vec![vec![0.0; n * n]; k_max + 1];
    for i in 0..n {
        for j in 0..n {
            let gij = fam.g.get(i, j);
            let scaled = Jet::from_fn(gij.shape(), |e| (1.0 - e[rho] as f64) * gij.coeff(e));
            let total = scaled
                .mul(&yf.w)
                .scale(2.0)
                .add(&nabla_y(i, j)?.add(&nabla_y(j, i)?));
            for (m, row) in per.iter_mut().enumerate() {
                row[i * n + j] = total.slice(rho, m as u8).value();
            }
        }
    }
    let y = (0..=k_max)
        .map(|m| {
            yf.y_up
                .iter()
                .map(|c| c.slice(rho, m as u8).value())
                .collect()
        })
        .collect();
    Ok((per.concat(), y))
}

/// For `g = e^{2φ}δ`: `Y_j = −ρ(δ_j^k + ρP_j^k)ω_k`, compared coefficientwise.
pub fn flat_y_check(
    g: &MetricJet,
    w: &ConformalFactor,
    k_max: usize,
    tolerance: f64,
) -> Result<VariationReport> {
    let n = g.n();
    let yf = y_field(g, w, k_max)?;
    let rho = yf.fam.rho;
    let geo = Geometry::new(g)?;
    let p = geo.p()?;
    let dw = w.differential(n)?;
    let gi = geo.ginv();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for m in 0..=k_max {
        for j in 0..n {
            lhs.push(yf.y_low[j].slice(rho, m as u8).value());
            let v = match m {
                1 => -dw[j],
                2 => -(0..n)
                    .map(|k| {
                        let pjk: f64 = (0..n)
                            .map(|l| p.get(&[j, l]).value() * gi.get(l, k).value())
                            .sum();
                        pjk * dw[k]
                    })
                    .sum::<f64>(),
                _ => 0.0,
            };
            rhs.push(v);
        }
    }
    Ok(VariationReport::compare("yflat", lhs, rhs, tolerance))
}

/// `δv_k` from the parameter-jet solve against `−2kωv_k + ∇_i(L^{ij}∇_jω)`.
pub fn variation_of_volume_coefficients(
    g: &MetricJet,
    w: &ConformalFactor,
    k: usize,
    tolerance: f64,
) -> Result<VariationReport> {
    let lhs = delta_vk(g, w, k)?;
    let rhs = dvk_rhs(g, w, k)?;
    Ok(VariationReport::compare(
        "dvkform",
        vec![lhs],
        vec![rhs],
        tolerance,
    ))
}

fn delta_vk(g: &MetricJet, w: &ConformalFactor, k: usize) -> Result<f64> {
    let (gt, tv) = variation_family(g, w)?;
    let vol = volume_coefficients(&solve_expansion(&gt, k)?, k)?;
    Ok(vol.v[k].slice(tv, 1).value())
}

fn dvk_rhs(g: &MetricJet, w: &ConformalFactor, k: usize) -> Result<f64> {
    let n = g.n();
    let series = solve_expansion(g, k)?;
    let l = linearization_coefficients(&series, k)?;
    if l.order() < 1 {
        return Err(insufficient(format!(
            "the divergence term of dv_{k} needs metric order >= {}",
            2 * k + 1
        )));
    }
    let vk = volume_coefficients(&series, k)?.v[k].value();
    let om = matching(g, &w.omega)?;
    let o = l.order();
    let vfield: Vec<Jet> = (0..n)
        .map(|j| {
            let mut acc = Jet::zero(l.get(&[0, 0]).shape());
            for i in 0..n {
                acc.axpy(1.0, &l.get(&[i, j]).mul(&om.partial(i)?.restrict(o)));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let ginv = g.inverse()?;
    let gam = christoffel(g.components(), &ginv)?;
    let mut div = 0.0;
    for j in 0..n {
        div += vfield[j].partial(j)?.value();
        for i in 0..n {
            div += gam[(i * n + i) * n + j].value() * vfield[j].value();
        }
    }
    Ok(-2.0 * k as f64 * om.value() * vk + div)
}

/// For locally conformally flat `g`, the right side of the `δv_k` law equals
/// `−T^{ij}_(k−1)ω_ij − 2kσ_kω`.
pub fn lcf_variation_check(
    g: &MetricJet,
    w: &ConformalFactor,
    k: usize,
    tolerance: f64,
) -> Result<VariationReport> {
    let n = g.n();
    let rhs = dvk_rhs(g, w, k)?;
    let geo = Geometry::new(g)?;
    let gi0 = geo.ginv().map(|e| e.restrict(0));
    let sf = sigma_and_newton(&schouten_endomorphism(&gi0, &geo.p()?.restrict(0)));
    let t = sf.newton_raised(k - 1, &gi0);
    let om = matching(g, &w.omega)?;
    let hess = geo.nabla(&one_form(n, &om)?)?;
    let mut s = -2.0 * k as f64 * sf.sigma(k).value() * om.value();
    for i in 0..n {
        for j in 0..n {
            s -= t.get(&[i, j]).value() * hess.get(&[i, j]).value();
        }
    }
    Ok(VariationReport::compare(
        "deltasigmak",
        vec![rhs],
        vec![s],
        tolerance,
    ))
}

/// `∇_i T^{ij}_(k−1)(g^{-1}P)` at the base point against zero, relative to
/// the size of `∂T`.
pub fn newton_divergence_check(g: &MetricJet, k: usize, tolerance: f64) -> Result<VariationReport> {
    let n = g.n();
    let geo = Geometry::new(g)?;
    let p = geo.p()?;
    if p.order() < 1 {
        return Err(insufficient(
            "the Newton tensor divergence needs metric order >= 3",
        ));
    }
    let ginv = geo.ginv();
    let sf = sigma_and_newton(&schouten_endomorphism(ginv, p));
    let t = sf.newton_raised(k - 1, ginv);
    let gam = christoffel(g.components(), ginv)?;
    let mut lhs = Vec::new();
    let mut scale: f64 = 0.0;
    for j in 0..n {
        let mut v = 0.0;
        for i in 0..n {
            let d = t.get(&[i, j]).partial(i)?.value();
            scale = scale.max(d.abs());
            v += d;
            for l in 0..n {
                v += gam[(i * n + i) * n + l].value() * t.get(&[l, j]).value();
                v += gam[(j * n + i) * n + l].value() * t.get(&[i, l]).value();
            }
        }
        lhs.push(v);
    }
    Ok(VariationReport::compare_scaled(
        "newton_divergence",
        lhs,
        vec![0.0; n],
        scale,
        tolerance,
    ))
}

/// Central difference of `v_k(e^{±2hω}g)` against the parameter jet.
pub fn finite_difference_check(
    g: &MetricJet,
    w: &ConformalFactor,
    k: usize,
    h: f64,
    tolerance: f64,
) -> Result<VariationReport> {
    let jet = delta_vk(g, w, k)?;
    let at = |s: f64| -> Result<f64> {
        let ws = ConformalFactor::from_jet(w.omega.scale(s));
        let gs = conformal_rescale(g, &ws)?;
        Ok(volume_coefficients(&solve_expansion(&gs, k)?, k)?.v[k].value())
    };
    let fd = (at(h)? - at(-h)?) / (2.0 * h);
    Ok(VariationReport::compare(
        "parameter_jet_vs_fd",
        vec![jet],
        vec![fd],
        tolerance,
    ))
}

/// Values that must not depend on the `≥3`-jet of `ω`: `v_k(e^{2ω}g)` and,
/// where determined, `g^(k)` of `e^{2ω}g`.
fn second_jet_quantities(g: &MetricJet, om: &Jet, k: usize) -> Result<Vec<f64>> {
    let n = g.n();
    let gh = conformal_rescale(g, &ConformalFactor::from_jet(om.clone()))?;
    let s = solve_expansion(&gh, k)?;
    let mut out = vec![volume_coefficients(&s, k)?.v[k].value()];
    if n % 2 == 1 || k < n / 2 {
        out.extend(values(s.coeff(k).expect("solved")));
    }
    Ok(out)
}

fn randomized(om: &Jet, degrees: std::ops::RangeInclusive<usize>, rng: &mut ChaCha12Rng) -> Jet {
    let shape = om.shape();
    let n = shape.n_vars();
    Jet::from_fn(shape, |e| {
        let d: usize = e[..n].iter().map(|&k| k as usize).sum();
        if degrees.contains(&d) {
            let a: f64 = e.iter().map(|&k| factorial(k as usize)).product();
            0.2 * rng.gen_range(-1.0..1.0) / a
        } else {
            om.coeff(e)
        }
    })
}

fn spread(base: &[f64], trials: &[Vec<f64>]) -> f64 {
    let scale = sup(base).max(REL_FLOOR);
    trials
        .iter()
        .flat_map(|t| t.iter().zip(base).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
        / scale
}

/// Randomize the `≥3`-jet of `ω` with its 2-jet fixed; the quantities must
/// not move. A control run randomizes the 2-jet and must move them.
pub fn second_jet_dependence_check(
    g: &MetricJet,
    w: &ConformalFactor,
    k: usize,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VariationReport> {
    let om = matching(g, &w.omega)?;
    let base = second_jet_quantities(g, &om, k)?;
    let top = om.order() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let high: Vec<Jet> = (0..trials)
        .map(|_| randomized(&om, 3..=top, &mut rng))
        .collect();
    let runs = high
        .par_iter()
        .map(|o| second_jet_quantities(g, o, k))
        .collect::<Result<Vec<_>>>()?;
    let control = randomized(&om, 2..=2, &mut rng);
    let ctrl = second_jet_quantities(g, &control, k)?;
    let s = spread(&base, &runs);
    let c = spread(&base, &[ctrl.clone()]);
    let worst = runs
        .iter()
        .max_by(|a, b| spread(&base, &[a.to_vec()]).total_cmp(&spread(&base, &[b.to_vec()])))
        .cloned()
        .unwrap_or_else(|| base.clone());
    let mut rep = VariationReport::compare("atmost2", base, worst, tolerance)
        .with_breakdown(vec![("spread".into(), s), ("control_spread".into(), c)]);
    rep.rel_err = s;
    rep.pass = s < tolerance && c > 1e-3;
    Ok(rep)
}

/// A compact flat torus `ℝ^n/(2πℤ)^n` with a periodic metric and conformal
/// factor, integrated on a uniform product grid.
#[derive(Clone, Debug)]
pub struct TorusSpec {
    pub metric: MetricSpec,
    pub omega: Expr,
    pub grid: usize,
}

pub const PERIODICITY_TOL: f64 = 1e-10;

impl TorusSpec {
    pub fn new(metric: MetricSpec, omega_src: &str, grid: usize) -> Result<TorusSpec> {
        let omega = Expr::parse(omega_src, &metric.variables)?;
        if grid == 0 {
            return Err(Error::Input(
                "torus grid needs at least one node per axis".into(),
            ));
        }
        let spec = TorusSpec {
            metric,
            omega,
            grid,
        };
        let d = spec.periodicity_defect(8, 1);
        if !(d <= PERIODICITY_TOL) {
            return Err(Error::Input(format!(
                "torus expressions are not 2π-periodic (defect {d:.3e})"
            )));
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.metric.dimension
    }

    fn periodicity_defect(&self, samples: usize, seed: u64) -> f64 {
        let n = self.n();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut worst = self.metric.periodicity_defect(samples, seed);
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
            let a = self.omega.eval(&x);
            for i in 0..n {
                let mut y = x.clone();
                y[i] += TAU;
                let b = self.omega.eval(&y);
                let d = (a - b).abs() / a.abs().max(1.0);
                worst = if d.is_nan() { f64::NAN } else { worst.max(d) };
            }
        }
        worst
    }

    /// Grid node `idx` in row-major order (last axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let n = self.n();
        let m = self.grid;
        let mut x = vec![0.0; n];
        let mut r = idx;
        for a in (0..n).rev() {
            x[a] = TAU * (r % m) as f64 / m as f64;
            r /= m;
        }
        x
    }

    pub fn node_count(&self) -> usize {
        self.grid.pow(self.n() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (TAU / self.grid as f64).powi(self.n() as i32)
    }
}

/// Per-node data: `v_k`, `δv_k` for `k = 1..=K`, `ω` and `√det g`.
#[derive(Clone, Debug)]
pub struct TorusNode {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub omega: f64,
    pub volume_density: f64,
}

fn torus_node(spec: &TorusSpec, x: Vec<f64>, k_max: usize) -> Result<TorusNode> {
    let n = spec.n();
    let order = (2 * k_max) as u8;
    let g = instantiate_jets(&spec.metric, &x, order)?;
    let w = ConformalFactor::from_expr_parsed(&spec.omega, &x, order)?;
    let (gt, tv) = variation_family(&g, &w)?;
    let vol = volume_coefficients(&solve_expansion(&gt, k_max)?, k_max)?;
    let det = g.components().det()?.value();
    Ok(TorusNode {
        v: (1..=k_max).map(|k| vol.v[k].slice(tv, 0).value()).collect(),
        dv: (1..=k_max).map(|k| vol.v[k].slice(tv, 1).value()).collect(),
        omega: w.value(),
        volume_density: det.sqrt(),
        x: x[..n].to_vec(),
    })
}

impl ConformalFactor {
    fn from_expr_parsed(e: &Expr, point: &[f64], order: u8) -> Result<ConformalFactor> {
        let shape = JetShape::graded(point.len(), order);
        let xs: Vec<Jet> = (0..point.len())
            .map(|v| Jet::variable(&shape, v, point[v]))
            .collect();
        Ok(ConformalFactor {
            omega: e.eval_jet(&xs)?,
            source: Some(e.clone()),
        })
    }
}

/// Evaluate every grid node; results are in node order.
pub fn torus_nodes(spec: &TorusSpec, k_max: usize) -> Result<Vec<TorusNode>> {
    let n = spec.n();
    if n % 2 == 0 && k_max > n / 2 {
        return Err(Error::Capability(format!(
            "k exceeds n/2: v_{k_max} is not defined for n = {n}"
        )));
    }
    (0..spec.node_count())
        .into_par_iter()
        .map(|i| torus_node(spec, spec.node(i), k_max))
        .collect()
}

/// Quadrature of `f` over nodes, summed in node order.
pub fn integrate(spec: &TorusSpec, nodes: &[TorusNode], f: impl Fn(&TorusNode) -> f64) -> f64 {
    nodes
        .iter()
        .map(|nd| f(nd) * nd.volume_density)
        .sum::<f64>()
        * spec.cell_volume()
}

/// `∫δv_k dv_g = −2k∫v_kω dv_g`; for `n = 2k`, `δF_k = 0` instead.
pub fn functional_gradient_from_nodes(
    spec: &TorusSpec,
    nodes: &[TorusNode],
    k: usize,
    tolerance: f64,
) -> VariationReport {
    let n = spec.n();
    let kf = k as f64;
    let idv = integrate(spec, nodes, |nd| nd.dv[k - 1]);
    let ivw = integrate(spec, nodes, |nd| nd.v[k - 1] * nd.omega);
    let scale = integrate(spec, nodes, |nd| {
        nd.dv[k - 1].abs() + 2.0 * kf * (nd.v[k - 1] * nd.omega).abs()
    });
    let delta_f = idv + n as f64 * ivw;
    let predicted_f = (n as f64 - 2.0 * kf) * ivw;
    if 2 * k == n {
        VariationReport::compare_scaled(
            "conformal_invariance",
            vec![delta_f],
            vec![0.0],
            scale,
            tolerance,
        )
        .with_breakdown(vec![("int_dv".into(), idv), ("int_v_omega".into(), ivw)])
    } else {
        VariationReport::compare_scaled(
            "deltavk",
            vec![idv],
            vec![-2.0 * kf * ivw],
            scale,
            tolerance,
        )
        .with_breakdown(vec![
            ("delta_F".into(), delta_f),
            ("(n-2k)int_v_omega".into(), predicted_f),
        ])
    }
}

pub fn functional_gradient_check(
    spec: &TorusSpec,
    k: usize,
    tolerance: f64,
) -> Result<VariationReport> {
    let nodes = torus_nodes(spec, k)?;
    Ok(functional_gradient_from_nodes(spec, &nodes, k, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{builtin_metric, default_variables, random_jet_metric, Builtin};

    fn random_pair(n: usize, seed: u64, order: u8) -> (MetricJet, ConformalFactor) {
        (
            random_jet_metric(n, seed, 0.05, order).unwrap(),
            ConformalFactor::random(n, seed + 1000, order, 0.3),
        )
    }

    #[test]
    fn rescale_round_trip() {
        let (g, w) = random_pair(4, 1, 4);
        let back = conformal_rescale(
            &conformal_rescale(&g, &w).unwrap(),
            &ConformalFactor::from_jet(w.omega.scale(-1.0)),
        )
        .unwrap();
        let d = g.as_tensor().sub(&back.as_tensor()).max_abs();
        assert!(d < 1e-13);
        let zero = ConformalFactor::from_jet(Jet::zero(g.shape()));
        assert_eq!(conformal_rescale(&g, &zero).unwrap().values(), g.values());
        let s = ConformalFactor::from_jet(Jet::constant(g.shape(), 0.5 * 9f64.ln()));
        let gs = conformal_rescale(&g, &s).unwrap();
        for (a, b) in gs.values().iter().zip(g.values()) {
            assert!((a - 9.0 * b).abs() < 1e-13);
        }
        let bad = ConformalFactor::from_jet(Jet::zero(&JetShape::graded(3, 4)));
        assert!(matches!(conformal_rescale(&g, &bad), Err(Error::Usage(_))));
    }

    #[test]
    fn schouten_and_bach_laws() {
        let (g, w) = random_pair(4, 2, 4);
        let r = transformation_law_check(&g, &w, Law::Schouten, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
        let (g, w) = random_pair(5, 3, 4);
        let r = transformation_law_check(&g, &w, Law::Bach, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn omega_laws_low_order() {
        let (g, w) = random_pair(5, 4, 4);
        let r = transformation_law_check(&g, &w, Law::OmegaFull(1), 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        let r = transformation_law_check(&g, &w, Law::OmegaLinear(1), 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn law_names() {
        assert_eq!(Law::parse("omega_full:2").unwrap(), Law::OmegaFull(2));
        assert!(matches!(Law::parse("ricci"), Err(Error::Usage(_))));
        assert!(matches!(Law::parse("omega_linear"), Err(Error::Usage(_))));
    }

    #[test]
    fn expansion_variation() {
        let (g, w) = random_pair(5, 5, 5);
        let r = variation_of_expansion(&g, &w, 2, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        // first order reproduces δP = −∇²ω
        let n = 5;
        let geo = Geometry::new(&g).unwrap();
        let hess = geo.nabla(&one_form(n, &w.omega).unwrap()).unwrap();
        for q in 0..n * n {
            let want = -2.0 * hess.get(&[q / n, q % n]).value();
            assert!((r.lhs[n * n + q] - want).abs() < 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn constant_factor_has_no_vector_field() {
        let g = random_jet_metric(3, 6, 0.05, 5).unwrap();
        let w = ConformalFactor::from_jet(Jet::constant(g.shape(), 0.3));
        let r = variation_of_expansion(&g, &w, 2, 1e-11).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.y.unwrap().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn conformally_flat_vector_field() {
        let b = Builtin::ConfFlat("0.2*sin(x1)*cos(x2) + 0.1*x3".into());
        let g = builtin_metric(&b, 3, &[0.1, 0.2, 0.3], 5).unwrap();
        let w = ConformalFactor::random(3, 7, 5, 0.3);
        let r = flat_y_check(&g, &w, 2, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn volume_variation() {
        let (g, w) = random_pair(5, 8, 5);
        for k in 1..=2 {
            let r = variation_of_volume_coefficients(&g, &w, k, 1e-8).unwrap();
            assert!(r.pass, "k={k}: {r:?}");
        }
        let fd = finite_difference_check(&g, &w, 2, 1e-4, 1e-6).unwrap();
        assert!(fd.pass, "{fd:?}");
    }

    #[test]
    fn first_volume_variation_is_laplacian() {
        let (g, w) = random_pair(4, 9, 3);
        let r = variation_of_volume_coefficients(&g, &w, 1, 1e-10).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let hess = geo.nabla(&one_form(4, &w.omega).unwrap()).unwrap();
        let mut lap = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                lap += geo.ginv().get(i, j).value() * hess.get(&[i, j]).value();
            }
        }
        let want = -2.0 * w.value() * geo.j().unwrap().value() - lap;
        assert!((r.lhs[0] - want).abs() < 1e-10 * want.abs().max(1e-3));
        assert!(r.pass);
    }

    #[test]
    fn conformally_flat_volume_variation() {
        let b = Builtin::ConfFlat("0.2*sin(x1)*cos(x2) + 0.1*x3^2".into());
        let g = builtin_metric(&b, 3, &[0.1, 0.2, 0.3], 5).unwrap();
        let w = ConformalFactor::random(3, 10, 5, 0.3);
        let r = lcf_variation_check(&g, &w, 2, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
        for k in 1..=3 {
            let r = newton_divergence_check(&g, k, 1e-8).unwrap();
            assert!(r.pass, "k={k}: {r:?}");
        }
    }

    #[test]
    fn second_jet_independence() {
        let (g, w) = random_pair(5, 11, 4);
        let r = second_jet_dependence_check(&g, &w, 2, 3, 5, 1e-11).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn torus_identities() {
        let spec = Builtin::TorusPerturbed {
            seed: 3,
            amplitude: 0.1,
        }
        .spec(3)
        .unwrap()
        .unwrap();
        let t = TorusSpec::new(spec, "0.3*sin(x1) + 0.2*cos(x2 - x3)", 6).unwrap();
        let nodes = torus_nodes(&t, 2).unwrap();
        for k in 1..=2 {
            let r = functional_gradient_from_nodes(&t, &nodes, k, 1e-5);
            assert!(r.pass, "k={k}: {r:?}");
        }
        let flat = Builtin::Flat.spec(3).unwrap().unwrap();
        let t = TorusSpec::new(flat, "sin(x1)", 4).unwrap();
        let r = functional_gradient_check(&t, 1, 1e-12).unwrap();
        assert!(r.pass && r.lhs[0].abs() < 1e-12, "{r:?}");
        let flat = Builtin::Flat.spec(3).unwrap().unwrap();
        assert!(matches!(
            TorusSpec::new(flat, "x1", 4),
            Err(Error::Input(_))
        ));
        let _ = default_variables(3);
    }
}
