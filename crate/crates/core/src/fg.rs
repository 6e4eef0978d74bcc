//! Formal expansion of the ambient metric `2ρ dt² + 2t dt dρ + t² g_ρ`.
//!
//! The ambient chart has axes `[t, x_1..x_n, ρ]`, indexed `0, 1..n, n+1`.
//! The `t` axis is an Euler axis: components are stored on `t = 1` and
//! differentiated by their homogeneity degree. The `ρ` axis is an extra graded
//! jet variable appended after the metric's own variables.

use crate::error::{insufficient, Error, Result};
use crate::geometry::{trace, Axis, Chart, Geometry, MetricJet, Slot, TensorJet};
use crate::jet::{factorial, Jet, JetMatrix, JetShape, ShapeKey, VarKind};
use rayon::prelude::*;
use std::sync::Arc;

/// `g^(k) = ∂_ρ^k g_ρ|_{ρ=0}` for `k = 0..=K`.
#[derive(Clone, Debug)]
pub struct RhoSeries {
    base: MetricJet,
    /// Derivative-normalized coefficients; `coeffs[0]` is the metric.
    coeffs: Vec<TensorJet>,
    target: usize,
    /// `g^{ij} ∂_ρ^{n/2} g_ij` when `n` is even and `K = n/2`.
    pub even_trace: Option<Jet>,
    /// Trace-free leftover of the order-`n/2` equation (raw, unnormalized).
    pub obstruction: Option<TensorJet>,
    // (trace/n)·g, the normalized top coefficient at the obstructed order.
    top: Option<TensorJet>,
}

impl RhoSeries {
    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Highest requested ρ-order.
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn metric(&self) -> &MetricJet {
        &self.base
    }

    /// Stored coefficients `g^(0)..`; for even `n` at `K = n/2` the last
    /// entry is `g^(n/2 − 1)`.
    pub fn coeffs(&self) -> &[TensorJet] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Option<&TensorJet> {
        self.coeffs.get(k)
    }

    /// Coefficients usable for assembling the ambient metric, including the
    /// normalized obstructed-order coefficient.
    pub(crate) fn working_coeffs(&self) -> Vec<&TensorJet> {
        self.coeffs.iter().chain(self.top.iter()).collect()
    }
}

fn scalar_shape(kinds: &[VarKind], order: u8) -> Arc<JetShape> {
    JetShape::get(ShapeKey {
        order,
        kinds: kinds.to_vec(),
    })
}

/// `Σ_j taylor[j] ρ^j` in `target`, whose last variable is `ρ`.
fn rho_jet(taylor: &[&Jet], target: &Arc<JetShape>) -> Jet {
    let r = target.n_vars() - 1;
    Jet::from_fn(target, |e| {
        let j = e[r] as usize;
        if j < taylor.len() {
            taylor[j].coeff(&e[..r])
        } else {
            0.0
        }
    })
}

/// The ambient metric on `t = 1` as jets in `(x, params, ρ)`.
#[derive(Clone, Debug)]
pub struct AmbientMetricJet {
    n: usize,
    g: JetMatrix,
}

impl AmbientMetricJet {
    /// Build from ρ-Taylor coefficients `taylor[j] = g^(j)/j!` (as `n×n`
    /// component lists over the base shape).
    pub(crate) fn from_taylor(n: usize, taylor: &[Vec<Jet>], order: u8) -> AmbientMetricJet {
        let mut kinds = taylor[0][0].shape().kinds().to_vec();
        kinds.push(VarKind::Graded);
        let shape = scalar_shape(&kinds, order);
        let r = kinds.len() - 1;
        let m = n + 2;
        let entries: Vec<Jet> = (0..m * m)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (k / m, k % m);
                match (a, b) {
                    (0, 0) => Jet::variable(&shape, r, 0.0).scale(2.0),
                    (0, x) | (x, 0) if x == m - 1 => Jet::constant(&shape, 1.0),
                    (a, b) if (1..=n).contains(&a) && (1..=n).contains(&b) => {
                        let cs: Vec<&Jet> =
                            taylor.iter().map(|t| &t[(a - 1) * n + b - 1]).collect();
                        rho_jet(&cs, &shape)
                    }
                    _ => Jet::zero(&shape),
                }
            })
            .collect();
        AmbientMetricJet {
            n,
            g: JetMatrix::new(m, entries, true).expect("ambient metric is symmetric"),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u8 {
        self.g.order()
    }

    pub fn components(&self) -> &JetMatrix {
        &self.g
    }

    /// Index of the `ρ` jet variable.
    pub fn rho_var(&self) -> usize {
        self.g.get(0, 0).n_vars() - 1
    }

    pub fn chart(&self) -> Result<Chart> {
        let mut axes = vec![Axis::Euler];
        axes.extend((0..self.n).map(Axis::Var));
        axes.push(Axis::Var(self.rho_var()));
        Chart::new(axes, self.g.clone())
    }
}

pub(crate) fn taylor_of(series_coeffs: &[&TensorJet]) -> Vec<Vec<Jet>> {
    series_coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let f = 1.0 / factorial(k);
            c.comps().iter().map(|j| j.scale(f)).collect()
        })
        .collect()
}

/// Assemble `g̃` at the given total order from a solved series. Each ρ-power
/// consumes one order, so `g^(j)` must have x-order at least `order − j`.
/// ρ-powers beyond the series are zero.
pub fn assemble_ambient(series: &RhoSeries, ambient_order: u8) -> Result<AmbientMetricJet> {
    let cs = series.working_coeffs();
    for (j, c) in cs.iter().enumerate() {
        let need = (ambient_order as i32 - j as i32).max(0);
        if j <= ambient_order as usize && (c.order() as i32) < need {
            return Err(insufficient(format!(
                "ambient order {ambient_order} needs g^({j}) to x-order {need}, have {}",
                c.order()
            )));
        }
    }
    Ok(AmbientMetricJet::from_taylor(
        series.n(),
        &taylor_of(&cs),
        ambient_order,
    ))
}

/// Tangential ambient Ricci `ρ^p`-coefficients restricted to x-order `xo`,
/// and optionally the `ρ^q`-coefficient of `Ric_∞∞` at the same x-order.
fn ricci_slices(
    n: usize,
    taylor: &[Vec<Jet>],
    order: u8,
    p: u8,
    q: Option<u8>,
    xo: u8,
) -> Result<(Vec<Jet>, Option<Jet>)> {
    let amb = AmbientMetricJet::from_taylor(n, taylor, order);
    let chart = amb.chart()?;
    let r = amb.rho_var();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let (vals, inf) = rayon::join(
        || {
            pairs
                .par_iter()
                .map(|&(i, j)| chart.ricci(i + 1, j + 1).slice(r, p).restrict(xo))
                .collect::<Vec<Jet>>()
        },
        || q.map(|q| chart.ricci(n + 1, n + 1).slice(r, q).restrict(xo)),
    );
    let mut out = vec![vals[0].clone(); n * n];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        out[i * n + j] = vals[k].clone();
        out[j * n + i] = vals[k].clone();
    }
    Ok((out, inf))
}

fn tangential_ricci_slice(
    n: usize,
    taylor: &[Vec<Jet>],
    order: u8,
    p: u8,
    xo: u8,
) -> Result<Vec<Jet>> {
    Ok(ricci_slices(n, taylor, order, p, None, xo)?.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine response `R(S) − R(0) = a S + b tr_g(S) g` of the ρ^{k−1}
/// tangential Ricci coefficient to the ρ^k Taylor coefficient `S`, and the
/// response `c tr_g(S)` of the ρ^{k−2} coefficient of `Ric_∞∞` (k ≥ 2).
#[derive(Clone, Copy, Debug)]
pub struct AffineProbe {
    pub a: f64,
    pub b: f64,
    pub c: Option<f64>,
    /// Relative mismatch of the random consistency probe.
    pub consistency: f64,
}

pub fn probe_affine(g0: &[f64], n: usize, k: usize) -> Result<AffineProbe> {
    let shape = JetShape::graded(n, 1);
    let order = (k + 1) as u8;
    let q = (k >= 2).then(|| (k - 2) as u8);
    let response = |s: &[f64]| -> Result<(Vec<f64>, f64)> {
        let mut taylor = vec![g0
            .iter()
            .map(|&v| Jet::constant(&shape, v))
            .collect::<Vec<_>>()];
        for _ in 1..k {
            taylor.push(vec![Jet::zero(&shape); n * n]);
        }
        taylor.push(s.iter().map(|&v| Jet::constant(&shape, v)).collect());
        let (r, inf) = ricci_slices(n, &taylor, order, (k - 1) as u8, q, 0)?;
        Ok((
            r.iter().map(|j| j.value()).collect(),
            inf.map_or(0.0, |j| j.value()),
        ))
    };
    let ginv = crate::jet::small_inverse(g0, n, crate::jet::DEFAULT_MAX_CONDITION)?;
    let tr = |s: &[f64]| dot(&ginv, s);
    let zero = response(&vec![0.0; n * n])?;
    let diff = |s: &[f64]| -> Result<(Vec<f64>, f64)> {
        let (r, i) = response(s)?;
        Ok((
            r.iter().zip(&zero.0).map(|(x, y)| x - y).collect(),
            i - zero.1,
        ))
    };
    let mut tf = vec![0.0; n * n];
    tf[1] = 1.0;
    tf[n] = 1.0;
    let t = tr(&tf) / n as f64;
    for (x, g) in tf.iter_mut().zip(g0) {
        *x -= t * g;
    }
    let (d_tf, _) = diff(&tf)?;
    let a = dot(&d_tf, &tf) / dot(&tf, &tf);
    let (d_g, i_g) = diff(g0)?;
    let cg = dot(&d_g, g0) / dot(g0, g0);
    let b = (cg - a) / n as f64;
    let c = q.map(|_| i_g / n as f64);
    // deterministic generic symmetric probe
    let mut rs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = ((i * 7 + j * 13 + 3) as f64 * 0.618_033_988_749_895).fract() - 0.5;
            rs[i * n + j] = v;
            rs[j * n + i] = v;
        }
    }
    let (d_r, i_r) = diff(&rs)?;
    let trs = tr(&rs);
    let pred: Vec<f64> = rs
        .iter()
        .zip(g0)
        .map(|(s, g)| a * s + b * trs * g)
        .collect();
    let err = d_r
        .iter()
        .zip(&pred)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = d_r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut consistency = err / scale.max(1e-300);
    if let Some(c) = c {
        let e = (i_r - c * trs).abs() / (c * trs).abs().max(i_r.abs()).max(1e-300);
        consistency = consistency.max(e);
    }
    Ok(AffineProbe {
        a,
        b,
        c,
        consistency,
    })
}

const PROBE_TOL: f64 = 1e-10;

/// Solve `Ric(g̃) = 0` order by order in ρ up to `K`.
///
/// Needs `g.order() ≥ 2K`; `g^(k)` is returned to x-order `g.order() − 2k`.
pub fn solve_expansion(g: &MetricJet, k_target: usize) -> Result<RhoSeries> {
    let n = g.n();
    if n < 3 {
        return Err(Error::Capability(format!(
            "the ambient expansion needs dimension >= 3, got {n}"
        )));
    }
    if n % 2 == 0 && k_target > n / 2 {
        return Err(Error::Capability(format!(
            "obstructed order: rho-order {k_target} exceeds n/2 = {} for even n",
            n / 2
        )));
    }
    let big_n = g.order() as usize;
    if big_n < 2 * k_target {
        return Err(insufficient(format!(
            "rho-order {k_target} needs metric order >= {}, have {big_n}",
            2 * k_target
        )));
    }
    let ginv = g.inverse()?;
    let g0 = g.values();
    let mut taylor: Vec<Vec<Jet>> = vec![g.components().entries().to_vec()];
    let mut coeffs = vec![g.as_tensor()];
    let mut even_trace = None;
    let mut obstruction = None;
    let mut top = None;
    let mut first: Option<AffineProbe> = None;
    for k in 1..=k_target {
        let xo = (big_n - 2 * k) as u8;
        let order = (big_n - k + 1) as u8;
        let probe = probe_affine(&g0, n, k)?;
        if probe.consistency > PROBE_TOL {
            return Err(Error::InternalConsistency(format!(
                "affine probe mismatch {:.3e} at rho-order {k}",
                probe.consistency
            )));
        }
        let p1 = *first.get_or_insert(probe);
        let nf = n as f64;
        let trace_degenerate =
            (probe.a + nf * probe.b).abs() < PROBE_TOL * (p1.a + nf * p1.b).abs();
        let q = trace_degenerate.then(|| (k - 2) as u8);
        let (r0, inf0) = ricci_slices(n, &taylor, order, (k - 1) as u8, q, xo)?;
        let gk: Vec<Jet> = g
            .components()
            .entries()
            .iter()
            .map(|e| e.restrict(xo))
            .collect();
        let gi = JetMatrix::from_fn(n, true, |i, j| ginv.get(i, j).restrict(xo));
        let r0t = TensorJet::new(n, vec![Slot::Down; 2], r0.clone())?;
        let tr_r0 = trace(&r0t, &gi);
        let degenerate = probe.a.abs() < PROBE_TOL * p1.a.abs();
        let obstructed = n % 2 == 0 && k == n / 2;
        if degenerate != obstructed {
            return Err(Error::InternalConsistency(format!(
                "trace-free response a = {:.3e} at rho-order {k} (n = {n})",
                probe.a
            )));
        }
        let s: Vec<Jet> = if obstructed {
            let trs = tr_r0.scale(-1.0 / (nf * probe.b));
            even_trace = Some(trs.scale(factorial(k)));
            obstruction = Some(TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
                r0[x[0] * n + x[1]].sub(&tr_r0.mul(&gk[x[0] * n + x[1]]).scale(1.0 / nf))
            }));
            gk.iter().map(|gij| trs.mul(gij).scale(1.0 / nf)).collect()
        } else {
            // at k = n the trace comes from the ∞∞ equation
            let trs = match (inf0, probe.c) {
                (Some(i0), Some(c)) if c.abs() > PROBE_TOL => i0.scale(-1.0 / c),
                (Some(_), _) | (None, None) if trace_degenerate => {
                    return Err(Error::InternalConsistency(format!(
                        "trace equation degenerate at rho-order {k} (n = {n})"
                    )))
                }
                _ => tr_r0.scale(-1.0 / (probe.a + nf * probe.b)),
            };
            r0.iter()
                .zip(&gk)
                .map(|(r, gij)| {
                    let mut v = r.clone();
                    v.axpy(probe.b, &trs.mul(gij));
                    v.scale(-1.0 / probe.a)
                })
                .collect()
        };
        let st = TensorJet::new(n, vec![Slot::Down; 2], s.clone())?.scale(factorial(k));
        if obstructed {
            top = Some(st);
        } else {
            coeffs.push(st);
            taylor.push(s);
        }
    }
    Ok(RhoSeries {
        base: g.clone(),
        coeffs,
        target: k_target,
        even_trace,
        obstruction,
        top,
    })
}

/// Tangential Ricci residuals `|ρ^{k−1} coefficient|` for `k = 1..=K`,
/// relative to the size of the solved coefficients. At the obstructed order
/// the stored obstruction is subtracted first.
pub fn expansion_residual(series: &RhoSeries) -> Result<Vec<f64>> {
    let n = series.n();
    let kk = series.target;
    if kk == 0 {
        return Ok(vec![]);
    }
    let big_n = series.base.order() as usize;
    let cs = series.working_coeffs();
    let taylor = taylor_of(&cs);
    let order = (big_n - kk + 1) as u8;
    let scale = cs[1..]
        .iter()
        .map(|c| c.max_abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    (1..=kk)
        .map(|k| {
            let xo = (big_n - kk - k).min(big_n - 2 * k) as u8;
            let mut r = tangential_ricci_slice(n, &taylor, order, (k - 1) as u8, xo)?;
            if k == kk {
                if let Some(o) = &series.obstruction {
                    for (x, y) in r.iter_mut().zip(o.comps()) {
                        *x = x.sub(&y.restrict(xo));
                    }
                }
            }
            Ok(r.iter().fold(0.0f64, |m, j| m.max(j.max_abs())) / scale)
        })
        .collect()
}

/// `g + 2Pρ + P·P ρ²`, valid for Einstein or locally conformally flat `g`.
pub fn closed_form_series(g: &MetricJet, k_target: usize) -> Result<RhoSeries> {
    let n = g.n();
    if n % 2 == 0 && k_target > n / 2 {
        return Err(Error::Capability(format!(
            "obstructed order: rho-order {k_target} exceeds n/2 = {}",
            n / 2
        )));
    }
    let big_n = g.order() as usize;
    if big_n < 2 * k_target.max(1) {
        return Err(insufficient(format!(
            "rho-order {k_target} needs metric order >= {}, have {big_n}",
            2 * k_target.max(1)
        )));
    }
    let geo = Geometry::new(g)?;
    let p = geo.p()?;
    let pu = geo.raise(p, 0);
    let pp = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
        let mut acc = Jet::zero(p.shape());
        for k in 0..n {
            acc.axpy(1.0, &p.get(&[x[0], k]).mul(pu.get(&[k, x[1]])));
        }
        acc
    });
    let full = |k: usize| -> TensorJet {
        let xo = (big_n - 2 * k) as u8;
        match k {
            0 => g.as_tensor(),
            1 => p.scale(2.0).restrict(xo),
            2 => pp.scale(2.0).restrict(xo),
            _ => g.as_tensor().map(|c| Jet::zero(c.shape()).restrict(xo)),
        }
    };
    let obstructed = n % 2 == 0 && k_target == n / 2 && k_target > 0;
    let last = if obstructed { k_target - 1 } else { k_target };
    let coeffs: Vec<TensorJet> = (0..=last).map(full).collect();
    let (even_trace, obstruction, top) = if obstructed {
        let t = full(k_target);
        let xo = t.order();
        let gi = JetMatrix::from_fn(n, true, |i, j| geo.ginv().get(i, j).restrict(xo));
        let tr = trace(&t, &gi);
        let top = g
            .as_tensor()
            .map(|c| c.restrict(xo).mul(&tr).scale(1.0 / n as f64));
        let zero = top.map(|c| Jet::zero(c.shape()));
        (Some(tr), Some(zero), Some(top))
    } else {
        (None, None, None)
    };
    Ok(RhoSeries {
        base: g.clone(),
        coeffs,
        target: k_target,
        even_trace,
        obstruction,
        top,
    })
}

/// Trace-free leftover of the order-`n/2` equation, for even `n`.
#[derive(Clone, Debug)]
pub struct ObstructionReport {
    pub n: usize,
    pub residual: TensorJet,
    /// `c` with `residual ≈ c·B` (n = 4 only).
    pub bach_proportionality: Option<f64>,
    /// `|residual − c·B| / |residual|` (n = 4 only).
    pub bach_deviation: Option<f64>,
}

pub fn obstruction_residual(g: &MetricJet) -> Result<ObstructionReport> {
    let n = g.n();
    if n % 2 == 1 {
        return Err(Error::Capability(format!(
            "the obstruction exists only for even n, got {n}"
        )));
    }
    let series = solve_expansion(g, n / 2)?;
    let residual = series
        .obstruction
        .clone()
        .expect("obstructed order reached");
    let (mut c, mut dev) = (None, None);
    if n == 4 {
        let geo = Geometry::new(g)?;
        let b = geo.bach()?.restrict(residual.order());
        let r: Vec<f64> = residual
            .comps()
            .iter()
            .flat_map(|j| j.coeffs().to_vec())
            .collect();
        let bb: Vec<f64> = b.comps().iter().flat_map(|j| j.coeffs().to_vec()).collect();
        let nb = dot(&bb, &bb);
        let cf = if nb > 0.0 { dot(&r, &bb) / nb } else { 0.0 };
        let rn = dot(&r, &r).sqrt();
        let d = r
            .iter()
            .zip(&bb)
            .map(|(x, y)| (x - cf * y).powi(2))
            .sum::<f64>()
            .sqrt();
        c = Some(cf);
        dev = Some(if rn > 0.0 { d / rn } else { 0.0 });
    }
    Ok(ObstructionReport {
        n,
        residual,
        bach_proportionality: c,
        bach_deviation: dev,
    })
}
