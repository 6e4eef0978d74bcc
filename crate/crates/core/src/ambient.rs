//! Covariant derivatives of the ambient curvature and the conformal curvature
//! tensors read off from them.
//!
//! Ambient indices: `0` is the `t` direction, `1..=n` the chart, `n+1` is `∞`
//! (the `ρ` direction). All components have every index down.

use crate::error::{insufficient, Error, Result};
use crate::fg::{solve_expansion, AmbientMetricJet, RhoSeries};
use crate::geometry::{Chart, Geometry, MetricJet, Slot, TensorJet};
use crate::jet::Jet;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Mutex;

/// Lazily evaluated, memoized components `R̃_{IJKL,M_1⋯M_r}` as jets in
/// `(x, params, ρ)` on `t = 1`. Level-`r` jets have order `order − 2 − r`.
pub struct CurvatureTable {
    n: usize,
    chart: Chart,
    order: u8,
    cache: Mutex<HashMap<Vec<u8>, Jet>>,
}

fn canonical4(idx: &[u8]) -> Option<(f64, [u8; 4])> {
    let (mut a, mut b, mut c, mut d) = (idx[0], idx[1], idx[2], idx[3]);
    if a == b || c == d {
        return None;
    }
    let mut sign = 1.0;
    if a > b {
        std::mem::swap(&mut a, &mut b);
        sign = -sign;
    }
    if c > d {
        std::mem::swap(&mut c, &mut d);
        sign = -sign;
    }
    if (a, b) > (c, d) {
        std::mem::swap(&mut a, &mut c);
        std::mem::swap(&mut b, &mut d);
    }
    Some((sign, [a, b, c, d]))
}

impl CurvatureTable {
    pub fn new(ambient: &AmbientMetricJet) -> Result<CurvatureTable> {
        if ambient.order() < 2 {
            return Err(insufficient("ambient curvature needs ambient order >= 2"));
        }
        Ok(CurvatureTable {
            n: ambient.n(),
            chart: ambient.chart()?,
            order: ambient.order(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Table for the ambient metric of `g`, able to reach derivative level
    /// `level` with x-order `x_order` left in the ρ = 0 values.
    pub fn for_metric(g: &MetricJet, level: usize, x_order: u8) -> Result<CurvatureTable> {
        let n = g.n();
        let da = level + 2 + x_order as usize;
        let k = if n % 2 == 0 { da.min(n / 2) } else { da };
        let need = da + k;
        if (g.order() as usize) < need {
            return Err(insufficient(format!(
                "ambient curvature to level {level} (x-order {x_order}) needs metric order >= {need}, have {}",
                g.order()
            )));
        }
        let series = solve_expansion(g, k)?;
        CurvatureTable::from_series(&series, da as u8)
    }

    pub fn from_series(series: &RhoSeries, ambient_order: u8) -> Result<CurvatureTable> {
        CurvatureTable::new(&crate::fg::assemble_ambient(series, ambient_order)?)
    }

    /// Table for an arbitrary family `g_ρ` given by ρ-Taylor coefficients
    /// `taylor[j] = ∂_ρ^j g|₀ / j!` (row-major `n×n` component lists).
    pub fn from_family(n: usize, taylor: &[Vec<Jet>], ambient_order: u8) -> Result<CurvatureTable> {
        CurvatureTable::new(&AmbientMetricJet::from_taylor(n, taylor, ambient_order))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn inf(&self) -> u8 {
        (self.n + 1) as u8
    }

    pub fn rho_var(&self) -> usize {
        self.chart.metric().get(0, 0).n_vars() - 1
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Highest derivative level the table can evaluate.
    pub fn max_level(&self) -> usize {
        self.order as usize - 2
    }

    /// Full jet of a component.
    pub fn component(&self, idx: &[u8]) -> Result<Jet> {
        if idx.len() < 4 {
            return Err(Error::Usage("ambient curvature index needs 4 slots".into()));
        }
        let r = idx.len() - 4;
        if r > self.max_level() {
            return Err(insufficient(format!(
                "derivative level {r} needs ambient order >= {}, have {}",
                r + 2,
                self.order
            )));
        }
        let m = (self.n + 2) as u8;
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::Usage(format!("ambient index {bad} out of range")));
        }
        Ok(self.get(idx))
    }

    /// Component at ρ = 0 as a jet in `(x, params)`.
    pub fn at_rho0(&self, idx: &[u8]) -> Result<Jet> {
        Ok(self.component(idx)?.slice(self.rho_var(), 0))
    }

    fn level_order(&self, r: usize) -> u8 {
        self.order - 2 - r as u8
    }

    fn get(&self, idx: &[u8]) -> Jet {
        if let Some(j) = self.cache.lock().unwrap().get(idx) {
            return j.clone();
        }
        let v = self.compute(idx);
        self.cache.lock().unwrap().insert(idx.to_vec(), v.clone());
        v
    }

    fn zero(&self, r: usize) -> Jet {
        Jet::zero(
            self.chart
                .metric()
                .get(0, 0)
                .restrict(self.level_order(r))
                .shape(),
        )
    }

    fn compute(&self, idx: &[u8]) -> Jet {
        let r = idx.len() - 4;
        if r == 0 {
            // the cone structure forces R̃_{IJK0} = 0
            if idx.contains(&0) {
                return self.zero(0);
            }
            return match canonical4(idx) {
                None => self.zero(0),
                Some((sign, c)) if c != [idx[0], idx[1], idx[2], idx[3]] => {
                    self.get(&c).scale(sign)
                }
                Some(_) => {
                    let u = |k: usize| idx[k] as usize;
                    self.chart.riemann(u(0), u(1), u(2), u(3))
                }
            };
        }
        let o = self.level_order(r);
        let prev = &idx[..idx.len() - 1];
        let mm = idx[idx.len() - 1] as usize;
        let zeros = prev.iter().filter(|&&i| i == 0).count() as i32;
        let base = self.get(prev);
        let mut acc = self.chart.d(mm, &base, 2 - zeros).restrict(o);
        let mut sub = prev.to_vec();
        for s in 0..prev.len() {
            for e in 0..self.n + 2 {
                if let Some(gm) = self.chart.christoffel(e, mm, prev[s] as usize) {
                    sub[s] = e as u8;
                    let c = self.get(&sub);
                    if !c.is_zero() {
                        acc.axpy(-1.0, &gm.mul_to(&c, o));
                    }
                }
            }
            sub[s] = prev[s];
        }
        acc
    }

    /// Evaluate many components, in parallel.
    pub fn components(&self, idxs: &[Vec<u8>]) -> Result<Vec<Jet>> {
        idxs.par_iter().map(|i| self.component(i)).collect()
    }

    /// `R̃_{∞ij∞,∞⋯∞}` (k−1 trailing ∞'s) as an `n×n` tensor of full jets.
    pub fn lambda(&self, k: usize) -> Result<TensorJet> {
        let n = self.n;
        let inf = self.inf();
        let idxs: Vec<Vec<u8>> = (0..n * n)
            .map(|p| {
                let mut v = vec![inf, (p / n + 1) as u8, (p % n + 1) as u8, inf];
                v.extend(std::iter::repeat(inf).take(k - 1));
                v
            })
            .collect();
        TensorJet::new(n, vec![Slot::Down; 2], self.components(&idxs)?)
    }

    /// `C^(k)_{ijl}` as full jets.
    pub fn higher_cotton_jets(&self, k: usize) -> Result<TensorJet> {
        let n = self.n;
        let inf = self.inf();
        let tail = |v: &mut Vec<u8>| v.extend(std::iter::repeat(inf).take(k - 1));
        let mut idxs = Vec::new();
        for p in 0..n * n * n {
            let (i, j, l) = (
                (p / (n * n) + 1) as u8,
                ((p / n) % n + 1) as u8,
                (p % n + 1) as u8,
            );
            let mut a = vec![inf, i, j, l];
            tail(&mut a);
            let mut b = vec![inf, j, i, l];
            tail(&mut b);
            idxs.push(a);
            idxs.push(b);
            for pos in 0..k - 1 {
                let mut c = vec![inf, i, j, inf];
                tail(&mut c);
                c[4 + pos] = l;
                idxs.push(c);
            }
        }
        let vals = self.components(&idxs)?;
        let per = 2 + (k - 1);
        let comps = (0..n * n * n)
            .map(|p| {
                let chunk = &vals[p * per..(p + 1) * per];
                let mut acc = chunk[0].add(&chunk[1]);
                for c in &chunk[2..] {
                    acc = acc.add(c);
                }
                acc
            })
            .collect();
        TensorJet::new(n, vec![Slot::Down; 3], comps)
    }
}

fn rho0(t: &TensorJet, rho: usize) -> TensorJet {
    t.map(|c| c.slice(rho, 0))
}

fn check_omega_dimension(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Usage(
            "extended obstruction index starts at 1".into(),
        ));
    }
    if n % 2 == 0 && n <= 2 * (k + 1) {
        return Err(Error::Capability(format!(
            "Omega^({k}) needs n odd or n > {} for even n, got n = {n}",
            2 * (k + 1)
        )));
    }
    Ok(())
}

fn check_cotton_dimension(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Usage("higher Cotton index starts at 1".into()));
    }
    if n % 2 == 0 && n < 2 * (k + 1) {
        return Err(Error::Capability(format!(
            "C^({k}) needs n odd or n >= {} for even n, got n = {n}",
            2 * (k + 1)
        )));
    }
    Ok(())
}

/// `Ω^(k)_ij = R̃_{∞ij∞,∞⋯∞}` at ρ = 0, t = 1, as an x-jet of the given order.
pub fn extended_obstruction_jet(g: &MetricJet, k: usize, x_order: u8) -> Result<TensorJet> {
    check_omega_dimension(g.n(), k)?;
    let table = CurvatureTable::for_metric(g, k - 1, x_order)?;
    Ok(rho0(&table.lambda(k)?, table.rho_var()))
}

/// `Ω^(k)` at the base point (x-order 0).
pub fn extended_obstruction(g: &MetricJet, k: usize) -> Result<TensorJet> {
    extended_obstruction_jet(g, k, 0)
}

pub fn higher_cotton_jet(g: &MetricJet, k: usize, x_order: u8) -> Result<TensorJet> {
    check_cotton_dimension(g.n(), k)?;
    let table = CurvatureTable::for_metric(g, k - 1, x_order)?;
    Ok(rho0(&table.higher_cotton_jets(k)?, table.rho_var()))
}

/// `C^(k)` at the base point.
pub fn higher_cotton(g: &MetricJet, k: usize) -> Result<TensorJet> {
    higher_cotton_jet(g, k, 0)
}

/// `Λ^(k)(ρ)` for the family described by `series`, as jets in `(x, ρ)`.
/// `ambient_order` bounds the total jet order; results have order
/// `ambient_order − k − 1`.
pub fn lambda_series(series: &RhoSeries, k: usize, ambient_order: u8) -> Result<TensorJet> {
    if (ambient_order as usize) < k + 1 {
        return Err(insufficient(format!(
            "Lambda^({k}) needs ambient order >= {}",
            k + 1
        )));
    }
    CurvatureTable::from_series(series, ambient_order)?.lambda(k)
}

/// Right-hand side of the cotractor transformation law: the contraction of
/// the table values at ρ = 0 with the p-matrix built from `dw` (the
/// differential of ω at the base point). Equals `e^{2(s_∞−1)ω}` times the
/// component of the rescaled metric.
pub fn cotractor_transport(table: &CurvatureTable, dw: &[f64], target: &[u8]) -> Result<f64> {
    let n = table.n();
    let inf = table.inf();
    if dw.len() != n {
        return Err(Error::Usage(
            "conformal factor differential has wrong length".into(),
        ));
    }
    if n % 2 == 0 {
        let s_m = target.iter().filter(|&&i| i >= 1 && i <= n as u8).count();
        let s_inf = target.iter().filter(|&&i| i == inf).count();
        if s_m + 2 * s_inf > n + 1 {
            return Err(Error::Capability(format!(
                "index budget s_M + 2 s_inf = {} exceeds n + 1 = {} for even n",
                s_m + 2 * s_inf,
                n + 1
            )));
        }
    }
    let ginv: Vec<f64> = table
        .chart()
        .inverse_metric()
        .entries()
        .iter()
        .enumerate()
        .filter(|(p, _)| {
            let (a, b) = (p / (n + 2), p % (n + 2));
            (1..=n).contains(&a) && (1..=n).contains(&b)
        })
        .map(|(_, e)| e.value())
        .collect();
    let wu: Vec<f64> = (0..n)
        .map(|a| (0..n).map(|b| ginv[a * n + b] * dw[b]).sum())
        .collect();
    let w2: f64 = (0..n).map(|a| wu[a] * dw[a]).sum();
    // p^A_I restricted to nonzero entries: (A, value)
    let column = |i: u8| -> Vec<(u8, f64)> {
        if i == 0 {
            vec![(0, 1.0)]
        } else if i == inf {
            let mut v = vec![(0, -0.5 * w2), (inf, 1.0)];
            v.extend((0..n).map(|a| ((a + 1) as u8, -wu[a])));
            v
        } else {
            vec![(0, dw[i as usize - 1]), (i, 1.0)]
        }
    };
    let cols: Vec<Vec<(u8, f64)>> = target.iter().map(|&i| column(i)).collect();
    let mut terms: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
    for col in &cols {
        let mut next = Vec::with_capacity(terms.len() * col.len());
        for (pre, c) in &terms {
            for &(a, v) in col {
                if v != 0.0 {
                    let mut p = pre.clone();
                    p.push(a);
                    next.push((p, c * v));
                }
            }
        }
        terms = next;
    }
    let idxs: Vec<Vec<u8>> = terms.iter().map(|(p, _)| p.clone()).collect();
    let vals = table.components(&idxs)?;
    let rho = table.rho_var();
    Ok(terms
        .iter()
        .zip(&vals)
        .map(|((_, c), v)| c * v.slice(rho, 0).value())
        .sum())
}

/// `Ω^(2)` at the base point from the classical curvature of `g`:
/// `(n−4)(n−6)Ω^(2) = B_{ij,k}{}^k − 2W_{kijl}B^{kl} − 4JB_{ij} + (n−4)(4P^{kl}C_{(ij)k,l}
/// − 2C^k{}_i{}^lC_{ljk} + C_i{}^{kl}C_{jkl} + 2J_{,l}C_{(ij)}{}^l − 2W_{kijl}P^k{}_mP^{ml})`.
pub fn omega2_classical(g: &MetricJet) -> Result<TensorJet> {
    let n = g.n();
    if n == 4 || n == 6 {
        return Err(Error::Capability(format!(
            "the classical form of Omega^(2) divides by (n-4)(n-6), got n = {n}"
        )));
    }
    if g.order() < 6 {
        return Err(insufficient(
            "the classical form of Omega^(2) needs metric order >= 6",
        ));
    }
    let geo = Geometry::new(g)?;
    let b = geo.bach()?;
    let ddb = geo.nabla(&geo.nabla(b)?)?;
    let c = geo.cotton()?;
    let dc = geo.nabla(c)?;
    let w = geo.weyl()?;
    let p = geo.p()?;
    let dj = geo.j()?;
    let v = |t: &TensorJet, x: &[usize]| t.get(x).value();
    let gi: Vec<f64> = (0..n * n)
        .map(|q| geo.ginv().get(q / n, q % n).value())
        .collect();
    let up = |t: &TensorJet| geo.raise_all(t);
    let bu = up(b);
    let pu = up(p);
    // P^k_m P^{ml}
    let ppu: Vec<f64> = (0..n * n)
        .map(|q| {
            let (k, l) = (q / n, q % n);
            (0..n)
                .map(|m| {
                    let pkm: f64 = (0..n).map(|a| gi[k * n + a] * p.get(&[a, m]).value()).sum();
                    pkm * pu.get(&[m, l]).value()
                })
                .sum()
        })
        .collect();
    let jl: Vec<f64> = (0..n)
        .map(|l| dj.partial(l).map(|d| d.value()))
        .collect::<Result<_>>()?;
    let j = dj.value();
    let nf = n as f64;
    let csym = |i: usize, jj: usize, k: usize| 0.5 * (v(c, &[i, jj, k]) + v(c, &[jj, i, k]));
    let out = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
        let (i, jj) = (x[0], x[1]);
        let mut lead = 0.0;
        let mut rest = 0.0;
        for k in 0..n {
            for l in 0..n {
                let gkl = gi[k * n + l];
                lead += gkl * v(&ddb, &[i, jj, k, l]);
                lead -= 2.0 * v(w, &[k, i, jj, l]) * v(&bu, &[k, l]);
                let dcs = 0.5 * (v(&dc, &[i, jj, k, l]) + v(&dc, &[jj, i, k, l]));
                rest += 4.0 * v(&pu, &[k, l]) * dcs;
                rest -= 2.0 * v(w, &[k, i, jj, l]) * ppu[k * n + l];
                for a in 0..n {
                    for bb in 0..n {
                        let raised = gi[k * n + a] * gi[l * n + bb];
                        rest -= 2.0 * raised * v(c, &[a, i, bb]) * v(c, &[l, jj, k]);
                        rest += raised * v(c, &[i, a, bb]) * v(c, &[jj, k, l]);
                    }
                }
                rest += 2.0 * jl[l] * gkl * csym(i, jj, k);
            }
        }
        lead -= 4.0 * j * v(b, &[i, jj]);
        let val = (lead + (nf - 4.0) * rest) / ((nf - 4.0) * (nf - 6.0));
        Jet::constant(&crate::jet::JetShape::graded(g.shape().n_vars(), 0), val)
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fg::taylor_of;
    use crate::geometry::trace;
    use crate::jet::JetMatrix;
    use crate::zoo::{builtin_metric, random_jet_metric, Builtin};

    /// Inverse of a ρ-dependent metric family in `(x, ρ)` jets.
    fn family_inverse(n: usize, g: &[Jet]) -> Result<JetMatrix> {
        JetMatrix::new(n, g.to_vec(), true)?.inverse()
    }

    /// `g_ρ` as jets in `(x, ρ)` from derivative-normalized coefficients.
    fn family_jets(n: usize, coeffs: &[&TensorJet], order: u8) -> Vec<Jet> {
        let amb = AmbientMetricJet::from_taylor(n, &taylor_of(coeffs), order);
        (0..n * n)
            .map(|p| amb.components().get(p / n + 1, p % n + 1).clone())
            .collect()
    }

    fn rel(a: &TensorJet, b: &TensorJet) -> f64 {
        assert!(b.max_abs() > 1e-8, "reference tensor vanishes");
        a.sub(b).max_abs() / a.max_abs().max(b.max_abs()).max(1e-300)
    }

    fn values(t: &TensorJet) -> TensorJet {
        t.restrict(0)
    }

    #[test]
    fn cone_components_vanish() {
        let g = random_jet_metric(3, 1, 0.05, 6).unwrap();
        let s = solve_expansion(&g, 3).unwrap();
        let amb = crate::fg::assemble_ambient(&s, 3).unwrap();
        let chart = amb.chart().unwrap();
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    assert!(chart.riemann(a, b, c, 0).max_abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn level_zero_is_weyl_cotton_bach() {
        let n = 5;
        let g = random_jet_metric(n, 2, 0.05, 4).unwrap();
        let t = CurvatureTable::for_metric(&g, 0, 0).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let inf = t.inf();
        let u = |i: usize| (i + 1) as u8;
        let w = TensorJet::from_fn(n, vec![Slot::Down; 4], |x| {
            t.at_rho0(&[u(x[0]), u(x[1]), u(x[2]), u(x[3])]).unwrap()
        });
        let c = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            t.at_rho0(&[inf, u(x[0]), u(x[1]), u(x[2])]).unwrap()
        });
        let b = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
            t.at_rho0(&[inf, u(x[0]), u(x[1]), inf]).unwrap()
        });
        assert!(rel(&w, &values(geo.weyl().unwrap())) < 1e-9);
        assert!(rel(&c, &values(geo.cotton().unwrap())) < 1e-9);
        let want = values(geo.bach().unwrap()).scale(1.0 / (4.0 - n as f64));
        assert!(rel(&b, &want) < 1e-9);
    }

    #[test]
    fn first_derivative_of_bach_component() {
        let n = 5;
        let g = random_jet_metric(n, 3, 0.05, 6).unwrap();
        let t = CurvatureTable::for_metric(&g, 1, 0).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let db = geo.nabla(geo.bach().unwrap()).unwrap();
        let pu = geo.raise(geo.p().unwrap(), 1);
        let c = geo.cotton().unwrap();
        let inf = t.inf();
        let got = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            t.at_rho0(&[
                inf,
                (x[0] + 1) as u8,
                (x[1] + 1) as u8,
                inf,
                (x[2] + 1) as u8,
            ])
            .unwrap()
        });
        let want = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            let (i, j, l) = (x[0], x[1], x[2]);
            let mut v = db.get(&[i, j, l]).scale(1.0 / (4.0 - n as f64)).restrict(0);
            for m in 0..n {
                let sym = c.get(&[i, j, m]).add(c.get(&[j, i, m])).scale(0.5);
                v.axpy(-2.0, &pu.get(&[l, m]).mul(&sym).restrict(0));
            }
            v
        });
        assert!(rel(&got, &want) < 1e-9);
    }

    #[test]
    fn omega_one_is_normalized_bach() {
        let n = 5;
        let g = random_jet_metric(n, 4, 0.05, 4).unwrap();
        let om = extended_obstruction(&g, 1).unwrap();
        let b = Geometry::new(&g).unwrap().bach().unwrap().restrict(0);
        assert!(rel(&om, &b.scale(-1.0)) < 1e-9);
    }

    #[test]
    fn omega_and_cotton_trace_free() {
        let n = 7;
        let g = random_jet_metric(n, 5, 0.05, 6).unwrap();
        let gi = g.inverse().unwrap();
        let gi0 = JetMatrix::from_fn(n, true, |i, j| gi.get(i, j).restrict(0));
        for k in 1..=2 {
            let om = extended_obstruction(&g, k).unwrap();
            assert!(trace(&om, &gi0).max_abs() < 1e-10 * om.max_abs());
            let c = higher_cotton(&g, k).unwrap();
            for l in 0..n {
                let mut tr = 0.0;
                let mut tr2 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        tr += gi0.get(i, j).value() * c.get(&[i, j, l]).value();
                        tr2 += gi0.get(i, j).value() * c.get(&[l, i, j]).value();
                    }
                }
                assert!(tr.abs() < 1e-10 * c.max_abs());
                assert!(tr2.abs() < 1e-10 * c.max_abs());
            }
        }
    }

    #[test]
    fn first_higher_cotton_is_symmetrized_cotton() {
        let n = 5;
        let g = random_jet_metric(n, 6, 0.05, 4).unwrap();
        let c1 = higher_cotton(&g, 1).unwrap();
        let c = Geometry::new(&g).unwrap().cotton().unwrap().restrict(0);
        let want = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            c.get(x).add(c.get(&[x[1], x[0], x[2]]))
        });
        assert!(rel(&c1, &want) < 1e-10);
        for x in crate::geometry::multi_indices(n, 3) {
            let s = c1.get(&x).value()
                + c1.get(&[x[1], x[2], x[0]]).value()
                + c1.get(&[x[2], x[0], x[1]]).value();
            assert!(s.abs() < 1e-11 * c1.max_abs());
        }
    }

    #[test]
    fn second_higher_cotton_rearranged() {
        let n = 7;
        let g = random_jet_metric(n, 7, 0.05, 6).unwrap();
        let t = CurvatureTable::for_metric(&g, 1, 0).unwrap();
        let c2 = rho0(&t.higher_cotton_jets(2).unwrap(), t.rho_var());
        let inf = t.inf();
        let r = |i: usize, j: usize, l: usize| {
            t.at_rho0(&[inf, (i + 1) as u8, (j + 1) as u8, inf, (l + 1) as u8])
                .unwrap()
        };
        let want = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            let (i, j, l) = (x[0], x[1], x[2]);
            r(i, j, l).scale(3.0).sub(&r(l, i, j)).sub(&r(l, j, i))
        });
        assert!(rel(&c2, &want) < 1e-10);
    }

    #[test]
    fn einstein_and_flat_obstructions_vanish() {
        let g = builtin_metric(&Builtin::Sphere, 5, &[0.1, 0.2, 0.0, -0.1, 0.3], 6).unwrap();
        for k in 1..=2 {
            assert!(extended_obstruction(&g, k).unwrap().max_abs() < 1e-10);
            assert!(higher_cotton(&g, k).unwrap().max_abs() < 1e-10);
        }
        let b = Builtin::ConfFlat("0.2*sin(x1)*x2 + 0.1*x3^2".into());
        let g = builtin_metric(&b, 5, &[0.1, 0.2, 0.0, -0.1, 0.3], 6).unwrap();
        for k in 1..=2 {
            assert!(extended_obstruction(&g, k).unwrap().max_abs() < 1e-9);
            assert!(higher_cotton(&g, k).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn zero_index_identity() {
        let n = 3;
        let g = random_jet_metric(n, 8, 0.05, 8).unwrap();
        let t = CurvatureTable::for_metric(&g, 2, 0).unwrap();
        let inf = t.inf();
        for tail in [vec![inf, 1], vec![2, inf], vec![inf, inf]] {
            for head in [[inf, 1, 2, 0], [1, 2, 3, 0], [inf, 2, inf, 0]] {
                let mut idx = head.to_vec();
                idx.extend(&tail);
                let lhs = t.at_rho0(&idx).unwrap().value();
                let mut rhs = 0.0;
                for s in 0..tail.len() {
                    let mut j = head[..3].to_vec();
                    j.push(tail[s]);
                    j.extend(
                        tail.iter()
                            .enumerate()
                            .filter(|(p, _)| *p != s)
                            .map(|(_, v)| *v),
                    );
                    rhs -= t.at_rho0(&j).unwrap().value();
                }
                assert!(
                    (lhs - rhs).abs() < 1e-10 * lhs.abs().max(rhs.abs()).max(1e-3),
                    "{idx:?}"
                );
            }
        }
    }

    #[test]
    fn table_symmetries() {
        let n = 3;
        let g = random_jet_metric(n, 9, 0.05, 6).unwrap();
        let t = CurvatureTable::for_metric(&g, 1, 0).unwrap();
        for x in crate::geometry::multi_indices(n + 2, 5) {
            let x: Vec<u8> = x.iter().map(|&v| v as u8).collect();
            let v = t.at_rho0(&x).unwrap().value();
            let sw = t.at_rho0(&[x[1], x[0], x[2], x[3], x[4]]).unwrap().value();
            let pr = t.at_rho0(&[x[2], x[3], x[0], x[1], x[4]]).unwrap().value();
            assert!((v + sw).abs() < 1e-11 * v.abs().max(1e-3));
            assert!((v - pr).abs() < 1e-11 * v.abs().max(1e-3));
        }
    }

    #[test]
    fn transport_identity_for_zero_factor() {
        let n = 5;
        let g = random_jet_metric(n, 10, 0.05, 6).unwrap();
        let t = CurvatureTable::for_metric(&g, 1, 0).unwrap();
        let inf = t.inf();
        let target = [inf, 1, 2, inf, 3];
        let v = cotractor_transport(&t, &[0.0; 5], &target).unwrap();
        assert_eq!(v, t.at_rho0(&target).unwrap().value());
    }

    #[test]
    fn transport_reproduces_rescaled_components() {
        let n = 5;
        let g = random_jet_metric(n, 11, 0.05, 6).unwrap();
        let shape = g.shape().clone();
        let w = Jet::from_fn(&shape, |e| {
            let d: u32 = e.iter().map(|&k| k as u32).sum();
            0.1 * ((e
                .iter()
                .enumerate()
                .map(|(i, &k)| (i + 1) * k as usize)
                .sum::<usize>() as f64)
                .sin())
                / (1 + d) as f64
        });
        let f = w.scale(2.0).exp();
        let gh = g.map(|c| c.mul(&f)).unwrap();
        let t = CurvatureTable::for_metric(&g, 1, 0).unwrap();
        let th = CurvatureTable::for_metric(&gh, 1, 0).unwrap();
        let dw: Vec<f64> = (0..n).map(|i| w.partial(i).unwrap().value()).collect();
        let inf = t.inf();
        for target in [
            vec![inf, 1, 2, inf],
            vec![1, 2, 3, 4],
            vec![inf, 1, 2, 3],
            vec![inf, 2, 3, inf, inf],
            vec![inf, 1, 1, inf, 2],
        ] {
            let s_inf = target.iter().filter(|&&i| i == inf).count() as f64;
            let lhs =
                (2.0 * (s_inf - 1.0) * w.value()).exp() * th.at_rho0(&target).unwrap().value();
            let rhs = cotractor_transport(&t, &dw, &target).unwrap();
            assert!(
                (lhs - rhs).abs() < 1e-9 * lhs.abs().max(rhs.abs()),
                "{target:?}: {lhs} {rhs}"
            );
        }
    }

    #[test]
    fn lambda_one_first_formula_and_induction() {
        // arbitrary family, not Ricci flat
        let n = 3;
        let g = random_jet_metric(n, 12, 0.05, 5).unwrap();
        let g1 = random_jet_metric(n, 13, 0.3, 5).unwrap().as_tensor();
        let g2 = random_jet_metric(n, 14, 0.3, 5).unwrap().as_tensor();
        let g3 = random_jet_metric(n, 15, 0.3, 5).unwrap().as_tensor();
        let g4 = random_jet_metric(n, 16, 0.3, 5).unwrap().as_tensor();
        let gt = g.as_tensor();
        let coeffs = [&gt, &g1, &g2, &g3, &g4];
        let order = 5u8;
        let fam = family_jets(n, &coeffs, order);
        let t = CurvatureTable::from_family(n, &taylor_of(&coeffs), order).unwrap();
        let rho = t.rho_var();
        let gi = family_inverse(n, &fam).unwrap();
        let d1: Vec<Jet> = fam.iter().map(|j| j.partial(rho).unwrap()).collect();
        let d2: Vec<Jet> = d1.iter().map(|j| j.partial(rho).unwrap()).collect();
        let l1 = t.lambda(1).unwrap();
        let first = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
            let (i, j) = (x[0], x[1]);
            let mut q = Jet::zero(l1.shape());
            for k in 0..n {
                for l in 0..n {
                    q.axpy(1.0, &gi.get(k, l).mul(&d1[i * n + k]).mul(&d1[j * n + l]));
                }
            }
            d2[i * n + j].sub(&q.scale(0.5)).scale(0.5)
        });
        assert!(rel(&l1, &first.restrict(l1.order())) < 1e-10);
        for k in 1..=2 {
            let lk = t.lambda(k).unwrap();
            let lk1 = t.lambda(k + 1).unwrap();
            let o = lk1.order();
            let lhs = lk.map(|c| c.partial(rho).unwrap().restrict(o));
            let rhs = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
                let (i, j) = (x[0], x[1]);
                let mut v = lk1.get(x).clone();
                for l in 0..n {
                    for m in 0..n {
                        let a = gi.get(l, m).mul(&d1[m * n + i]).mul(lk.get(&[j, l]));
                        let b = gi.get(l, m).mul(&d1[m * n + j]).mul(lk.get(&[i, l]));
                        v.axpy(0.5, &a.add(&b).restrict(o));
                    }
                }
                v
            });
            assert!(rel(&lhs, &rhs) < 1e-10, "k={k}: {}", rel(&lhs, &rhs));
        }
    }

    #[test]
    fn omega_two_classical_form() {
        let g = random_jet_metric(7, 17, 0.05, 6).unwrap();
        let om = extended_obstruction(&g, 2).unwrap();
        let cl = omega2_classical(&g).unwrap();
        assert!(rel(&om, &cl) < 1e-8, "{}", rel(&om, &cl));
    }

    #[test]
    fn capability_gates() {
        let g = random_jet_metric(6, 1, 0.05, 8).unwrap();
        assert!(matches!(
            extended_obstruction(&g, 2),
            Err(Error::Capability(_))
        ));
        assert!(extended_obstruction(&g, 1).is_ok());
        assert!(higher_cotton(&g, 2).is_ok());
        let g = random_jet_metric(5, 1, 0.05, 3).unwrap();
        assert!(matches!(
            extended_obstruction(&g, 1),
            Err(Error::InsufficientOrder(_))
        ));
    }
}
