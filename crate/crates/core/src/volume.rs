//! Renormalized volume coefficients, elementary symmetric functions and
//! Newton tensors, the linearization tensors `L^(k)`, and the tabulated
//! building-block expressions for `g^(k)` and `v_k`.

use crate::error::{insufficient, Error, Result};
use crate::fg::RhoSeries;
use crate::geometry::{Slot, TensorJet};
use crate::jet::{factorial, Jet, JetMatrix, JetShape, ShapeKey, VarKind};
use std::sync::Arc;

/// Elementary symmetric functions `σ_0..σ_n` of an endomorphism and its
/// Newton tensors `T_(0)..T_(n−1)` (as endomorphisms).
#[derive(Clone, Debug)]
pub struct SymmetricFunctions {
    pub a: JetMatrix,
    pub sigma: Vec<Jet>,
    pub newton: Vec<JetMatrix>,
}

impl SymmetricFunctions {
    /// `σ_k`, zero for `k > n`.
    pub fn sigma(&self, k: usize) -> Jet {
        self.sigma
            .get(k)
            .cloned()
            .unwrap_or_else(|| Jet::zero(self.sigma[0].shape()))
    }

    /// `T^{ij}_(k) = T_(k)^i_l g^{lj}`.
    pub fn newton_raised(&self, k: usize, ginv: &JetMatrix) -> TensorJet {
        let t = &self.newton[k];
        let n = t.dim();
        TensorJet::from_fn(n, vec![Slot::Up; 2], |x| {
            let mut v = Jet::zero(self.sigma[0].shape());
            for l in 0..n {
                v.axpy(1.0, &t.get(x[0], l).mul(ginv.get(l, x[1])));
            }
            v
        })
    }
}

/// Newton identities on power sums, then `T_(k) = σ_k I − A T_(k−1)`.
pub fn sigma_and_newton(a: &JetMatrix) -> SymmetricFunctions {
    let n = a.dim();
    let shape = a.get(0, 0).shape().clone();
    let mut powers = vec![a.clone()];
    for _ in 1..n {
        let next = powers.last().unwrap().mul(a);
        powers.push(next);
    }
    let p: Vec<Jet> = powers.iter().map(|m| m.trace()).collect();
    let mut sigma = vec![Jet::constant(&shape, 1.0)];
    for k in 1..=n {
        let mut s = Jet::zero(&shape);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s.axpy(sign, &sigma[k - i].mul(&p[i - 1]));
        }
        sigma.push(s.scale(1.0 / k as f64));
    }
    let id = JetMatrix::identity(&shape, n);
    let mut newton = vec![id.clone()];
    for k in 1..n {
        let at = a.mul(&newton[k - 1]);
        let entries = (0..n * n)
            .map(|q| {
                let (i, j) = (q / n, q % n);
                id.get(i, j).mul(&sigma[k]).sub(at.get(i, j))
            })
            .collect();
        newton.push(JetMatrix::new(n, entries, false).expect("square"));
    }
    SymmetricFunctions {
        a: a.clone(),
        sigma,
        newton,
    }
}

/// `g^{-1}P` as an endomorphism.
pub fn schouten_endomorphism(ginv: &JetMatrix, p: &TensorJet) -> JetMatrix {
    let n = ginv.dim();
    let o = p.order().min(ginv.order());
    JetMatrix::from_fn(n, false, |i, j| {
        let mut v = Jet::zero(p.get(&[0, 0]).restrict(o).shape());
        for k in 0..n {
            v.axpy(1.0, &ginv.get(i, k).mul(p.get(&[k, j])).restrict(o));
        }
        v
    })
}

/// `v_0..v_K` at the base point (with x-jet payload) and `v(ρ)` as a jet with
/// a capped ρ variable appended.
#[derive(Clone, Debug)]
pub struct VolumeSeries {
    pub v: Vec<Jet>,
    pub v_of_rho: Jet,
}

impl VolumeSeries {
    pub fn count(&self) -> usize {
        self.v.len() - 1
    }

    pub fn rho_var(&self) -> usize {
        self.v_of_rho.n_vars() - 1
    }

    pub fn values(&self) -> Vec<f64> {
        self.v[1..].iter().map(|j| j.value()).collect()
    }
}

/// The family `g_ρ` truncated at `ρ^count` as jets over the base variables
/// plus a capped ρ, with x-order `xo`.
pub(crate) struct RhoFamily {
    pub n: usize,
    pub g: JetMatrix,
    pub ginv: JetMatrix,
    pub rho: usize,
}

fn rho_shape(base: &Arc<JetShape>, count: usize, xo: u8) -> Arc<JetShape> {
    let mut kinds = base.kinds().to_vec();
    kinds.push(VarKind::Capped(count as u8));
    JetShape::get(ShapeKey { order: xo, kinds })
}

pub(crate) fn rho_family(series: &RhoSeries, count: usize) -> Result<RhoFamily> {
    let n = series.n();
    let n_det = determined_count(series);
    if count > n_det {
        return Err(beyond(series, count));
    }
    let cs = series.working_coeffs();
    let xo = cs[..=count].iter().map(|c| c.order()).min().unwrap();
    let base = cs[0].shape().clone();
    let shape = rho_shape(&base, count, xo);
    let rho = shape.n_vars() - 1;
    let entries: Vec<Jet> = (0..n * n)
        .map(|q| {
            let mut acc = Jet::zero(&shape);
            for (j, c) in cs[..=count].iter().enumerate() {
                let cj = c.comps()[q].restrict(xo).scale(1.0 / factorial(j));
                let lifted = cj.lift(&[VarKind::Capped(count as u8)]).to_shape(&shape);
                acc.axpy(1.0, &lifted.mul_monomial(rho, j as u8));
            }
            acc
        })
        .collect();
    let g = JetMatrix::new(n, entries, true)?;
    let ginv = g.inverse()?;
    Ok(RhoFamily { n, g, ginv, rho })
}

fn determined_count(series: &RhoSeries) -> usize {
    series.working_coeffs().len() - 1
}

fn beyond(series: &RhoSeries, count: usize) -> Error {
    let n = series.n();
    if n % 2 == 0 && count > n / 2 {
        Error::Capability(format!(
            "k exceeds n/2: v_{count} is not defined for n = {n}"
        ))
    } else {
        insufficient(format!(
            "order {count} needs the expansion solved to rho-order {count}, have {}",
            determined_count(series)
        ))
    }
}

const LOGDET_AGREEMENT: f64 = 1e-10;

/// `v(ρ) = (det g_ρ / det g_0)^{1/2}` through the log-determinant, checked
/// against the direct determinant.
pub fn volume_coefficients(series: &RhoSeries, count: usize) -> Result<VolumeSeries> {
    let fam = rho_family(series, count)?;
    let n = fam.n;
    let dg = fam.g.map(|e| e.partial(fam.rho).expect("capped rho"));
    let mut tr = Jet::zero(dg.get(0, 0).shape());
    for i in 0..n {
        for j in 0..n {
            tr.axpy(1.0, &fam.ginv.get(i, j).mul(dg.get(j, i)));
        }
    }
    let log_ratio = tr.integrate(fam.rho);
    let v_of_rho = log_ratio.scale(0.5).exp();
    let det = fam.g.det()?;
    let det0 = det.slice(fam.rho, 0);
    let shape = det.shape().clone();
    let det0 = det0.lift(&[VarKind::Capped(count as u8)]).to_shape(&shape);
    let direct = det.div(&det0)?.sqrt()?;
    let dev = direct.max_abs_diff(&v_of_rho) / v_of_rho.max_abs().max(1e-300);
    if dev > LOGDET_AGREEMENT {
        return Err(Error::InternalConsistency(format!(
            "log-det and direct determinant disagree by {dev:.3e}"
        )));
    }
    let v = (0..=count)
        .map(|k| v_of_rho.slice(fam.rho, k as u8))
        .collect();
    Ok(VolumeSeries { v, v_of_rho })
}

const L_AGREEMENT: f64 = 1e-10;

/// `L^{ij}_(k)`, evaluated as the ρ^k coefficient of `−v(ρ)∫_0^ρ g^{-1}` and
/// as the expanded sum; the two must agree.
pub fn linearization_coefficients(series: &RhoSeries, k: usize) -> Result<TensorJet> {
    if k == 0 {
        return Err(Error::Usage("L^(k) starts at k = 1".into()));
    }
    let vol = volume_coefficients(series, k)?;
    let fam = rho_family(series, k)?;
    let n = fam.n;
    let rho = fam.rho;
    let product = TensorJet::from_fn(n, vec![Slot::Up; 2], |x| {
        let int = fam.ginv.get(x[0], x[1]).integrate(rho);
        vol.v_of_rho.mul(&int).slice(rho, k as u8).scale(-1.0)
    });
    let sum = TensorJet::from_fn(n, vec![Slot::Up; 2], |x| {
        let gi = fam.ginv.get(x[0], x[1]);
        let mut acc = Jet::zero(vol.v[0].shape());
        for l in 1..=k {
            let c = gi.slice(rho, (l - 1) as u8);
            acc.axpy(-1.0 / l as f64, &vol.v[k - l].mul(&c));
        }
        acc
    });
    let dev = product.sub(&sum).max_abs() / product.max_abs().max(sum.max_abs()).max(1e-300);
    if dev > L_AGREEMENT {
        return Err(Error::InternalConsistency(format!(
            "the two forms of L^({k}) disagree by {dev:.3e}"
        )));
    }
    Ok(product)
}

/// A factor in a contraction pattern: `0` is `P`, `l ≥ 1` is `Ω^(l)`.
type Chain = &'static [u8];

/// `coef · sym(F_1 g^{-1} F_2 ⋯ g^{-1} F_m)` for 2-tensor forms.
pub struct ChainTerm {
    pub coef: f64,
    pub chain: Chain,
}

/// `coef · Π tr(g^{-1}F_1 ⋯ g^{-1}F_m)` for scalar forms.
pub struct TraceTerm {
    pub coef: f64,
    pub traces: &'static [Chain],
}

const fn ct(coef: f64, chain: Chain) -> ChainTerm {
    ChainTerm { coef, chain }
}

const fn tt(coef: f64, traces: &'static [Chain]) -> TraceTerm {
    TraceTerm { coef, traces }
}

/// `½ g^(k)` for `k = 1..=5`.
pub static G_TABLE: [&[ChainTerm]; 5] = [
    &[ct(1.0, &[0])],
    &[ct(1.0, &[1]), ct(1.0, &[0, 0])],
    &[ct(1.0, &[2]), ct(4.0, &[0, 1])],
    &[
        ct(1.0, &[3]),
        ct(6.0, &[0, 2]),
        ct(4.0, &[1, 1]),
        ct(4.0, &[0, 1, 0]),
    ],
    &[
        ct(1.0, &[4]),
        ct(8.0, &[0, 3]),
        ct(14.0, &[2, 1]),
        ct(10.0, &[0, 2, 0]),
        ct(16.0, &[0, 1, 1]),
    ],
];

/// `v_k − σ_k(g^{-1}P)` for `k = 1..=4`.
pub static V_TABLE: [&[TraceTerm]; 4] = [
    &[],
    &[],
    &[tt(-1.0 / 3.0, &[&[0, 1]])],
    &[
        tt(1.0 / 3.0, &[&[0, 0, 1]]),
        tt(-1.0 / 3.0, &[&[0], &[0, 1]]),
        tt(-1.0 / 12.0, &[&[0, 2]]),
        tt(-1.0 / 12.0, &[&[1, 1]]),
    ],
];

fn weight(chain: Chain) -> usize {
    chain.iter().map(|&l| l as usize + 1).sum()
}

/// Every monomial of the `k`-th entry has `Σ (l+1) d_l = k`.
pub fn validate_tables() -> Result<()> {
    for (i, terms) in G_TABLE.iter().enumerate() {
        for t in terms.iter() {
            if weight(t.chain) != i + 1 || t.chain.iter().any(|&l| l as usize > i) {
                return Err(Error::InternalConsistency(format!(
                    "G_{} term {:?} has weight {}",
                    i + 1,
                    t.chain,
                    weight(t.chain)
                )));
            }
        }
    }
    for (i, terms) in V_TABLE.iter().enumerate() {
        for t in terms.iter() {
            let w: usize = t.traces.iter().map(|c| weight(c)).sum();
            if w != i + 1 {
                return Err(Error::InternalConsistency(format!(
                    "V_{} term {:?} has weight {w}",
                    i + 1,
                    t.traces
                )));
            }
        }
    }
    Ok(())
}

/// Inputs for evaluating the tabulated forms.
pub struct BuildingBlocks<'a> {
    pub ginv: &'a JetMatrix,
    pub p: &'a TensorJet,
    pub omegas: &'a [TensorJet],
}

impl BuildingBlocks<'_> {
    fn order(&self) -> u8 {
        self.omegas
            .iter()
            .map(|o| o.order())
            .fold(self.p.order().min(self.ginv.order()), u8::min)
    }

    fn factor(&self, l: u8) -> Result<JetMatrix> {
        let o = self.order();
        let t = if l == 0 {
            self.p
        } else {
            self.omegas
                .get(l as usize - 1)
                .ok_or_else(|| insufficient(format!("the tabulated form needs Omega^({l})")))?
        };
        Ok(t.restrict(o).to_matrix()?)
    }

    fn ginv(&self) -> JetMatrix {
        let o = self.order();
        self.ginv.map(|e| e.restrict(o))
    }

    fn chain(&self, chain: Chain) -> Result<JetMatrix> {
        let gi = self.ginv();
        let mut m = self.factor(chain[0])?;
        for &l in &chain[1..] {
            m = m.mul(&gi).mul(&self.factor(l)?);
        }
        Ok(m)
    }

    /// `G_k = g^(k)` in terms of `P` and `Ω^(1..k−1)`.
    pub fn g_form(&self, k: usize) -> Result<TensorJet> {
        if k == 0 || k > G_TABLE.len() {
            return Err(Error::Capability(format!(
                "G_k is tabulated for 1 <= k <= {}, got {k}",
                G_TABLE.len()
            )));
        }
        let n = self.ginv.dim();
        let mut acc: Option<TensorJet> = None;
        for t in G_TABLE[k - 1] {
            let m = self.chain(t.chain)?;
            let sym = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
                m.get(x[0], x[1]).add(m.get(x[1], x[0])).scale(t.coef)
            });
            acc = Some(match acc {
                None => sym,
                Some(a) => a.add(&sym),
            });
        }
        Ok(acc.unwrap())
    }

    /// `V_k = v_k` in terms of `σ_k(g^{-1}P)` and traces.
    pub fn v_form(&self, k: usize) -> Result<Jet> {
        if k == 0 || k > V_TABLE.len() {
            return Err(Error::Capability(format!(
                "V_k is tabulated for 1 <= k <= {}, got {k}",
                V_TABLE.len()
            )));
        }
        let gi = self.ginv();
        let a = gi.mul(&self.factor(0)?);
        let mut acc = sigma_and_newton(&a).sigma(k);
        for t in V_TABLE[k - 1] {
            let mut prod = Jet::constant(acc.shape(), t.coef);
            for c in t.traces {
                prod = prod.mul(&gi.mul(&self.chain(c)?).trace());
            }
            acc = acc.add(&prod);
        }
        Ok(acc)
    }
}

/// The pair `(G_k, V_k)`; `V_k` only for `k ≤ 4`.
pub fn building_block_forms(blocks: &BuildingBlocks, k: usize) -> Result<(TensorJet, Option<Jet>)> {
    validate_tables()?;
    let g = blocks.g_form(k)?;
    let v = if k <= V_TABLE.len() {
        Some(blocks.v_form(k)?)
    } else {
        None
    };
    Ok((g, v))
}
