use super::chart::{Axis, Chart};
use super::tensor::{MetricJet, Slot, TensorJet};
use crate::error::{insufficient, Error, Result};
use crate::jet::{Jet, JetMatrix};
use std::sync::OnceLock;

pub struct Curvature {
    pub gamma: TensorJet,
    pub riemann: TensorJet,
    pub ricci: TensorJet,
    pub scalar: Jet,
}

pub struct Schouten {
    pub p: TensorJet,
    pub j: Jet,
}

pub struct ConformalTensors {
    pub w: TensorJet,
    pub c: TensorJet,
    pub b: TensorJet,
}

fn base_chart(g: &MetricJet) -> Result<Chart> {
    if g.order() < 2 {
        return Err(insufficient(format!(
            "curvature needs metric order >= 2, have {}",
            g.order()
        )));
    }
    Chart::new((0..g.n()).map(Axis::Var).collect(), g.components().clone())
}

fn christoffel_tensor(chart: &Chart) -> TensorJet {
    let n = chart.dim();
    let zero = Jet::zero(chart.metric().get(0, 0).restrict(chart.order() - 1).shape());
    TensorJet::from_fn(n, vec![Slot::Up, Slot::Down, Slot::Down], |i| {
        chart
            .christoffel(i[0], i[1], i[2])
            .cloned()
            .unwrap_or_else(|| zero.clone())
    })
}

fn riemann_tensor(chart: &Chart) -> TensorJet {
    let n = chart.dim();
    let pair = |a: usize, b: usize| a * n + b;
    let full = TensorJet::from_fn(n, vec![Slot::Down; 4], |i| {
        let (a, b, c, d) = (i[0], i[1], i[2], i[3]);
        // canonical representative: a<b, c<d, (a,b)<=(c,d)
        if a < b && c < d && pair(a, b) <= pair(c, d) {
            chart.riemann(a, b, c, d)
        } else {
            Jet::zero(chart.metric().get(0, 0).shape())
        }
    });
    let o = chart.order() - 2;
    let zero = Jet::zero(chart.metric().get(0, 0).restrict(o).shape());
    TensorJet::from_fn(n, vec![Slot::Down; 4], |i| {
        let (mut a, mut b, mut c, mut d) = (i[0], i[1], i[2], i[3]);
        if a == b || c == d {
            return zero.clone();
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
        if pair(a, b) > pair(c, d) {
            std::mem::swap(&mut a, &mut c);
            std::mem::swap(&mut b, &mut d);
        }
        full.get(&[a, b, c, d]).scale(sign)
    })
}

/// Christoffel symbols, Riemann tensor (all indices down), Ricci and scalar
/// curvature. Output orders are `g.order() − 2` (Γ: `g.order() − 1`).
pub fn levi_civita_curvature(g: &MetricJet) -> Result<Curvature> {
    let chart = base_chart(g)?;
    let ginv = chart.inverse_metric().clone();
    let riemann = riemann_tensor(&chart);
    let ricci = contract_ricci(&riemann, &ginv);
    let scalar = trace(&ricci, &ginv);
    Ok(Curvature {
        gamma: christoffel_tensor(&chart),
        riemann,
        ricci,
        scalar,
    })
}

fn contract_ricci(rm: &TensorJet, ginv: &JetMatrix) -> TensorJet {
    let n = rm.n();
    TensorJet::symmetric_from_fn(n, vec![Slot::Down; 2], |i| {
        let mut acc: Option<Jet> = None;
        for a in 0..n {
            for c in 0..n {
                let t = ginv.get(a, c).mul(rm.get(&[a, i[0], c, i[1]]));
                acc = Some(match acc {
                    Some(s) => s.add(&t),
                    None => t,
                });
            }
        }
        acc.unwrap()
    })
}

/// `g^{ij} T_ij`
pub fn trace(t: &TensorJet, ginv: &JetMatrix) -> Jet {
    let n = t.n();
    let mut acc = ginv.get(0, 0).mul(t.get(&[0, 0]));
    for i in 0..n {
        for j in 0..n {
            if i + j > 0 {
                acc = acc.add(&ginv.get(i, j).mul(t.get(&[i, j])));
            }
        }
    }
    acc
}

/// Covariant derivative; the new (covariant) slot is appended last.
pub fn covariant_derivative(t: &TensorJet, gamma: &TensorJet) -> Result<TensorJet> {
    if t.order() < 1 {
        return Err(insufficient("covariant derivative of an order-0 tensor"));
    }
    let n = t.n();
    let rank = t.rank();
    let mut variance = t.variance().to_vec();
    variance.push(Slot::Down);
    let o = t.order() - 1;
    let var = t.variance().to_vec();
    Ok(TensorJet::from_fn(n, variance, |idx| {
        let k = idx[rank];
        let base = &idx[..rank];
        let mut acc = t.get(base).partial(k).expect("order checked").restrict(o);
        let mut sub = base.to_vec();
        for s in 0..rank {
            for e in 0..n {
                sub[s] = e;
                let comp = t.get(&sub);
                match var[s] {
                    Slot::Up => {
                        let gm = gamma.get(&[base[s], k, e]);
                        if !gm.is_zero() {
                            acc.axpy(1.0, &gm.mul_to(comp, o));
                        }
                    }
                    Slot::Down => {
                        let gm = gamma.get(&[e, k, base[s]]);
                        if !gm.is_zero() {
                            acc.axpy(-1.0, &gm.mul_to(comp, o));
                        }
                    }
                }
            }
            sub[s] = base[s];
        }
        acc
    }))
}

/// Lazily evaluated curvature quantities of one metric.
pub struct Geometry {
    g: MetricJet,
    ginv: JetMatrix,
    curv: OnceLock<Result<Curvature>>,
    schouten: OnceLock<Result<Schouten>>,
    dp: OnceLock<Result<TensorJet>>,
    ddp: OnceLock<Result<TensorJet>>,
    weyl: OnceLock<Result<TensorJet>>,
    cotton: OnceLock<Result<TensorJet>>,
    bach: OnceLock<Result<TensorJet>>,
}

impl Geometry {
    pub fn new(g: &MetricJet) -> Result<Geometry> {
        Ok(Geometry {
            ginv: g.inverse()?,
            g: g.clone(),
            curv: OnceLock::new(),
            schouten: OnceLock::new(),
            dp: OnceLock::new(),
            ddp: OnceLock::new(),
            weyl: OnceLock::new(),
            cotton: OnceLock::new(),
            bach: OnceLock::new(),
        })
    }

    pub fn metric(&self) -> &MetricJet {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn ginv(&self) -> &JetMatrix {
        &self.ginv
    }

    pub fn curvature(&self) -> Result<&Curvature> {
        self.curv
            .get_or_init(|| levi_civita_curvature(&self.g))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn gamma(&self) -> Result<&TensorJet> {
        Ok(&self.curvature()?.gamma)
    }

    pub fn nabla(&self, t: &TensorJet) -> Result<TensorJet> {
        covariant_derivative(t, self.gamma()?)
    }

    pub fn schouten(&self) -> Result<&Schouten> {
        self.schouten
            .get_or_init(|| {
                let n = self.n();
                if n < 3 {
                    return Err(Error::Capability(format!(
                        "the Schouten tensor needs dimension >= 3, got {n}"
                    )));
                }
                let c = self.curvature()?;
                let nf = n as f64;
                let j = c.scalar.scale(1.0 / (2.0 * (nf - 1.0)));
                let g = &self.g;
                let p = TensorJet::symmetric_from_fn(n, vec![Slot::Down; 2], |i| {
                    c.ricci
                        .get(i)
                        .sub(&j.mul(g.get(i[0], i[1])))
                        .scale(1.0 / (nf - 2.0))
                });
                Ok(Schouten { p, j })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn p(&self) -> Result<&TensorJet> {
        Ok(&self.schouten()?.p)
    }

    pub fn j(&self) -> Result<&Jet> {
        Ok(&self.schouten()?.j)
    }

    /// `P_ij,k`
    pub fn dp(&self) -> Result<&TensorJet> {
        self.dp
            .get_or_init(|| self.nabla(self.p()?))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `P_ij,kl`
    pub fn ddp(&self) -> Result<&TensorJet> {
        self.ddp
            .get_or_init(|| self.nabla(self.dp()?))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn weyl(&self) -> Result<&TensorJet> {
        self.weyl
            .get_or_init(|| {
                let p = self.p()?;
                let rm = &self.curvature()?.riemann;
                let g = &self.g;
                Ok(TensorJet::from_fn(self.n(), vec![Slot::Down; 4], |x| {
                    let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
                    let kn = p
                        .get(&[i, k])
                        .mul(g.get(j, l))
                        .sub(&p.get(&[j, k]).mul(g.get(i, l)))
                        .sub(&p.get(&[i, l]).mul(g.get(j, k)))
                        .add(&p.get(&[j, l]).mul(g.get(i, k)));
                    rm.get(x).sub(&kn)
                }))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `C_ijk = P_ij,k − P_ik,j`
    pub fn cotton(&self) -> Result<&TensorJet> {
        self.cotton
            .get_or_init(|| {
                let dp = self.dp()?;
                Ok(TensorJet::from_fn(self.n(), vec![Slot::Down; 3], |x| {
                    dp.get(x).sub(dp.get(&[x[0], x[2], x[1]]))
                }))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `B_ij = P_ij,k^k − P_ik,j^k − P^kl W_kijl`
    pub fn bach(&self) -> Result<&TensorJet> {
        self.bach
            .get_or_init(|| {
                if self.g.order() < 4 {
                    return Err(insufficient(format!(
                        "the Bach tensor needs metric order >= 4, have {}",
                        self.g.order()
                    )));
                }
                let n = self.n();
                let ddp = self.ddp()?;
                let w = self.weyl()?;
                let pu = self.raise_all(self.p()?);
                let gi = &self.ginv;
                Ok(TensorJet::symmetric_from_fn(n, vec![Slot::Down; 2], |x| {
                    let (i, j) = (x[0], x[1]);
                    let mut acc = Jet::zero(ddp.get(&[0, 0, 0, 0]).shape());
                    for k in 0..n {
                        for l in 0..n {
                            let gkl = gi.get(k, l);
                            let t = ddp.get(&[i, j, k, l]).sub(ddp.get(&[i, k, j, l]));
                            acc.axpy(1.0, &gkl.mul(&t));
                            acc.axpy(-1.0, &pu.get(&[k, l]).mul(w.get(&[k, i, j, l])));
                        }
                    }
                    acc
                }))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Raise every index of an all-covariant tensor.
    pub fn raise_all(&self, t: &TensorJet) -> TensorJet {
        let mut cur = t.clone();
        for s in 0..t.rank() {
            cur = self.raise(&cur, s);
        }
        cur
    }

    /// Raise slot `s` with `g^{-1}`.
    pub fn raise(&self, t: &TensorJet, s: usize) -> TensorJet {
        let n = t.n();
        let mut variance = t.variance().to_vec();
        variance[s] = Slot::Up;
        let gi = &self.ginv;
        TensorJet::from_fn(n, variance, |idx| {
            let mut sub = idx.to_vec();
            let mut acc: Option<Jet> = None;
            for e in 0..n {
                sub[s] = e;
                let term = gi.get(idx[s], e).mul(t.get(&sub));
                acc = Some(match acc {
                    Some(a) => a.add(&term),
                    None => term,
                });
            }
            acc.unwrap()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::multi_indices;
    use crate::jet::JetShape;
    use crate::zoo::{builtin_metric, random_jet_metric, Builtin};

    fn rel(a: &TensorJet, b: &TensorJet) -> f64 {
        let d = a.sub(b).max_abs();
        d / b.max_abs().max(a.max_abs()).max(1e-300)
    }

    fn rescale(g: &MetricJet, w: &Jet) -> MetricJet {
        let f = w.scale(2.0).exp();
        g.map(|c| c.mul(&f)).unwrap()
    }

    fn random_function(n: usize, order: u8, seed: u64) -> Jet {
        let s = JetShape::graded(n, order);
        let mut state = seed;
        Jet::from_fn(&s, |e| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let fact: f64 = e
                .iter()
                .map(|&k| crate::jet::factorial(k as usize))
                .product();
            0.4 * u / fact
        })
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let g = builtin_metric(&Builtin::Flat, 4, &[0.1; 4], 4).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let c = geo.curvature().unwrap();
        assert_eq!(c.riemann.max_abs(), 0.0);
        assert_eq!(c.scalar.max_abs(), 0.0);
        assert_eq!(geo.p().unwrap().max_abs(), 0.0);
        assert_eq!(geo.bach().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sphere_schouten_is_half_metric() {
        let n = 5;
        let g = builtin_metric(&Builtin::Sphere, n, &[0.2, -0.1, 0.3, 0.0, 0.4], 4).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let half = g.as_tensor().restrict(2).scale(0.5);
        assert!(rel(geo.p().unwrap(), &half) < 1e-12);
        let j = geo.j().unwrap();
        assert!((j.value() - n as f64 / 2.0).abs() < 1e-12);
        assert!(j.max_abs_diff(&Jet::constant(j.shape(), 2.5)) < 1e-11);
        let rm = &geo.curvature().unwrap().riemann;
        let want = TensorJet::from_fn(n, vec![Slot::Down; 4], |x| {
            g.get(x[0], x[2])
                .mul(g.get(x[1], x[3]))
                .sub(&g.get(x[0], x[3]).mul(g.get(x[1], x[2])))
                .restrict(2)
        });
        assert!(rel(rm, &want) < 1e-12);
    }

    #[test]
    fn sphere_ricci_matches_finite_differences() {
        // Ric_11 at the base point from the metric sampled on a stencil.
        let n = 3;
        let p = [0.3, -0.2, 0.1];
        let g = builtin_metric(&Builtin::Sphere, n, &p, 2).unwrap();
        let ric = levi_civita_curvature(&g).unwrap().ricci;
        let metric = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            4.0 / (1.0 + r2).powi(2)
        };
        // conformally flat e^{2u} δ in dimension 3: Ric = −Δu δ − ∇²u + du⊗du − |du|² δ
        let h = 1e-4;
        let u = |x: &[f64]| 0.5 * metric(x).ln();
        let at = |d: [f64; 3]| u(&[p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
        let mut hess = [[0.0; 3]; 3];
        let mut grad = [0.0; 3];
        for a in 0..3 {
            let mut ea = [0.0; 3];
            ea[a] = h;
            grad[a] = (at(ea) - at(ea.map(|v| -v))) / (2.0 * h);
            for b in 0..3 {
                let mut eb = [0.0; 3];
                eb[b] = h;
                let s = |sa: f64, sb: f64| at([0, 1, 2].map(|k| sa * ea[k] + sb * eb[k]));
                hess[a][b] =
                    (s(1.0, 1.0) - s(1.0, -1.0) - s(-1.0, 1.0) + s(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        let lap: f64 = (0..3).map(|a| hess[a][a]).sum();
        let du2: f64 = grad.iter().map(|v| v * v).sum();
        let ric11 = -lap - hess[0][0] + grad[0] * grad[0] - du2;
        assert!((ric.get(&[0, 0]).value() - ric11).abs() < 1e-6 * ric11.abs());
        assert!((ric11 - 2.0 * metric(&p)).abs() < 1e-6 * ric11.abs());
    }

    #[test]
    fn riemann_symmetries_on_random_metric() {
        let n = 4;
        let g = random_jet_metric(n, 3, 0.05, 4).unwrap();
        let rm = levi_civita_curvature(&g).unwrap().riemann;
        let scale = rm.max_abs();
        for x in multi_indices(n, 4) {
            let (a, b, c, d) = (x[0], x[1], x[2], x[3]);
            let r = rm.get(&x);
            assert!(r.add(rm.get(&[b, a, c, d])).max_abs() <= 1e-12 * scale);
            assert!(r.sub(rm.get(&[c, d, a, b])).max_abs() <= 1e-12 * scale);
            let bianchi = r.add(rm.get(&[a, c, d, b])).add(rm.get(&[a, d, b, c]));
            assert!(bianchi.max_abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn metric_is_parallel() {
        let g = random_jet_metric(4, 9, 0.05, 3).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let dg = geo.nabla(&g.as_tensor()).unwrap();
        assert!(dg.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_of_scalar_is_partial() {
        let g = random_jet_metric(3, 2, 0.05, 3).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let f = random_function(3, 3, 5);
        let df = geo
            .nabla(&TensorJet::new(3, vec![], vec![f.clone()]).unwrap())
            .unwrap();
        for k in 0..3 {
            assert_eq!(df.get(&[k]), &f.partial(k).unwrap());
        }
    }

    #[test]
    fn ricci_identity_for_covectors() {
        let n = 4;
        let g = random_jet_metric(n, 4, 0.05, 4).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let w = TensorJet::from_fn(n, vec![Slot::Down], |i| {
            random_function(n, 4, 10 + i[0] as u64)
        });
        let ddw = geo.nabla(&geo.nabla(&w).unwrap()).unwrap();
        let rm = &geo.curvature().unwrap().riemann;
        let wu = geo.raise(&w, 0);
        // ∇_d∇_c w_b − ∇_c∇_d w_b = R_abcd w^a
        let lhs = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            ddw.get(x).sub(ddw.get(&[x[0], x[2], x[1]]))
        });
        let rhs = TensorJet::from_fn(n, vec![Slot::Down; 3], |x| {
            let mut acc = Jet::zero(&JetShape::graded(n, 2));
            for a in 0..n {
                acc.axpy(1.0, &rm.get(&[a, x[0], x[1], x[2]]).mul(wu.get(&[a])));
            }
            acc
        });
        assert!(rel(&lhs, &rhs) < 1e-11);
    }

    #[test]
    fn contracted_second_bianchi() {
        let n = 5;
        let g = random_jet_metric(n, 6, 0.05, 4).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let c = geo.curvature().unwrap();
        let dric = geo.nabla(&c.ricci).unwrap();
        let lhs = TensorJet::from_fn(n, vec![Slot::Down], |i| {
            let mut acc = Jet::zero(&JetShape::graded(n, 1));
            for j in 0..n {
                for k in 0..n {
                    acc.axpy(1.0, &geo.ginv().get(j, k).mul(dric.get(&[i[0], j, k])));
                }
            }
            acc
        });
        let rhs = TensorJet::from_fn(n, vec![Slot::Down], |i| {
            c.scalar.partial(i[0]).unwrap().scale(0.5)
        });
        assert!(rel(&lhs, &rhs) < 1e-11);
    }

    #[test]
    fn conformal_tensor_symmetries() {
        let n = 5;
        let g = random_jet_metric(n, 8, 0.05, 5).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let gi = geo.ginv();
        let w = geo.weyl().unwrap();
        let b = geo.bach().unwrap();
        let c = geo.cotton().unwrap();
        let ws = w.max_abs();
        for x in multi_indices(n, 2) {
            let mut tr = Jet::zero(w.shape());
            for a in 0..n {
                for d in 0..n {
                    tr.axpy(1.0, &gi.get(a, d).mul(w.get(&[a, x[0], d, x[1]])));
                }
            }
            assert!(tr.max_abs() < 1e-11 * ws);
        }
        assert!(trace(b, gi).max_abs() < 1e-11 * b.max_abs());
        for x in multi_indices(n, 3) {
            assert_eq!(b.get(&[x[0], x[1]]), b.get(&[x[1], x[0]]));
            assert!(c.get(&x).add(c.get(&[x[0], x[2], x[1]])).max_abs() == 0.0);
        }
        assert!(
            rel(
                &trace_tensor(geo.p().unwrap(), gi),
                &TensorJet::scalar(geo.j().unwrap().clone())
            ) < 1e-12
        );
    }

    fn trace_tensor(t: &TensorJet, gi: &JetMatrix) -> TensorJet {
        TensorJet::scalar(trace(t, gi))
    }

    #[test]
    fn bach_divergence_identity() {
        let n = 5;
        let g = random_jet_metric(n, 42, 0.05, 5).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let db = geo.nabla(geo.bach().unwrap()).unwrap();
        let pu = geo.raise_all(geo.p().unwrap());
        let c = geo.cotton().unwrap();
        let gi = geo.ginv();
        let lhs = TensorJet::from_fn(n, vec![Slot::Down], |i| {
            let mut acc = Jet::zero(&JetShape::graded(n, 0));
            for j in 0..n {
                for k in 0..n {
                    acc.axpy(1.0, &gi.get(j, k).mul(db.get(&[i[0], j, k])));
                }
            }
            acc
        });
        let rhs = TensorJet::from_fn(n, vec![Slot::Down], |i| {
            let mut acc = Jet::zero(&JetShape::graded(n, 0));
            for j in 0..n {
                for k in 0..n {
                    acc.axpy((n - 4) as f64, &pu.get(&[j, k]).mul(c.get(&[j, k, i[0]])));
                }
            }
            acc
        });
        assert!(rel(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn conformally_flat_tensors_vanish() {
        let n = 4;
        let b = Builtin::ConfFlat("0.3*sin(x1)*x2 + 0.2*x3^2 - 0.1*x4*x1".into());
        let g = builtin_metric(&b, n, &[0.1, 0.2, -0.3, 0.4], 5).unwrap();
        let geo = Geometry::new(&g).unwrap();
        let scale = geo.curvature().unwrap().riemann.max_abs();
        assert!(geo.weyl().unwrap().max_abs() < 1e-10 * scale);
        assert!(geo.cotton().unwrap().max_abs() < 1e-10 * scale);
        assert!(geo.bach().unwrap().max_abs() < 1e-10 * scale);
    }

    #[test]
    fn weyl_is_conformally_invariant() {
        let n = 5;
        let g = random_jet_metric(n, 12, 0.05, 3).unwrap();
        let w = random_function(n, 3, 77);
        let gh = rescale(&g, &w);
        let a = Geometry::new(&g).unwrap();
        let b = Geometry::new(&gh).unwrap();
        let wa = a.raise(a.weyl().unwrap(), 0);
        let wb = b.raise(b.weyl().unwrap(), 0);
        assert!(rel(&wa, &wb) < 1e-10);
    }

    #[test]
    fn schouten_transformation_law() {
        let n = 5;
        let g = random_jet_metric(n, 13, 0.05, 4).unwrap();
        let w = random_function(n, 4, 5);
        let gh = rescale(&g, &w);
        let a = Geometry::new(&g).unwrap();
        let b = Geometry::new(&gh).unwrap();
        let wt = TensorJet::new(n, vec![], vec![w.clone()]).unwrap();
        let dw = a.nabla(&wt).unwrap();
        let hw = a.nabla(&dw).unwrap();
        let du = a.raise(&dw, 0);
        let mut sq = Jet::zero(&JetShape::graded(n, 3));
        for k in 0..n {
            sq.axpy(1.0, &dw.get(&[k]).mul(du.get(&[k])));
        }
        let want = TensorJet::from_fn(n, vec![Slot::Down; 2], |x| {
            a.p()
                .unwrap()
                .get(x)
                .sub(hw.get(x))
                .add(&dw.get(&[x[0]]).mul(dw.get(&[x[1]])))
                .sub(&sq.mul(g.get(x[0], x[1])).scale(0.5))
        });
        assert!(rel(b.p().unwrap(), &want) < 1e-12);
    }

    #[test]
    fn bach_transforms_by_weight_in_dimension_four() {
        let n = 4;
        let g = random_jet_metric(n, 21, 0.05, 4).unwrap();
        let w = random_function(n, 4, 8);
        let gh = rescale(&g, &w);
        let a = Geometry::new(&g).unwrap();
        let b = Geometry::new(&gh).unwrap();
        let f = w.scale(-2.0).exp();
        let want = a.bach().unwrap().map(|c| c.mul(&f));
        assert!(rel(b.bach().unwrap(), &want) < 1e-9);
    }

    #[test]
    fn low_order_and_dimension_errors() {
        let g = random_jet_metric(3, 1, 0.05, 1).unwrap();
        assert!(matches!(
            levi_civita_curvature(&g),
            Err(Error::InsufficientOrder(_))
        ));
        let g = random_jet_metric(3, 1, 0.05, 3).unwrap();
        assert!(matches!(
            Geometry::new(&g).unwrap().bach(),
            Err(Error::InsufficientOrder(_))
        ));
        let g = random_jet_metric(2, 1, 0.05, 3).unwrap();
        assert!(matches!(
            Geometry::new(&g).unwrap().p(),
            Err(Error::Capability(_))
        ));
    }
}
