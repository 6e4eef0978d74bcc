//! Truncated multivariate Taylor expansions ("jets").
//!
//! A [`Jet`] stores `(∂^α f)(base)/α!` for every multi-index `α` in its
//! [`JetShape`]. Arithmetic is exact up to truncation: binary operations
//! return the meet of the two shapes (lower order, smaller caps).

mod matrix;
mod shape;

pub(crate) use matrix::small_inverse;
pub use matrix::{JetMatrix, DEFAULT_MAX_CONDITION};
pub use shape::{JetShape, ShapeKey, VarKind, MAX_DEGREE, MAX_VARS};

use crate::error::{insufficient, Error, Result};
use std::sync::Arc;

#[derive(Clone)]
pub struct Jet {
    shape: Arc<JetShape>,
    c: Vec<f64>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Jet(order={}, vars={}, ", self.order(), self.n_vars())?;
        let shown: Vec<_> = self.c.iter().take(8).collect();
        write!(
            f,
            "{:?}{})",
            shown,
            if self.c.len() > 8 { " …" } else { "" }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Analytic {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Pow(f64),
}

/// Fallible binary arithmetic.
pub fn jet_arith(a: &Jet, b: &Jet, op: ArithOp) -> Result<Jet> {
    a.check_compatible(b)?;
    Ok(match op {
        ArithOp::Add => a.add(b),
        ArithOp::Sub => a.sub(b),
        ArithOp::Mul => a.mul(b),
        ArithOp::Div => a.div(b)?,
    })
}

pub fn jet_analytic(f: Analytic, a: &Jet) -> Result<Jet> {
    match f {
        Analytic::Exp => Ok(a.exp()),
        Analytic::Log => a.ln(),
        Analytic::Sqrt => a.sqrt(),
        Analytic::Sin => Ok(a.sin()),
        Analytic::Cos => Ok(a.cos()),
        Analytic::Pow(r) => a.powf(r),
    }
}

pub fn jet_partial(a: &Jet, var: usize) -> Result<Jet> {
    if var >= a.n_vars() {
        return Err(Error::Usage(format!(
            "variable {var} out of range for a jet in {} variables",
            a.n_vars()
        )));
    }
    a.partial(var)
}

impl Jet {
    pub fn zero(shape: &Arc<JetShape>) -> Jet {
        Jet {
            shape: shape.clone(),
            c: vec![0.0; shape.len()],
        }
    }

    pub fn constant(shape: &Arc<JetShape>, v: f64) -> Jet {
        let mut j = Jet::zero(shape);
        j.c[0] = v;
        j
    }

    /// The coordinate function `base + x_var`.
    pub fn variable(shape: &Arc<JetShape>, var: usize, base: f64) -> Jet {
        let mut j = Jet::constant(shape, base);
        let mut e = vec![0u8; shape.n_vars()];
        e[var] = 1;
        if let Some(i) = shape.index_of(&e) {
            j.c[i] = 1.0;
        }
        j
    }

    pub fn from_coeffs(shape: &Arc<JetShape>, c: Vec<f64>) -> Result<Jet> {
        if c.len() != shape.len() {
            return Err(Error::Usage(format!(
                "expected {} coefficients, got {}",
                shape.len(),
                c.len()
            )));
        }
        Ok(Jet {
            shape: shape.clone(),
            c,
        })
    }

    /// Build from a closure over exponent vectors.
    pub fn from_fn(shape: &Arc<JetShape>, mut f: impl FnMut(&[u8]) -> f64) -> Jet {
        let c = (0..shape.len()).map(|i| f(shape.exps(i))).collect();
        Jet {
            shape: shape.clone(),
            c,
        }
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        &self.shape
    }

    pub fn order(&self) -> u8 {
        self.shape.order()
    }

    pub fn n_vars(&self) -> usize {
        self.shape.n_vars()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.c
    }

    /// Taylor coefficient at an exponent vector (zero outside the shape).
    pub fn coeff(&self, e: &[u8]) -> f64 {
        self.shape.index_of(e).map(|i| self.c[i]).unwrap_or(0.0)
    }

    /// Partial derivative `∂^α f(base)`.
    pub fn derivative(&self, e: &[u8]) -> f64 {
        let fact: f64 = e.iter().map(|&k| factorial(k as usize)).product();
        self.coeff(e) * fact
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest coefficient difference over the common shape.
    pub fn max_abs_diff(&self, other: &Jet) -> f64 {
        let (a, b) = self.meet_pair(other);
        a.c.iter()
            .zip(&b.c)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn check_compatible(&self, other: &Jet) -> Result<()> {
        let ka = self.shape.kinds();
        let kb = other.shape.kinds();
        let same = ka.len() == kb.len()
            && ka.iter().zip(kb).all(|(x, y)| {
                matches!(
                    (x, y),
                    (VarKind::Graded, VarKind::Graded) | (VarKind::Capped(_), VarKind::Capped(_))
                )
            });
        if same {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "jets over incompatible variable sets ({} vs {} variables)",
                ka.len(),
                kb.len()
            )))
        }
    }

    fn meet_shape(&self, other: &Jet) -> Arc<JetShape> {
        if Arc::ptr_eq(&self.shape, &other.shape) {
            return self.shape.clone();
        }
        self.check_compatible(other)
            .unwrap_or_else(|e| panic!("{e}"));
        let ka = self.shape.kinds();
        let kb = other.shape.kinds();
        if ka == kb {
            return if self.order() <= other.order() {
                self.shape.clone()
            } else {
                other.shape.clone()
            };
        }
        let kinds = ka
            .iter()
            .zip(kb)
            .map(|(x, y)| match (x, y) {
                (VarKind::Capped(p), VarKind::Capped(q)) => VarKind::Capped(*p.min(q)),
                _ => VarKind::Graded,
            })
            .collect();
        JetShape::get(ShapeKey {
            order: self.order().min(other.order()),
            kinds,
        })
    }

    fn meet_pair(&self, other: &Jet) -> (Jet, Jet) {
        let s = self.meet_shape(other);
        (self.to_shape(&s), other.to_shape(&s))
    }

    /// Re-express in a smaller (or equal) shape over the same variables.
    pub fn to_shape(&self, s: &Arc<JetShape>) -> Jet {
        if Arc::ptr_eq(s, &self.shape) {
            return self.clone();
        }
        if s.kinds() == self.shape.kinds() && s.order() <= self.order() {
            return Jet {
                shape: s.clone(),
                c: self.c[..s.len()].to_vec(),
            };
        }
        Jet::from_fn(s, |e| self.coeff(e))
    }

    /// Truncate to a lower graded order.
    pub fn restrict(&self, order: u8) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let s = JetShape::get(ShapeKey {
            order,
            kinds: self.shape.kinds().to_vec(),
        });
        self.to_shape(&s)
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let s = self.meet_shape(other);
        let prefix = |j: &Jet| Arc::ptr_eq(&j.shape, &s) || j.shape.kinds() == s.kinds();
        if prefix(self) && prefix(other) {
            let n = s.len();
            let c = self.c[..n]
                .iter()
                .zip(&other.c[..n])
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Jet { shape: s, c };
        }
        let (a, b) = (self.to_shape(&s), other.to_shape(&s));
        let c = a.c.iter().zip(&b.c).map(|(&x, &y)| f(x, y)).collect();
        Jet { shape: s, c }
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            shape: self.shape.clone(),
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    /// `self += s * other`, truncating `other` to `self`'s shape.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        if Arc::ptr_eq(&self.shape, &other.shape)
            || (self.shape.kinds() == other.shape.kinds() && other.order() >= self.order())
        {
            let n = self.c.len();
            for (x, y) in self.c.iter_mut().zip(&other.c[..n]) {
                *x += s * y;
            }
        } else if self.shape.kinds() == other.shape.kinds() {
            // other is shorter: result order drops
            let n = other.c.len();
            self.c.truncate(n);
            self.shape = other.shape.clone();
            for (x, y) in self.c.iter_mut().zip(&other.c) {
                *x += s * y;
            }
        } else {
            *self = self.add(&other.scale(s));
        }
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let s = self.meet_shape(other);
        self.mul_in(other, &s)
    }

    /// Product truncated at a graded order no larger than the operands'.
    pub fn mul_to(&self, other: &Jet, order: u8) -> Jet {
        let s = self.meet_shape(other);
        if order >= s.order() {
            return self.mul_in(other, &s);
        }
        let s = JetShape::get(ShapeKey {
            order,
            kinds: s.kinds().to_vec(),
        });
        self.mul_in(other, &s)
    }

    fn mul_in(&self, other: &Jet, s: &Arc<JetShape>) -> Jet {
        let a_ok = self.shape.kinds() == s.kinds();
        let b_ok = other.shape.kinds() == s.kinds();
        let ta;
        let tb;
        let a: &[f64] = if a_ok {
            &self.c
        } else {
            ta = self.to_shape(s);
            &ta.c
        };
        let b: &[f64] = if b_ok {
            &other.c
        } else {
            tb = other.to_shape(s);
            &tb.c
        };
        let t = s.mul_table();
        let mut c = vec![0.0; s.len()];
        for (k, out) in c.iter_mut().enumerate() {
            let lo = t.start[k] as usize;
            let hi = t.start[k + 1] as usize;
            let mut acc = 0.0;
            for &(i, j) in &t.pairs[lo..hi] {
                acc += a[i as usize] * b[j as usize];
            }
            *out = acc;
        }
        Jet {
            shape: s.clone(),
            c,
        }
    }

    pub fn square(&self) -> Jet {
        self.mul(self)
    }

    pub fn recip(&self) -> Result<Jet> {
        let a0 = self.c[0];
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::SingularInput(format!(
                "reciprocal of a jet with constant term {a0}"
            )));
        }
        let s = &self.shape;
        let t = s.mul_table();
        let inv0 = 1.0 / a0;
        let mut b = vec![0.0; s.len()];
        b[0] = inv0;
        for k in 1..s.len() {
            let lo = t.start[k] as usize;
            let hi = t.start[k + 1] as usize;
            let mut acc = 0.0;
            for &(i, j) in &t.pairs[lo..hi] {
                if i != 0 {
                    acc += self.c[i as usize] * b[j as usize];
                }
            }
            b[k] = -acc * inv0;
        }
        Ok(Jet {
            shape: s.clone(),
            c: b,
        })
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        Ok(self.mul(&other.recip()?))
    }

    /// Compose the univariate series `Σ d[m] h^m` with the nilpotent part h.
    fn compose(&self, d: &[f64]) -> Jet {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let m = d.len() - 1;
        let mut r = Jet::constant(&self.shape, d[m]);
        for k in (0..m).rev() {
            r = r.mul(&h);
            r.c[0] += d[k];
        }
        r
    }

    fn taylor_len(&self) -> usize {
        self.shape.nilpotency() + 1
    }

    pub fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        let d: Vec<f64> = (0..self.taylor_len()).map(|m| e / factorial(m)).collect();
        self.compose(&d)
    }

    pub fn ln(&self) -> Result<Jet> {
        let a0 = self.c[0];
        if a0 <= 0.0 || !a0.is_finite() {
            return Err(Error::SingularInput(format!("log of constant term {a0}")));
        }
        let d: Vec<f64> = (0..self.taylor_len())
            .map(|m| {
                if m == 0 {
                    a0.ln()
                } else {
                    let s = if m % 2 == 1 { 1.0 } else { -1.0 };
                    s / (m as f64 * a0.powi(m as i32))
                }
            })
            .collect();
        Ok(self.compose(&d))
    }

    pub fn powf(&self, r: f64) -> Result<Jet> {
        let a0 = self.c[0];
        if a0 <= 0.0 || !a0.is_finite() {
            return Err(Error::SingularInput(format!(
                "real power {r} of constant term {a0}"
            )));
        }
        let mut d = Vec::with_capacity(self.taylor_len());
        let mut binom = 1.0;
        for m in 0..self.taylor_len() {
            d.push(binom * a0.powf(r - m as f64));
            binom *= (r - m as f64) / (m as f64 + 1.0);
        }
        Ok(self.compose(&d))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.powf(0.5)
    }

    /// Integer power; negative exponents need a nonzero constant term.
    pub fn powi(&self, k: i32) -> Result<Jet> {
        if k < 0 {
            return self.recip()?.powi(-k);
        }
        let mut r = Jet::constant(&self.shape, 1.0);
        let mut b = self.clone();
        let mut e = k as u32;
        while e > 0 {
            if e & 1 == 1 {
                r = r.mul(&b);
            }
            e >>= 1;
            if e > 0 {
                b = b.square();
            }
        }
        Ok(r)
    }

    fn trig(&self, phase: f64) -> Jet {
        let a0 = self.c[0];
        let d: Vec<f64> = (0..self.taylor_len())
            .map(|m| (a0 + phase + m as f64 * std::f64::consts::FRAC_PI_2).sin() / factorial(m))
            .collect();
        self.compose(&d)
    }

    pub fn sin(&self) -> Jet {
        self.trig(0.0)
    }

    pub fn cos(&self) -> Jet {
        self.trig(std::f64::consts::FRAC_PI_2)
    }

    /// `∂/∂x_var`. Graded variables lose one order; capped ones lose one cap.
    pub fn partial(&self, var: usize) -> Result<Jet> {
        match self.shape.kinds()[var] {
            VarKind::Graded => {
                if self.order() == 0 {
                    return Err(insufficient("partial derivative of an order-0 jet"));
                }
                let s = JetShape::get(ShapeKey {
                    order: self.order() - 1,
                    kinds: self.shape.kinds().to_vec(),
                });
                let shift = self.shape.shift(var);
                let c = (0..s.len())
                    .map(|i| {
                        let e = s.exps(i)[var] as f64 + 1.0;
                        e * self.c[shift[i] as usize]
                    })
                    .collect();
                Ok(Jet { shape: s, c })
            }
            VarKind::Capped(cap) => {
                if cap == 0 {
                    return Err(insufficient(
                        "partial derivative along an exhausted parameter",
                    ));
                }
                let mut kinds = self.shape.kinds().to_vec();
                kinds[var] = VarKind::Capped(cap - 1);
                let s = JetShape::get(ShapeKey {
                    order: self.order(),
                    kinds,
                });
                let mut e = vec![0u8; self.n_vars()];
                Ok(Jet::from_fn(&s, |ex| {
                    e.copy_from_slice(ex);
                    e[var] += 1;
                    (ex[var] as f64 + 1.0) * self.coeff(&e)
                }))
            }
        }
    }

    /// Antiderivative along `x_var` vanishing on `x_var = base`. Graded
    /// variables gain one order; capped ones gain one cap.
    pub fn integrate(&self, var: usize) -> Jet {
        let mut kinds = self.shape.kinds().to_vec();
        let order = match kinds[var] {
            VarKind::Graded => self.order() + 1,
            VarKind::Capped(cap) => {
                kinds[var] = VarKind::Capped(cap + 1);
                self.order()
            }
        };
        let s = JetShape::get(ShapeKey { order, kinds });
        let mut e = vec![0u8; self.n_vars()];
        Jet::from_fn(&s, |ex| {
            if ex[var] == 0 {
                return 0.0;
            }
            e.copy_from_slice(ex);
            e[var] -= 1;
            self.coeff(&e) / ex[var] as f64
        })
    }

    /// Coefficient of `x_var^p`, as a jet in the remaining variables.
    pub fn slice(&self, var: usize, p: u8) -> Jet {
        let mut kinds = self.shape.kinds().to_vec();
        let kind = kinds.remove(var);
        let order = match kind {
            VarKind::Graded => self.order().saturating_sub(p),
            VarKind::Capped(_) => self.order(),
        };
        let s = JetShape::get(ShapeKey { order, kinds });
        let mut e = vec![0u8; self.n_vars()];
        Jet::from_fn(&s, |ex| {
            e[..var].copy_from_slice(&ex[..var]);
            e[var] = p;
            e[var + 1..].copy_from_slice(&ex[var..]);
            self.coeff(&e)
        })
    }

    pub fn slice_last(&self, p: u8) -> Jet {
        self.slice(self.n_vars() - 1, p)
    }

    /// Embed into a shape with more variables; `map[v]` is the target index
    /// of source variable `v`. Missing coefficients are zero.
    pub fn embed(&self, target: &Arc<JetShape>, map: &[usize]) -> Jet {
        assert_eq!(map.len(), self.n_vars());
        let mut out = Jet::zero(target);
        let mut e = vec![0u8; target.n_vars()];
        for i in 0..self.shape.len() {
            e.iter_mut().for_each(|v| *v = 0);
            for (v, &x) in self.shape.exps(i).iter().enumerate() {
                e[map[v]] = x;
            }
            if let Some(j) = target.index_of(&e) {
                out.c[j] = self.c[i];
            }
        }
        out
    }

    /// Append variables of the given kinds; the order is unchanged.
    pub fn lift(&self, extra: &[VarKind]) -> Jet {
        let mut kinds = self.shape.kinds().to_vec();
        kinds.extend_from_slice(extra);
        let s = JetShape::get(ShapeKey {
            order: self.order(),
            kinds,
        });
        let map: Vec<usize> = (0..self.n_vars()).collect();
        self.embed(&s, &map)
    }

    /// Evaluate the truncated polynomial at a displacement from the base point.
    pub fn eval(&self, dx: &[f64]) -> f64 {
        assert_eq!(dx.len(), self.n_vars());
        (0..self.shape.len())
            .map(|i| {
                let e = self.shape.exps(i);
                self.c[i]
                    * e.iter()
                        .zip(dx)
                        .map(|(&k, &x)| x.powi(k as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Multiply by `x_var^p` (graded order is unchanged; high terms drop).
    pub fn mul_monomial(&self, var: usize, p: u8) -> Jet {
        let mut e = vec![0u8; self.n_vars()];
        Jet::from_fn(&self.shape, |ex| {
            if ex[var] < p {
                return 0.0;
            }
            e.copy_from_slice(ex);
            e[var] -= p;
            self.coeff(&e)
        })
    }
}

pub(crate) fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * k as f64)
}

impl PartialEq for Jet {
    fn eq(&self, other: &Jet) -> bool {
        self.shape.key() == other.shape.key() && self.c == other.c
    }
}
