//! Levi-Civita connection and curvature on a coordinate chart of jets.
//!
//! Each chart axis is either a jet variable or an *Euler* axis: a coordinate
//! `t` along which every component is homogeneous, stored on the slice `t=1`.
//! Differentiating along an Euler axis multiplies a component by its
//! homogeneity degree, which callers supply.

use crate::error::{insufficient, Result};
use crate::jet::{Jet, JetMatrix};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Var(usize),
    Euler,
}

pub struct Chart {
    axes: Vec<Axis>,
    g: JetMatrix,
    ginv: JetMatrix,
    // Γ_{a,bc} and Γ^a_{bc}, flattened [a][b][c]; None marks a zero component.
    gamma_low: Vec<Option<Jet>>,
    gamma: Vec<Option<Jet>>,
    order: u8,
}

impl Chart {
    pub fn new(axes: Vec<Axis>, g: JetMatrix) -> Result<Chart> {
        let m = axes.len();
        assert_eq!(g.dim(), m);
        let order = g.order();
        if order < 1 {
            return Err(insufficient(
                "a connection needs a metric of order at least 1",
            ));
        }
        let ginv = g.inverse()?;
        let mut chart = Chart {
            axes,
            g,
            ginv,
            gamma_low: Vec::new(),
            gamma: Vec::new(),
            order,
        };
        let nz = |j: Jet| (!j.is_zero()).then_some(j);
        let low: Vec<Option<Jet>> = (0..m * m * m)
            .into_par_iter()
            .map(|k| {
                let (a, b, c) = (k / (m * m), (k / m) % m, k % m);
                let t = chart
                    .dg(b, a, c)
                    .add(&chart.dg(c, a, b))
                    .sub(&chart.dg(a, b, c))
                    .scale(0.5);
                nz(t)
            })
            .collect();
        chart.gamma_low = low;
        let up: Vec<Option<Jet>> = (0..m * m * m)
            .into_par_iter()
            .map(|k| {
                let (a, b, c) = (k / (m * m), (k / m) % m, k % m);
                let mut acc: Option<Jet> = None;
                for d in 0..m {
                    let gi = chart.ginv.get(a, d);
                    if gi.is_zero() {
                        continue;
                    }
                    if let Some(l) = &chart.gamma_low[(d * m + b) * m + c] {
                        let p = gi.mul_to(l, order - 1);
                        acc = Some(match acc {
                            Some(s) => s.add(&p),
                            None => p,
                        });
                    }
                }
                acc.and_then(nz)
            })
            .collect();
        chart.gamma = up;
        Ok(chart)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn metric(&self) -> &JetMatrix {
        &self.g
    }

    pub fn inverse_metric(&self) -> &JetMatrix {
        &self.ginv
    }

    /// 1 if the axis is the Euler axis, else 0.
    pub fn z(&self, a: usize) -> i32 {
        (self.axes[a] == Axis::Euler) as i32
    }

    /// Homogeneity degree of a metric component `g_ab`.
    pub fn tdeg_metric(&self, a: usize, b: usize) -> i32 {
        2 - self.z(a) - self.z(b)
    }

    /// Derivative of a component along axis `a`; `tdeg` is the component's
    /// homogeneity degree (ignored for variable axes).
    pub fn d(&self, a: usize, f: &Jet, tdeg: i32) -> Jet {
        match self.axes[a] {
            Axis::Var(v) => f.partial(v).expect("chart derivative beyond jet order"),
            Axis::Euler => f.scale(tdeg as f64),
        }
    }

    /// `∂_c g_ab`
    pub fn dg(&self, c: usize, a: usize, b: usize) -> Jet {
        self.d(c, self.g.get(a, b), self.tdeg_metric(a, b))
    }

    /// `∂_c ∂_d g_ab`
    pub fn ddg(&self, c: usize, d: usize, a: usize, b: usize) -> Jet {
        let t = self.tdeg_metric(a, b);
        let first = self.d(d, self.g.get(a, b), t);
        self.d(c, &first, t - self.z(d))
    }

    fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        let m = self.dim();
        (a * m + b) * m + c
    }

    /// `Γ^a_{bc}`
    pub fn christoffel(&self, a: usize, b: usize, c: usize) -> Option<&Jet> {
        self.gamma[self.idx(a, b, c)].as_ref()
    }

    /// `Γ_{a,bc} = g_{ad} Γ^d_{bc}`
    pub fn christoffel_low(&self, a: usize, b: usize, c: usize) -> Option<&Jet> {
        self.gamma_low[self.idx(a, b, c)].as_ref()
    }

    /// Homogeneity degree of `Γ^a_{bc}`.
    pub fn tdeg_christoffel(&self, a: usize, b: usize, c: usize) -> i32 {
        self.z(a) - self.z(b) - self.z(c)
    }

    /// `R_abcd` with `R_abcd = g_ac g_bd − g_ad g_bc` on the unit sphere.
    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> Jet {
        let o = self.order.saturating_sub(2);
        let mut r = self
            .ddg(c, b, a, d)
            .add(&self.ddg(d, a, b, c))
            .sub(&self.ddg(c, a, b, d))
            .sub(&self.ddg(d, b, a, c))
            .scale(0.5)
            .restrict(o);
        for e in 0..self.dim() {
            if let (Some(x), Some(y)) = (self.christoffel_low(e, d, a), self.christoffel(e, c, b)) {
                r.axpy(1.0, &x.mul_to(y, o));
            }
            if let (Some(x), Some(y)) = (self.christoffel_low(e, c, a), self.christoffel(e, d, b)) {
                r.axpy(-1.0, &x.mul_to(y, o));
            }
        }
        r
    }

    /// `Ric_bd = R^a_{bad}`
    pub fn ricci(&self, b: usize, d: usize) -> Jet {
        let m = self.dim();
        let o = self.order.saturating_sub(2);
        let shape = self.g.get(0, 0).restrict(o);
        let mut r = Jet::zero(shape.shape());
        for a in 0..m {
            if let Some(x) = self.christoffel(a, d, b) {
                r.axpy(
                    1.0,
                    &self.d(a, x, self.tdeg_christoffel(a, d, b)).restrict(o),
                );
            }
            if let Some(x) = self.christoffel(a, a, b) {
                r.axpy(
                    -1.0,
                    &self.d(d, x, self.tdeg_christoffel(a, a, b)).restrict(o),
                );
            }
            for e in 0..m {
                if let (Some(x), Some(y)) = (self.christoffel(a, a, e), self.christoffel(e, d, b)) {
                    r.axpy(1.0, &x.mul_to(y, o));
                }
                if let (Some(x), Some(y)) = (self.christoffel(a, d, e), self.christoffel(e, a, b)) {
                    r.axpy(-1.0, &x.mul_to(y, o));
                }
            }
        }
        r
    }
}
