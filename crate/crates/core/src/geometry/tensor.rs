use crate::error::{Error, Result};
use crate::jet::{Jet, JetMatrix, JetShape, VarKind};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// Jet-valued tensor components on an n-dimensional chart, row-major.
#[derive(Clone, Debug)]
pub struct TensorJet {
    n: usize,
    variance: Vec<Slot>,
    comps: Vec<Jet>,
}

pub(crate) fn flat(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

pub(crate) fn unflat(n: usize, rank: usize, mut f: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for k in (0..rank).rev() {
        idx[k] = f % n;
        f /= n;
    }
    idx
}

impl TensorJet {
    pub fn new(n: usize, variance: Vec<Slot>, comps: Vec<Jet>) -> Result<TensorJet> {
        let want = n.pow(variance.len() as u32);
        if comps.len() != want {
            return Err(Error::Usage(format!(
                "tensor of rank {} in dimension {n} needs {want} components, got {}",
                variance.len(),
                comps.len()
            )));
        }
        Ok(TensorJet { n, variance, comps })
    }

    /// Components evaluated in parallel; the closure sees the full index.
    pub fn from_fn<F>(n: usize, variance: Vec<Slot>, f: F) -> TensorJet
    where
        F: Fn(&[usize]) -> Jet + Sync,
    {
        let rank = variance.len();
        let comps = (0..n.pow(rank as u32))
            .into_par_iter()
            .map(|k| f(&unflat(n, rank, k)))
            .collect();
        TensorJet { n, variance, comps }
    }

    /// Like [`from_fn`](Self::from_fn) but evaluates only sorted index pairs
    /// in the first two slots and mirrors them.
    pub fn symmetric_from_fn<F>(n: usize, variance: Vec<Slot>, f: F) -> TensorJet
    where
        F: Fn(&[usize]) -> Jet + Sync,
    {
        let rank = variance.len();
        assert!(rank >= 2);
        let mut comps: Vec<Option<Jet>> = (0..n.pow(rank as u32))
            .into_par_iter()
            .map(|k| {
                let idx = unflat(n, rank, k);
                (idx[0] <= idx[1]).then(|| f(&idx))
            })
            .collect();
        for k in 0..comps.len() {
            if comps[k].is_none() {
                let mut idx = unflat(n, rank, k);
                idx.swap(0, 1);
                comps[k] = comps[flat(n, &idx)].clone();
            }
        }
        TensorJet {
            n,
            variance,
            comps: comps.into_iter().map(Option::unwrap).collect(),
        }
    }

    pub fn scalar(j: Jet) -> TensorJet {
        TensorJet {
            n: 1,
            variance: vec![],
            comps: vec![j],
        }
    }

    pub fn from_matrix(m: &JetMatrix, variance: [Slot; 2]) -> TensorJet {
        TensorJet {
            n: m.dim(),
            variance: variance.to_vec(),
            comps: m.entries().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<JetMatrix> {
        if self.rank() != 2 {
            return Err(Error::Usage("matrix view needs a rank-2 tensor".into()));
        }
        let symmetric = (0..self.n).all(|i| (0..i).all(|j| self.get(&[i, j]) == self.get(&[j, i])));
        JetMatrix::new(self.n, self.comps.clone(), symmetric)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Slot] {
        &self.variance
    }

    pub fn comps(&self) -> &[Jet] {
        &self.comps
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[flat(self.n, idx)]
    }

    pub fn order(&self) -> u8 {
        self.comps.iter().map(|c| c.order()).min().unwrap_or(0)
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        self.comps[0].shape()
    }

    /// Constant terms, row-major.
    pub fn values(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c.value()).collect()
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet + Sync) -> TensorJet {
        TensorJet {
            n: self.n,
            variance: self.variance.clone(),
            comps: self.comps.par_iter().map(&f).collect(),
        }
    }

    pub fn zip(&self, other: &TensorJet, f: impl Fn(&Jet, &Jet) -> Jet + Sync) -> TensorJet {
        assert_eq!(self.comps.len(), other.comps.len());
        TensorJet {
            n: self.n,
            variance: self.variance.clone(),
            comps: self
                .comps
                .par_iter()
                .zip(other.comps.par_iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &TensorJet) -> TensorJet {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &TensorJet) -> TensorJet {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: f64) -> TensorJet {
        self.map(|a| a.scale(s))
    }

    pub fn restrict(&self, order: u8) -> TensorJet {
        self.map(|a| a.restrict(order))
    }

    /// Coefficient of `x_var^p` in every component.
    pub fn slice(&self, var: usize, p: u8) -> TensorJet {
        self.map(|a| a.slice(var, p))
    }

    /// Largest absolute constant term.
    pub fn max_abs_value(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.value().abs()))
    }

    /// Largest absolute coefficient of any component.
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

/// A Riemannian metric as a symmetric matrix of jets. The first `n` jet
/// variables are the chart coordinates; any further variables are parameters.
#[derive(Clone, Debug)]
pub struct MetricJet {
    n: usize,
    g: JetMatrix,
}

impl MetricJet {
    pub fn new(g: JetMatrix) -> Result<MetricJet> {
        let n = g.dim();
        if !g.is_symmetric() {
            return Err(Error::Input("metric components are not symmetric".into()));
        }
        let shape = g.get(0, 0).shape().clone();
        if shape.n_vars() < n || shape.kinds()[..n].iter().any(|k| *k != VarKind::Graded) {
            return Err(Error::Usage(format!(
                "metric jets need {n} leading coordinate variables"
            )));
        }
        if g.entries().iter().any(|e| e.shape().key() != shape.key()) {
            return Err(Error::Usage(
                "metric components over different jet shapes".into(),
            ));
        }
        let v = g.values();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("metric has non-finite components".into()));
        }
        if !is_positive_definite(&v, n) {
            return Err(Error::Input(
                "metric constant term is not positive definite".into(),
            ));
        }
        Ok(MetricJet { n, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u8 {
        self.g.order()
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        self.g.get(0, 0).shape()
    }

    /// Number of parameter variables after the coordinates.
    pub fn n_params(&self) -> usize {
        self.shape().n_vars() - self.n
    }

    pub fn components(&self) -> &JetMatrix {
        &self.g
    }

    pub fn get(&self, i: usize, j: usize) -> &Jet {
        self.g.get(i, j)
    }

    pub fn as_tensor(&self) -> TensorJet {
        TensorJet::from_matrix(&self.g, [Slot::Down, Slot::Down])
    }

    pub fn inverse(&self) -> Result<JetMatrix> {
        self.g.inverse()
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> Result<MetricJet> {
        MetricJet::new(self.g.map(f))
    }

    pub fn restrict(&self, order: u8) -> MetricJet {
        MetricJet {
            n: self.n,
            g: self.g.map(|e| e.restrict(order)),
        }
    }

    /// Constant-term matrix.
    pub fn values(&self) -> Vec<f64> {
        self.g.values()
    }
}

pub(crate) fn is_positive_definite(a: &[f64], n: usize) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// All multi-indices of the given rank in lexicographic order.
pub fn multi_indices(n: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n.pow(rank as u32)).map(move |k| unflat(n, rank, k))
}
