//! Monomial layouts for truncated Taylor expansions.
//!
//! A shape is a downward-closed set of multi-indices: every variable is either
//! *graded* (its degree counts toward the total-order bound) or *capped* (it has
//! its own degree bound and does not count toward the total order). Capped
//! variables carry infinitesimal parameters; graded ones carry coordinates.
//!
//! Monomials are stored sorted by graded degree, then capped degree, then
//! reverse-lexicographic exponent. Two consequences are relied on elsewhere:
//! a lower-order shape with the same variable kinds is a prefix of a higher
//! one, and every proper divisor of a monomial precedes it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Hard limits from the 4-bit packed monomial keys.
pub const MAX_VARS: usize = 16;
pub const MAX_DEGREE: u8 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Graded,
    Capped(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ShapeKey {
    pub order: u8,
    pub kinds: Vec<VarKind>,
}

/// Cauchy-product table in compressed-row form keyed by output monomial.
pub(crate) struct MulTable {
    pub start: Vec<u32>,
    pub pairs: Vec<(u32, u32)>,
}

pub struct JetShape {
    key: ShapeKey,
    exps: Vec<u8>,
    graded_deg: Vec<u8>,
    lookup: HashMap<u64, u32>,
    mul: OnceLock<MulTable>,
    shifts: Vec<OnceLock<Vec<u32>>>,
}

impl std::fmt::Debug for JetShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JetShape")
            .field("order", &self.key.order)
            .field("kinds", &self.key.kinds)
            .field("len", &self.len())
            .finish()
    }
}

fn pack(e: &[u8]) -> u64 {
    e.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &v)| acc | ((v as u64) << (4 * i)))
}

static CACHE: OnceLock<Mutex<HashMap<ShapeKey, Arc<JetShape>>>> = OnceLock::new();

impl JetShape {
    /// Shape with all variables graded.
    pub fn graded(n_vars: usize, order: u8) -> Arc<JetShape> {
        Self::get(ShapeKey {
            order,
            kinds: vec![VarKind::Graded; n_vars],
        })
    }

    /// Interned shape; construction happens at most once per key.
    pub fn get(key: ShapeKey) -> Arc<JetShape> {
        assert!(key.kinds.len() <= MAX_VARS, "too many jet variables");
        assert!(key.order <= MAX_DEGREE, "jet order too large");
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        if let Some(s) = map.get(&key) {
            return s.clone();
        }
        let shape = Arc::new(Self::build(key.clone()));
        map.insert(key, shape.clone());
        shape
    }

    fn build(key: ShapeKey) -> JetShape {
        let nv = key.kinds.len();
        let mut all: Vec<Vec<u8>> = Vec::new();
        let mut cur = vec![0u8; nv];
        enumerate(&key, 0, &mut cur, 0, &mut all);
        let gdeg = |e: &Vec<u8>| -> u8 {
            e.iter()
                .zip(&key.kinds)
                .filter(|(_, k)| matches!(k, VarKind::Graded))
                .map(|(v, _)| *v)
                .sum()
        };
        let cdeg = |e: &Vec<u8>| -> u8 {
            e.iter()
                .zip(&key.kinds)
                .filter(|(_, k)| matches!(k, VarKind::Capped(_)))
                .map(|(v, _)| *v)
                .sum()
        };
        all.sort_by(|a, b| {
            (gdeg(a), cdeg(a))
                .cmp(&(gdeg(b), cdeg(b)))
                .then_with(|| b.cmp(a))
        });
        let mut exps = Vec::with_capacity(all.len() * nv);
        let mut lookup = HashMap::with_capacity(all.len());
        let mut graded_deg = Vec::with_capacity(all.len());
        for (i, e) in all.iter().enumerate() {
            exps.extend_from_slice(e);
            lookup.insert(pack(e), i as u32);
            graded_deg.push(gdeg(e));
        }
        JetShape {
            shifts: (0..nv).map(|_| OnceLock::new()).collect(),
            key,
            exps,
            graded_deg,
            lookup,
            mul: OnceLock::new(),
        }
    }

    pub fn key(&self) -> &ShapeKey {
        &self.key
    }

    pub fn n_vars(&self) -> usize {
        self.key.kinds.len()
    }

    pub fn order(&self) -> u8 {
        self.key.order
    }

    pub fn kinds(&self) -> &[VarKind] {
        &self.key.kinds
    }

    pub fn len(&self) -> usize {
        self.graded_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn exps(&self, idx: usize) -> &[u8] {
        let nv = self.n_vars();
        &self.exps[idx * nv..(idx + 1) * nv]
    }

    pub fn graded_degree(&self, idx: usize) -> u8 {
        self.graded_deg[idx]
    }

    pub fn index_of(&self, e: &[u8]) -> Option<usize> {
        if e.len() != self.n_vars() || e.iter().any(|&v| v > MAX_DEGREE) {
            return None;
        }
        self.lookup.get(&pack(e)).map(|&i| i as usize)
    }

    /// Nilpotency bound of the maximal ideal: any product of more than this
    /// many non-constant factors truncates to zero.
    pub fn nilpotency(&self) -> usize {
        let caps: usize = self
            .key
            .kinds
            .iter()
            .map(|k| match k {
                VarKind::Capped(c) => *c as usize,
                VarKind::Graded => 0,
            })
            .sum();
        self.key.order as usize + caps
    }

    pub(crate) fn mul_table(&self) -> &MulTable {
        self.mul.get_or_init(|| {
            let nv = self.n_vars();
            let mut start = Vec::with_capacity(self.len() + 1);
            let mut pairs = Vec::new();
            let mut sub = vec![0u8; nv];
            let mut rest = vec![0u8; nv];
            for k in 0..self.len() {
                start.push(pairs.len() as u32);
                let target = self.exps(k).to_vec();
                sub.iter_mut().for_each(|v| *v = 0);
                loop {
                    for v in 0..nv {
                        rest[v] = target[v] - sub[v];
                    }
                    let i = self.lookup[&pack(&sub)];
                    let j = self.lookup[&pack(&rest)];
                    pairs.push((i, j));
                    // odometer over sub <= target
                    let mut v = 0;
                    while v < nv {
                        if sub[v] < target[v] {
                            sub[v] += 1;
                            break;
                        }
                        sub[v] = 0;
                        v += 1;
                    }
                    if v == nv {
                        break;
                    }
                }
            }
            start.push(pairs.len() as u32);
            MulTable { start, pairs }
        })
    }

    /// For each monomial of this shape, the index of the monomial multiplied by
    /// `x_var` (or `u32::MAX` when it falls outside the shape).
    pub(crate) fn shift(&self, var: usize) -> &[u32] {
        self.shifts[var].get_or_init(|| {
            let mut e = vec![0u8; self.n_vars()];
            (0..self.len())
                .map(|i| {
                    e.copy_from_slice(self.exps(i));
                    e[var] += 1;
                    self.index_of(&e).map(|j| j as u32).unwrap_or(u32::MAX)
                })
                .collect()
        })
    }
}

fn enumerate(key: &ShapeKey, var: usize, cur: &mut Vec<u8>, graded: u8, out: &mut Vec<Vec<u8>>) {
    if var == key.kinds.len() {
        out.push(cur.clone());
        return;
    }
    let max = match key.kinds[var] {
        VarKind::Graded => key.order - graded,
        VarKind::Capped(c) => c,
    };
    for d in 0..=max {
        cur[var] = d;
        let g = match key.kinds[var] {
            VarKind::Graded => graded + d,
            VarKind::Capped(_) => graded,
        };
        enumerate(key, var + 1, cur, g, out);
    }
    cur[var] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn monomial_counts() {
        for nv in 1..5 {
            for d in 0..6u8 {
                let s = JetShape::graded(nv, d);
                assert_eq!(s.len(), binom(nv + d as usize, d as usize));
            }
        }
        let s = JetShape::get(ShapeKey {
            order: 3,
            kinds: vec![VarKind::Graded, VarKind::Graded, VarKind::Capped(1)],
        });
        assert_eq!(s.len(), 2 * binom(5, 3));
    }

    #[test]
    fn lower_order_is_prefix_and_divisors_precede() {
        let hi = JetShape::graded(3, 5);
        let lo = JetShape::graded(3, 3);
        for i in 0..lo.len() {
            assert_eq!(lo.exps(i), hi.exps(i));
        }
        let t = hi.mul_table();
        for k in 0..hi.len() {
            for &(i, j) in &t.pairs[t.start[k] as usize..t.start[k + 1] as usize] {
                if i as usize != k && j as usize != k {
                    assert!((i as usize) < k && (j as usize) < k);
                }
            }
        }
    }

    #[test]
    fn interned_once() {
        let a = JetShape::graded(4, 4);
        let b = JetShape::graded(4, 4);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
