use super::{Jet, JetShape};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Condition-number bound above which the constant term counts as singular.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// Square matrix of jets sharing one shape.
#[derive(Clone, Debug)]
pub struct JetMatrix {
    dim: usize,
    entries: Vec<Jet>,
    symmetric: bool,
}

impl JetMatrix {
    pub fn new(dim: usize, entries: Vec<Jet>, symmetric: bool) -> Result<JetMatrix> {
        if entries.len() != dim * dim {
            return Err(Error::Usage(format!(
                "expected {} entries for a {dim}x{dim} matrix",
                dim * dim
            )));
        }
        let m = JetMatrix {
            dim,
            entries,
            symmetric,
        };
        if symmetric {
            for i in 0..dim {
                for j in 0..i {
                    if m.get(i, j) != m.get(j, i) {
                        return Err(Error::Usage(format!(
                            "matrix flagged symmetric but entries ({i},{j}) and ({j},{i}) differ"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn from_fn(
        dim: usize,
        symmetric: bool,
        mut f: impl FnMut(usize, usize) -> Jet,
    ) -> JetMatrix {
        let mut entries: Vec<Option<Jet>> = vec![None; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if symmetric && j < i {
                    continue;
                }
                let v = f(i, j);
                if symmetric {
                    entries[j * dim + i] = Some(v.clone());
                }
                entries[i * dim + j] = Some(v);
            }
        }
        JetMatrix {
            dim,
            entries: entries.into_iter().map(|e| e.unwrap()).collect(),
            symmetric,
        }
    }

    pub fn identity(shape: &Arc<JetShape>, dim: usize) -> JetMatrix {
        JetMatrix::from_fn(dim, true, |i, j| {
            Jet::constant(shape, if i == j { 1.0 } else { 0.0 })
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Jet] {
        &self.entries
    }

    pub fn order(&self) -> u8 {
        self.entries.iter().map(|e| e.order()).min().unwrap_or(0)
    }

    /// Constant-term matrix, row-major.
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value()).collect()
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> JetMatrix {
        JetMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(f).collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn mul(&self, other: &JetMatrix) -> JetMatrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        JetMatrix::from_fn(n, false, |i, j| {
            let mut acc = self.get(i, 0).mul(other.get(0, j));
            for k in 1..n {
                acc = acc.add(&self.get(i, k).mul(other.get(k, j)));
            }
            acc
        })
    }

    /// Inverse, exact to the common truncation order.
    ///
    /// Coefficient matrices are combined along the Cauchy-product table in
    /// storage order, which is a valid recursion order since divisors precede
    /// their multiples. Zero off-diagonal blocks are detected and each
    /// diagonal block is inverted separately.
    pub fn inverse(&self) -> Result<JetMatrix> {
        self.inverse_with(DEFAULT_MAX_CONDITION)
    }

    pub fn inverse_with(&self, max_condition: f64) -> Result<JetMatrix> {
        let n = self.dim;
        let shape = common_shape(&self.entries);
        let blocks = self.blocks();
        let mut out: Vec<Option<Jet>> = vec![None; n * n];
        for block in &blocks {
            let inv = invert_block(self, block, &shape, max_condition)?;
            let b = block.len();
            for (bi, &i) in block.iter().enumerate() {
                for (bj, &j) in block.iter().enumerate() {
                    out[i * n + j] = Some(inv[bi * b + bj].clone());
                }
            }
        }
        let zero = Jet::zero(&shape);
        let entries = out
            .into_iter()
            .map(|e| e.unwrap_or_else(|| zero.clone()))
            .collect();
        Ok(JetMatrix {
            dim: n,
            entries,
            symmetric: self.symmetric,
        })
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        let n = self.dim;
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while c[r] != r {
                r = c[r];
            }
            c[i] = r;
            r
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && (!self.get(i, j).is_zero() || !self.get(j, i).is_zero()) {
                    let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                    if a != b {
                        comp[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_of: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            let r = find(&mut comp, i);
            match root_of[r] {
                Some(g) => groups[g].push(i),
                None => {
                    root_of[r] = Some(groups.len());
                    groups.push(vec![i]);
                }
            }
        }
        groups
    }

    /// Determinant by Gaussian elimination without pivoting in jet arithmetic.
    pub fn det(&self) -> Result<Jet> {
        let n = self.dim;
        let mut a: Vec<Jet> = self.entries.clone();
        let mut det = Jet::constant(&common_shape(&self.entries), 1.0);
        for k in 0..n {
            let piv = a[k * n + k].clone();
            let inv = piv
                .recip()
                .map_err(|_| Error::SingularInput(format!("zero pivot {k} in jet determinant")))?;
            det = det.mul(&piv);
            for i in k + 1..n {
                let f = a[i * n + k].mul(&inv);
                if f.is_zero() {
                    continue;
                }
                for j in k + 1..n {
                    let t = f.mul(&a[k * n + j]);
                    a[i * n + j] = a[i * n + j].sub(&t);
                }
            }
        }
        Ok(det)
    }

    pub fn trace(&self) -> Jet {
        let mut t = self.get(0, 0).clone();
        for i in 1..self.dim {
            t = t.add(self.get(i, i));
        }
        t
    }

    /// Largest coefficient of `self·other − I`.
    pub fn identity_residual(&self, other: &JetMatrix) -> f64 {
        let p = self.mul(other);
        let mut r = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let e = p.get(i, j).add_scalar(if i == j { -1.0 } else { 0.0 });
                r = r.max(e.max_abs());
            }
        }
        r
    }
}

fn common_shape(entries: &[Jet]) -> Arc<JetShape> {
    let mut best = entries[0].shape().clone();
    for e in &entries[1..] {
        if e.order() < best.order() {
            best = e.shape().clone();
        }
    }
    best
}

fn invert_block(
    m: &JetMatrix,
    idx: &[usize],
    shape: &Arc<JetShape>,
    max_condition: f64,
) -> Result<Vec<Jet>> {
    let b = idx.len();
    let len = shape.len();
    // coefficient-major copy: coef[k][r*b + c]
    let mut coef = vec![0.0; len * b * b];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            let e = m.get(i, j).to_shape(shape);
            for k in 0..len {
                coef[k * b * b + r * b + c] = e.coeffs()[k];
            }
        }
    }
    let c0 = &coef[..b * b];
    let c0inv = small_inverse(c0, b, max_condition)?;
    let mut x = vec![0.0; len * b * b];
    x[..b * b].copy_from_slice(&c0inv);
    let t = shape.mul_table();
    let mut acc = vec![0.0; b * b];
    let mut nonzero: Vec<bool> = (0..len)
        .map(|k| coef[k * b * b..(k + 1) * b * b].iter().any(|v| *v != 0.0))
        .collect();
    nonzero[0] = false;
    for k in 1..len {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let lo = t.start[k] as usize;
        let hi = t.start[k + 1] as usize;
        for &(i, j) in &t.pairs[lo..hi] {
            let (i, j) = (i as usize, j as usize);
            if !nonzero[i] {
                continue;
            }
            let mi = &coef[i * b * b..(i + 1) * b * b];
            let xj = &x[j * b * b..(j + 1) * b * b];
            for r in 0..b {
                for s in 0..b {
                    let a = mi[r * b + s];
                    if a == 0.0 {
                        continue;
                    }
                    for c in 0..b {
                        acc[r * b + c] += a * xj[s * b + c];
                    }
                }
            }
        }
        let xk = &mut x[k * b * b..(k + 1) * b * b];
        for r in 0..b {
            for c in 0..b {
                let mut s = 0.0;
                for q in 0..b {
                    s += c0inv[r * b + q] * acc[q * b + c];
                }
                xk[r * b + c] = -s;
            }
        }
    }
    let mut out = Vec::with_capacity(b * b);
    for r in 0..b {
        for c in 0..b {
            let cs = (0..len).map(|k| x[k * b * b + r * b + c]).collect();
            out.push(Jet::from_coeffs(shape, cs)?);
        }
    }
    Ok(out)
}

/// Dense inverse with partial pivoting and a 1-norm condition estimate.
pub(crate) fn small_inverse(a: &[f64], n: usize, max_condition: f64) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let norm1 = |v: &[f64]| {
        (0..n)
            .map(|c| (0..n).map(|r| v[r * n + c].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let anorm = norm1(a);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| m[x * n + k].abs().total_cmp(&m[y * n + k].abs()))
            .unwrap();
        if m[p * n + k] == 0.0 || !m[p * n + k].is_finite() {
            return Err(Error::SingularInput(format!(
                "constant-term matrix is singular (condition estimate inf, bound {max_condition:e})"
            )));
        }
        if p != k {
            for c in 0..n {
                m.swap(p * n + c, k * n + c);
                inv.swap(p * n + c, k * n + c);
            }
        }
        let d = 1.0 / m[k * n + k];
        for c in 0..n {
            m[k * n + c] *= d;
            inv[k * n + c] *= d;
        }
        for r in 0..n {
            if r == k {
                continue;
            }
            let f = m[r * n + k];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                m[r * n + c] -= f * m[k * n + c];
                inv[r * n + c] -= f * inv[k * n + c];
            }
        }
    }
    let cond = anorm * norm1(&inv);
    if !(cond <= max_condition) {
        return Err(Error::SingularInput(format!(
            "constant-term matrix is ill-conditioned (condition estimate {cond:.3e}, bound {max_condition:e})"
        )));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetShape;

    #[test]
    fn identity_inverse() {
        let s = JetShape::graded(3, 4);
        let i = JetMatrix::identity(&s, 4);
        let inv = i.inverse().unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(inv.get(r, c), i.get(r, c));
            }
        }
    }

    #[test]
    fn diagonal_geometric_series() {
        let s = JetShape::graded(2, 5);
        let x = Jet::variable(&s, 0, 1.0);
        let y = Jet::variable(&s, 1, 1.0);
        let z = Jet::zero(&s);
        let m = JetMatrix::new(2, vec![x.clone(), z.clone(), z, y.clone()], true).unwrap();
        let inv = m.inverse().unwrap();
        for k in 0..=5u8 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((inv.get(0, 0).coeff(&[k, 0]) - sign).abs() < 1e-15);
            assert!((inv.get(1, 1).coeff(&[0, k]) - sign).abs() < 1e-15);
        }
        assert!(inv.get(0, 0).coeff(&[1, 1]).abs() < 1e-15);
    }

    #[test]
    fn singular_constant_term() {
        let s = JetShape::graded(1, 2);
        let x = Jet::variable(&s, 0, 0.0);
        let one = Jet::constant(&s, 1.0);
        let m = JetMatrix::new(2, vec![x.clone(), one.clone(), one.clone(), x], true).unwrap();
        assert!(m.inverse().is_ok());
        let m = JetMatrix::new(2, vec![one.clone(), one.clone(), one.clone(), one], true).unwrap();
        match m.inverse() {
            Err(Error::SingularInput(msg)) => assert!(msg.contains("condition")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn determinant_of_diagonal() {
        let s = JetShape::graded(2, 3);
        let x = Jet::variable(&s, 0, 2.0);
        let y = Jet::variable(&s, 1, 3.0);
        let z = Jet::zero(&s);
        let m = JetMatrix::new(2, vec![x.clone(), z.clone(), z, y.clone()], true).unwrap();
        assert!(m.det().unwrap().max_abs_diff(&x.mul(&y)) < 1e-15);
    }
}
