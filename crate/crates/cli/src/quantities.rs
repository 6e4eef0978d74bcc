use ambientlab::ambient::{extended_obstruction, higher_cotton};
use ambientlab::fg::{obstruction_residual, solve_expansion};
use ambientlab::geometry::{MetricJet, TensorJet};
use ambientlab::volume::{linearization_coefficients, volume_coefficients};
use ambientlab::{Error, Result};
use serde_json::{json, Value};

pub const QUANTITY_FORMS: [&str; 6] = [
    "vk:K",
    "g_coeff:k",
    "omega:k",
    "cotton:k",
    "L:k",
    "obstruction",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantity {
    /// `v_1..v_K`.
    Vk(usize),
    GCoeff(usize),
    Omega(usize),
    Cotton(usize),
    L(usize),
    Obstruction,
}

impl Quantity {
    pub fn parse(s: &str) -> Result<Quantity> {
        let s = s.trim();
        if s == "obstruction" {
            return Ok(Quantity::Obstruction);
        }
        let (name, k) = s
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("quantity '{s}' needs an order, e.g. vk:3")))?;
        let k: usize = k
            .parse()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::Input(format!("bad order in quantity '{s}'")))?;
        match name {
            "vk" | "v" => Ok(Quantity::Vk(k)),
            "g_coeff" => Ok(Quantity::GCoeff(k)),
            "omega" => Ok(Quantity::Omega(k)),
            "cotton" => Ok(Quantity::Cotton(k)),
            "L" => Ok(Quantity::L(k)),
            _ => Err(Error::Input(format!("unknown quantity '{name}'"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Quantity::Vk(k) => format!("vk:{k}"),
            Quantity::GCoeff(k) => format!("g_coeff:{k}"),
            Quantity::Omega(k) => format!("omega:{k}"),
            Quantity::Cotton(k) => format!("cotton:{k}"),
            Quantity::L(k) => format!("L:{k}"),
            Quantity::Obstruction => "obstruction".into(),
        }
    }

    /// Jet order of the metric needed at the base point.
    pub fn required_order(&self, n: usize) -> usize {
        match *self {
            Quantity::Vk(k) | Quantity::GCoeff(k) | Quantity::L(k) => 2 * k,
            Quantity::Omega(k) | Quantity::Cotton(k) => {
                let da = k + 1;
                let kk = if n % 2 == 0 { da.min(n / 2) } else { da };
                da + kk
            }
            Quantity::Obstruction => n,
        }
    }

    /// Dimension limits, checked before any computation.
    pub fn capability(&self, n: usize) -> Result<()> {
        let even = n % 2 == 0;
        let fail = |msg: String| Err(Error::Capability(msg));
        match *self {
            Quantity::Vk(k) | Quantity::L(k) if even && k > n / 2 => {
                fail(format!("k exceeds n/2: k = {k}, n = {n}"))
            }
            Quantity::GCoeff(k) if even && k >= n / 2 => fail(format!(
                "g^(k) is determined only for k < n/2: k = {k}, n = {n}"
            )),
            Quantity::Omega(k) if even && n <= 2 * (k + 1) => fail(format!(
                "Omega^(k) needs n > 2(k+1) for even n: k = {k}, n = {n}"
            )),
            Quantity::Cotton(k) if even && n < 2 * (k + 1) => fail(format!(
                "C^(k) needs n >= 2(k+1) for even n: k = {k}, n = {n}"
            )),
            Quantity::Obstruction if !even => fail(format!(
                "the obstruction exists only for even n, got n = {n}"
            )),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, g: &MetricJet) -> Result<Value> {
        match *self {
            Quantity::Vk(k) => {
                let v = volume_coefficients(&solve_expansion(g, k)?, k)?;
                Ok(json!(v.values()))
            }
            Quantity::GCoeff(k) => {
                let s = solve_expansion(g, k)?;
                Ok(nested(s.coeff(k).expect("solved")))
            }
            Quantity::Omega(k) => Ok(nested(&extended_obstruction(g, k)?)),
            Quantity::Cotton(k) => Ok(nested(&higher_cotton(g, k)?)),
            Quantity::L(k) => Ok(nested(&linearization_coefficients(
                &solve_expansion(g, k)?,
                k,
            )?)),
            Quantity::Obstruction => {
                let o = obstruction_residual(g)?;
                let mut v = json!({ "residual": nested(&o.residual) });
                if let Some(c) = o.bach_proportionality {
                    v["bach_proportionality"] = json!(c);
                    v["bach_deviation"] = json!(o.bach_deviation);
                }
                Ok(v)
            }
        }
    }
}

/// Base-point values as nested arrays, last index fastest.
pub fn nested(t: &TensorJet) -> Value {
    fn build(vals: &[f64], n: usize, rank: usize) -> Value {
        if rank == 0 {
            return json!(vals[0]);
        }
        let step = vals.len() / n;
        Value::Array(
            (0..n)
                .map(|i| build(&vals[i * step..(i + 1) * step], n, rank - 1))
                .collect(),
        )
    }
    build(&t.values(), t.n(), t.rank())
}

/// Flatten nested arrays into `(index path, value)` rows.
pub fn flatten(v: &Value, prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
    match v {
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                prefix.push(i);
                flatten(x, prefix, out);
                prefix.pop();
            }
        }
        Value::Number(x) => out.push((prefix.clone(), x.as_f64().unwrap_or(f64::NAN))),
        Value::Object(m) => {
            for x in m.values() {
                flatten(x, prefix, out);
            }
        }
        _ => out.push((prefix.clone(), f64::NAN)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_label() {
        for s in [
            "vk:3",
            "g_coeff:2",
            "omega:1",
            "cotton:2",
            "L:2",
            "obstruction",
        ] {
            assert_eq!(Quantity::parse(s).unwrap().label(), s);
        }
        assert!(Quantity::parse("vk").is_err());
        assert!(Quantity::parse("vk:0").is_err());
        assert!(Quantity::parse("ricci:1").is_err());
    }

    #[test]
    fn gates() {
        assert!(Quantity::Vk(4)
            .capability(6)
            .unwrap_err()
            .to_string()
            .contains("k exceeds n/2"));
        assert!(Quantity::Vk(3).capability(6).is_ok());
        assert!(Quantity::Vk(9).capability(7).is_ok());
        assert!(Quantity::Obstruction.capability(5).is_err());
        assert!(Quantity::Omega(1).capability(4).is_err());
        assert!(Quantity::Omega(1).capability(6).is_ok());
    }

    #[test]
    fn nesting() {
        use ambientlab::geometry::Slot;
        use ambientlab::jet::{Jet, JetShape};
        let s = JetShape::graded(2, 0);
        let t = TensorJet::from_fn(2, vec![Slot::Down; 2], |i| {
            Jet::constant(&s, (i[0] * 2 + i[1]) as f64)
        });
        assert_eq!(nested(&t), json!([[0.0, 1.0], [2.0, 3.0]]));
        let mut rows = Vec::new();
        flatten(&nested(&t), &mut vec![], &mut rows);
        assert_eq!(rows[2], (vec![1, 0], 2.0));
    }
}
