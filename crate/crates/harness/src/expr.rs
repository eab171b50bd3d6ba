//! Coordinate expressions: `+ - * / ^`, `abs`, `log`/`ln`, `exp`, `sqrt`,
//! `min`, `max`, `sin`, `cos`, numeric constants and the coordinates
//! `x`, `y`, `z`.

use std::fmt;
use std::sync::Arc;

use exmex::prelude::*;
use obstacle_core::grid::ScalarFn;

const COORDS: [&str; 3] = ["x", "y", "z"];

#[derive(Clone)]
pub struct Expression {
    source: String,
    compiled: FlatEx<f64>,
    /// Coordinate index of each variable, in the compiled variable order.
    slots: Vec<usize>,
}

impl Expression {
    /// Compiles `source` for points in `dim` dimensions.
    pub fn parse(source: &str, dim: usize) -> Result<Self, String> {
        let compiled = exmex::parse::<f64>(source).map_err(|e| format!("cannot parse `{source}`: {e}"))?;
        let mut slots = Vec::new();
        for name in compiled.var_names() {
            match COORDS[..dim].iter().position(|c| c == name) {
                Some(i) => slots.push(i),
                None => {
                    return Err(format!(
                        "unknown variable `{name}` in `{source}` (coordinates are {})",
                        COORDS[..dim].join(", ")
                    ))
                }
            }
        }
        let e = Self {
            source: source.to_string(),
            compiled,
            slots,
        };
        Ok(e)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut args = [0.0f64; 3];
        for (k, &s) in self.slots.iter().enumerate() {
            args[k] = x[s];
        }
        self.compiled.eval(&args[..self.slots.len()]).unwrap_or(f64::NAN)
    }

    pub fn to_fn(&self) -> ScalarFn {
        let e = self.clone();
        Arc::new(move |x: &[f64]| e.eval(x))
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_named_obstacle_forms() {
        let e = Expression::parse("(1-abs(x))*(1-log(1-abs(x)))", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 1.0);
        let t: f64 = 0.5;
        assert!((e.eval(&[-0.5]) - t * (1.0 - t.ln())).abs() < 1e-15);
        let m = Expression::parse("min(x, y) + max(x, y)", 2).unwrap();
        assert_eq!(m.eval(&[0.25, 2.0]), 2.25);
        assert_eq!(Expression::parse("1/2", 1).unwrap().eval(&[9.0]), 0.5);
        assert!((Expression::parse("exp(z)", 3).unwrap().eval(&[0.0, 0.0, 1.0]) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn variable_order_follows_coordinates() {
        let e = Expression::parse("y - 2*x", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 5.0]), 3.0);
        let only_y = Expression::parse("y^2", 2).unwrap();
        assert_eq!(only_y.eval(&[7.0, 3.0]), 9.0);
    }

    #[test]
    fn rejects_unknown_names_and_syntax() {
        assert!(Expression::parse("z + 1", 2).is_err());
        assert!(Expression::parse("t", 3).is_err());
        assert!(Expression::parse("(x +", 1).is_err());
    }
}
