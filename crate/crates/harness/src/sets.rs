//! Set literals for the `capacity` subcommand.
//!
//! ```text
//! ball(0.5, 0.5; 0.1)          centre; radius
//! box(0.2, 0.2; 0.4, 0.6)      lower corner; upper corner
//! points(0.25, 0.5; 0.75, 0.5) one point per group
//! ball(0.3, 0.5; 0.1) | box(0.6, 0.4; 0.8, 0.6)
//! ```

use obstacle_core::capacity::GridSet;
use obstacle_core::grid::DomainGrid;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SetLiteral {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Points(Vec<Vec<f64>>),
    Union(Vec<SetLiteral>),
}

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::parse("set", msg)
}

fn groups(body: &str) -> Result<Vec<Vec<f64>>> {
    body.split(';')
        .map(|g| {
            g.split(',')
                .map(|t| {
                    let t = t.trim();
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("not a finite number: '{t}'")))
                })
                .collect()
        })
        .collect()
}

impl SetLiteral {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() > 1 {
            return Ok(SetLiteral::Union(parts.iter().map(|p| Self::parse_one(p)).collect::<Result<_>>()?));
        }
        Self::parse_one(text)
    }

    fn parse_one(text: &str) -> Result<Self> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| err(format!("expected name(...), got '{text}'")))?;
        if !text.ends_with(')') {
            return Err(err(format!("missing ')' in '{text}'")));
        }
        let name = text[..open].trim();
        let g = groups(&text[open + 1..text.len() - 1])?;
        match name {
            "ball" => match g.as_slice() {
                [c, r] if r.len() == 1 && r[0] > 0.0 => Ok(SetLiteral::Ball {
                    center: c.clone(),
                    radius: r[0],
                }),
                _ => Err(err("ball takes a centre and a positive radius: ball(x, y; r)")),
            },
            "box" => match g.as_slice() {
                [lo, hi] if lo.len() == hi.len() => Ok(SetLiteral::Box {
                    lo: lo.clone(),
                    hi: hi.clone(),
                }),
                _ => Err(err("box takes two corners of equal dimension: box(x0, y0; x1, y1)")),
            },
            "points" => Ok(SetLiteral::Points(g)),
            other => Err(err(format!("unknown set '{other}', expected ball, box or points"))),
        }
    }

    /// Grid nodes of the set.
    pub fn to_grid_set(&self, grid: &DomainGrid) -> Result<GridSet> {
        Ok(match self {
            SetLiteral::Ball { center, radius } => GridSet::ball(grid, center, *radius)?,
            SetLiteral::Box { lo, hi } => GridSet::cube(grid, lo, hi)?,
            SetLiteral::Points(p) => GridSet::points(grid, p)?,
            SetLiteral::Union(parts) => {
                let mut acc = GridSet::empty();
                for p in parts {
                    acc = acc.union(&p.to_grid_set(grid)?);
                }
                acc
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use obstacle_core::grid::DomainSpec;

    #[test]
    fn parses_each_form() {
        assert_eq!(
            SetLiteral::parse("ball(0.5, 0.5; 0.1)").unwrap(),
            SetLiteral::Ball {
                center: vec![0.5, 0.5],
                radius: 0.1
            }
        );
        assert!(matches!(SetLiteral::parse("box(0,0;1,1)").unwrap(), SetLiteral::Box { .. }));
        assert_eq!(
            SetLiteral::parse("points(0.25,0.5;0.75,0.5)").unwrap(),
            SetLiteral::Points(vec![vec![0.25, 0.5], vec![0.75, 0.5]])
        );
        match SetLiteral::parse("ball(0.3,0.5;0.1) | box(0.6,0.4;0.8,0.6)").unwrap() {
            SetLiteral::Union(p) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_literals() {
        for bad in ["ball(0.5;0)", "disc(0.5;0.1)", "box(0,0;1)", "ball(0.5, x; 0.1)", "ball 0.5"] {
            assert!(SetLiteral::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn union_covers_both_parts() {
        let grid = DomainGrid::build(&DomainSpec::unit_box(2), 3).unwrap();
        let a = SetLiteral::parse("points(0.25,0.25)").unwrap().to_grid_set(&grid).unwrap();
        let u = SetLiteral::parse("points(0.25,0.25) | points(0.75,0.75)")
            .unwrap()
            .to_grid_set(&grid)
            .unwrap();
        assert_eq!(u.len(), 2);
        assert!(a.is_subset(&u));
    }
}
