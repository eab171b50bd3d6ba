//! Capacitary potentials, capacities of node sets and generators for the
//! named obstacles and the perforated-cube construction.

use rayon::prelude::*;

use crate::elliptic::{solve_csr, solve_linear, LinearSolveConfig};
use crate::error::{Error, Result};
use crate::grid::{assemble, AssembledOperator, CoefficientField, DomainGrid, ExtendedGridFunction, GridFunction, ScalarFn};
use crate::measure::{GridMeasure, NodalMeasure};
use crate::obstacle::{solve_lcp, ViConfig, ViSolution};

/// A set of interior nodes, sorted and without repeats.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GridSet {
    nodes: Vec<usize>,
}

fn distance(grid: &DomainGrid, i: usize, c: &[f64]) -> f64 {
    let p = grid.point(i);
    (0..grid.dim()).map(|d| (p[d] - c[d]).powi(2)).sum::<f64>().sqrt()
}

impl GridSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_nodes(grid: &DomainGrid, mut nodes: Vec<usize>) -> Result<Self> {
        if let Some(i) = nodes.iter().find(|&&i| i >= grid.n_interior()) {
            return Err(Error::Argument(format!("node {i} is not an interior node")));
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self { nodes })
    }

    /// Nodes with `|x - c| ≤ r`.
    pub fn ball(grid: &DomainGrid, center: &[f64], radius: f64) -> Result<Self> {
        check_point(grid, center)?;
        let tol = 1e-12 * grid.h();
        let nodes = (0..grid.n_interior())
            .filter(|&i| distance(grid, i, center) <= radius + tol)
            .collect();
        Ok(Self { nodes })
    }

    /// Nodes in the closed box `[lo, hi]`.
    pub fn cube(grid: &DomainGrid, lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_point(grid, lo)?;
        check_point(grid, hi)?;
        let tol = 1e-12 * grid.h();
        let n = grid.dim();
        let nodes = (0..grid.n_interior())
            .filter(|&i| {
                let p = grid.point(i);
                (0..n).all(|d| p[d] >= lo[d] - tol && p[d] <= hi[d] + tol)
            })
            .collect();
        Ok(Self { nodes })
    }

    /// The interior node nearest to each point.
    pub fn points(grid: &DomainGrid, points: &[Vec<f64>]) -> Result<Self> {
        let mut nodes = Vec::with_capacity(points.len());
        for p in points {
            check_point(grid, p)?;
            nodes.push(grid.nearest_interior(p));
        }
        Self::from_nodes(grid, nodes)
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes);
        nodes.sort_unstable();
        nodes.dedup();
        GridSet { nodes }
    }

    pub fn is_subset(&self, other: &GridSet) -> bool {
        self.nodes.iter().all(|i| other.nodes.binary_search(i).is_ok())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.nodes.binary_search(&i).is_ok()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_point(grid: &DomainGrid, x: &[f64]) -> Result<()> {
    if x.len() != grid.dim() {
        return Err(Error::Dimension { expected: grid.dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("set coordinates must be finite".into()));
    }
    Ok(())
}

/// Obstacle `1` on `E`, unconstrained elsewhere.
pub fn capacitary_obstacle(n: usize, set: &GridSet) -> ExtendedGridFunction {
    let mut psi = vec![f64::NEG_INFINITY; n];
    for &i in set.nodes() {
        psi[i] = 1.0;
    }
    ExtendedGridFunction::new(psi).expect("values are 1 or -inf")
}

/// Smallest supersolution with zero data that is at least 1 on `E`.
pub fn capacitary_potential(op: &AssembledOperator, set: &GridSet, cfg: &ViConfig) -> Result<ViSolution> {
    if let Some(&i) = set.nodes().last() {
        if i >= op.n() {
            return Err(Error::Argument(format!("node {i} is not an interior node")));
        }
    }
    let psi = capacitary_obstacle(op.n(), set);
    solve_lcp(op, &NodalMeasure::zeros(op.n()), &psi, cfg)
}

/// Dirichlet energy `⟨op·w, w⟩` of the capacitary potential.
pub fn capacity(op: &AssembledOperator, set: &GridSet, cfg: &ViConfig) -> Result<f64> {
    if !op.is_symmetric() {
        return Err(Error::Symmetry);
    }
    if set.is_empty() {
        return Ok(0.0);
    }
    let w = capacitary_potential(op, set, cfg)?;
    let aw = op.apply(&w.u);
    Ok(aw.iter().zip(w.u.iter()).map(|(a, b)| a * b).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayTable {
    /// `(level, h, capacity)` per level.
    pub rows: Vec<(u32, f64, f64)>,
    pub strictly_decreasing: bool,
    /// Observed per-level rate on the last three levels: increments of
    /// `1/cap` in 2-D (model `ln 2/2π`), ratios `cap_{l+1}/cap_l` in 3-D (model `1/2`).
    pub rates: Vec<f64>,
    pub model_rate: f64,
    /// Every rate within 25% of the model.
    pub rate_ok: bool,
}

/// Capacity of the node nearest `x0` across a family of refined operators.
pub fn point_capacity_decay(ops: &[AssembledOperator], x0: &[f64], cfg: &ViConfig) -> Result<DecayTable> {
    let dim = ops.first().ok_or_else(|| Error::Argument("no operators given".into()))?.grid().dim();
    if dim < 2 {
        return Err(Error::Argument("points have positive capacity in one dimension".into()));
    }
    let mut rows = Vec::with_capacity(ops.len());
    for op in ops {
        if op.grid().dim() != dim {
            return Err(Error::Dimension { expected: dim, got: op.grid().dim() });
        }
        let set = GridSet::points(op.grid(), &[x0.to_vec()])?;
        rows.push((op.grid().level(), op.grid().h(), capacity(op, &set, cfg)?));
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].2 < w[0].2);
    let tail = &rows[rows.len().saturating_sub(3)..];
    let (rates, model_rate): (Vec<f64>, f64) = if dim == 2 {
        (
            tail.windows(2).map(|w| 1.0 / w[1].2 - 1.0 / w[0].2).collect(),
            std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI),
        )
    } else {
        (tail.windows(2).map(|w| w[1].2 / w[0].2).collect(), 0.5)
    };
    let rate_ok = !rates.is_empty() && rates.iter().all(|r| (r - model_rate).abs() <= 0.25 * model_rate);
    Ok(DecayTable {
        rows,
        strictly_decreasing,
        rates,
        model_rate,
        rate_ok,
    })
}

/// `r_n = (1/2n)^{N/(N-2)}`.
pub fn hole_radius(n: usize, dim: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("cube count must be >= 1".into()));
    }
    if dim < 3 {
        return Err(Error::Argument("the perforation radius needs N >= 3".into()));
    }
    Ok((0.5 / n as f64).powf(dim as f64 / (dim as f64 - 2.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmScenario {
    pub n: usize,
    pub radius: f64,
    /// `1` on the union of the small balls, `0` elsewhere.
    pub psi: ExtendedGridFunction,
    /// `μ_n = Δ_h w_n = -op·w_n`.
    pub mu: NodalMeasure,
    pub w: GridFunction,
    /// The small-ball node sets, one per cube.
    pub holes: Vec<GridSet>,
}

/// Tiles the unit cube into `n³` cubes; in each, `w_n` is the capacitary
/// potential of the small ball relative to the inscribed ball.
///
/// A grid ball is `{|x - c| ≤ r_n}` together with the node nearest `c`, so
/// holes below the mesh size are still seen as single nodes.
pub fn cm_scenario(op: &AssembledOperator, n: usize, cfg: &LinearSolveConfig) -> Result<CmScenario> {
    let grid = op.grid();
    if grid.dim() != 3 {
        return Err(Error::Argument("the perforated-cube construction is three-dimensional".into()));
    }
    if grid.lower().iter().any(|v| *v != 0.0) || grid.upper().iter().any(|v| *v != 1.0) {
        return Err(Error::Argument("the perforated-cube construction lives on the unit cube".into()));
    }
    let radius = hole_radius(n, 3)?;
    let outer = 0.5 / n as f64;
    if grid.h() > 0.5 * outer {
        let needed = (4.0 * n as f64).log2().ceil() as u32;
        return Err(Error::Resolution(format!(
            "h = {} does not resolve cubes of side 1/{n}; use level >= {needed}",
            grid.h()
        )));
    }
    let mut centers = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                centers.push([(2 * i + 1) as f64 * outer, (2 * j + 1) as f64 * outer, (2 * k + 1) as f64 * outer]);
            }
        }
    }
    let m = op.matrix();
    let per_cube: Vec<Result<(GridSet, Vec<(usize, f64)>)>> = centers
        .par_iter()
        .map(|c| {
            let hole = GridSet::ball(grid, c, radius)?.union(&GridSet::points(grid, &[c.to_vec()])?);
            let free: Vec<usize> = (0..grid.n_interior())
                .filter(|&i| distance(grid, i, c) < outer - 1e-12 * grid.h() && !hole.contains(i))
                .collect();
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| -m.row(i).filter(|(j, _)| hole.contains(*j)).map(|(_, a)| a).sum::<f64>())
                .collect();
            let sub = m.principal_submatrix(&free);
            let (x, _) = solve_csr(&sub, op.is_symmetric(), &rhs, None, cfg)?;
            let mut values: Vec<(usize, f64)> = free.into_iter().zip(x).collect();
            values.extend(hole.nodes().iter().map(|&i| (i, 1.0)));
            Ok((hole, values))
        })
        .collect();
    let mut w = vec![0.0; grid.n_interior()];
    let mut psi = vec![0.0; grid.n_interior()];
    let mut holes = Vec::with_capacity(per_cube.len());
    for r in per_cube {
        let (hole, values) = r?;
        for (i, v) in values {
            w[i] = v;
        }
        for &i in hole.nodes() {
            psi[i] = 1.0;
        }
        holes.push(hole);
    }
    let mu = NodalMeasure::new(op.apply(&w).into_iter().map(|v| -v).collect());
    Ok(CmScenario {
        n,
        radius,
        psi: ExtendedGridFunction::new(psi)?,
        mu,
        w: GridFunction::new(w)?,
        holes,
    })
}

/// Assembles `-Δ` on the unit cube at `level`.
pub fn laplacian_unit_cube(level: u32) -> Result<AssembledOperator> {
    let grid = DomainGrid::build(&crate::grid::DomainSpec::unit_box(3), level)?;
    assemble(std::sync::Arc::new(grid), &CoefficientField::identity(3))
}

#[derive(Clone)]
pub enum ObstacleKind {
    /// `(1 - |x|)(1 - ln(1 - |x|))` on `(-1, 1)`.
    LogObstacle1d,
    /// Discrete Green function with pole at the given point.
    GreenPole(Vec<f64>),
    Constant(f64),
    Custom(ScalarFn),
}

impl std::fmt::Debug for ObstacleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObstacleKind::LogObstacle1d => f.write_str("LogObstacle1d"),
            ObstacleKind::GreenPole(p) => write!(f, "GreenPole({p:?})"),
            ObstacleKind::Constant(c) => write!(f, "Constant({c})"),
            ObstacleKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ObstacleKind {
    pub fn from_name(name: &str, pole: Option<Vec<f64>>, value: Option<f64>) -> Result<Self> {
        match name {
            "log-obstacle-1d" => Ok(ObstacleKind::LogObstacle1d),
            "green-pole" => Ok(ObstacleKind::GreenPole(
                pole.ok_or_else(|| Error::Argument("green-pole needs a pole".into()))?,
            )),
            "constant" => Ok(ObstacleKind::Constant(
                value.ok_or_else(|| Error::Argument("constant obstacle needs a value".into()))?,
            )),
            other => Err(Error::Argument(format!("unknown obstacle kind `{other}`"))),
        }
    }
}

pub fn log_obstacle(x: f64) -> f64 {
    let t = 1.0 - x.abs();
    t * (1.0 - t.ln())
}

/// `-ψ''` for the log obstacle.
pub fn log_obstacle_density(x: f64) -> f64 {
    1.0 / (1.0 - x.abs())
}

pub struct NamedObstacle {
    pub psi: ExtendedGridFunction,
    /// Reaction density the obstacle generates where it is concave, when known.
    pub reference_density: Option<ScalarFn>,
}

pub fn named_obstacle(kind: &ObstacleKind, op: &AssembledOperator, cfg: &LinearSolveConfig) -> Result<NamedObstacle> {
    let grid = op.grid();
    match kind {
        ObstacleKind::LogObstacle1d => {
            if grid.dim() != 1 || grid.lower()[0] < -1.0 || grid.upper()[0] > 1.0 {
                return Err(Error::Argument("the log obstacle lives on a subinterval of (-1, 1)".into()));
            }
            Ok(NamedObstacle {
                psi: ExtendedGridFunction::new(grid.sample(&|x: &[f64]| log_obstacle(x[0])))?,
                reference_density: Some(std::sync::Arc::new(|x: &[f64]| log_obstacle_density(x[0]))),
            })
        }
        ObstacleKind::GreenPole(pole) => {
            let b = crate::measure::load_vector(&GridMeasure::atom(pole.clone(), 1.0), grid)?;
            let g = solve_linear(op, &b, cfg)?;
            Ok(NamedObstacle {
                psi: ExtendedGridFunction::from(g),
                reference_density: None,
            })
        }
        ObstacleKind::Constant(c) => Ok(NamedObstacle {
            psi: ExtendedGridFunction::constant(grid.n_interior(), *c)?,
            reference_density: None,
        }),
        ObstacleKind::Custom(f) => Ok(NamedObstacle {
            psi: ExtendedGridFunction::new(grid.sample(f.as_ref()))?,
            reference_density: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use std::sync::Arc;

    fn interval_op(level: u32) -> AssembledOperator {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), level).unwrap());
        assemble(g, &CoefficientField::identity(1)).unwrap()
    }

    #[test]
    fn hat_potential_and_capacity() {
        let op = interval_op(2);
        let set = GridSet::points(op.grid(), &[vec![0.5]]).unwrap();
        let w = capacitary_potential(&op, &set, &ViConfig::default()).unwrap();
        for (a, b) in w.u.iter().zip([0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((capacity(&op, &set, &ViConfig::default()).unwrap() - 4.0).abs() < 1e-12);
        assert!((w.mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_full_sets() {
        let op = interval_op(3);
        let cfg = ViConfig::default();
        assert_eq!(capacity(&op, &GridSet::empty(), &cfg).unwrap(), 0.0);
        let w = capacitary_potential(&op, &GridSet::empty(), &cfg).unwrap();
        assert!(w.u.iter().all(|v| *v == 0.0));
        let all = GridSet::from_nodes(op.grid(), (0..op.n()).collect()).unwrap();
        let w = capacitary_potential(&op, &all, &cfg).unwrap();
        assert!(w.u.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let sums = op.matrix().row_sums();
        for (l, s) in w.reaction.iter().zip(sums) {
            assert!((l - s).abs() < 1e-10);
        }
    }

    #[test]
    fn set_constructors() {
        let g = DomainGrid::build(&DomainSpec::unit_box(2), 3).unwrap();
        let b = GridSet::ball(&g, &[0.5, 0.5], 0.125).unwrap();
        assert_eq!(b.len(), 5);
        let c = GridSet::cube(&g, &[0.25, 0.25], &[0.5, 0.5]).unwrap();
        assert_eq!(c.len(), 9);
        let u = b.union(&c);
        assert!(b.is_subset(&u) && c.is_subset(&u));
        assert_eq!(u.len(), 9 + 5 - 3);
        assert!(GridSet::from_nodes(&g, vec![10_000]).is_err());
    }

    #[test]
    fn symmetry_required() {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(2), 3).unwrap());
        let coeff = CoefficientField::new(
            2,
            0.5,
            Arc::new(|x: &[f64]| {
                let t = 0.3 * x[0];
                [[1.0, t, 0.0], [-t, 1.0, 0.0], [0.0, 0.0, 1.0]]
            }),
        );
        let op = assemble(g, &coeff).unwrap();
        assert!(!op.is_symmetric());
        let set = GridSet::points(op.grid(), &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(capacity(&op, &set, &ViConfig::default()), Err(Error::Symmetry));
        assert!(capacitary_potential(&op, &set, &ViConfig::default()).is_ok());
    }

    #[test]
    fn decay_rejects_one_dimension() {
        let ops = vec![interval_op(2), interval_op(3)];
        assert!(point_capacity_decay(&ops, &[0.5], &ViConfig::default()).is_err());
    }

    #[test]
    fn radii() {
        assert_eq!(hole_radius(1, 3).unwrap(), 0.125);
        assert_eq!(hole_radius(2, 3).unwrap(), 0.015625);
        assert!(hole_radius(1, 2).is_err());
    }

    #[test]
    fn named_obstacles() {
        assert_eq!(log_obstacle(0.0), 1.0);
        let op = interval_op(2);
        let lin = LinearSolveConfig::default();
        let g = named_obstacle(&ObstacleKind::GreenPole(vec![0.5]), &op, &lin).unwrap();
        for (a, b) in g.psi.iter().zip([0.125, 0.25, 0.125]) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = named_obstacle(&ObstacleKind::Constant(-1.0), &op, &lin).unwrap();
        assert!(c.psi.iter().all(|v| *v == -1.0));
        let square = Arc::new(DomainGrid::build(&DomainSpec::unit_box(2), 2).unwrap());
        let op2 = assemble(square, &CoefficientField::identity(2)).unwrap();
        assert!(named_obstacle(&ObstacleKind::LogObstacle1d, &op2, &lin).is_err());
        assert!(ObstacleKind::from_name("spiral", None, None).is_err());
        let g1 = Arc::new(DomainGrid::build(&DomainSpec::new(vec![-1.0], vec![1.0]).unwrap(), 2).unwrap());
        let op1 = assemble(g1, &CoefficientField::identity(1)).unwrap();
        let l = named_obstacle(&ObstacleKind::LogObstacle1d, &op1, &lin).unwrap();
        assert_eq!(l.psi[1], 1.0);
    }

    #[test]
    fn cm_scenario_resolution_and_balance() {
        let op = laplacian_unit_cube(3).unwrap();
        let lin = LinearSolveConfig::default();
        let s = cm_scenario(&op, 1, &lin).unwrap();
        assert_eq!(s.holes.len(), 1);
        // Δ_h w is negative on the hole and positive just inside the sphere.
        for &i in s.holes[0].nodes() {
            assert!(s.mu[i] <= 1e-12);
        }
        assert!(s.holes[0].nodes().iter().map(|&i| s.mu[i]).sum::<f64>() < 0.0);
        assert!(s.mu.iter().any(|v| *v > 0.0));
        assert!(s.w.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        match cm_scenario(&op, 3, &lin) {
            Err(Error::Resolution(msg)) => assert!(msg.contains("level >= 4")),
            other => panic!("{other:?}"),
        }
    }
}
