use super::{solve_lcp, ViConfig, ViSolution};
use crate::elliptic::{solve_linear, LinearSolveConfig};
use crate::error::{Error, Result};
use crate::grid::{truncate_scalar, AssembledOperator, ExtendedGridFunction, GridFunction};
use crate::measure::{load_vector, GridMeasure, NodalMeasure};

/// `λ = op·u - load(μ)`.
pub fn reaction(op: &AssembledOperator, u: &GridFunction, mu: &GridMeasure) -> Result<NodalMeasure> {
    if u.len() != op.n() {
        return Err(Error::Dimension { expected: op.n(), got: u.len() });
    }
    let b = load_vector(mu, op.grid())?;
    let au = op.apply(u);
    Ok(NodalMeasure::new(au.iter().zip(b.iter()).map(|(a, bi)| a - bi).collect()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassBoundReport {
    pub mass_lambda: f64,
    /// `TV((μ - ρ)⁻)` at the nodal level.
    pub tv_bound: f64,
    /// `bound - mass`, nonnegative when the inequality holds.
    pub slack: f64,
    pub pass: bool,
}

/// `mass(λ) ≤ TV((μ - ρ)⁻)`, with relative tolerance `1e-8` and absolute `1e-10`.
pub fn check_mass_bound(sol: &ViSolution, mu: &NodalMeasure, rho: Option<&NodalMeasure>) -> MassBoundReport {
    let tv_bound = match rho {
        Some(r) => mu.combine(1.0, r, -1.0).negative_part().total_variation(),
        None => mu.negative_part().total_variation(),
    };
    let mass_lambda = sol.mass();
    MassBoundReport {
        mass_lambda,
        tv_bound,
        slack: tv_bound - mass_lambda,
        pass: mass_lambda <= tv_bound * (1.0 + 1e-8) + 1e-10,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimalityReport {
    pub checked: usize,
    /// Samples whose competitor `u_μ + u_ν` fell below the obstacle somewhere.
    pub skipped: usize,
    /// Largest `u_i - v_i` over checked samples (negative or tiny when minimal).
    pub worst_excess: f64,
    pub pass: bool,
}

/// For each `ν ≥ 0` with `v = op⁻¹(b + ν) ≥ ψ`, checks `u ≤ v + 1e-8`.
pub fn check_minimality(
    sol: &ViSolution,
    op: &AssembledOperator,
    b: &NodalMeasure,
    psi: &ExtendedGridFunction,
    samples: &[NodalMeasure],
    cfg: &LinearSolveConfig,
) -> Result<MinimalityReport> {
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = f64::NEG_INFINITY;
    for nu in samples {
        if nu.len() != op.n() {
            return Err(Error::Dimension { expected: op.n(), got: nu.len() });
        }
        if let Some(i) = nu.iter().position(|v| *v < 0.0) {
            return Err(Error::Argument(format!("competitor measure is negative at node {i}")));
        }
        let v = solve_linear(op, &b.combine(1.0, nu, 1.0), cfg)?;
        let feasible = (0..v.len()).all(|i| v[i] >= psi[i] - 1e-12 * sol.scale.max(1.0));
        if !feasible {
            skipped += 1;
            continue;
        }
        checked += 1;
        for i in 0..v.len() {
            worst = worst.max(sol.u[i] - v[i]);
        }
    }
    Ok(MinimalityReport {
        checked,
        skipped,
        worst_excess: if checked == 0 { 0.0 } else { worst },
        pass: checked == 0 || worst <= 1e-8,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub first: ViSolution,
    pub second: ViSolution,
    /// Largest `λ₂ - λ₁`.
    pub worst_reaction_gap: f64,
    /// Largest `u₁ - u₂`.
    pub worst_solution_gap: f64,
    pub pass: bool,
}

/// For loads `b₁ ≤ b₂` and `ψ ≤ 0`: reactions are ordered the other way, `λ₁ ≥ λ₂`.
pub fn compare_reactions(
    op: &AssembledOperator,
    b1: &NodalMeasure,
    b2: &NodalMeasure,
    psi: &ExtendedGridFunction,
    cfg: &ViConfig,
) -> Result<ComparisonReport> {
    if b1.len() != b2.len() {
        return Err(Error::Dimension { expected: b1.len(), got: b2.len() });
    }
    if let Some(i) = (0..b1.len()).find(|&i| b1[i] > b2[i]) {
        return Err(Error::Argument(format!("loads are not ordered at node {i}")));
    }
    if psi.max_finite() > 0.0 {
        return Err(Error::Argument("comparison of reactions needs a nonpositive obstacle".into()));
    }
    let first = solve_lcp(op, b1, psi, cfg)?;
    let second = solve_lcp(op, b2, psi, cfg)?;
    let mut dl = f64::NEG_INFINITY;
    let mut du = f64::NEG_INFINITY;
    for i in 0..b1.len() {
        dl = dl.max(second.reaction[i] - first.reaction[i]);
        du = du.max(first.u[i] - second.u[i]);
    }
    Ok(ComparisonReport {
        pass: dl <= 1e-8 && du <= 1e-8,
        first,
        second,
        worst_reaction_gap: dl,
        worst_solution_gap: du,
    })
}

/// Largest `u(ψ₁) - u(ψ₂)` for `ψ₁ ≤ ψ₂`; at most `1e-8` when the solution is monotone in the obstacle.
pub fn check_obstacle_monotonicity(
    op: &AssembledOperator,
    b: &NodalMeasure,
    psi1: &ExtendedGridFunction,
    psi2: &ExtendedGridFunction,
    cfg: &ViConfig,
) -> Result<f64> {
    if psi1.len() != psi2.len() {
        return Err(Error::Dimension { expected: psi1.len(), got: psi2.len() });
    }
    if let Some(i) = (0..psi1.len()).find(|&i| psi1[i] > psi2[i]) {
        return Err(Error::Argument(format!("obstacles are not ordered at node {i}")));
    }
    let s1 = solve_lcp(op, b, psi1, cfg)?;
    let s2 = solve_lcp(op, b, psi2, cfg)?;
    Ok((0..b.len()).map(|i| s1.u[i] - s2.u[i]).fold(f64::NEG_INFINITY, f64::max))
}

/// `⟨op·u, T_j(v - u)⟩ - ⟨load(μ), T_j(v - u)⟩` for atom-free `μ`; nonnegative
/// for every feasible bounded `v`.
pub fn entropy_residual(
    op: &AssembledOperator,
    sol: &ViSolution,
    mu: &GridMeasure,
    psi: &ExtendedGridFunction,
    v: &GridFunction,
    j: f64,
) -> Result<f64> {
    if !mu.is_m0b() {
        return Err(Error::Argument("entropy test needs atom-free data".into()));
    }
    if !(j > 0.0) {
        return Err(Error::Argument(format!("truncation level must be > 0, got {j}")));
    }
    if v.len() != op.n() {
        return Err(Error::Dimension { expected: op.n(), got: v.len() });
    }
    if let Some(i) = (0..v.len()).find(|&i| v[i] < psi[i]) {
        return Err(Error::Argument(format!("test function lies below the obstacle at node {i}")));
    }
    let b = load_vector(mu, op.grid())?;
    let au = op.apply(&sol.u);
    Ok((0..v.len())
        .map(|i| (au[i] - b[i]) * truncate_scalar(v[i] - sol.u[i], j))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReactionClass {
    /// No reaction at any level.
    NoReaction,
    /// Largest nodal share strictly decreasing.
    Diffuse,
    /// Share stays near one: the reaction concentrates on a point.
    Atomic,
    Inconclusive,
}

impl ReactionClass {
    pub fn label(self) -> &'static str {
        match self {
            ReactionClass::NoReaction => "no reaction",
            ReactionClass::Diffuse => "diffuse reaction",
            ReactionClass::Atomic => "atomic reaction",
            ReactionClass::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionClassReport {
    /// `(level, mass(λ_h), largest nodal share)` per level.
    pub rows: Vec<(u32, f64, f64)>,
    pub verdict: ReactionClass,
    /// Atom-free data must give a diffuse (or no) reaction; atomic data an atomic one.
    pub pass: bool,
}

/// Share threshold above which a reaction counts as concentrated on one node.
pub const ATOMIC_SHARE: f64 = 0.9;

/// Share changes below this are rounding, not a trend.
const SHARE_NOISE: f64 = 1e-9;

/// Classifies reactions from a refinement sweep (levels increasing).
pub fn reaction_class_check(mu: &GridMeasure, runs: &[(u32, &ViSolution)]) -> Result<ReactionClassReport> {
    if runs.len() < 2 {
        return Err(Error::Argument("reaction classification needs at least two levels".into()));
    }
    if runs.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Argument("levels must be strictly increasing".into()));
    }
    let rows: Vec<(u32, f64, f64)> = runs
        .iter()
        .map(|(l, s)| {
            let pos = s.reaction.positive_part();
            (*l, pos.total_variation(), pos.max_share())
        })
        .collect();
    let negligible = |m: f64| m <= 1e-12;
    let verdict = if rows.iter().all(|r| negligible(r.1)) {
        ReactionClass::NoReaction
    } else if rows.last().unwrap().2 >= ATOMIC_SHARE && rows.windows(2).all(|w| w[1].2 >= w[0].2 - SHARE_NOISE) {
        ReactionClass::Atomic
    } else if rows.windows(2).all(|w| w[1].2 < w[0].2 - SHARE_NOISE) {
        ReactionClass::Diffuse
    } else {
        ReactionClass::Inconclusive
    };
    let pass = if mu.is_m0b() {
        matches!(verdict, ReactionClass::NoReaction | ReactionClass::Diffuse)
    } else {
        verdict == ReactionClass::Atomic
    };
    Ok(ReactionClassReport { rows, verdict, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble, CoefficientField, DomainGrid, DomainSpec};
    use crate::obstacle::solve_vi;
    use std::sync::Arc;

    fn interval_op() -> AssembledOperator {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), 2).unwrap());
        assemble(g, &CoefficientField::identity(1)).unwrap()
    }

    #[test]
    fn reaction_of_hand_case() {
        let op = interval_op();
        let mu = GridMeasure::atom(vec![0.5], -1.0);
        let u = GridFunction::new(vec![-0.05, -0.1, -0.05]).unwrap();
        let lam = reaction(&op, &u, &mu).unwrap();
        for (a, b) in lam.iter().zip([0.0, 0.6, 0.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn mass_bound_on_hand_case() {
        let op = interval_op();
        let mu = GridMeasure::atom(vec![0.5], -1.0);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let sol = solve_vi(&op, &mu, &psi, &ViConfig::default()).unwrap();
        let b = load_vector(&mu, op.grid()).unwrap();
        let r = check_mass_bound(&sol, &b, None);
        assert!(r.pass);
        assert!((r.mass_lambda - 0.6).abs() < 1e-10 && (r.tv_bound - 1.0).abs() < 1e-14);
    }

    #[test]
    fn comparison_hand_case() {
        let op = interval_op();
        let b1 = NodalMeasure::new(vec![0.0, -1.0, 0.0]);
        let b2 = NodalMeasure::new(vec![0.0, -0.5, 0.0]);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let r = compare_reactions(&op, &b1, &b2, &psi, &ViConfig::default()).unwrap();
        assert!(r.pass);
        assert!((r.second.reaction[1] - 0.1).abs() < 1e-10);
        assert!(compare_reactions(&op, &b2, &b1, &psi, &ViConfig::default()).is_err());
    }

    #[test]
    fn minimality_with_own_reaction_and_perturbation() {
        let op = interval_op();
        let b = NodalMeasure::new(vec![0.0, -1.0, 0.0]);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let sol = solve_lcp(&op, &b, &psi, &ViConfig::default()).unwrap();
        let own = sol.reaction.positive_part();
        let bumped = NodalMeasure::new(own.iter().map(|v| v + 0.01).collect());
        let tiny = NodalMeasure::new(vec![0.0, 0.01, 0.0]);
        let lin = LinearSolveConfig::default();
        let r = check_minimality(&sol, &op, &b, &psi, &[own, bumped, tiny], &lin).unwrap();
        assert_eq!((r.checked, r.skipped), (2, 1));
        assert!(r.pass && r.worst_excess.abs() < 1e-9);
    }

    #[test]
    fn entropy_trivial_cases() {
        let op = interval_op();
        let mu = GridMeasure::zero(1).with_density_fn(|_| -8.0);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let sol = solve_vi(&op, &mu, &psi, &ViConfig::default()).unwrap();
        let r0 = entropy_residual(&op, &sol, &mu, &psi, &sol.u, 1.0).unwrap();
        assert!(r0.abs() < 1e-14);
        let c = 0.3;
        let v = GridFunction::new(sol.u.iter().map(|x| x + c).collect()).unwrap();
        let r = entropy_residual(&op, &sol, &mu, &psi, &v, 1.0).unwrap();
        assert!((r - c * sol.reaction.mass()).abs() < 1e-10);
        assert!(r > 0.0);
        let low = GridFunction::constant(3, -1.0);
        assert!(entropy_residual(&op, &sol, &mu, &psi, &low, 1.0).is_err());
        let atomic = GridMeasure::atom(vec![0.5], -1.0);
        assert!(entropy_residual(&op, &sol, &atomic, &psi, &sol.u, 1.0).is_err());
    }

    #[test]
    fn obstacle_monotonicity_hand_case() {
        let op = interval_op();
        let b = NodalMeasure::new(vec![0.0, -1.0, 0.0]);
        let lo = ExtendedGridFunction::constant(3, -0.2).unwrap();
        let hi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        assert!(check_obstacle_monotonicity(&op, &b, &lo, &hi, &ViConfig::default()).unwrap() <= 1e-12);
        assert!(check_obstacle_monotonicity(&op, &b, &hi, &lo, &ViConfig::default()).is_err());
    }
}
