//! Discrete obstacle problems as linear complementarity systems
//!
//! ```text
//! op·u - b = λ ≥ 0,   u ≥ ψ,   λ·(u - ψ) = 0
//! ```
//! solved by projected SOR or by a primal-dual active-set method, plus the
//! reaction extraction and the inequality checks built on top.

mod active_set;
mod checks;
mod psor;
mod truncation;

pub use checks::{
    check_mass_bound, check_minimality, check_obstacle_monotonicity, compare_reactions, entropy_residual,
    reaction, reaction_class_check, ComparisonReport, MassBoundReport, MinimalityReport, ReactionClass,
    ReactionClassReport,
};
pub use truncation::{solve_op_by_truncation, solve_op_by_truncation_load, TruncationRun, TruncationStep};

use std::fmt;

use crate::elliptic::LinearSolveConfig;
use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, ExtendedGridFunction, GridFunction};
use crate::measure::{load_vector, GridMeasure, NodalMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ViMethod {
    /// Projected successive over-relaxation, lexicographic sweeps.
    Psor,
    /// Primal-dual active set with Krylov solves on the inactive set.
    #[default]
    ActiveSet,
}

impl ViMethod {
    pub fn name(self) -> &'static str {
        match self {
            ViMethod::Psor => "psor",
            ViMethod::ActiveSet => "activeset",
        }
    }
}

impl fmt::Display for ViMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ViMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psor" => Ok(ViMethod::Psor),
            "activeset" | "active-set" | "pdas" => Ok(ViMethod::ActiveSet),
            other => Err(Error::Argument(format!("unknown method `{other}` (expected psor or activeset)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViConfig {
    pub method: ViMethod,
    /// PSOR relaxation, in (0, 2).
    pub omega: f64,
    /// Projected residual tolerance relative to the problem scale.
    pub tol: f64,
    /// PSOR sweeps or active-set iterations.
    pub max_iter: usize,
    /// Largest fraction of nodes allowed to change status per active-set step.
    pub safeguard: f64,
    pub linear: LinearSolveConfig,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            method: ViMethod::ActiveSet,
            omega: 1.5,
            tol: 1e-10,
            max_iter: 200_000,
            safeguard: 0.25,
            linear: LinearSolveConfig::default(),
        }
    }
}

impl ViConfig {
    pub fn psor() -> Self {
        Self {
            method: ViMethod::Psor,
            ..Self::default()
        }
    }

    pub fn active_set() -> Self {
        Self::default()
    }

    pub fn with_method(mut self, method: ViMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::Argument(format!("relaxation must lie in (0, 2), got {}", self.omega)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Argument(format!("tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Argument("max iterations must be >= 1".into()));
        }
        if !(self.safeguard > 0.0 && self.safeguard <= 1.0) {
            return Err(Error::Argument(format!("safeguard fraction must lie in (0, 1], got {}", self.safeguard)));
        }
        self.linear.validate()
    }
}

/// Solution `u`, reaction `λ = op·u - b` and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ViSolution {
    pub u: GridFunction,
    pub reaction: NodalMeasure,
    pub iterations: usize,
    /// `Σ |λ_i|·|u_i - ψ_i|` over nodes with finite obstacle.
    pub complementarity_residual: f64,
    /// Largest of `ψ_i - u_i`, `-λ_i`, and `|λ_i|` on unconstrained nodes (0 if none positive).
    pub feasibility_residual: f64,
    /// Reference magnitude for the residuals: `max(‖b‖∞, diag·‖ψ‖∞)`.
    pub scale: f64,
    pub method: ViMethod,
}

impl ViSolution {
    /// Total reaction mass.
    pub fn mass(&self) -> f64 {
        self.reaction.total_variation()
    }

    /// Nodes in contact: `u_i` at the obstacle with a positive reaction.
    /// Degenerate nodes (`u_i = ψ_i`, `λ_i = 0`) count as free.
    pub fn contact_set(&self, psi: &ExtendedGridFunction) -> Vec<usize> {
        let gap_tol = 1e-10 * self.scale.max(1.0);
        let lambda_tol = 1e-10 * self.scale.max(f64::MIN_POSITIVE);
        (0..self.u.len())
            .filter(|&i| psi.is_finite_at(i) && self.u[i] - psi[i] <= gap_tol && self.reaction[i] > lambda_tol)
            .collect()
    }
}

pub(crate) fn problem_scale(op: &AssembledOperator, b: &[f64], psi: &ExtendedGridFunction) -> f64 {
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    bmax.max(op.diagonal_scale() * psi.max_abs_finite())
}

pub(crate) fn finish(
    op: &AssembledOperator,
    b: &[f64],
    psi: &ExtendedGridFunction,
    u: Vec<f64>,
    iterations: usize,
    scale: f64,
    method: ViMethod,
) -> Result<ViSolution> {
    let au = op.apply(&u);
    let lambda: Vec<f64> = au.iter().zip(b).map(|(a, bi)| a - bi).collect();
    let mut compl = 0.0;
    let mut feas = 0.0f64;
    for i in 0..u.len() {
        if psi.is_finite_at(i) {
            compl += (lambda[i] * (u[i] - psi[i])).abs();
            feas = feas.max(psi[i] - u[i]);
        } else {
            feas = feas.max(lambda[i].abs());
        }
        feas = feas.max(-lambda[i]);
    }
    Ok(ViSolution {
        u: GridFunction::new(u)?,
        reaction: NodalMeasure::new(lambda),
        iterations,
        complementarity_residual: compl,
        feasibility_residual: feas,
        scale,
        method,
    })
}

/// Solves the complementarity system for a nodal load `b`.
pub fn solve_lcp(
    op: &AssembledOperator,
    b: &NodalMeasure,
    psi: &ExtendedGridFunction,
    cfg: &ViConfig,
) -> Result<ViSolution> {
    solve_lcp_from(op, b, psi, cfg, None)
}

/// As [`solve_lcp`] with an initial guess (e.g. a coarse-level solution).
pub fn solve_lcp_from(
    op: &AssembledOperator,
    b: &NodalMeasure,
    psi: &ExtendedGridFunction,
    cfg: &ViConfig,
    initial: Option<&[f64]>,
) -> Result<ViSolution> {
    cfg.validate()?;
    let n = op.n();
    for (name, len) in [("load", b.len()), ("obstacle", psi.len())] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len }).map_err(|e| match e {
                Error::Dimension { expected, got } => {
                    Error::Argument(format!("{name} has {got} entries, operator has {expected}"))
                }
                other => other,
            });
        }
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Feasibility(format!("load is not finite at node {i}")));
    }
    match cfg.method {
        ViMethod::Psor => psor::solve(op, b.values(), psi, cfg, initial),
        ViMethod::ActiveSet => active_set::solve(op, b.values(), psi, cfg, initial),
    }
}

/// Solves the obstacle problem for measure data `μ` and obstacle `ψ`.
pub fn solve_vi(
    op: &AssembledOperator,
    mu: &GridMeasure,
    psi: &ExtendedGridFunction,
    cfg: &ViConfig,
) -> Result<ViSolution> {
    let b = load_vector(mu, op.grid())?;
    solve_lcp(op, &b, psi, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble, CoefficientField, DomainGrid, DomainSpec};
    use std::sync::Arc;

    fn interval_op() -> AssembledOperator {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), 2).unwrap());
        assemble(g, &CoefficientField::identity(1)).unwrap()
    }

    #[test]
    fn hand_derived_interval_case() {
        let op = interval_op();
        let mu = GridMeasure::atom(vec![0.5], -1.0);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        for cfg in [ViConfig::psor(), ViConfig::active_set()] {
            let sol = solve_vi(&op, &mu, &psi, &cfg).unwrap();
            for (a, b) in sol.u.iter().zip([-0.05, -0.1, -0.05]) {
                assert!((a - b).abs() < 1e-10, "{cfg:?}: {:?}", sol.u);
            }
            for (a, b) in sol.reaction.iter().zip([0.0, 0.6, 0.0]) {
                assert!((a - b).abs() < 1e-10, "{cfg:?}: {:?}", sol.reaction);
            }
            assert!((sol.mass() - 0.6).abs() < 1e-9, "{}", sol.mass());
            assert_eq!(sol.contact_set(&psi), vec![1]);
        }
    }

    #[test]
    fn zero_data_is_unconstrained() {
        let op = interval_op();
        let psi = ExtendedGridFunction::constant(3, -1.0).unwrap();
        for cfg in [ViConfig::psor(), ViConfig::active_set()] {
            let sol = solve_vi(&op, &GridMeasure::zero(1), &psi, &cfg).unwrap();
            assert!(sol.u.iter().all(|v| *v == 0.0));
            assert!(sol.reaction.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn config_validation() {
        let op = interval_op();
        let psi = ExtendedGridFunction::constant(3, -1.0).unwrap();
        let b = NodalMeasure::zeros(3);
        let bad = ViConfig { omega: 2.0, ..ViConfig::psor() };
        assert!(solve_lcp(&op, &b, &psi, &bad).is_err());
        let short = ExtendedGridFunction::constant(2, -1.0).unwrap();
        assert!(solve_lcp(&op, &b, &short, &ViConfig::default()).is_err());
        assert_eq!("psor".parse::<ViMethod>().unwrap(), ViMethod::Psor);
        assert!("simplex".parse::<ViMethod>().is_err());
    }

    #[test]
    fn unconstrained_nodes_are_free() {
        let op = interval_op();
        let b = NodalMeasure::new(vec![0.0, -1.0, 0.0]);
        let psi = ExtendedGridFunction::new(vec![f64::NEG_INFINITY, -0.1, f64::NEG_INFINITY]).unwrap();
        for cfg in [ViConfig::psor(), ViConfig::active_set()] {
            let sol = solve_lcp(&op, &b, &psi, &cfg).unwrap();
            assert!((sol.u[1] + 0.1).abs() < 1e-10);
            assert!(sol.reaction[0].abs() < 1e-10 && sol.reaction[2].abs() < 1e-10);
            // Free neighbours are harmonic: u0 = u1/2.
            assert!((sol.u[0] + 0.05).abs() < 1e-10);
        }
    }
}
