use super::{solve_lcp, ViConfig, ViSolution};
use crate::elliptic::sobolev_norms;
use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, ExtendedGridFunction};
use crate::measure::{load_vector, regularize_load_by_truncation, GridMeasure, NodalMeasure};

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationStep {
    pub k: f64,
    pub mass_lambda: f64,
    /// `TV(op·T_k(u_{μ-ρ}))`.
    pub tv_regularized: f64,
    /// `TV(μ - ρ)` at the nodal level; bounds `tv_regularized`.
    pub tv_data: f64,
    /// `W^{1,q}` seminorm of `u_k - u_final`.
    pub w1q_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationRun {
    pub solution: ViSolution,
    pub trace: Vec<TruncationStep>,
}

/// Solves with data `op·T_k(u_{μ-ρ}) + ρ` for each `k` of an increasing schedule.
pub fn solve_op_by_truncation_load(
    op: &AssembledOperator,
    b: &NodalMeasure,
    psi: &ExtendedGridFunction,
    rho: Option<&NodalMeasure>,
    schedule: &[f64],
    cfg: &ViConfig,
    q: f64,
) -> Result<TruncationRun> {
    if schedule.is_empty() {
        return Err(Error::Argument("truncation schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("truncation schedule must be strictly increasing".into()));
    }
    let zero = NodalMeasure::zeros(op.n());
    let rho = rho.unwrap_or(&zero);
    let diff = b.combine(1.0, rho, -1.0);
    let tv_data = diff.total_variation();
    let mut runs = Vec::with_capacity(schedule.len());
    for &k in schedule {
        let reg = regularize_load_by_truncation(&diff, k, op, &cfg.linear)?;
        let tv_regularized = reg.total_variation();
        let data = reg.combine(1.0, rho, 1.0);
        let sol = solve_lcp(op, &data, psi, cfg)?;
        runs.push((k, tv_regularized, sol));
    }
    let final_u = runs.last().unwrap().2.u.clone();
    let mut trace = Vec::with_capacity(runs.len());
    for (k, tv_regularized, sol) in &runs {
        let gap: Vec<f64> = sol.u.iter().zip(final_u.iter()).map(|(a, b)| a - b).collect();
        trace.push(TruncationStep {
            k: *k,
            mass_lambda: sol.mass(),
            tv_regularized: *tv_regularized,
            tv_data,
            w1q_gap: sobolev_norms(&gap, op.grid(), q)?.w1q,
        });
    }
    let solution = runs.pop().unwrap().2;
    Ok(TruncationRun { solution, trace })
}

/// As [`solve_op_by_truncation_load`], starting from measures.
pub fn solve_op_by_truncation(
    op: &AssembledOperator,
    mu: &GridMeasure,
    psi: &ExtendedGridFunction,
    rho: Option<&GridMeasure>,
    schedule: &[f64],
    cfg: &ViConfig,
    q: f64,
) -> Result<TruncationRun> {
    let b = load_vector(mu, op.grid())?;
    let r = rho.map(|r| load_vector(r, op.grid())).transpose()?;
    solve_op_by_truncation_load(op, &b, psi, r.as_ref(), schedule, cfg, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble, CoefficientField, DomainGrid, DomainSpec};
    use crate::obstacle::solve_vi;
    use std::sync::Arc;

    #[test]
    fn interval_schedule_masses() {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), 2).unwrap());
        let op = assemble(g, &CoefficientField::identity(1)).unwrap();
        let mu = GridMeasure::atom(vec![0.5], -1.0);
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let cfg = ViConfig::default();
        let run = solve_op_by_truncation(&op, &mu, &psi, None, &[0.05, 0.1, 0.2, 1.0], &cfg, 1.1).unwrap();
        let masses: Vec<f64> = run.trace.iter().map(|s| s.mass_lambda).collect();
        for (m, want) in masses.iter().zip([0.0, 0.0, 0.4, 0.6]) {
            assert!((m - want).abs() < 1e-10, "{masses:?}");
        }
        for s in &run.trace {
            assert!(s.tv_regularized <= s.tv_data * (1.0 + 1e-10));
        }
        assert_eq!(run.trace.last().unwrap().w1q_gap, 0.0);
        let direct = solve_vi(&op, &mu, &psi, &cfg).unwrap();
        for (a, b) in run.solution.u.iter().zip(direct.u.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_must_increase() {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), 2).unwrap());
        let op = assemble(g, &CoefficientField::identity(1)).unwrap();
        let psi = ExtendedGridFunction::constant(3, -0.1).unwrap();
        let mu = GridMeasure::zero(1);
        let cfg = ViConfig::default();
        assert!(solve_op_by_truncation(&op, &mu, &psi, None, &[1.0, 0.5], &cfg, 1.1).is_err());
        assert!(solve_op_by_truncation(&op, &mu, &psi, None, &[], &cfg, 1.1).is_err());
    }
}
