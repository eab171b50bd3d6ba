use super::psor::projected_residual;
use super::{finish, problem_scale, ViConfig, ViMethod, ViSolution};
use crate::elliptic::solve_csr;
use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, ExtendedGridFunction};

/// Solves on the inactive set with `u = ψ` on the active set.
fn inactive_solve(
    op: &AssembledOperator,
    b: &[f64],
    psi: &ExtendedGridFunction,
    active: &[bool],
    u: &mut [f64],
    cfg: &ViConfig,
) -> Result<()> {
    let n = op.n();
    let m = op.matrix();
    let mut free = Vec::new();
    for i in 0..n {
        if active[i] {
            u[i] = psi[i];
        } else {
            free.push(i);
        }
    }
    if free.is_empty() {
        return Ok(());
    }
    let mut rhs = Vec::with_capacity(free.len());
    for &i in &free {
        let mut s = b[i];
        for (j, a) in m.row(i) {
            if active[j] {
                s -= a * psi[j];
            }
        }
        rhs.push(s);
    }
    let sub = m.principal_submatrix(&free);
    let x0: Vec<f64> = free.iter().map(|&i| u[i]).collect();
    let lin = cfg.linear.clone().with_tol((cfg.tol * 1e-2).max(1e-14));
    let (x, _) = solve_csr(&sub, op.is_symmetric(), &rhs, Some(&x0), &lin)?;
    for (k, &i) in free.iter().enumerate() {
        u[i] = x[k];
    }
    Ok(())
}

pub(super) fn solve(
    op: &AssembledOperator,
    b: &[f64],
    psi: &ExtendedGridFunction,
    cfg: &ViConfig,
    initial: Option<&[f64]>,
) -> Result<ViSolution> {
    let n = op.n();
    let scale = problem_scale(op, b, psi);
    let c = op.matrix().diagonal();
    let threshold = 1e-13 * scale;
    let cap = ((cfg.safeguard * n as f64).ceil() as usize).max(1);

    let mut active = vec![false; n];
    let mut u = vec![0.0; n];
    match initial {
        Some(x) => {
            u.copy_from_slice(x);
            for i in 0..n {
                active[i] = psi.is_finite_at(i) && u[i] <= psi[i];
            }
        }
        None => {}
    }
    inactive_solve(op, b, psi, &active, &mut u, cfg)?;

    for it in 1..=cfg.max_iter {
        let au = op.apply(&u);
        // Multiplier estimate: zero off the active set.
        let mut changes: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            if !psi.is_finite_at(i) {
                continue;
            }
            let lambda = if active[i] { au[i] - b[i] } else { 0.0 };
            let indicator = lambda + c[i] * (psi[i] - u[i]);
            let want = indicator > threshold;
            if want != active[i] {
                changes.push((indicator.abs(), i));
            }
        }
        if changes.is_empty() {
            let res = projected_residual(&au, b, &u, psi);
            if res <= cfg.tol * scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
                return finish(op, b, psi, u, it, scale, ViMethod::ActiveSet);
            }
            return Err(Error::Convergence {
                method: "active set",
                iterations: it,
                residual: res / scale,
            });
        }
        if changes.len() > cap {
            changes.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            changes.truncate(cap);
        }
        for &(_, i) in &changes {
            active[i] = !active[i];
        }
        inactive_solve(op, b, psi, &active, &mut u, cfg)?;
    }
    let au = op.apply(&u);
    Err(Error::Convergence {
        method: "active set",
        iterations: cfg.max_iter,
        residual: projected_residual(&au, b, &u, psi) / scale.max(f64::MIN_POSITIVE),
    })
}
