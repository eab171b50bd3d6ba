use super::{finish, problem_scale, ViConfig, ViMethod, ViSolution};
use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, ExtendedGridFunction};

/// Max-norm of the projected residual `min(u - ψ, op·u - b)`, measured in load units.
pub(crate) fn projected_residual(au: &[f64], b: &[f64], u: &[f64], psi: &ExtendedGridFunction) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..u.len() {
        let w = au[i] - b[i];
        let r = if psi.is_finite_at(i) && u[i] <= psi[i] { (-w).max(0.0) } else { w.abs() };
        worst = worst.max(r);
    }
    worst
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
    let m = op.matrix();
    let diag = m.diagonal();
    let mut u: Vec<f64> = match initial {
        Some(x) => x.iter().zip(psi.iter()).map(|(v, p)| v.max(*p)).collect(),
        None => psi.iter().map(|p| p.max(0.0)).collect(),
    };
    let target = cfg.tol * scale;
    let mut au = op.apply(&u);
    let mut res = projected_residual(&au, b, &u, psi);
    let mut sweeps = 0;
    while res > target {
        if sweeps >= cfg.max_iter {
            return Err(Error::Convergence {
                method: "projected SOR",
                iterations: sweeps,
                residual: res / scale.max(f64::MIN_POSITIVE),
            });
        }
        for i in 0..n {
            let mut s = 0.0;
            for (j, a) in m.row(i) {
                s += a * u[j];
            }
            let gs = u[i] + (b[i] - s) / diag[i];
            let relaxed = u[i] + cfg.omega * (gs - u[i]);
            u[i] = relaxed.max(psi[i]);
        }
        sweeps += 1;
        au = op.apply(&u);
        res = projected_residual(&au, b, &u, psi);
    }
    finish(op, b, psi, u, sweeps, scale, ViMethod::Psor)
}
