//! Linear solves `op·u = b`, the duality identity and discrete Sobolev norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, CsrMatrix, DomainGrid, GridFunction, NodeKind};
use crate::measure::NodalMeasure;

/// Krylov method selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KrylovMethod {
    /// Conjugate gradients for symmetric operators, BiCGSTAB otherwise.
    #[default]
    Auto,
    ConjugateGradient,
    BiCgStab,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolveConfig {
    /// Relative max-norm residual: `‖op·u - b‖∞ ≤ tol·‖b‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: KrylovMethod,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
            method: KrylovMethod::Auto,
        }
    }
}

impl LinearSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Argument(format!("solver tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Argument("max iterations must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖A x - b‖∞ / ‖b‖∞`.
    pub residual: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(m: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    m.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    max_abs(r)
}

/// Solves `m·x = b`; `x0` seeds the iteration.
pub fn solve_csr(
    m: &CsrMatrix,
    symmetric: bool,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &LinearSolveConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    cfg.validate()?;
    let n = m.n();
    if b.len() != n {
        return Err(Error::Dimension { expected: n, got: b.len() });
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("right-hand side is not finite at node {i}")));
    }
    let bnorm = max_abs(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let use_cg = match cfg.method {
        KrylovMethod::Auto => symmetric,
        KrylovMethod::ConjugateGradient => true,
        KrylovMethod::BiCgStab => false,
    };
    let inv_diag: Vec<f64> = m
        .diagonal()
        .iter()
        .map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let target = cfg.tol * bnorm;
    let mut used = 0usize;
    let mut r = vec![0.0; n];
    let mut res = true_residual(m, &x, b, &mut r);
    // Restart from the true residual whenever the recursive one has converged.
    while res > target && used < cfg.max_iter {
        let budget = cfg.max_iter - used;
        let its = if use_cg {
            cg_pass(m, &inv_diag, &mut x, &mut r, target, budget)
        } else {
            bicgstab_pass(m, &inv_diag, &mut x, &mut r, target, budget)
        };
        used += its.max(1);
        res = true_residual(m, &x, b, &mut r);
        if its == 0 {
            break;
        }
    }
    let rel = res / bnorm;
    if res > target {
        return Err(Error::Convergence {
            method: if use_cg { "conjugate gradient" } else { "BiCGSTAB" },
            iterations: used,
            residual: rel,
        });
    }
    Ok((x, SolveStats { iterations: used, residual: rel }))
}

/// Jacobi-preconditioned CG on the residual `r = b - A x`; returns iterations used.
fn cg_pass(m: &CsrMatrix, inv_diag: &[f64], x: &mut [f64], r: &mut [f64], target: f64, budget: usize) -> usize {
    let n = x.len();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(r, &z);
    for it in 0..budget {
        m.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return it;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if max_abs(r) <= 0.5 * target {
            return it + 1;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    budget
}

/// Right-preconditioned BiCGSTAB; returns iterations used.
fn bicgstab_pass(
    m: &CsrMatrix,
    inv_diag: &[f64],
    x: &mut [f64],
    r: &mut [f64],
    target: f64,
    budget: usize,
) -> usize {
    let n = x.len();
    let r_hat = r.to_vec();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..budget {
        let rho_new = dot(&r_hat, r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return it;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        m.mul_vec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return it;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if max_abs(&s) <= 0.5 * target {
            for i in 0..n {
                x[i] += alpha * y[i];
                r[i] = s[i];
            }
            return it + 1;
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        m.mul_vec_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return it;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if max_abs(r) <= 0.5 * target {
            return it + 1;
        }
        if omega == 0.0 {
            return it + 1;
        }
    }
    budget
}

/// Solves `op·u = b` to the configured relative max-norm residual.
pub fn solve_linear(op: &AssembledOperator, b: &NodalMeasure, cfg: &LinearSolveConfig) -> Result<GridFunction> {
    Ok(solve_linear_with_stats(op, b, cfg)?.0)
}

pub fn solve_linear_with_stats(
    op: &AssembledOperator,
    b: &NodalMeasure,
    cfg: &LinearSolveConfig,
) -> Result<(GridFunction, SolveStats)> {
    let (u, stats) = solve_csr(op.matrix(), op.is_symmetric(), b.values(), None, cfg)?;
    Ok((GridFunction::new(u)?, stats))
}

/// Dense LU solve; the reference path for small systems.
pub fn dense_solve(m: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.n();
    if b.len() != n {
        return Err(Error::Dimension { expected: n, got: b.len() });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in m.triplets() {
        a[(i, j)] = v;
    }
    let rhs = DVector::from_column_slice(b);
    a.lu()
        .solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::Argument("matrix is singular".into()))
}

/// Both sides of `∫ u_μ g dx = ∫ u*_g dμ` and their difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityResidual {
    pub primal: f64,
    pub dual: f64,
    pub residual: f64,
    /// `‖u_μ‖∞·‖g‖∞·|Ω_h| + ‖u*_g‖∞·TV(μ)`: the magnitude the residual is compared against.
    pub scale: f64,
}

/// Compares `Σ u_μ g h^N` against `Σ u*_g μ` where `op*·u*_g = g h^N`.
pub fn duality_check(
    op: &AssembledOperator,
    mu: &NodalMeasure,
    g: &GridFunction,
    cfg: &LinearSolveConfig,
) -> Result<DualityResidual> {
    let vol = op.grid().cell_volume();
    let u = solve_linear(op, mu, cfg)?;
    let g_load = NodalMeasure::new(g.iter().map(|v| v * vol).collect());
    let u_star = solve_linear(&op.adjoint(), &g_load, cfg)?;
    let primal: f64 = u.iter().zip(g.iter()).map(|(a, b)| a * b * vol).sum();
    let dual: f64 = u_star.iter().zip(mu.iter()).map(|(a, b)| a * b).sum();
    let scale = u.max_abs() * g.max_abs() * vol * g.len() as f64 + u_star.max_abs() * mu.total_variation();
    Ok(DualityResidual {
        primal,
        dual,
        residual: (primal - dual).abs(),
        scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevNorms {
    pub lq: f64,
    pub w1q: f64,
    pub q: f64,
    /// Whether `1 < q < N/(N-1)`, the range where measure-data solutions live.
    pub q_in_range: bool,
}

/// Discrete `L^q` norm and `W^{1,q}` seminorm. Edges to eliminated nodes use
/// the boundary value 0.
pub fn sobolev_norms(u: &[f64], grid: &DomainGrid, q: f64) -> Result<SobolevNorms> {
    if !(q > 1.0) {
        return Err(Error::Argument(format!("exponent q must exceed 1, got {q}")));
    }
    if u.len() != grid.n_interior() {
        return Err(Error::Dimension {
            expected: grid.n_interior(),
            got: u.len(),
        });
    }
    let n = grid.dim();
    let vol = grid.cell_volume();
    let h = grid.h();
    let lq = (u.iter().map(|v| v.abs().powf(q)).sum::<f64>() * vol).powf(1.0 / q);
    let mut grad = 0.0;
    for i in 0..grid.n_interior() {
        let lin = grid.lattice_index(i);
        for d in 0..n {
            let fwd = grid.shift(lin, d, 1).expect("interior nodes have neighbours");
            let next = grid.interior_index(fwd).map_or(0.0, |j| u[j]);
            grad += ((next - u[i]) / h).abs().powf(q);
            let back = grid.shift(lin, d, -1).expect("interior nodes have neighbours");
            if grid.kind(back) == NodeKind::Boundary {
                grad += (u[i] / h).abs().powf(q);
            }
        }
    }
    let w1q = (grad * vol).powf(1.0 / q);
    let q_in_range = n == 1 || q < n as f64 / (n as f64 - 1.0);
    Ok(SobolevNorms { lq, w1q, q, q_in_range })
}
