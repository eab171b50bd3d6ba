//! Registry of scripted experiments. Each one runs a fixed sequence of
//! solves and records machine-checked assertions next to its table.

use std::collections::BTreeMap;
use std::time::Instant;

use obstacle_core::capacity::{cm_scenario, laplacian_unit_cube};
use obstacle_core::elliptic::{sobolev_norms, solve_linear};
use obstacle_core::grid::{ExtendedGridFunction, GridFunction};
use obstacle_core::measure::{bump_panel, load_vector, weak_star_pairing, GridMeasure, NodalMeasure};
use obstacle_core::obstacle::{
    entropy_residual, reaction_class_check, solve_lcp, solve_op_by_truncation_load, ReactionClass, ViConfig,
};

use crate::driver::{level_row, run_refinement, solve_level, LevelProblem};
use crate::error::{HarnessError, Result};
use crate::scenario::{
    CoefficientSection, DomainSection, MeasureSection, ObstacleSection, Overrides, Scenario, ScenarioFile,
    SolverSection,
};
use crate::table::{Assertion, ConvergenceTable, Row};

pub struct ExperimentSpec {
    pub name: &'static str,
    pub summary: &'static str,
    run: fn(&Overrides) -> Result<ConvergenceTable>,
}

pub const REGISTRY: &[ExperimentSpec] = &[
    ExperimentSpec {
        name: "delta_reaction",
        summary: "negative point mass against a constant obstacle: reaction mass, contact volume, max |u| per level",
        run: delta_reaction,
    },
    ExperimentSpec {
        name: "unbounded_reaction",
        summary: "1-D log obstacle: reaction mass grows by 2 ln 2 per level without leveling off",
        run: unbounded_reaction,
    },
    ExperimentSpec {
        name: "green_obstacle",
        summary: "3-D Green function obstacle: L^6 norm of the obstacle diverges under refinement",
        run: green_obstacle,
    },
    ExperimentSpec {
        name: "stability_strong",
        summary: "truncated integrable density plus flux data: W^{1,q} distance to the limit solution",
        run: stability_strong,
    },
    ExperimentSpec {
        name: "stability_obstacle",
        summary: "increasing obstacle families, and a non-monotone family through its lower envelope",
        run: stability_obstacle,
    },
    ExperimentSpec {
        name: "weakstar_failure",
        summary: "perforated cube data converging weak-* to zero while the solutions do not",
        run: weakstar_failure,
    },
    ExperimentSpec {
        name: "truncation_consistency",
        summary: "solutions through truncated data agree with direct solves",
        run: truncation_consistency,
    },
    ExperimentSpec {
        name: "entropy_check",
        summary: "entropy-type inequality for atom-free data against feasible test functions",
        run: entropy_check,
    },
    ExperimentSpec {
        name: "m0b_reaction",
        summary: "largest nodal share of the reaction under refinement, atom-free versus point data",
        run: m0b_reaction,
    },
];

pub fn find(name: &str) -> Result<&'static ExperimentSpec> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| HarnessError::Registry(name.to_string()))
}

/// Runs a registry experiment; `overrides` adjust its built-in scenario.
pub fn run_experiment(name: &str, overrides: &Overrides) -> Result<ConvergenceTable> {
    let spec = find(name)?;
    let start = Instant::now();
    let mut table = (spec.run)(overrides)?;
    table.wall_time_s = start.elapsed().as_secs_f64();
    Ok(table)
}

fn square() -> DomainSection {
    DomainSection {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        mask: None,
        alpha: None,
    }
}

fn constant(value: f64) -> ObstacleSection {
    ObstacleSection {
        kind: "constant".into(),
        value: Some(value),
        expr: None,
        pole: None,
    }
}

fn base_file(name: &str, experiment: &str, levels: Vec<u32>, domain: DomainSection, obstacle: ObstacleSection) -> ScenarioFile {
    ScenarioFile {
        name: name.into(),
        experiment: Some(experiment.into()),
        levels,
        q: None,
        output: None,
        domain,
        coefficient: CoefficientSection::default(),
        measure: MeasureSection::default(),
        obstacle,
        dominating: None,
        solver: SolverSection::default(),
    }
}

/// Negative unit point mass at the centre of the unit square, obstacle -1.
pub fn example7_1() -> ScenarioFile {
    let mut f = base_file("example7_1", "delta_reaction", vec![4, 5, 6, 7], square(), constant(-1.0));
    f.measure.atoms = vec![vec![0.5, 0.5, -1.0]];
    f
}

/// `ψ = (1-|x|)(1-ln(1-|x|))` on `(-1, 1)`, no data, dominated by `1/(1-|x|)`.
pub fn example5_2() -> ScenarioFile {
    let domain = DomainSection {
        lower: vec![-1.0],
        upper: vec![1.0],
        mask: None,
        alpha: None,
    };
    let obstacle = ObstacleSection {
        kind: "log-obstacle-1d".into(),
        value: None,
        expr: None,
        pole: None,
    };
    let mut f = base_file("example5_2", "unbounded_reaction", vec![4, 5, 6, 7, 8], domain, obstacle);
    f.dominating = Some(MeasureSection {
        density: Some("1/(1-abs(x))".into()),
        ..MeasureSection::default()
    });
    f
}

pub fn green_pole_3d() -> ScenarioFile {
    let domain = DomainSection {
        lower: vec![0.0; 3],
        upper: vec![1.0; 3],
        mask: None,
        alpha: None,
    };
    let obstacle = ObstacleSection {
        kind: "green-pole".into(),
        value: None,
        expr: None,
        pole: Some(vec![0.5; 3]),
    };
    let mut f = base_file("green_pole_3d", "green_obstacle", vec![3, 4, 5], domain, obstacle);
    f.dominating = Some(MeasureSection {
        atoms: vec![vec![0.5, 0.5, 0.5, 1.0]],
        ..MeasureSection::default()
    });
    f
}

/// The hand-checkable interval case: atom `-1` at `1/2`, obstacle `-0.1`.
pub fn interval_atom() -> ScenarioFile {
    let domain = DomainSection {
        lower: vec![0.0],
        upper: vec![1.0],
        mask: None,
        alpha: None,
    };
    let mut f = base_file("interval_atom", "truncation_consistency", vec![2, 4, 6], domain, constant(-0.1));
    f.measure.atoms = vec![vec![0.5, -1.0]];
    f
}

/// Density `-10` on the middle subsquare, obstacle `-0.05`.
pub fn subsquare_density() -> ScenarioFile {
    let mut f = base_file("subsquare_density", "m0b_reaction", vec![3, 4, 5, 6], square(), constant(-0.05));
    f.measure.density = Some("-2.5*(signum(x-0.25)-signum(x-0.75))*(signum(y-0.25)-signum(y-0.75))".into());
    f
}

/// Built-in scenario files, by name.
pub fn builtin_scenarios() -> Vec<ScenarioFile> {
    vec![example7_1(), example5_2(), green_pole_3d(), interval_atom(), subsquare_density()]
}

fn scenario(file: ScenarioFile, o: &Overrides) -> Result<Scenario> {
    Scenario::from_file(file)?.with_overrides(o)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn delta_reaction(o: &Overrides) -> Result<ConvergenceTable> {
    let scn = scenario(example7_1(), o)?;
    let mut table = run_refinement(&scn)?;
    // Closed form for a single contact node: m = 1 - |ψ|/G_h(x0, x0).
    for row in table.rows.iter_mut() {
        let problem = LevelProblem::build(&scn, row.level)?;
        let pole = problem.grid().nearest_interior(&[0.5, 0.5]);
        let mut delta = vec![0.0; problem.op.n()];
        delta[pole] = 1.0;
        let g = solve_linear(&problem.op, &NodalMeasure::new(delta), &scn.linear_config())?;
        row.extras.insert("green_diagonal".into(), g[pole]);
        row.extras.insert("single_node_mass".into(), (1.0 - 1.0 / g[pole]).max(0.0));
    }
    let mass = table.column(|r| r.mass_lambda);
    let umax = table.column(|r| r.u_max_abs);
    let vol = table.extra("contact_volume");
    let n = mass.len();
    table.assertions.push(Assertion::new(
        "reaction mass increasing",
        strictly_increasing(&mass),
        fmt_list(&mass),
    ));
    table.assertions.push(Assertion::new(
        "reaction mass at finest level >= 0.9",
        mass[n - 1] >= 0.9,
        format!("{:.6}", mass[n - 1]),
    ));
    table.assertions.push(Assertion::new(
        "max |u| decreasing",
        strictly_decreasing(&umax),
        fmt_list(&umax),
    ));
    table.assertions.push(Assertion::new(
        "max |u| at finest level <= 0.15",
        umax[n - 1] <= 0.15,
        format!("{:.6}", umax[n - 1]),
    ));
    let tail = &vol[n.saturating_sub(3)..];
    let shrinking = tail.len() == 3 && tail.windows(2).all(|w| w[0] > 0.0 && w[1] <= 0.7 * w[0]);
    table.assertions.push(Assertion::new(
        "contact volume drops by >= 30% on each of the last two steps",
        shrinking,
        fmt_list(&vol),
    ));
    Ok(table)
}

fn unbounded_reaction(o: &Overrides) -> Result<ConvergenceTable> {
    let scn = scenario(example5_2(), o)?;
    let mut table = run_refinement(&scn)?;
    let mass = table.column(|r| r.mass_lambda);
    let inc: Vec<f64> = mass.windows(2).map(|w| w[1] - w[0]).collect();
    for (row, d) in table.rows.iter_mut().skip(1).zip(&inc) {
        row.extras.insert("mass_increment".into(), *d);
    }
    let model = 2.0 * std::f64::consts::LN_2;
    let last: Vec<f64> = inc.iter().rev().take(2).rev().copied().collect();
    table.assertions.push(Assertion::new(
        "reaction mass strictly increasing",
        strictly_increasing(&mass),
        fmt_list(&mass),
    ));
    table.assertions.push(Assertion::new(
        "increments over the last three levels within 15% of 2 ln 2",
        last.len() == 2 && last.iter().all(|d| (d - model).abs() <= 0.15 * model),
        format!("{} vs {model:.6}", fmt_list(&last)),
    ));
    Ok(table)
}

fn green_obstacle(o: &Overrides) -> Result<ConvergenceTable> {
    let scn = scenario(green_pole_3d(), o)?;
    let mut table = run_refinement(&scn)?;
    let exponent = 2.0 * scn.dim() as f64 / (scn.dim() as f64 - 2.0);
    let mut norms = Vec::new();
    let mut gaps = Vec::new();
    for row in table.rows.iter_mut() {
        let problem = LevelProblem::build(&scn, row.level)?;
        let psi = GridFunction::new(problem.psi.values().to_vec())?;
        let l = sobolev_norms(&psi, problem.grid(), exponent)?.lq;
        let sol = solve_level(&scn, &problem, None)?;
        let gap = sol.u.iter().zip(psi.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        row.extras.insert("psi_l2star".into(), l);
        row.extras.insert("u_minus_psi".into(), gap);
        norms.push(l);
        gaps.push(gap / psi.max_abs());
    }
    table.assertions.push(Assertion::new(
        "obstacle norm in L^(2N/(N-2)) grows across levels",
        norms.len() >= 3 && strictly_increasing(&norms),
        fmt_list(&norms),
    ));
    table.assertions.push(Assertion::new(
        "solution rests on the obstacle",
        gaps.iter().all(|g| *g <= 1e-8),
        fmt_list(&gaps),
    ));
    Ok(table)
}

fn stability_strong(o: &Overrides) -> Result<ConvergenceTable> {
    let mut file = base_file("stability_strong", "stability_strong", vec![4, 5], square(), constant(-0.05));
    file.measure.density = Some("-1/sqrt(sqrt((x-1/3)^2+(y-1/3)^2))".into());
    file.measure.flux = Some(vec!["0.3*sin(PI*y)".into(), "0.3*cos(PI*x)".into()]);
    let scn = scenario(file, o)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new("stability_strong", hash.clone());
    for &level in scn.levels() {
        let problem = LevelProblem::build(&scn, level)?;
        let grid = problem.grid();
        let vol = grid.cell_volume();
        let f = scn.measure()?;
        let density = f.density.as_ref().expect("density present").eval(grid)?;
        let flux = load_vector(&f.flux_part(), grid)?;
        let limit = solve_level(&scn, &problem, None)?;
        let scale = sobolev_norms(&limit.u, grid, scn.q())?.w1q;
        let fmax = density.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut gaps = Vec::new();
        let mut k = 1.0;
        loop {
            let b: Vec<f64> = density
                .iter()
                .zip(flux.iter())
                .map(|(d, g)| d.clamp(-k, k) * vol + g)
                .collect();
            let sol = solve_lcp(&problem.op, &NodalMeasure::new(b), &problem.psi, scn.vi_config())?;
            let diff: Vec<f64> = sol.u.iter().zip(limit.u.iter()).map(|(a, b)| a - b).collect();
            gaps.push(sobolev_norms(&diff, grid, scn.q())?.w1q);
            if k > 2.0 * fmax {
                break;
            }
            k *= 2.0;
        }
        let monotone = gaps.windows(2).all(|w| w[1] <= w[0] && (w[1] < w[0] || w[0] == 0.0));
        let last = *gaps.last().unwrap();
        let mut row = level_row(&scn, &problem, &limit, &hash)?;
        row.extras.insert("gap_first".into(), gaps[0]);
        row.extras.insert("gap_final".into(), last);
        row.extras.insert("truncations".into(), gaps.len() as f64);
        table.rows.push(row);
        table.assertions.push(Assertion::new(
            format!("W1q distance decreases along k, level {level}"),
            monotone,
            fmt_list(&gaps),
        ));
        table.assertions.push(Assertion::new(
            format!("final W1q distance <= 1e-4 * |u|, level {level}"),
            last <= 1e-4 * scale,
            format!("{last:.3e} vs scale {scale:.3e}"),
        ));
    }
    Ok(table)
}

/// `φ_n = min_{k >= n} ψ_k` over a finite family.
pub fn lower_envelope(family: &[ExtendedGridFunction]) -> Vec<ExtendedGridFunction> {
    let mut out: Vec<ExtendedGridFunction> = Vec::with_capacity(family.len());
    for psi in family.iter().rev() {
        let next = match out.last() {
            Some(prev) => psi.min(prev),
            None => psi.clone(),
        };
        out.push(next);
    }
    out.reverse();
    out
}

fn stability_obstacle(o: &Overrides) -> Result<ConvergenceTable> {
    let mut file = base_file("stability_obstacle", "stability_obstacle", vec![4], square(), constant(-1.0));
    file.measure.density = Some("-100".into());
    let scn = scenario(file, o)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new("stability_obstacle", hash.clone());
    for &level in scn.levels() {
        let problem = LevelProblem::build(&scn, level)?;
        let cfg = scn.vi_config();
        let limit = solve_level(&scn, &problem, None)?;
        let solve_shifted = |shift: f64| solve_lcp(&problem.op, &problem.b, &problem.psi.shifted(-shift), cfg);

        // Increasing family ψ - 1/n.
        let ns: Vec<f64> = (0..8).map(|j| 10f64.powi(j)).collect();
        let mut sols = Vec::new();
        for n in &ns {
            sols.push(solve_shifted(1.0 / n)?);
        }
        let mut worst_step = f64::NEG_INFINITY;
        for w in sols.windows(2) {
            for i in 0..problem.op.n() {
                worst_step = worst_step.max(w[0].u[i] - w[1].u[i]);
            }
        }
        let final_gap = sols
            .last()
            .unwrap()
            .u
            .iter()
            .zip(limit.u.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        table.assertions.push(Assertion::new(
            format!("u_n increases with the obstacle, level {level}"),
            worst_step <= 1e-8,
            format!("largest decrease {worst_step:.3e}"),
        ));
        table.assertions.push(Assertion::new(
            format!("u_n reaches u within 1e-6, level {level}"),
            final_gap <= 1e-6,
            format!("{final_gap:.3e} at n = {:e}", ns[ns.len() - 1]),
        ));

        // Non-monotone family ψ - (2 + (-1)^n)/n through its lower envelope.
        let family: Vec<ExtendedGridFunction> = (1..=8)
            .map(|n| problem.psi.shifted(-(2.0 + (-1f64).powi(n)) / n as f64))
            .collect();
        let raw_monotone = family
            .windows(2)
            .all(|w| (0..problem.op.n()).all(|i| w[0][i] <= w[1][i]));
        let env = lower_envelope(&family);
        let env_sols: Vec<_> = env
            .iter()
            .map(|phi| solve_lcp(&problem.op, &problem.b, phi, cfg))
            .collect::<std::result::Result<_, _>>()?;
        let mut env_step = f64::NEG_INFINITY;
        for w in env_sols.windows(2) {
            for i in 0..problem.op.n() {
                env_step = env_step.max(w[0].u[i] - w[1].u[i]);
            }
        }
        table.assertions.push(Assertion::new(
            format!("envelope of a non-monotone family gives increasing solutions, level {level}"),
            !raw_monotone && env_step <= 1e-8,
            format!("family monotone: {raw_monotone}, largest decrease {env_step:.3e}"),
        ));
        let mut row = level_row(&scn, &problem, &limit, &hash)?;
        row.extras.insert("final_gap".into(), final_gap);
        table.rows.push(row);
    }
    Ok(table)
}

fn weakstar_failure(o: &Overrides) -> Result<ConvergenceTable> {
    let level = o.levels.as_ref().and_then(|l| l.last().copied()).unwrap_or(6);
    let op = laplacian_unit_cube(level)?;
    let grid = op.grid();
    let lin = obstacle_core::elliptic::LinearSolveConfig::default();
    let mut cfg = ViConfig::default();
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if let Some(m) = o.method {
        cfg.method = m;
    }
    if let Some(w) = o.omega {
        cfg.omega = w;
    }
    let panel = bump_panel(grid);
    let zero = ExtendedGridFunction::constant(op.n(), 0.0)?;
    let hash = format!("weakstar-level-{level}");
    let mut table = ConvergenceTable::new("weakstar_failure", hash.clone());
    let mut pairings: Vec<Vec<f64>> = Vec::new();
    let mut l2 = Vec::new();
    for n in 1..=3usize {
        let cm = cm_scenario(&op, n, &lin)?;
        let sol = solve_lcp(&op, &cm.mu, &zero, &cfg)?;
        let p: Vec<f64> = panel
            .iter()
            .map(|phi| weak_star_pairing(&cm.mu, phi))
            .collect::<std::result::Result<_, _>>()?;
        let norm = sobolev_norms(&sol.u, grid, 2.0)?;
        let mut extras = BTreeMap::new();
        extras.insert("n".to_string(), n as f64);
        extras.insert("hole_radius".to_string(), cm.radius);
        extras.insert("l2_norm".to_string(), norm.lq);
        extras.insert("hole_nodes".to_string(), cm.holes.iter().map(|h| h.len()).sum::<usize>() as f64);
        for (k, v) in p.iter().enumerate() {
            extras.insert(format!("pairing_{}", k + 1), *v);
        }
        table.rows.push(Row {
            level,
            h: grid.h(),
            mass_lambda: sol.mass(),
            tv_mu_minus: cm.mu.negative_part().total_variation(),
            bound_slack: cm.mu.negative_part().total_variation() - sol.mass(),
            u_max_abs: sol.u.max_abs(),
            contact_nodes: sol.contact_set(&zero).len(),
            compl_residual: sol.complementarity_residual,
            iters: sol.iterations,
            method: sol.method.name().into(),
            lq_norm: norm.lq,
            w1q_seminorm: norm.w1q,
            residual: sol.feasibility_residual,
            tv_mu: cm.mu.total_variation(),
            tv_mu_plus: cm.mu.positive_part().total_variation(),
            scenario_hash: hash.clone(),
            extras,
        });
        pairings.push(p);
        l2.push(norm.lq);
    }
    let shrink: Vec<f64> = (0..pairings[0].len())
        .map(|k| pairings[2][k].abs() / pairings[0][k].abs())
        .collect();
    let pairings_shrink = shrink.iter().all(|r| *r <= 0.6);
    let floor = 0.5 * l2[0];
    let stays = l2.iter().all(|v| *v >= floor);
    table.assertions.push(Assertion::new(
        "every bump pairing shrinks by >= 40% from n = 1 to n = 3",
        pairings_shrink,
        format!("ratios {}", fmt_list(&shrink)),
    ));
    table.assertions.push(Assertion::new(
        "solution L2 norm stays above half its n = 1 value",
        stays,
        format!("{} floor {floor:.4e}", fmt_list(&l2)),
    ));
    table.assertions.push(Assertion::new(
        "weak-* stability fails",
        pairings_shrink && stays,
        "data tend to zero against the panel, solutions do not",
    ));
    Ok(table)
}

fn truncation_consistency(o: &Overrides) -> Result<ConvergenceTable> {
    let scn = scenario(interval_atom(), o)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new("truncation_consistency", hash.clone());
    for &level in scn.levels() {
        let problem = LevelProblem::build(&scn, level)?;
        let direct = solve_level(&scn, &problem, None)?;
        let zero = NodalMeasure::zeros(problem.op.n());
        let rho = problem.rho.as_ref().unwrap_or(&zero);
        let u_data = solve_linear(&problem.op, &problem.b.combine(1.0, rho, -1.0), &scn.linear_config())?;
        let kmax = 2.0 * u_data.max_abs().max(1e-12);
        let schedule: Vec<f64> = (0..8).rev().map(|j| kmax / 2f64.powi(j)).collect();
        let run = solve_op_by_truncation_load(
            &problem.op,
            &problem.b,
            &problem.psi,
            problem.rho.as_ref(),
            &schedule,
            scn.vi_config(),
            scn.q(),
        )?;
        let gap = run
            .solution
            .u
            .iter()
            .zip(direct.u.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = direct.u.max_abs().max(direct.scale / problem.op.diagonal_scale());
        let tv_ok = run.trace.iter().all(|s| s.tv_regularized <= s.tv_data * (1.0 + 1e-10));
        let masses: Vec<f64> = run.trace.iter().map(|s| s.mass_lambda).collect();
        table.assertions.push(Assertion::new(
            format!("truncated and direct solutions agree, level {level}"),
            gap <= 1e-6 * scale.max(f64::MIN_POSITIVE),
            format!("gap {gap:.3e}, scale {scale:.3e}"),
        ));
        table.assertions.push(Assertion::new(
            format!("truncated data never exceed the total variation of the data, level {level}"),
            tv_ok,
            format!("masses along k {}", fmt_list(&masses)),
        ));
        let mut row = level_row(&scn, &problem, &direct, &hash)?;
        row.extras.insert("truncation_gap".into(), gap);
        table.rows.push(row);
    }
    Ok(table)
}

fn entropy_check(o: &Overrides) -> Result<ConvergenceTable> {
    let mut file = base_file("entropy_check", "entropy_check", vec![4], square(), constant(-0.05));
    file.measure.density = Some("-8*sin(PI*x)*sin(PI*y)".into());
    file.measure.flux = Some(vec!["0.2*x*y".into(), "0.1*cos(PI*x)".into()]);
    let scn = scenario(file, o)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new("entropy_check", hash.clone());
    for &level in scn.levels() {
        let problem = LevelProblem::build(&scn, level)?;
        let sol = solve_level(&scn, &problem, None)?;
        let panel = bump_panel(problem.grid());
        let mut worst = f64::INFINITY;
        let mut worst_scale = 1.0;
        let mut count = 0;
        for phi in &panel {
            for a in [-0.2, 0.1, 0.5, 2.0] {
                let v: Vec<f64> = (0..problem.op.n())
                    .map(|i| (sol.u[i] + a * phi[i]).max(problem.psi[i]))
                    .collect();
                let v = GridFunction::new(v)?;
                for j in [0.1, 1.0, 10.0] {
                    let r = entropy_residual(&problem.op, &sol, &problem.mu, &problem.psi, &v, j)?;
                    let scale = (sol.reaction.total_variation() + problem.b.total_variation()) * j.min(v.max_abs() + sol.u.max_abs());
                    if r / scale.max(1e-300) < worst / worst_scale {
                        worst = r;
                        worst_scale = scale.max(1e-300);
                    }
                    count += 1;
                }
            }
        }
        table.assertions.push(Assertion::new(
            format!("entropy residual nonnegative, level {level}"),
            worst >= -1e-8 * worst_scale,
            format!("{count} cases, smallest {worst:.3e} (scale {worst_scale:.3e})"),
        ));
        let mut row = level_row(&scn, &problem, &sol, &hash)?;
        row.extras.insert("entropy_min".into(), worst);
        table.rows.push(row);
    }
    Ok(table)
}

fn m0b_reaction(o: &Overrides) -> Result<ConvergenceTable> {
    let scn = scenario(subsquare_density(), o)?;
    let mut table = run_refinement(&scn)?;
    let mut diffuse = Vec::new();
    let mut atomic = Vec::new();
    let point = GridMeasure::atom(vec![0.5, 0.5], -1.0);
    for &level in scn.levels() {
        let problem = LevelProblem::build(&scn, level)?;
        diffuse.push((level, solve_level(&scn, &problem, None)?));
        let b = load_vector(&point, problem.grid())?;
        atomic.push((level, solve_lcp(&problem.op, &b, &problem.psi, scn.vi_config())?));
    }
    let d_runs: Vec<_> = diffuse.iter().map(|(l, s)| (*l, s)).collect();
    let a_runs: Vec<_> = atomic.iter().map(|(l, s)| (*l, s)).collect();
    let d = reaction_class_check(&scn.measure()?, &d_runs)?;
    let a = reaction_class_check(&point, &a_runs)?;
    for (row, (_, mass, share)) in table.rows.iter_mut().zip(&a.rows) {
        row.extras.insert("point_mass_share".into(), *share);
        row.extras.insert("point_mass_reaction".into(), *mass);
    }
    let d_shares: Vec<f64> = d.rows.iter().map(|r| r.2).collect();
    let a_shares: Vec<f64> = a.rows.iter().map(|r| r.2).collect();
    table.assertions.push(Assertion::new(
        "atom-free data: largest nodal share decreasing",
        d.verdict == ReactionClass::Diffuse && d.pass,
        format!("{} {}", d.verdict.label(), fmt_list(&d_shares)),
    ));
    table.assertions.push(Assertion::new(
        "point data: flagged atomic reaction",
        a.verdict == ReactionClass::Atomic && a.pass,
        format!("{} {}", a.verdict.label(), fmt_list(&a_shares)),
    ));
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_found() {
        let mut names: Vec<_> = REGISTRY.iter().map(|e| e.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), REGISTRY.len());
        assert!(find("delta_reaction").is_ok());
        assert!(matches!(find("nope"), Err(HarnessError::Registry(_))));
    }

    #[test]
    fn builtins_validate() {
        for f in builtin_scenarios() {
            Scenario::from_file(f.clone()).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        }
    }

    #[test]
    fn lower_envelope_is_increasing() {
        let fam: Vec<_> = [3.0, 1.0, 2.0, 0.5]
            .iter()
            .map(|c| ExtendedGridFunction::constant(2, *c).unwrap())
            .collect();
        let env = lower_envelope(&fam);
        let firsts: Vec<f64> = env.iter().map(|e| e[0]).collect();
        assert_eq!(firsts, vec![0.5, 0.5, 0.5, 0.5]);
        let fam2: Vec<_> = [0.0, 2.0, 1.0, 3.0]
            .iter()
            .map(|c| ExtendedGridFunction::constant(1, *c).unwrap())
            .collect();
        let firsts: Vec<f64> = lower_envelope(&fam2).iter().map(|e| e[0]).collect();
        assert_eq!(firsts, vec![0.0, 1.0, 1.0, 3.0]);
    }
}
