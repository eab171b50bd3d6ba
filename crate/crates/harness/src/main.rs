use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use obstacle_core::capacity::{capacitary_potential, capacity};
use obstacle_core::grid::{assemble, DomainGrid};
use obstacle_core::obstacle::ViMethod;
use obstacle_harness::driver::{bound_assertion, level_row, solve_level, LevelProblem};
use obstacle_harness::error::{HarnessError, Result};
use obstacle_harness::experiments::{run_experiment, REGISTRY};
use obstacle_harness::scenario::{Overrides, Scenario};
use obstacle_harness::sets::SetLiteral;
use obstacle_harness::table::{Assertion, ConvergenceTable};

/// Discrete obstacle problems with measure data.
#[derive(Parser)]
#[command(name = "obstacle-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Solver tolerance (relative to the problem scale).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// psor or activeset.
    #[arg(long, global = true)]
    method: Option<ViMethod>,
    /// Relaxation factor for projected SOR.
    #[arg(long, global = true)]
    omega: Option<f64>,
    /// Exponent for the Lq and W1q norms.
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Refinement levels, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Directory for csv, json-lines and plot-data output.
    #[arg(long, global = true, env = "OBSTACLE_LAB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario at its finest level.
    Solve { scenario: PathBuf },
    /// Solve a scenario on every level with bound and minimality checks.
    Refine { scenario: PathBuf },
    /// Run a registry experiment.
    Experiment { name: String },
    /// Capacity of a grid set at the finest level of a scenario.
    Capacity {
        scenario: PathBuf,
        /// e.g. "ball(0.5, 0.5; 0.1)" or "box(0,0; 0.2,0.2) | points(0.7, 0.7)".
        #[arg(long)]
        set: String,
    },
    /// List registry experiments.
    ListExperiments,
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            tol: self.tol,
            method: self.method,
            omega: self.omega,
            q: self.q,
            levels: self.levels.clone(),
        }
    }
}

fn load(path: &Path, o: &Overrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::parse(&text)?.with_overrides(o)
}

fn solve(scn: &Scenario) -> Result<ConvergenceTable> {
    let start = Instant::now();
    let level = *scn.levels().last().expect("levels are non-empty");
    let problem = LevelProblem::build(scn, level)?;
    let sol = solve_level(scn, &problem, None)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new(scn.name(), hash.clone());
    let row = level_row(scn, &problem, &sol, &hash)?;
    table.assertions.push(bound_assertion(&row));
    table.rows.push(row);
    table.wall_time_s = start.elapsed().as_secs_f64();
    Ok(table)
}

fn capacity_table(scn: &Scenario, literal: &str) -> Result<ConvergenceTable> {
    let set = SetLiteral::parse(literal)?;
    let hash = scn.hash();
    let mut table = ConvergenceTable::new(format!("{}_capacity", scn.name()), hash.clone());
    let start = Instant::now();
    let level = *scn.levels().last().expect("levels are non-empty");
    let wrap = |source| HarnessError::Level { level, source };
    let grid = Arc::new(DomainGrid::build(&scn.domain_spec()?, level).map_err(wrap)?);
    let op = assemble(grid, &scn.coefficient()).map_err(wrap)?;
    let e = set.to_grid_set(op.grid())?;
    let cap = capacity(&op, &e, scn.vi_config()).map_err(wrap)?;
    let pot = capacitary_potential(&op, &e, scn.vi_config()).map_err(wrap)?;
    let problem = LevelProblem::build(scn, level)?;
    let mut row = level_row(scn, &problem, &pot, &hash)?;
    row.extras.insert("capacity".into(), cap);
    row.extras.insert("set_nodes".into(), e.len() as f64);
    let gap = (cap - pot.mass()).abs();
    table.assertions.push(Assertion::new(
        "capacity equals the reaction mass of the capacitary potential",
        gap <= 1e-8 * cap.max(1.0),
        format!("capacity {cap:.10e}, mass {:.10e}", pot.mass()),
    ));
    table.rows.push(row);
    table.wall_time_s = start.elapsed().as_secs_f64();
    Ok(table)
}

fn report(table: &ConvergenceTable, out: Option<&Path>) -> Result<bool> {
    print!("{}", table.to_csv()?);
    for a in &table.assertions {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    if let Some(dir) = out {
        for p in table.emit_all(dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(table.all_pass())
}

fn run(cli: Cli) -> Result<bool> {
    let o = cli.global.overrides();
    let out = cli.global.out.as_deref();
    let table = match cli.command {
        Command::ListExperiments => {
            for e in REGISTRY {
                println!("{:<24}{}", e.name, e.summary);
            }
            return Ok(true);
        }
        Command::Solve { scenario } => solve(&load(&scenario, &o)?)?,
        Command::Refine { scenario } => obstacle_harness::driver::run_refinement(&load(&scenario, &o)?)?,
        Command::Experiment { name } => run_experiment(&name, &o)?,
        Command::Capacity { scenario, set } => capacity_table(&load(&scenario, &o)?, &set)?,
    };
    report(&table, out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
