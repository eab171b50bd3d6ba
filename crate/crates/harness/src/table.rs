//! Convergence tables and their csv, json-lines and plot-data forms.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SOLVE_COLUMNS: [&str; 10] = [
    "level",
    "h",
    "mass_lambda",
    "tv_mu_minus",
    "bound_slack",
    "u_max_abs",
    "contact_nodes",
    "compl_residual",
    "iters",
    "method",
];
pub const NORM_COLUMNS: [&str; 3] = ["lq_norm", "w1q_seminorm", "residual"];
/// `tv_mu_minus` is shared with the solve group.
pub const MEASURE_COLUMNS: [&str; 2] = ["tv_mu", "tv_mu_plus"];

/// One refinement level. `tv_mu_minus` is `TV((μ - ρ)⁻)`, the reaction
/// bound; it is `TV(μ⁻)` when there is no dominating measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub level: u32,
    pub h: f64,
    pub mass_lambda: f64,
    pub tv_mu_minus: f64,
    pub bound_slack: f64,
    pub u_max_abs: f64,
    pub contact_nodes: usize,
    pub compl_residual: f64,
    pub iters: usize,
    pub method: String,
    pub lq_norm: f64,
    pub w1q_seminorm: f64,
    pub residual: f64,
    pub tv_mu: f64,
    pub tv_mu_plus: f64,
    pub scenario_hash: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub name: String,
    pub scenario_hash: String,
    pub wall_time_s: f64,
    pub rows: Vec<Row>,
    pub assertions: Vec<Assertion>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
    PlotData,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
            Format::PlotData => "dat",
        }
    }
}

impl ConvergenceTable {
    pub fn new(name: impl Into<String>, scenario_hash: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            scenario_hash: scenario_hash.into(),
            wall_time_s: 0.0,
            rows: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn column(&self, f: impl Fn(&Row) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn extra(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.extras.get(name).copied().unwrap_or(f64::NAN))
            .collect()
    }

    fn extra_columns(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.extras.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = SOLVE_COLUMNS
            .iter()
            .chain(NORM_COLUMNS.iter())
            .chain(MEASURE_COLUMNS.iter())
            .map(|s| s.to_string())
            .collect();
        h.extend(self.extra_columns());
        h.push("scenario_hash".into());
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let extras = self.extra_columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.level.to_string(),
                r.h.to_string(),
                r.mass_lambda.to_string(),
                r.tv_mu_minus.to_string(),
                r.bound_slack.to_string(),
                r.u_max_abs.to_string(),
                r.contact_nodes.to_string(),
                r.compl_residual.to_string(),
                r.iters.to_string(),
                r.method.clone(),
                r.lq_norm.to_string(),
                r.w1q_seminorm.to_string(),
                r.residual.to_string(),
                r.tv_mu.to_string(),
                r.tv_mu_plus.to_string(),
            ];
            for e in &extras {
                rec.push(r.extras.get(e).map(|v| v.to_string()).unwrap_or_default());
            }
            rec.push(r.scenario_hash.clone());
            w.write_record(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io {
            path: "<memory>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Gnuplot blocks, one per quantity, separated by two blank lines.
    pub fn to_plot_data(&self) -> String {
        let mut series: Vec<(String, Vec<f64>)> = vec![
            ("mass_lambda".into(), self.column(|r| r.mass_lambda)),
            ("tv_mu_minus".into(), self.column(|r| r.tv_mu_minus)),
            ("u_max_abs".into(), self.column(|r| r.u_max_abs)),
            ("contact_nodes".into(), self.column(|r| r.contact_nodes as f64)),
            ("lq_norm".into(), self.column(|r| r.lq_norm)),
            ("w1q_seminorm".into(), self.column(|r| r.w1q_seminorm)),
        ];
        for e in self.extra_columns() {
            let v = self.extra(&e);
            series.push((e, v));
        }
        let mut out = String::new();
        for (k, (name, values)) in series.iter().enumerate() {
            if k > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!("# {name}\n# level value\n"));
            for (r, v) in self.rows.iter().zip(values) {
                out.push_str(&format!("{} {}\n", r.level, v));
            }
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::JsonLines => self.to_json_lines(),
            Format::PlotData => Ok(self.to_plot_data()),
        }
    }

    /// Writes `<dir>/<name>.<ext>` through a temporary file and a rename.
    pub fn emit(&self, format: Format, dir: &Path) -> Result<PathBuf> {
        let text = self.render(format)?;
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        write_atomic(&path, &text)?;
        Ok(path)
    }

    /// Writes every format plus a metadata file with timings and assertions.
    pub fn emit_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for f in [Format::Csv, Format::JsonLines, Format::PlotData] {
            paths.push(self.emit(f, dir)?);
        }
        let meta = serde_json::json!({
            "name": self.name,
            "scenario_hash": self.scenario_hash,
            "wall_time_s": self.wall_time_s,
            "assertions": self.assertions,
        });
        let path = dir.join(format!("{}.meta.json", self.name));
        write_atomic(&path, &serde_json::to_string_pretty(&meta)?)?;
        paths.push(path);
        Ok(paths)
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Parses json-lines output back into rows.
pub fn read_json_lines(text: &str) -> Result<Vec<Row>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: u32) -> Row {
        Row {
            level,
            h: 0.5f64.powi(level as i32),
            mass_lambda: 0.1 * level as f64,
            tv_mu_minus: 1.0,
            bound_slack: 1.0 - 0.1 * level as f64,
            u_max_abs: 1.0 / 3.0,
            contact_nodes: 1,
            compl_residual: 1e-17,
            iters: 4,
            method: "activeset".into(),
            lq_norm: 0.2,
            w1q_seminorm: 0.7,
            residual: 0.0,
            tv_mu: 1.0,
            tv_mu_plus: 0.0,
            scenario_hash: "00ff".into(),
            extras: BTreeMap::from([("max_share".to_string(), 1.0)]),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ConvergenceTable::new("empty", "abc");
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("level,h,mass_lambda,tv_mu_minus,bound_slack,u_max_abs,contact_nodes,compl_residual,iters,method,lq_norm,w1q_seminorm,residual,tv_mu,tv_mu_plus,scenario_hash"));
    }

    #[test]
    fn json_lines_round_trip() {
        let mut t = ConvergenceTable::new("t", "00ff");
        t.rows = vec![row(3), row(4)];
        let back = read_json_lines(&t.to_json_lines().unwrap()).unwrap();
        assert_eq!(back, t.rows);
    }

    #[test]
    fn extras_become_columns_and_blocks() {
        let mut t = ConvergenceTable::new("t", "00ff");
        t.rows = vec![row(3)];
        assert!(t.header().contains(&"max_share".to_string()));
        let plot = t.to_plot_data();
        assert!(plot.contains("# max_share\n# level value\n3 1\n"));
        assert_eq!(plot.matches("\n\n\n").count(), 6);
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = ConvergenceTable::new("run", "00ff");
        t.rows = vec![row(3)];
        let paths = t.emit_all(dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let csv = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(csv, t.to_csv().unwrap());
    }
}
