//! Scenario files: TOML documents describing one family of discrete obstacle
//! problems over a list of refinement levels.
//!
//! ```toml
//! name = "point-mass"
//! levels = [3, 4, 5]
//!
//! [domain]
//! lower = [0.0, 0.0]
//! upper = [1.0, 1.0]
//!
//! [measure]
//! atoms = [[0.5, 0.5, -1.0]]
//!
//! [obstacle]
//! kind = "constant"
//! value = -1.0
//! ```
//!
//! Obstacle kinds: `constant`, `expression`, `log-obstacle-1d`, `green-pole`.
//! An obstacle that is positive somewhere needs a `[dominating]` measure.

use std::sync::Arc;

use obstacle_core::capacity::{named_obstacle, ObstacleKind};
use obstacle_core::elliptic::LinearSolveConfig;
use obstacle_core::grid::{AssembledOperator, CoefficientField, DomainSpec, ExtendedGridFunction};
use obstacle_core::measure::{Density, Flux, GridMeasure};
use obstacle_core::obstacle::{ViConfig, ViMethod};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::expr::Expression;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub levels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub domain: DomainSection,
    #[serde(default)]
    pub coefficient: CoefficientSection,
    #[serde(default)]
    pub measure: MeasureSection,
    pub obstacle: ObstacleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominating: Option<MeasureSection>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Interior where the expression is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    /// `identity`, `scalar` (uses `a`) or `tensor` (uses `entries`, row-major).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    /// Each atom is its coordinates followed by its weight.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safeguard: Option<f64>,
}

/// Default exponent for the Sobolev norms, inside `(1, N/(N-1))` for every `N ≤ 3`.
pub const DEFAULT_Q: f64 = 1.1;

#[derive(Clone, Debug)]
enum Coefficient {
    Identity,
    Scalar(Expression, f64),
    Tensor(Vec<Expression>, f64),
}

#[derive(Clone, Debug)]
enum Obstacle {
    Constant(f64),
    Expression(Expression),
    LogObstacle,
    GreenPole(Vec<f64>),
}

#[derive(Clone, Debug)]
struct CompiledMeasure {
    atoms: Vec<(Vec<f64>, f64)>,
    density: Option<Expression>,
    flux: Option<Vec<Expression>>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    file: ScenarioFile,
    dim: usize,
    mask: Option<Expression>,
    coefficient: Coefficient,
    measure: CompiledMeasure,
    dominating: Option<CompiledMeasure>,
    obstacle: Obstacle,
    config: ViConfig,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key =` inside `[table]` (or at top level when `table` is empty).
fn find_field_line(text: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", field),
    };
    let mut current = String::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == field {
                return Some(no + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(no + 1);
                }
            }
        }
    }
    None
}

fn compile(field: &str, src: &str, dim: usize) -> Result<Expression> {
    Expression::parse(src, dim).map_err(|m| HarnessError::parse(field, m))
}

fn compile_measure(section: &MeasureSection, prefix: &str, dim: usize) -> Result<CompiledMeasure> {
    let mut atoms = Vec::with_capacity(section.atoms.len());
    for (k, a) in section.atoms.iter().enumerate() {
        if a.len() != dim + 1 {
            return Err(HarnessError::parse(
                format!("{prefix}.atoms"),
                format!("atom {k} needs {dim} coordinates and a weight, got {} numbers", a.len()),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::parse(format!("{prefix}.atoms"), format!("atom {k} is not finite")));
        }
        atoms.push((a[..dim].to_vec(), a[dim]));
    }
    let density = section
        .density
        .as_deref()
        .map(|s| compile(&format!("{prefix}.density"), s, dim))
        .transpose()?;
    let flux = match &section.flux {
        Some(fs) => {
            if fs.len() != dim {
                return Err(HarnessError::parse(
                    format!("{prefix}.flux"),
                    format!("flux needs {dim} components, got {}", fs.len()),
                ));
            }
            Some(
                fs.iter()
                    .map(|s| compile(&format!("{prefix}.flux"), s, dim))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    Ok(CompiledMeasure { atoms, density, flux })
}

impl CompiledMeasure {
    fn to_measure(&self, dim: usize) -> Result<GridMeasure> {
        let mut m = GridMeasure::zero(dim);
        for (x, w) in &self.atoms {
            m = m.with_atom(x.clone(), *w);
        }
        if let Some(d) = &self.density {
            m = m.with_density(Density::Function(d.to_fn()));
        }
        if let Some(f) = &self.flux {
            m = m.with_flux(Flux(f.iter().map(|e| e.to_fn()).collect()))?;
        }
        Ok(m)
    }
}

impl Scenario {
    /// Parses and validates scenario text.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            field: "scenario".into(),
            message: e.message().to_string(),
        })?;
        Self::from_file(file).map_err(|e| match e {
            HarnessError::Parse { line: None, field, message } => HarnessError::Parse {
                line: find_field_line(text, &field),
                field,
                message,
            },
            other => other,
        })
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let dim = file.domain.lower.len();
        if !(1..=3).contains(&dim) || file.domain.upper.len() != dim {
            return Err(HarnessError::parse(
                "domain.lower",
                "lower and upper corners need the same length, between 1 and 3",
            ));
        }
        if file.levels.is_empty() {
            return Err(HarnessError::parse("levels", "at least one refinement level is required"));
        }
        if file.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::parse("levels", "levels must be strictly increasing"));
        }
        if file.levels.iter().any(|l| *l > 12) {
            return Err(HarnessError::parse("levels", "levels above 12 are not supported"));
        }
        if let Some(q) = file.q {
            if !(q > 1.0) {
                return Err(HarnessError::parse("q", format!("q must exceed 1, got {q}")));
            }
        }
        let mask = file
            .domain
            .mask
            .as_deref()
            .map(|s| compile("domain.mask", s, dim))
            .transpose()?;
        DomainSpec::new(file.domain.lower.clone(), file.domain.upper.clone())
            .map_err(|e| HarnessError::parse("domain", e.to_string()))?;
        if let Some(a) = file.domain.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(HarnessError::parse("domain.alpha", format!("alpha must lie in (0, 1), got {a}")));
            }
        }

        let c = &file.coefficient;
        let coefficient = match c.kind.as_deref().unwrap_or("identity") {
            "identity" => {
                if c.a.is_some() || c.entries.is_some() {
                    return Err(HarnessError::parse("coefficient.kind", "identity takes no `a` or `entries`"));
                }
                Coefficient::Identity
            }
            "scalar" => {
                let a = c
                    .a
                    .as_deref()
                    .ok_or_else(|| HarnessError::parse("coefficient.a", "scalar coefficient needs `a`"))?;
                Coefficient::Scalar(compile("coefficient.a", a, dim)?, gamma_of(c)?)
            }
            "tensor" => {
                let entries = c
                    .entries
                    .as_ref()
                    .ok_or_else(|| HarnessError::parse("coefficient.entries", "tensor coefficient needs `entries`"))?;
                if entries.len() != dim * dim {
                    return Err(HarnessError::parse(
                        "coefficient.entries",
                        format!("expected {} row-major entries, got {}", dim * dim, entries.len()),
                    ));
                }
                let es = entries
                    .iter()
                    .map(|s| compile("coefficient.entries", s, dim))
                    .collect::<Result<Vec<_>>>()?;
                Coefficient::Tensor(es, gamma_of(c)?)
            }
            other => {
                return Err(HarnessError::parse(
                    "coefficient.kind",
                    format!("unknown coefficient kind `{other}` (identity, scalar, tensor)"),
                ))
            }
        };

        let measure = compile_measure(&file.measure, "measure", dim)?;
        let dominating = file
            .dominating
            .as_ref()
            .map(|m| compile_measure(m, "dominating", dim))
            .transpose()?;

        let o = &file.obstacle;
        let obstacle = match o.kind.as_str() {
            "constant" => Obstacle::Constant(
                o.value
                    .ok_or_else(|| HarnessError::parse("obstacle.value", "constant obstacle needs `value`"))?,
            ),
            "expression" => Obstacle::Expression(compile(
                "obstacle.expr",
                o.expr
                    .as_deref()
                    .ok_or_else(|| HarnessError::parse("obstacle.expr", "expression obstacle needs `expr`"))?,
                dim,
            )?),
            "log-obstacle-1d" => {
                if dim != 1 {
                    return Err(HarnessError::parse("obstacle.kind", "log-obstacle-1d needs a 1-D domain"));
                }
                Obstacle::LogObstacle
            }
            "green-pole" => {
                let p = o
                    .pole
                    .clone()
                    .ok_or_else(|| HarnessError::parse("obstacle.pole", "green-pole needs `pole`"))?;
                if p.len() != dim {
                    return Err(HarnessError::parse("obstacle.pole", format!("pole needs {dim} coordinates")));
                }
                Obstacle::GreenPole(p)
            }
            other => {
                return Err(HarnessError::parse(
                    "obstacle.kind",
                    format!("unknown obstacle kind `{other}` (constant, expression, log-obstacle-1d, green-pole)"),
                ))
            }
        };
        let signed = match &obstacle {
            Obstacle::Constant(v) => *v > 0.0,
            Obstacle::Expression(_) => false,
            Obstacle::LogObstacle | Obstacle::GreenPole(_) => true,
        };
        if signed && dominating.is_none() {
            return Err(HarnessError::parse(
                "dominating",
                "dominating measure required: the obstacle is positive somewhere",
            ));
        }

        let s = &file.solver;
        let mut config = ViConfig::default();
        if let Some(m) = &s.method {
            config.method = m
                .parse::<ViMethod>()
                .map_err(|e| HarnessError::parse("solver.method", e.to_string()))?;
        }
        if let Some(w) = s.omega {
            config.omega = w;
        }
        if let Some(t) = s.tol {
            config.tol = t;
        }
        if let Some(m) = s.max_iter {
            config.max_iter = m;
        }
        if let Some(g) = s.safeguard {
            config.safeguard = g;
        }
        config
            .validate()
            .map_err(|e| HarnessError::parse("solver", e.to_string()))?;

        Ok(Self {
            file,
            dim,
            mask,
            coefficient,
            measure,
            dominating,
            obstacle,
            config,
        })
    }

    /// Canonical TOML text; parsing it gives back an equal scenario.
    pub fn to_text(&self) -> String {
        toml::to_string(&self.file).expect("scenario files serialize")
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> &[u32] {
        &self.file.levels
    }

    pub fn q(&self) -> f64 {
        self.file.q.unwrap_or(DEFAULT_Q)
    }

    pub fn vi_config(&self) -> &ViConfig {
        &self.config
    }

    pub fn linear_config(&self) -> LinearSolveConfig {
        self.config.linear.clone()
    }

    pub fn has_dominating(&self) -> bool {
        self.dominating.is_some()
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut f = self.file.clone();
        if let Some(t) = o.tol {
            f.solver.tol = Some(t);
        }
        if let Some(m) = o.method {
            f.solver.method = Some(m.name().to_string());
        }
        if let Some(w) = o.omega {
            f.solver.omega = Some(w);
        }
        if let Some(q) = o.q {
            f.q = Some(q);
        }
        if let Some(l) = &o.levels {
            f.levels = l.clone();
        }
        Self::from_file(f)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let d = &self.file.domain;
        let mut spec = DomainSpec::new(d.lower.clone(), d.upper.clone())?;
        if let Some(a) = d.alpha {
            spec = spec.with_alpha(a);
        }
        if let Some(m) = &self.mask {
            spec = spec.with_mask(m.to_fn());
        }
        Ok(spec)
    }

    pub fn coefficient(&self) -> CoefficientField {
        let dim = self.dim;
        match &self.coefficient {
            Coefficient::Identity => CoefficientField::identity(dim),
            Coefficient::Scalar(a, gamma) => CoefficientField::scalar(dim, *gamma, a.to_fn()),
            Coefficient::Tensor(es, gamma) => {
                let es = es.clone();
                CoefficientField::new(
                    dim,
                    *gamma,
                    Arc::new(move |x: &[f64]| {
                        let mut a = [[0.0; 3]; 3];
                        for i in 0..dim {
                            for j in 0..dim {
                                a[i][j] = es[i * dim + j].eval(x);
                            }
                        }
                        a
                    }),
                )
            }
        }
    }

    pub fn measure(&self) -> Result<GridMeasure> {
        self.measure.to_measure(self.dim)
    }

    pub fn dominating(&self) -> Result<Option<GridMeasure>> {
        self.dominating.as_ref().map(|m| m.to_measure(self.dim)).transpose()
    }

    /// Samples the obstacle on the grid of `op`. Positive values without a
    /// dominating measure are rejected.
    pub fn obstacle(&self, op: &AssembledOperator) -> Result<ExtendedGridFunction> {
        let lin = self.linear_config();
        let kind = match &self.obstacle {
            Obstacle::Constant(v) => ObstacleKind::Constant(*v),
            Obstacle::Expression(e) => ObstacleKind::Custom(e.to_fn()),
            Obstacle::LogObstacle => ObstacleKind::LogObstacle1d,
            Obstacle::GreenPole(p) => ObstacleKind::GreenPole(p.clone()),
        };
        let psi = named_obstacle(&kind, op, &lin)?.psi;
        if self.dominating.is_none() && psi.max_finite() > 0.0 {
            return Err(HarnessError::parse(
                "dominating",
                "dominating measure required: the obstacle is positive somewhere",
            ));
        }
        Ok(psi)
    }
}

fn gamma_of(c: &CoefficientSection) -> Result<f64> {
    let g = c
        .gamma
        .ok_or_else(|| HarnessError::parse("coefficient.gamma", "variable coefficients need an ellipticity constant `gamma`"))?;
    if !(g > 0.0) {
        return Err(HarnessError::parse("coefficient.gamma", format!("gamma must be positive, got {g}")));
    }
    Ok(g)
}

/// Command-line overrides of scenario fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub method: Option<ViMethod>,
    pub omega: Option<f64>,
    pub q: Option<f64>,
    pub levels: Option<Vec<u32>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
levels = [3, 4, 5]

[domain]
lower = [0.0, 0.0]
upper = [1.0, 1.0]

[measure]
atoms = [[0.5, 0.5, -1.0]]

[obstacle]
kind = "constant"
value = -1.0
"#;

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.levels(), &[3, 4, 5]);
        assert!(!s.has_dominating());
        assert_eq!(s.q(), DEFAULT_Q);
        assert_eq!(s.vi_config(), &ViConfig::default());
    }

    #[test]
    fn round_trip() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let again = Scenario::parse(&s.to_text()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash(), again.hash());
        assert_eq!(s.hash().len(), 16);
    }

    #[test]
    fn signed_obstacle_needs_dominating_measure() {
        let text = MINIMAL.replace("kind = \"constant\"\nvalue = -1.0", "kind = \"green-pole\"\npole = [0.5, 0.5]");
        let err = Scenario::parse(&text).unwrap_err().to_string();
        assert!(err.contains("dominating measure required"), "{err}");
        let with_rho = format!("{text}\n[dominating]\natoms = [[0.5, 0.5, 1.0]]\n");
        assert!(Scenario::parse(&with_rho).unwrap().has_dominating());
    }

    #[test]
    fn unknown_keys_report_line() {
        let text = MINIMAL.replace("value = -1.0", "value = -1.0\ncolour = \"red\"");
        match Scenario::parse(&text) {
            Err(HarnessError::Parse { line: Some(l), .. }) => assert_eq!(l, 15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_expression_reports_field() {
        let text = MINIMAL.replace("atoms = [[0.5, 0.5, -1.0]]", "density = \"sin(x +\"");
        match Scenario::parse(&text) {
            Err(HarnessError::Parse { line, field, .. }) => {
                assert_eq!(field, "measure.density");
                assert_eq!(line, Some(10));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn levels_must_increase() {
        let text = MINIMAL.replace("[3, 4, 5]", "[4, 4]");
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn overrides_revalidate() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let o = Overrides {
            method: Some(ViMethod::Psor),
            omega: Some(1.2),
            ..Overrides::default()
        };
        let t = s.with_overrides(&o).unwrap();
        assert_eq!(t.vi_config().method, ViMethod::Psor);
        assert_eq!(t.vi_config().omega, 1.2);
        let bad = Overrides {
            omega: Some(2.5),
            ..Overrides::default()
        };
        assert!(s.with_overrides(&bad).is_err());
    }
}
