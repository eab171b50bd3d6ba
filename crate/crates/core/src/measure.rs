//! Bounded measures on a grid: atoms, an integrable density and a
//! divergence-form part `-div G`, together with their nodal loads.

use std::fmt;
use std::ops::{Deref, Index};
use std::sync::Arc;

use crate::elliptic::{solve_linear, LinearSolveConfig};
use crate::error::{Error, Result};
use crate::grid::{AssembledOperator, DomainGrid, GridFunction, NodeKind, ScalarFn};

/// A point mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: f64,
}

/// Mass per unit volume.
#[derive(Clone)]
pub enum Density {
    Function(ScalarFn),
    /// One value per interior node of a specific grid.
    Values(Vec<f64>),
    Sum(Vec<(f64, Density)>),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Function(_) => f.write_str("Density::Function(..)"),
            Density::Values(v) => write!(f, "Density::Values({} nodes)", v.len()),
            Density::Sum(terms) => f.debug_list().entries(terms.iter()).finish(),
        }
    }
}

impl Density {
    /// Nodal values on `grid`.
    pub fn eval(&self, grid: &DomainGrid) -> Result<Vec<f64>> {
        match self {
            Density::Function(f) => Ok(grid.sample(f.as_ref())),
            Density::Values(v) => {
                if v.len() != grid.n_interior() {
                    return Err(Error::Dimension {
                        expected: grid.n_interior(),
                        got: v.len(),
                    });
                }
                Ok(v.clone())
            }
            Density::Sum(terms) => {
                let mut out = vec![0.0; grid.n_interior()];
                for (c, d) in terms {
                    for (o, v) in out.iter_mut().zip(d.eval(grid)?) {
                        *o += c * v;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Edge flux field `G`, one component function per axis, so that the
/// measure part is `F = -div G`.
#[derive(Clone)]
pub struct Flux(pub Vec<ScalarFn>);

impl fmt::Debug for Flux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Flux({} components)", self.0.len())
    }
}

/// A bounded Radon measure `atoms + f dx - div G`.
#[derive(Clone, Debug)]
pub struct GridMeasure {
    dim: usize,
    pub atoms: Vec<Atom>,
    pub density: Option<Density>,
    pub flux: Option<Flux>,
}

impl GridMeasure {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            density: None,
            flux: None,
        }
    }

    pub fn atom(location: Vec<f64>, weight: f64) -> Self {
        let dim = location.len();
        Self::zero(dim).with_atom(location, weight)
    }

    pub fn with_atom(mut self, location: Vec<f64>, weight: f64) -> Self {
        assert_eq!(location.len(), self.dim, "atom dimension");
        self.atoms.push(Atom { location, weight });
        self
    }

    pub fn with_density(mut self, density: Density) -> Self {
        self.density = Some(match self.density.take() {
            None => density,
            Some(old) => Density::Sum(vec![(1.0, old), (1.0, density)]),
        });
        self
    }

    pub fn with_density_fn(self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.with_density(Density::Function(Arc::new(f)))
    }

    pub fn with_flux(mut self, flux: Flux) -> Result<Self> {
        if flux.0.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: flux.0.len(),
            });
        }
        self.flux = Some(match self.flux.take() {
            None => flux,
            Some(old) => Flux(
                old.0
                    .into_iter()
                    .zip(flux.0)
                    .map(|(a, b)| -> ScalarFn { Arc::new(move |x: &[f64]| a(x) + b(x)) })
                    .collect(),
            ),
        });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Atom-free measures: the constructive stand-in for measures that do
    /// not charge sets of zero capacity.
    pub fn is_m0b(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.weight == 0.0) && self.density.is_none() && self.flux.is_none()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &GridMeasure, b: f64) -> Result<GridMeasure> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|x| Atom { location: x.location.clone(), weight: a * x.weight })
            .collect();
        atoms.extend(other.atoms.iter().map(|x| Atom {
            location: x.location.clone(),
            weight: b * x.weight,
        }));
        let density = match (&self.density, &other.density) {
            (None, None) => None,
            (Some(d), None) => Some(Density::Sum(vec![(a, d.clone())])),
            (None, Some(d)) => Some(Density::Sum(vec![(b, d.clone())])),
            (Some(d1), Some(d2)) => Some(Density::Sum(vec![(a, d1.clone()), (b, d2.clone())])),
        };
        let scaled = |f: &Flux, c: f64| -> Vec<ScalarFn> {
            f.0.iter()
                .map(|g| -> ScalarFn {
                    let g = Arc::clone(g);
                    Arc::new(move |x: &[f64]| c * g(x))
                })
                .collect()
        };
        let flux = match (&self.flux, &other.flux) {
            (None, None) => None,
            (Some(f), None) => Some(Flux(scaled(f, a))),
            (None, Some(f)) => Some(Flux(scaled(f, b))),
            (Some(f1), Some(f2)) => Some(Flux(
                scaled(f1, a)
                    .into_iter()
                    .zip(scaled(f2, b))
                    .map(|(g1, g2)| -> ScalarFn { Arc::new(move |x: &[f64]| g1(x) + g2(x)) })
                    .collect(),
            )),
        };
        Ok(GridMeasure {
            dim: self.dim,
            atoms,
            density,
            flux,
        })
    }

    /// Only the flux part.
    pub fn flux_part(&self) -> GridMeasure {
        GridMeasure {
            dim: self.dim,
            atoms: Vec::new(),
            density: None,
            flux: self.flux.clone(),
        }
    }

    /// `Σ|atoms| + Σ|f|·h^N + TV(load of the flux part)`.
    pub fn total_variation(&self, grid: &DomainGrid) -> Result<f64> {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight.abs()).sum();
        let dens = match &self.density {
            Some(d) => d.eval(grid)?.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume(),
            None => 0.0,
        };
        let flux = match &self.flux {
            Some(f) => flux_load(f, grid)?.total_variation(),
            None => 0.0,
        };
        Ok(atoms + dens + flux)
    }
}

/// Nodal masses, one per interior node.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NodalMeasure(Vec<f64>);

impl NodalMeasure {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Sum of absolute nodal masses.
    pub fn total_variation(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    /// Signed total mass.
    pub fn mass(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn jordan(&self) -> (NodalMeasure, NodalMeasure) {
        jordan_decompose(self)
    }

    pub fn negative_part(&self) -> NodalMeasure {
        Self(self.0.iter().map(|v| (-v).max(0.0)).collect())
    }

    pub fn positive_part(&self) -> NodalMeasure {
        Self(self.0.iter().map(|v| v.max(0.0)).collect())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &NodalMeasure, b: f64) -> NodalMeasure {
        assert_eq!(self.0.len(), other.0.len());
        Self(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest single-node share of the total variation (0 for the zero measure).
    pub fn max_share(&self) -> f64 {
        let tv = self.total_variation();
        if tv == 0.0 {
            0.0
        } else {
            self.max_abs() / tv
        }
    }
}

impl Deref for NodalMeasure {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for NodalMeasure {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `m = m⁺ - m⁻` with disjointly supported nonnegative parts.
pub fn jordan_decompose(m: &NodalMeasure) -> (NodalMeasure, NodalMeasure) {
    (m.positive_part(), m.negative_part())
}

fn flux_load(flux: &Flux, grid: &DomainGrid) -> Result<NodalMeasure> {
    let n = grid.dim();
    if flux.0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: flux.0.len(),
        });
    }
    let half = 0.5 * grid.h();
    let face = grid.h().powi(n as i32 - 1);
    let mut out = vec![0.0; grid.n_interior()];
    for (i, o) in out.iter_mut().enumerate() {
        let p = grid.point(i);
        let mut s = 0.0;
        for (d, g) in flux.0.iter().enumerate() {
            let mut lo = p;
            let mut hi = p;
            lo[d] -= half;
            hi[d] += half;
            s += g(&lo[..n]) - g(&hi[..n]);
        }
        *o = face * s;
    }
    Ok(NodalMeasure(out))
}

/// Projects `m` onto the interior nodes of `grid`.
///
/// Atoms are split multilinearly over the vertices of their cell; shares
/// falling on non-interior vertices are dropped, and an atom whose cell
/// vertices all lie outside the closed domain is a placement error. Densities contribute
/// `f(x_i)·h^N`; the flux part contributes `h^(N-1)·Σ_d (G_d(x_i - h/2) - G_d(x_i + h/2))`,
/// a midpoint approximation of `⟨-div G, φ_i⟩` for the nodal hat `φ_i`.
pub fn load_vector(m: &GridMeasure, grid: &DomainGrid) -> Result<NodalMeasure> {
    let n = grid.dim();
    if m.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m.dim(),
        });
    }
    let mut out = vec![0.0; grid.n_interior()];
    let h = grid.h();
    for atom in &m.atoms {
        let x = &atom.location;
        let mut cell = [0usize; 3];
        let mut t = [0.0f64; 3];
        for d in 0..n {
            let tol = 1e-12 * (grid.upper()[d] - grid.lower()[d]);
            if !(x[d] >= grid.lower()[d] - tol && x[d] <= grid.upper()[d] + tol) {
                return Err(Error::Placement { location: x.clone() });
            }
            let s = ((x[d] - grid.lower()[d]) / h).max(0.0);
            let c = (s.floor() as usize).min(grid.shape()[d] - 2);
            let mut frac = s - c as f64;
            if frac.abs() < 1e-12 {
                frac = 0.0;
            } else if (frac - 1.0).abs() < 1e-12 {
                frac = 1.0;
            }
            cell[d] = c;
            t[d] = frac;
        }
        // The atom must touch the closed domain: some vertex carrying a share
        // is interior, a boundary node, or on the box face.
        let mut seen = false;
        for corner in 0..(1usize << n) {
            let mut share = 1.0;
            let mut idx = [0usize; 3];
            let mut on_face = false;
            for d in 0..n {
                let up = corner >> d & 1 == 1;
                share *= if up { t[d] } else { 1.0 - t[d] };
                idx[d] = cell[d] + up as usize;
                on_face |= idx[d] == 0 || idx[d] + 1 == grid.shape()[d];
            }
            if share == 0.0 {
                continue;
            }
            let lin = grid.ravel(&idx[..n]);
            match grid.kind(lin) {
                NodeKind::Interior => {
                    out[grid.interior_index(lin).unwrap()] += share * atom.weight;
                    seen = true;
                }
                NodeKind::Boundary => seen = true,
                NodeKind::Exterior => seen |= on_face,
            }
        }
        if !seen {
            return Err(Error::Placement { location: x.clone() });
        }
    }
    if let Some(d) = &m.density {
        let vol = grid.cell_volume();
        for (o, v) in out.iter_mut().zip(d.eval(grid)?) {
            *o += v * vol;
        }
    }
    if let Some(f) = &m.flux {
        for (o, v) in out.iter_mut().zip(flux_load(f, grid)?.0) {
            *o += v;
        }
    }
    Ok(NodalMeasure(out))
}

/// `μ_k = op·T_k(u_μ)` where `op·u_μ = load(μ)`.
pub fn regularize_by_truncation(
    mu: &GridMeasure,
    k: f64,
    op: &AssembledOperator,
    cfg: &LinearSolveConfig,
) -> Result<NodalMeasure> {
    let b = load_vector(mu, op.grid())?;
    regularize_load_by_truncation(&b, k, op, cfg)
}

/// As [`regularize_by_truncation`], starting from a nodal load.
pub fn regularize_load_by_truncation(
    b: &NodalMeasure,
    k: f64,
    op: &AssembledOperator,
    cfg: &LinearSolveConfig,
) -> Result<NodalMeasure> {
    if !(k > 0.0) {
        return Err(Error::Argument(format!("truncation level must be > 0, got {k}")));
    }
    let u = solve_linear(op, b, cfg)?;
    let tu = u.truncate(k)?;
    Ok(NodalMeasure(op.apply(&tu)))
}

/// `Σ φ_i m_i`.
pub fn weak_star_pairing(m: &NodalMeasure, phi: &GridFunction) -> Result<f64> {
    if m.len() != phi.len() {
        return Err(Error::Dimension {
            expected: m.len(),
            got: phi.len(),
        });
    }
    Ok(m.iter().zip(phi.iter()).map(|(a, b)| a * b).sum())
}

/// Sine modes of the five test functions, per dimension.
const BUMP_MODES: [[[u32; 3]; 5]; 3] = [
    [[1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0], [5, 0, 0]],
    [[1, 1, 0], [2, 1, 0], [1, 2, 0], [2, 2, 0], [3, 1, 0]],
    [[1, 1, 1], [2, 1, 1], [1, 2, 1], [1, 1, 2], [2, 2, 2]],
];

/// Fixed panel of five smooth functions vanishing on the box boundary,
/// `φ(x) = Π_d sin(m_d π (x_d - lo_d)/(hi_d - lo_d))`, used to certify
/// weak-* convergence numerically.
pub fn bump_panel(grid: &DomainGrid) -> Vec<GridFunction> {
    let n = grid.dim();
    BUMP_MODES[n - 1]
        .iter()
        .map(|modes| {
            let values = (0..grid.n_interior())
                .map(|i| {
                    let p = grid.point(i);
                    (0..n)
                        .map(|d| {
                            let t = (p[d] - grid.lower()[d]) / (grid.upper()[d] - grid.lower()[d]);
                            (modes[d] as f64 * std::f64::consts::PI * t).sin()
                        })
                        .product()
                })
                .collect();
            GridFunction::new(values).expect("finite bump values")
        })
        .collect()
}
