use std::fmt;
use std::sync::Arc;

use super::domain::{DomainGrid, NodeKind};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Coefficient matrix `A(x)`, row-major in the leading `N × N` block.
pub type TensorFn = Arc<dyn Fn(&[f64]) -> [[f64; 3]; 3] + Send + Sync>;

/// Coefficients `a_ij(x)` of `-div(A(x)∇u)` with a declared ellipticity constant.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    tensor: TensorFn,
    gamma: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn new(dim: usize, gamma: f64, tensor: TensorFn) -> Self {
        Self { dim, tensor, gamma }
    }

    /// `A = I`, the Laplacian.
    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0, Arc::new(|_: &[f64]| 1.0))
    }

    /// `A(x) = a(x) I`.
    pub fn scalar(dim: usize, gamma: f64, a: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Self {
        let tensor: TensorFn = Arc::new(move |x: &[f64]| {
            let v = a(x);
            [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]]
        });
        Self::new(dim, gamma, tensor)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn at(&self, x: &[f64]) -> [[f64; 3]; 3] {
        (self.tensor)(x)
    }

    /// Checks finiteness and `ξᵀAξ ≥ γ|ξ|²` for coordinate and diagonal directions.
    fn check_sample(&self, x: &[f64]) -> Result<[[f64; 3]; 3]> {
        let a = self.at(x);
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                if !a[i][j].is_finite() {
                    return Err(Error::Ellipticity(format!("a[{i}][{j}] is not finite at {x:?}")));
                }
            }
        }
        let slack = 1e-12 * self.gamma.max(1.0);
        for i in 0..n {
            if a[i][i] < self.gamma - slack {
                return Err(Error::Ellipticity(format!(
                    "a[{i}][{i}] = {} < gamma = {} at {x:?}",
                    a[i][i], self.gamma
                )));
            }
            for j in (i + 1)..n {
                let mixed = a[i][j] + a[j][i];
                for sign in [1.0, -1.0] {
                    let q = 0.5 * (a[i][i] + a[j][j] + sign * mixed);
                    if q < self.gamma - slack {
                        return Err(Error::Ellipticity(format!(
                            "quadratic form {q} < gamma = {} along diagonal ({i},{j},{sign}) at {x:?}",
                            self.gamma
                        )));
                    }
                }
            }
        }
        Ok(a)
    }
}

/// Sparse monotone discretization of `-div(A∇·)` acting on interior nodal
/// values and returning nodal masses.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledOperator {
    matrix: CsrMatrix,
    symmetric: bool,
    grid: Arc<DomainGrid>,
    /// Per row: sum of the off-diagonal weights coupling to eliminated nodes.
    eliminated: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl AssembledOperator {
    /// Wraps an explicit matrix over the interior nodes of `grid`.
    pub fn from_matrix(grid: Arc<DomainGrid>, matrix: CsrMatrix) -> Result<Self> {
        if matrix.n() != grid.n_interior() {
            return Err(Error::Dimension {
                expected: grid.n_interior(),
                got: matrix.n(),
            });
        }
        let symmetric = matrix.is_symmetric();
        let eliminated = matrix.row_sums().iter().map(|s| -s).collect();
        Ok(Self {
            matrix,
            symmetric,
            grid,
            eliminated,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    /// Row sums including the weights to eliminated Dirichlet nodes. Zero up
    /// to rounding for a conservative assembly.
    pub fn full_row_sums(&self) -> Vec<f64> {
        self.matrix
            .row_sums()
            .iter()
            .zip(&self.eliminated)
            .map(|(s, e)| s + e)
            .collect()
    }

    pub fn eliminated_weights(&self) -> &[f64] {
        &self.eliminated
    }

    /// The transpose. Applying it twice gives back the same matrix exactly.
    pub fn adjoint(&self) -> Self {
        let matrix = self.matrix.transpose();
        let eliminated = if self.symmetric {
            self.eliminated.clone()
        } else {
            // Column sums of the original play the role of row sums here.
            matrix.row_sums().iter().map(|s| -s).collect()
        };
        Self {
            matrix,
            symmetric: self.symmetric,
            grid: Arc::clone(&self.grid),
            eliminated,
        }
    }

    pub fn diagonal_scale(&self) -> f64 {
        self.matrix.diagonal_scale()
    }
}

/// Assembles `-div(A∇u)` on the interior nodes of `grid`.
///
/// Every lattice edge `p–q` (axis-aligned or, for mixed coefficients, a
/// face diagonal) carries a symmetric conductance scaled by `h^(N-2)`:
///   * axis edge along `i`: harmonic mean of `a_ii` at `p` and `q`, minus the
///     endpoint mean of `|s_ij|` over `j ≠ i`, where `s = (A + Aᵀ)/2`;
///   * diagonal edge `p → p + e_i ± e_j`: endpoint mean of `s_ij^±`.
///
/// The antisymmetric part `t = (A - Aᵀ)/2` is a divergence-free drift whose
/// face fluxes come from `t` sampled at cell centres; it is upwinded.
/// Contributions are accumulated per row in fixed axis order.
pub fn assemble(grid: Arc<DomainGrid>, coeff: &CoefficientField) -> Result<AssembledOperator> {
    let n = grid.dim();
    if coeff.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: coeff.dim(),
        });
    }
    if !(coeff.gamma() > 0.0) {
        return Err(Error::Ellipticity(format!(
            "ellipticity constant must be positive, got {}",
            coeff.gamma()
        )));
    }
    let h = grid.h();
    let scale = h.powi(n as i32 - 2);
    let half = 0.5 * h;

    // Samples at every non-exterior lattice point.
    let mut samples: Vec<Option<[[f64; 3]; 3]>> = vec![None; grid.n_lattice()];
    for lin in 0..grid.n_lattice() {
        if grid.kind(lin) != NodeKind::Exterior {
            let p = grid.lattice_point(lin);
            samples[lin] = Some(coeff.check_sample(&p[..n])?);
        }
    }
    let sym = |a: &[[f64; 3]; 3], i: usize, j: usize| 0.5 * (a[i][j] + a[j][i]);

    let mut triplets = Vec::with_capacity(grid.n_interior() * (2 * n * n + 1));
    let mut eliminated = vec![0.0; grid.n_interior()];
    let mut has_drift = false;

    for row in 0..grid.n_interior() {
        let lin = grid.lattice_index(row);
        let ap = samples[lin].expect("interior samples exist");
        let p = grid.lattice_point(lin);
        let mut diag = 0.0;
        let mut push = |col_lin: usize, weight: f64, triplets: &mut Vec<(usize, usize, f64)>| {
            match grid.interior_index(col_lin) {
                Some(col) => triplets.push((row, col, -weight)),
                None => eliminated[row] -= weight,
            }
        };

        // Axis edges, axis 0 first, negative direction first.
        for i in 0..n {
            for dir in [-1i64, 1] {
                let q = grid.shift(lin, i, dir).expect("interior nodes have lattice neighbours");
                let aq = samples[q].ok_or_else(|| Error::Argument(format!(
                    "no coefficient sample at lattice point {:?}",
                    grid.unravel(q)
                )))?;
                let mut c = harmonic(ap[i][i], aq[i][i]);
                for j in 0..n {
                    if j != i {
                        c -= 0.5 * (sym(&ap, i, j).abs() + sym(&aq, i, j).abs());
                    }
                }
                if c < 0.0 {
                    return Err(Error::Monotonicity {
                        from: grid.unravel(lin)[..n].to_vec(),
                        to: grid.unravel(q)[..n].to_vec(),
                        weight: -c * scale,
                    });
                }
                let w = c * scale;
                diag += w;
                push(q, w, &mut triplets);
            }
        }

        // Face diagonals for the symmetric mixed part.
        for i in 0..n {
            for j in (i + 1)..n {
                for (di, dj) in [(-1i64, -1i64), (-1, 1), (1, -1), (1, 1)] {
                    let mut off = [0i64; 3];
                    off[i] = di;
                    off[j] = dj;
                    let Some(q) = grid.offset(lin, &off[..n]) else { continue };
                    let aq = match samples[q] {
                        Some(a) => a,
                        None => {
                            let x = grid.lattice_point(q);
                            coeff.check_sample(&x[..n])?
                        }
                    };
                    let along = di * dj > 0;
                    let part = |s: f64| if along { s.max(0.0) } else { (-s).max(0.0) };
                    let c = 0.5 * (part(sym(&ap, i, j)) + part(sym(&aq, i, j)));
                    if c != 0.0 {
                        let w = c * scale;
                        diag += w;
                        push(q, w, &mut triplets);
                    }
                }
            }
        }

        // Drift from the antisymmetric part, upwinded per face.
        if n >= 2 {
            for k in 0..n {
                for sigma in [-1i64, 1] {
                    let mut flux = 0.0;
                    for i in 0..n {
                        if i == k {
                            continue;
                        }
                        let mut plus = p;
                        let mut minus = p;
                        plus[k] += sigma as f64 * half;
                        minus[k] += sigma as f64 * half;
                        plus[i] += half;
                        minus[i] -= half;
                        let tp = coeff.at(&plus[..n]);
                        let tm = coeff.at(&minus[..n]);
                        let t = |a: &[[f64; 3]; 3]| 0.5 * (a[k][i] - a[i][k]);
                        flux += t(&tp) - t(&tm);
                    }
                    let beta = sigma as f64 * scale * flux;
                    if beta != 0.0 {
                        has_drift = true;
                        let q = grid.shift(lin, k, sigma).expect("lattice neighbour");
                        if beta > 0.0 {
                            diag += beta;
                        } else {
                            push(q, -beta, &mut triplets);
                        }
                    }
                }
            }
        }

        triplets.push((row, row, diag));
    }

    let matrix = CsrMatrix::from_triplets(grid.n_interior(), triplets);
    let symmetric = !has_drift && matrix.is_symmetric();
    Ok(AssembledOperator {
        matrix,
        symmetric,
        grid,
        eliminated,
    })
}

/// Outcome of scanning an operator for M-matrix sign structure.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Largest positive off-diagonal entry (0 if none) and its position.
    pub worst_offdiagonal: f64,
    pub worst_offdiagonal_at: Option<(usize, usize)>,
    /// Most negative column sum (0 if none) and its column.
    pub worst_column_sum: f64,
    pub worst_column_at: Option<usize>,
    /// Rows whose diagonal entry is not positive.
    pub nonpositive_diagonal: Vec<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Scans every entry; passes iff all sign conditions hold within `1e-12`
/// times the diagonal scale.
pub fn validate_monotone(op: &AssembledOperator) -> MonotonicityReport {
    validate_matrix(op.matrix())
}

pub(crate) fn validate_matrix(m: &CsrMatrix) -> MonotonicityReport {
    let tolerance = 1e-12 * m.diagonal_scale().max(f64::MIN_POSITIVE);
    let mut worst_offdiagonal = 0.0;
    let mut worst_offdiagonal_at = None;
    let mut nonpositive_diagonal = Vec::new();
    for i in 0..m.n() {
        let mut d = 0.0;
        for (j, v) in m.row(i) {
            if i == j {
                d = v;
            } else if v > worst_offdiagonal {
                worst_offdiagonal = v;
                worst_offdiagonal_at = Some((i, j));
            }
        }
        if !(d > 0.0) {
            nonpositive_diagonal.push(i);
        }
    }
    let mut worst_column_sum = 0.0;
    let mut worst_column_at = None;
    for (j, s) in m.column_sums().into_iter().enumerate() {
        if s < worst_column_sum {
            worst_column_sum = s;
            worst_column_at = Some(j);
        }
    }
    let pass = worst_offdiagonal <= tolerance
        && worst_column_sum >= -tolerance
        && nonpositive_diagonal.is_empty();
    MonotonicityReport {
        worst_offdiagonal,
        worst_offdiagonal_at,
        worst_column_sum,
        worst_column_at,
        nonpositive_diagonal,
        tolerance,
        pass,
    }
}
