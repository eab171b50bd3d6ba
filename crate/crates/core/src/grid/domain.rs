use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Real-valued function of a point in up to three coordinates.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Sample radii, in units of `h`, for the exterior density check.
pub const DENSITY_RADII: [usize; 3] = [2, 4, 8];

/// Lattice point classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Unknown of the discrete problem.
    Interior,
    /// Eliminated Dirichlet node adjacent to the interior.
    Boundary,
    /// Outside the domain and not adjacent to it.
    Exterior,
}

impl NodeKind {
    pub fn symbol(self) -> char {
        match self {
            NodeKind::Interior => 'I',
            NodeKind::Boundary => 'B',
            NodeKind::Exterior => 'E',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'I' => Some(NodeKind::Interior),
            'B' => Some(NodeKind::Boundary),
            'E' => Some(NodeKind::Exterior),
            _ => None,
        }
    }
}

/// Box plus optional level-set mask (`mask(x) > 0` means inside).
#[derive(Clone)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cells per axis at level 0. All axes must share one spacing.
    pub base_cells: Vec<usize>,
    pub mask: Option<ScalarFn>,
    pub alpha: f64,
}

impl fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainSpec")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("base_cells", &self.base_cells)
            .field("mask", &self.mask.is_some())
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl DomainSpec {
    /// Box `[lower, upper]` whose shortest side is one base cell; the other
    /// sides must be integer multiples of it.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || lower.len() > 3 {
            return Err(Error::Argument(format!(
                "box must have 1 to 3 axes with matching bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let extents: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| b - a).collect();
        if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::Argument(format!("box extents must be positive, got {extents:?}")));
        }
        let base = extents.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut base_cells = Vec::with_capacity(extents.len());
        for e in &extents {
            let ratio = e / base;
            let cells = ratio.round();
            if (ratio - cells).abs() > 1e-9 * ratio {
                return Err(Error::Argument(format!(
                    "box extents {extents:?} are not commensurate with a common spacing"
                )));
            }
            base_cells.push(cells as usize);
        }
        Ok(Self {
            lower,
            upper,
            base_cells,
            mask: None,
            alpha: 0.1,
        })
    }

    pub fn unit_box(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim]).expect("unit box is valid")
    }

    pub fn with_mask(mut self, mask: ScalarFn) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Overrides the level-0 cell counts (e.g. 3 cells on the unit interval).
    pub fn with_base_cells(mut self, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != self.dim() || cells.iter().any(|&c| c == 0) {
            return Err(Error::Argument(format!("invalid base cell counts {cells:?}")));
        }
        let h0: Vec<f64> = (0..self.dim())
            .map(|d| (self.upper[d] - self.lower[d]) / cells[d] as f64)
            .collect();
        if h0.iter().any(|h| (h - h0[0]).abs() > 1e-12 * h0[0]) {
            return Err(Error::Argument(format!(
                "base cells {cells:?} give unequal spacings {h0:?}"
            )));
        }
        self.base_cells = cells;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn base_spacing(&self) -> f64 {
        (self.upper[0] - self.lower[0]) / self.base_cells[0] as f64
    }
}

/// Uniform lattice over a box with every lattice point classified.
///
/// Lattice points are numbered with axis 0 varying fastest. Interior nodes
/// receive dense indices in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGrid {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    level: u32,
    h: f64,
    alpha: f64,
    shape: Vec<usize>,
    kinds: Vec<NodeKind>,
    lattice_of: Vec<usize>,
    index_of: Vec<usize>,
}

const NO_INDEX: usize = usize::MAX;

impl DomainGrid {
    /// Discretizes `spec` at refinement `level` (spacing halves per level).
    pub fn build(spec: &DomainSpec, level: u32) -> Result<Self> {
        let dim = spec.dim();
        if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha must lie in (0, 1), got {}", spec.alpha)));
        }
        if level > 24 {
            return Err(Error::Argument(format!("refinement level {level} is unreasonably large")));
        }
        let factor = 1usize << level;
        let h = spec.base_spacing() / factor as f64;
        let shape: Vec<usize> = spec.base_cells.iter().map(|c| c * factor + 1).collect();
        let total: usize = shape.iter().product();

        let mut inside = vec![false; total];
        let mut grid = Self {
            dim,
            lower: spec.lower.clone(),
            upper: spec.upper.clone(),
            level,
            h,
            alpha: spec.alpha,
            shape,
            kinds: vec![NodeKind::Exterior; total],
            lattice_of: Vec::new(),
            index_of: vec![NO_INDEX; total],
        };
        for (lin, flag) in inside.iter_mut().enumerate() {
            let idx = grid.unravel(lin);
            let on_box = (0..dim).any(|d| idx[d] == 0 || idx[d] + 1 == grid.shape[d]);
            if on_box {
                continue;
            }
            let p = grid.lattice_point(lin);
            // Points exactly on the mask boundary are not interior.
            *flag = match &spec.mask {
                Some(mask) => mask(&p[..dim]) > 0.0,
                None => true,
            };
        }
        for lin in 0..total {
            if inside[lin] {
                grid.kinds[lin] = NodeKind::Interior;
                grid.index_of[lin] = grid.lattice_of.len();
                grid.lattice_of.push(lin);
            }
        }
        if grid.lattice_of.is_empty() {
            return Err(Error::EmptyDomain);
        }
        for k in 0..grid.lattice_of.len() {
            let lin = grid.lattice_of[k];
            for d in 0..dim {
                for dir in [-1i64, 1] {
                    let nb = grid.shift(lin, d, dir).expect("interior nodes are off the box faces");
                    if !inside[nb] {
                        grid.kinds[nb] = NodeKind::Boundary;
                    }
                }
            }
        }
        if spec.mask.is_some() {
            grid.check_exterior_density()?;
        }
        Ok(grid)
    }

    /// Rebuilds a grid from stored classifications (used by the text reader).
    pub(crate) fn from_kinds(
        lower: Vec<f64>,
        upper: Vec<f64>,
        level: u32,
        alpha: f64,
        shape: Vec<usize>,
        kinds: Vec<NodeKind>,
    ) -> Result<Self> {
        let dim = lower.len();
        let h = (upper[0] - lower[0]) / (shape[0] - 1) as f64;
        let mut grid = Self {
            dim,
            lower,
            upper,
            level,
            h,
            alpha,
            shape,
            kinds,
            lattice_of: Vec::new(),
            index_of: Vec::new(),
        };
        grid.index_of = vec![NO_INDEX; grid.kinds.len()];
        for lin in 0..grid.kinds.len() {
            if grid.kinds[lin] == NodeKind::Interior {
                grid.index_of[lin] = grid.lattice_of.len();
                grid.lattice_of.push(lin);
            }
        }
        if grid.lattice_of.is_empty() {
            return Err(Error::EmptyDomain);
        }
        for &lin in &grid.lattice_of {
            for d in 0..dim {
                for dir in [-1i64, 1] {
                    match grid.shift(lin, d, dir) {
                        Some(nb) if grid.kinds[nb] != NodeKind::Exterior => {}
                        _ => {
                            return Err(Error::Format {
                                line: 0,
                                message: format!("interior node {:?} has an unclassified neighbour", grid.unravel(lin)),
                            })
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    fn check_exterior_density(&self) -> Result<()> {
        let dim = self.dim;
        let rmax = *DENSITY_RADII.last().unwrap() as i64;
        // Offsets within the largest ball, tagged with their squared length.
        let mut offsets: Vec<([i64; 3], i64)> = Vec::new();
        let span = |d: usize| if d < dim { -rmax..=rmax } else { 0..=0 };
        for i in span(0) {
            for j in span(1) {
                for k in span(2) {
                    let r2 = i * i + j * j + k * k;
                    if r2 <= rmax * rmax {
                        offsets.push(([i, j, k], r2));
                    }
                }
            }
        }
        for lin in 0..self.kinds.len() {
            if self.kinds[lin] != NodeKind::Boundary {
                continue;
            }
            let base = self.unravel(lin);
            let mut total = [0usize; 3];
            let mut outside = [0usize; 3];
            for (off, r2) in &offsets {
                let mut exterior = false;
                let mut idx = [0usize; 3];
                for d in 0..dim {
                    let v = base[d] as i64 + off[d];
                    if v < 0 || v >= self.shape[d] as i64 {
                        exterior = true;
                        break;
                    }
                    idx[d] = v as usize;
                }
                if !exterior {
                    exterior = self.kinds[self.ravel(&idx)] != NodeKind::Interior;
                }
                for (slot, r) in DENSITY_RADII.iter().enumerate() {
                    let r = *r as i64;
                    if *r2 <= r * r {
                        total[slot] += 1;
                        if exterior {
                            outside[slot] += 1;
                        }
                    }
                }
            }
            for (slot, r) in DENSITY_RADII.iter().enumerate() {
                let fraction = outside[slot] as f64 / total[slot] as f64;
                if fraction <= self.alpha {
                    return Err(Error::Regularity {
                        node: base[..dim].to_vec(),
                        radius: *r as f64 * self.h,
                        fraction,
                        alpha: self.alpha,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Lattice points per axis (box faces included).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// `h^N`, the volume carried by one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn n_interior(&self) -> usize {
        self.lattice_of.len()
    }

    pub fn n_lattice(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, lin: usize) -> NodeKind {
        self.kinds[lin]
    }

    pub fn unravel(&self, mut lin: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for d in 0..self.dim {
            idx[d] = lin % self.shape[d];
            lin /= self.shape[d];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        for d in (0..self.dim).rev() {
            lin = lin * self.shape[d] + idx[d];
        }
        lin
    }

    /// Lattice neighbour `lin + dir·e_axis`, if it exists.
    pub fn shift(&self, lin: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut idx = self.unravel(lin);
        let v = idx[axis] as i64 + dir;
        if v < 0 || v >= self.shape[axis] as i64 {
            return None;
        }
        idx[axis] = v as usize;
        Some(self.ravel(&idx))
    }

    /// Lattice neighbour at an integer offset, if it exists.
    pub fn offset(&self, lin: usize, off: &[i64]) -> Option<usize> {
        let mut idx = self.unravel(lin);
        for d in 0..self.dim {
            let v = idx[d] as i64 + off[d];
            if v < 0 || v >= self.shape[d] as i64 {
                return None;
            }
            idx[d] = v as usize;
        }
        Some(self.ravel(&idx))
    }

    pub fn lattice_point(&self, lin: usize) -> [f64; 3] {
        let idx = self.unravel(lin);
        let mut p = [0.0; 3];
        for d in 0..self.dim {
            p[d] = self.lower[d] + idx[d] as f64 * self.h;
        }
        p
    }

    /// Coordinates of interior node `i`.
    pub fn point(&self, i: usize) -> [f64; 3] {
        self.lattice_point(self.lattice_of[i])
    }

    pub fn lattice_index(&self, i: usize) -> usize {
        self.lattice_of[i]
    }

    /// Dense row index of a lattice point, if it is interior.
    pub fn interior_index(&self, lin: usize) -> Option<usize> {
        match self.index_of[lin] {
            NO_INDEX => None,
            i => Some(i),
        }
    }

    /// Interior node closest to `x` (ties go to the lowest index).
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..self.n_interior() {
            let p = self.point(i);
            let d2: f64 = (0..self.dim).map(|d| (p[d] - x[d]).powi(2)).sum();
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }

    /// Samples `f` at every interior node.
    pub fn sample(&self, f: &(dyn Fn(&[f64]) -> f64 + Send + Sync)) -> Vec<f64> {
        (0..self.n_interior())
            .map(|i| {
                let p = self.point(i);
                f(&p[..self.dim])
            })
            .collect()
    }
}
