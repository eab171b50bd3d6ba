//! Plain-text form of grids and operators.
//!
//! Grid:
//! ```text
//! <N> <lo_1>,<hi_1> ... <lo_N>,<hi_N> <level> <alpha>
//! <one line of I/B/E symbols per lattice row, axis 0 varying along the line>
//! ```
//! In 3-D the rows of successive planes follow each other with a blank
//! line between planes. Operator:
//! ```text
//! operator <n> <nnz> <symmetric|nonsymmetric>
//! <row> <col> <value>      (sorted lexicographically)
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use super::domain::{DomainGrid, NodeKind};
use super::operator::AssembledOperator;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub fn write_grid(grid: &DomainGrid) -> String {
    let mut out = String::new();
    write!(out, "{}", grid.dim()).unwrap();
    for d in 0..grid.dim() {
        write!(out, " {:?},{:?}", grid.lower()[d], grid.upper()[d]).unwrap();
    }
    writeln!(out, " {} {:?}", grid.level(), grid.alpha()).unwrap();
    let nx = grid.shape()[0];
    let rows_per_plane = if grid.dim() >= 2 { grid.shape()[1] } else { 1 };
    for (r, chunk) in grid.kinds().chunks(nx).enumerate() {
        if r > 0 && r % rows_per_plane == 0 {
            out.push('\n');
        }
        out.extend(chunk.iter().map(|k| k.symbol()));
        out.push('\n');
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

pub fn read_grid(text: &str) -> Result<DomainGrid> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err(1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dim: usize = fields
        .first()
        .and_then(|f| f.parse().ok())
        .filter(|d| (1..=3).contains(d))
        .ok_or_else(|| format_err(1, "first field must be the dimension 1..3"))?;
    if fields.len() != dim + 3 {
        return Err(format_err(1, format!("expected {} header fields, got {}", dim + 3, fields.len())));
    }
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for f in &fields[1..=dim] {
        let (a, b) = f
            .split_once(',')
            .ok_or_else(|| format_err(1, format!("extent `{f}` is not lo,hi")))?;
        lower.push(a.parse::<f64>().map_err(|e| format_err(1, e.to_string()))?);
        upper.push(b.parse::<f64>().map_err(|e| format_err(1, e.to_string()))?);
    }
    let level: u32 = fields[dim + 1].parse().map_err(|_| format_err(1, "bad level"))?;
    let alpha: f64 = fields[dim + 2].parse().map_err(|_| format_err(1, "bad alpha"))?;

    let mut rows: Vec<(usize, Vec<NodeKind>)> = Vec::new();
    let mut planes = 1usize;
    let mut rows_in_plane = 0usize;
    let mut plane_rows: Option<usize> = None;
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            if rows_in_plane > 0 {
                match plane_rows {
                    None => plane_rows = Some(rows_in_plane),
                    Some(p) if p != rows_in_plane => return Err(format_err(i + 1, "planes differ in size")),
                    _ => {}
                }
                planes += 1;
                rows_in_plane = 0;
            }
            continue;
        }
        let kinds = line
            .chars()
            .map(|c| NodeKind::from_symbol(c).ok_or_else(|| format_err(i + 1, format!("unknown symbol `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((i + 1, kinds));
        rows_in_plane += 1;
    }
    if rows.is_empty() {
        return Err(format_err(2, "missing classification rows"));
    }
    let nx = rows[0].1.len();
    if let Some((line, _)) = rows.iter().find(|(_, r)| r.len() != nx) {
        return Err(format_err(*line, "row length differs from the first row"));
    }
    let shape = match dim {
        1 => vec![nx],
        2 => vec![nx, rows.len()],
        _ => vec![nx, plane_rows.unwrap_or(rows_in_plane), planes],
    };
    if dim == 1 && rows.len() != 1 || dim == 3 && shape[1] * shape[2] != rows.len() {
        return Err(format_err(2, "row count does not match the dimension"));
    }
    let kinds = rows.into_iter().flat_map(|(_, r)| r).collect();
    DomainGrid::from_kinds(lower, upper, level, alpha, shape, kinds)
}

pub fn write_operator(op: &AssembledOperator) -> String {
    let m = op.matrix();
    let mut out = String::new();
    writeln!(
        out,
        "operator {} {} {}",
        m.n(),
        m.nnz(),
        if op.is_symmetric() { "symmetric" } else { "nonsymmetric" }
    )
    .unwrap();
    for (i, j, v) in m.triplets() {
        writeln!(out, "{i} {j} {v:?}").unwrap();
    }
    out
}

pub fn read_operator(text: &str, grid: Arc<DomainGrid>) -> Result<AssembledOperator> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| format_err(1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "operator" {
        return Err(format_err(1, "expected `operator <n> <nnz> <symmetry>`"));
    }
    let n: usize = fields[1].parse().map_err(|_| format_err(1, "bad n"))?;
    let nnz: usize = fields[2].parse().map_err(|_| format_err(1, "bad nnz"))?;
    let mut triplets = Vec::with_capacity(nnz);
    let mut last: Option<(usize, usize)> = None;
    for (i, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format_err(i + 1, "expected `row col value`"));
        }
        let r: usize = parts[0].parse().map_err(|_| format_err(i + 1, "bad row"))?;
        let c: usize = parts[1].parse().map_err(|_| format_err(i + 1, "bad col"))?;
        let v: f64 = parts[2].parse().map_err(|_| format_err(i + 1, "bad value"))?;
        if r >= n || c >= n {
            return Err(format_err(i + 1, "index out of range"));
        }
        if last.is_some_and(|l| l >= (r, c)) {
            return Err(format_err(i + 1, "triplets must be sorted and unique"));
        }
        last = Some((r, c));
        triplets.push((r, c, v));
    }
    if triplets.len() != nnz {
        return Err(format_err(1, format!("header announces {nnz} entries, found {}", triplets.len())));
    }
    AssembledOperator::from_matrix(grid, CsrMatrix::from_triplets(n, triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble, CoefficientField, DomainSpec};

    #[test]
    fn grid_text_round_trip() {
        let spec = DomainSpec::unit_box(2)
            .with_mask(Arc::new(|x: &[f64]| x[0] * x[0] + x[1] * x[1] - 0.25));
        let g = DomainGrid::build(&spec, 4).unwrap();
        let text = write_grid(&g);
        assert!(text.starts_with("2 0.0,1.0 0.0,1.0 4 0.1\n"));
        assert_eq!(read_grid(&text).unwrap(), g);

        let g3 = DomainGrid::build(&DomainSpec::unit_box(3), 2).unwrap();
        assert_eq!(read_grid(&write_grid(&g3)).unwrap(), g3);
        let g1 = DomainGrid::build(&DomainSpec::unit_box(1), 3).unwrap();
        assert_eq!(read_grid(&write_grid(&g1)).unwrap(), g1);
    }

    #[test]
    fn operator_text_round_trip() {
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(2), 3).unwrap());
        let op = assemble(Arc::clone(&g), &CoefficientField::identity(2)).unwrap();
        let text = write_operator(&op);
        assert!(text.starts_with("operator 49 "));
        let back = read_operator(&text, g).unwrap();
        assert_eq!(back.matrix(), op.matrix());
        assert!(back.is_symmetric());
    }

    #[test]
    fn malformed_text_reports_line() {
        assert!(matches!(read_grid("2 0,1 0,1 3 0.1\nBBX\n"), Err(Error::Format { line: 2, .. })));
        let g = Arc::new(DomainGrid::build(&DomainSpec::unit_box(1), 2).unwrap());
        assert!(read_operator("operator 3 2 symmetric\n1 1 2.0\n0 0 1.0\n", g).is_err());
    }
}
