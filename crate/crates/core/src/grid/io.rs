//! Field snapshot files.
//!
//! Binary snapshot: one ASCII header line
//! `CHSMC1 dim nx [ny [nz]] Lx [Ly [Lz]] t` terminated by `\n`, followed by
//! the cell values as little-endian `f64` in row-major order.

use std::io::{BufRead, Write};

use super::{Field, Grid};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &str = "CHSMC1";

pub fn write_snapshot<W: Write>(mut w: W, field: &Field, t: f64) -> Result<()> {
    let g = field.grid();
    let mut header = format!("{} {}", SNAPSHOT_MAGIC, g.dim());
    for n in g.cells() {
        header.push_str(&format!(" {}", n));
    }
    for l in g.lengths() {
        header.push_str(&format!(" {}", l));
    }
    header.push_str(&format!(" {}\n", t));
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(8 * field.len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot back as `(field, t)`.
pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<(Field, f64)> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(SNAPSHOT_MAGIC) {
        return Err(Error::Format("missing CHSMC1 magic".into()));
    }
    let tokens: Vec<&str> = parts.collect();
    let dim: usize = tokens
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad dimension".into()))?;
    if !(1..=3).contains(&dim) || tokens.len() != 2 + 2 * dim {
        return Err(Error::Format(format!("header has {} fields for dimension {}", tokens.len(), dim)));
    }
    let cells = tokens[1..=dim]
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let lengths = tokens[1 + dim..1 + 2 * dim]
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| Error::Format(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let t: f64 = tokens[1 + 2 * dim].parse().map_err(|_| Error::Format("bad time".into()))?;
    let grid = Grid::new(&cells, &lengths)?;
    let mut bytes = vec![0u8; 8 * grid.n_cells()];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((Field::from_values(&grid, values)?, t))
}

/// CSV with index columns, cell-center coordinates and the value.
pub fn write_csv<W: Write>(mut w: W, field: &Field) -> Result<()> {
    let g = field.grid();
    let idx_names = ["i", "j", "k"];
    let x_names = ["x", "y", "z"];
    let mut head: Vec<&str> = idx_names[..g.dim()].to_vec();
    head.extend_from_slice(&x_names[..g.dim()]);
    head.push("value");
    writeln!(w, "{}", head.join(","))?;
    for (idx, v) in field.values().iter().enumerate() {
        let m = g.multi_index(idx);
        let x = g.cell_center(idx);
        let mut row: Vec<String> = (0..g.dim()).map(|a| m[a].to_string()).collect();
        row.extend((0..g.dim()).map(|a| format!("{:e}", x[a])));
        row.push(format!("{:e}", v));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
