use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simulator::FieldSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    T,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(Axis::T),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(invalid(format!("axis must be t, y or z, got `{other}`"))),
        }
    }
}

/// The field restricted to one grid level of `axis`, as a 2-D table over
/// the remaining two coordinates (in `t, y, z` order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub axis: Axis,
    pub level: f64,
    pub index: usize,
    pub row_axis: Axis,
    pub col_axis: Axis,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// `values[r][c]`.
    pub values: Vec<Vec<f64>>,
}

impl CrossSection {
    /// CSV with header `<row>\<col>` and the column coordinates, then one
    /// line per row coordinate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let name = |a: Axis| match a {
            Axis::T => "t",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        write!(w, "{}\\{}", name(self.row_axis), name(self.col_axis))?;
        for c in &self.cols {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (r, row) in self.rows.iter().zip(&self.values) {
            write!(w, "{r}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn node(level: f64, resolution: usize) -> Result<usize> {
    let scaled = level * resolution as f64;
    let idx = scaled.round();
    if !(0.0..=1.0).contains(&level) || (scaled - idx).abs() > 1e-9 {
        return Err(invalid(format!("level {level} is not a node of a grid with {resolution} steps")));
    }
    Ok(idx as usize)
}

pub fn cross_section_dump(field: &FieldSample, axis: Axis, level: f64) -> Result<CrossSection> {
    let g = field.grid();
    let v = field.values();
    let ts: Vec<f64> = (0..=g.n).map(|i| g.t(i)).collect();
    let ys: Vec<f64> = (0..=g.m1).map(|j| g.y(j)).collect();
    let zs: Vec<f64> = (0..=g.m2).map(|j| g.z(j)).collect();
    let (index, row_axis, col_axis, rows, cols, values) = match axis {
        Axis::T => {
            let i = node(level, g.n)?;
            let vals = (0..=g.m1).map(|a| (0..=g.m2).map(|b| v[[i, a, b]]).collect()).collect();
            (i, Axis::Y, Axis::Z, ys, zs, vals)
        }
        Axis::Y => {
            let j = node(level, g.m1)?;
            let vals = (0..=g.n).map(|i| (0..=g.m2).map(|b| v[[i, j, b]]).collect()).collect();
            (j, Axis::T, Axis::Z, ts, zs, vals)
        }
        Axis::Z => {
            let j = node(level, g.m2)?;
            let vals = (0..=g.n).map(|i| (0..=g.m1).map(|a| v[[i, a, j]]).collect()).collect();
            (j, Axis::T, Axis::Y, ts, ys, vals)
        }
    };
    Ok(CrossSection { axis, level, index, row_axis, col_axis, rows, cols, values })
}
