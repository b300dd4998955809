//! Uniform lattice fields with explicit exterior values.
//!
//! A [`ScalarField`] is total on the plane: inside the lattice box it
//! interpolates multilinearly between node values, outside it defers to a
//! named exterior rule. One-dimensional problems use `ny = 1` and ignore the
//! `y` coordinate.

use crate::data::DataFn;
use crate::point::Point;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("malformed field file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A uniform lattice: node `(i, j)` sits at `origin + h * (i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: u32,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub origin: Point,
}

impl GridSpec {
    /// Symmetric grid about the origin covering `[-half_extent, half_extent]`
    /// per axis, with the origin guaranteed to be a node.
    pub fn centered(dim: u32, h: f64, half_extent: f64) -> GridSpec {
        assert!(dim == 1 || dim == 2, "grids support N in {{1,2}}");
        assert!(h > 0.0 && half_extent > 0.0);
        let m = (half_extent / h).round().max(1.0) as usize;
        let nx = 2 * m + 1;
        let ny = if dim == 2 { nx } else { 1 };
        let oy = if dim == 2 { -(m as f64) * h } else { 0.0 };
        GridSpec {
            dim,
            h,
            nx,
            ny,
            origin: Point::new(-(m as f64) * h, oy),
        }
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + self.h * i as f64,
            self.origin.y + self.h * j as f64,
        )
    }

    pub fn max_x(&self) -> f64 {
        self.origin.x + self.h * (self.nx - 1) as f64
    }

    pub fn max_y(&self) -> f64 {
        self.origin.y + self.h * (self.ny - 1) as f64
    }

    /// Whether `p` lies inside the node box (1D ignores `y`).
    pub fn in_box(&self, p: Point) -> bool {
        let eps = 1e-12 * self.h;
        let in_x = p.x >= self.origin.x - eps && p.x <= self.max_x() + eps;
        if self.dim == 1 {
            in_x
        } else {
            in_x && p.y >= self.origin.y - eps && p.y <= self.max_y() + eps
        }
    }

    /// Largest distance from `center` to a corner of the box.
    pub fn max_radius_from(&self, center: Point) -> f64 {
        let xs = [self.origin.x, self.max_x()];
        let ys = if self.dim == 2 {
            [self.origin.y, self.max_y()]
        } else {
            [0.0, 0.0]
        };
        let mut r: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                r = r.max((Point::new(x, y) - center).norm());
            }
        }
        r
    }
}

/// Grid-sampled values plus an exterior rule; evaluation is total.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub exterior: DataFn,
}

impl ScalarField {
    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> f64, exterior: DataFn) -> ScalarField {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.node(i, j)));
            }
        }
        ScalarField {
            grid,
            values,
            exterior,
        }
    }

    /// Multilinear interpolation inside the box, exterior rule outside.
    pub fn eval(&self, p: Point) -> f64 {
        if !self.grid.in_box(p) {
            return self.exterior.eval(p);
        }
        let g = &self.grid;
        let fx = ((p.x - g.origin.x) / g.h).clamp(0.0, (g.nx - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx.saturating_sub(2));
        let tx = if g.nx > 1 { fx - i0 as f64 } else { 0.0 };
        if g.dim == 1 {
            let a = self.values[i0];
            let b = self.values[(i0 + 1).min(g.nx - 1)];
            return a + tx * (b - a);
        }
        let fy = ((p.y - g.origin.y) / g.h).clamp(0.0, (g.ny - 1) as f64);
        let j0 = (fy.floor() as usize).min(g.ny.saturating_sub(2));
        let ty = fy - j0 as f64;
        let i1 = (i0 + 1).min(g.nx - 1);
        let j1 = (j0 + 1).min(g.ny - 1);
        let v00 = self.values[g.idx(i0, j0)];
        let v10 = self.values[g.idx(i1, j0)];
        let v01 = self.values[g.idx(i0, j1)];
        let v11 = self.values[g.idx(i1, j1)];
        let a = v00 + tx * (v10 - v00);
        let b = v01 + tx * (v11 - v01);
        a + ty * (b - a)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Field dump: grid header rows, exterior rule as inline JSON, then one
    /// node per line.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<(), FieldError> {
        let g = &self.grid;
        writeln!(w, "dim,h,nx,ny,origin_x,origin_y")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            g.dim, g.h, g.nx, g.ny, g.origin.x, g.origin.y
        )?;
        writeln!(w, "exterior")?;
        let ext = match &self.exterior {
            DataFn::Custom { far_value, .. } => DataFn::Constant { value: *far_value },
            other => other.clone(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&ext).map_err(|e| FieldError::Parse(e.to_string()))?
        )?;
        writeln!(w, "i,j,x,y,value")?;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.node(i, j);
                writeln!(w, "{},{},{},{},{}", i, j, p.x, p.y, self.values[g.idx(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<ScalarField, FieldError> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String, FieldError> {
            lines
                .next()
                .ok_or_else(|| FieldError::Parse(format!("missing {what}")))?
                .map_err(FieldError::Io)
        };
        let header = next("grid header")?;
        if header.trim() != "dim,h,nx,ny,origin_x,origin_y" {
            return Err(FieldError::Parse("unexpected grid header".into()));
        }
        let row = next("grid row")?;
        let parts: Vec<&str> = row.trim().split(',').collect();
        if parts.len() != 6 {
            return Err(FieldError::Parse("grid row needs 6 fields".into()));
        }
        let parse =
            |s: &str| -> Result<f64, FieldError> { s.parse().map_err(|_| FieldError::Parse(format!("bad number {s}"))) };
        let grid = GridSpec {
            dim: parts[0]
                .parse()
                .map_err(|_| FieldError::Parse("bad dim".into()))?,
            h: parse(parts[1])?,
            nx: parts[2]
                .parse()
                .map_err(|_| FieldError::Parse("bad nx".into()))?,
            ny: parts[3]
                .parse()
                .map_err(|_| FieldError::Parse("bad ny".into()))?,
            origin: Point::new(parse(parts[4])?, parse(parts[5])?),
        };
        if next("exterior header")?.trim() != "exterior" {
            return Err(FieldError::Parse("missing exterior header".into()));
        }
        let exterior: DataFn = serde_json::from_str(next("exterior rule")?.trim())
            .map_err(|e| FieldError::Parse(e.to_string()))?;
        if next("node header")?.trim() != "i,j,x,y,value" {
            return Err(FieldError::Parse("missing node header".into()));
        }
        let mut values = vec![0.0; grid.n_nodes()];
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<&str> = line.trim().split(',').collect();
            if p.len() != 5 {
                return Err(FieldError::Parse(format!("bad node row: {line}")));
            }
            let i: usize = p[0]
                .parse()
                .map_err(|_| FieldError::Parse("bad i".into()))?;
            let j: usize = p[1]
                .parse()
                .map_err(|_| FieldError::Parse("bad j".into()))?;
            if i >= grid.nx || j >= grid.ny {
                return Err(FieldError::Parse("node index out of range".into()));
            }
            values[grid.idx(i, j)] = parse(p[4])?;
            seen += 1;
        }
        if seen != grid.n_nodes() {
            return Err(FieldError::Parse(format!(
                "expected {} nodes, found {seen}",
                grid.n_nodes()
            )));
        }
        Ok(ScalarField {
            grid,
            values,
            exterior,
        })
    }
}
