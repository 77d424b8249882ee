//! Grid CSV format.
//!
//! ```text
//! # tse-grid v1, M=21, T=600, dx=30, dt=1.5
//! 1.9965000000000000e1,1.9965000000000000e1,...
//! ...
//! ```
//!
//! The header is followed by exactly `M` rows of `T` comma-separated values,
//! row `i` holding cell `i` (upstream first) across time. Values are written
//! with 17 significant digits so a save/load round trip is bit-exact. Optional
//! trailing header keys `x0=<m>` and `t0=<s>` carry grid origin offsets; they
//! are written only when non-zero.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;

const MAGIC: &str = "# tse-grid v1";

/// A scalar field on a regular space-time grid; rows are space, columns time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub values: Matrix,
    /// Cell spacing in meters.
    pub dx: f64,
    /// Time step in seconds.
    pub dt: f64,
    pub x0: f64,
    pub t0: f64,
}

impl GridField {
    pub const DEFAULT_DX: f64 = 30.0;
    pub const DEFAULT_DT: f64 = 1.5;

    pub fn new(values: Matrix, dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0) || !dx.is_finite() || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got dx={dx}, dt={dt}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("grid contains NaN or infinite values".into()));
        }
        Ok(Self {
            values,
            dx,
            dt,
            x0: 0.0,
            t0: 0.0,
        })
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Dimension(format!(
                "grid is {:?}, values are {:?}",
                self.values.shape(),
                values.shape()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Number of space cells.
    pub fn m(&self) -> usize {
        self.values.rows()
    }

    /// Number of time steps.
    pub fn t(&self) -> usize {
        self.values.cols()
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn t_at(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Distance between the first and last cell centers.
    pub fn x_extent(&self) -> f64 {
        (self.m().max(2) - 1) as f64 * self.dx
    }

    pub fn t_extent(&self) -> f64 {
        (self.t().max(2) - 1) as f64 * self.dt
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.as_slice().iter().all(|&v| v >= 0.0)
    }
}

pub fn format_grid_csv(field: &GridField) -> String {
    let mut s = format!(
        "{MAGIC}, M={}, T={}, dx={}, dt={}",
        field.m(),
        field.t(),
        field.dx,
        field.dt
    );
    if field.x0 != 0.0 {
        s.push_str(&format!(", x0={}", field.x0));
    }
    if field.t0 != 0.0 {
        s.push_str(&format!(", t0={}", field.t0));
    }
    s.push('\n');
    for i in 0..field.m() {
        let row = field.values.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&format!("{v:.16e}"));
        }
        s.push('\n');
    }
    s
}

pub fn save_grid_csv(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_grid_csv(field).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path.display(), e))
}

pub fn load_grid_csv(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    parse_grid_csv(&text)
}

struct Header {
    m: usize,
    t: usize,
    dx: f64,
    dt: f64,
    x0: f64,
    t0: f64,
}

fn parse_header(line: &str) -> Result<Header> {
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::parse(1, 1, format!("missing '{MAGIC}' header")))?;
    let (mut m, mut t, mut dx, mut dt) = (None, None, None, None);
    let (mut x0, mut t0) = (0.0, 0.0);
    for (k, item) in rest.split(',').enumerate().skip(1) {
        let col = k + 1;
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::parse(1, col, format!("expected key=value, got '{}'", item.trim())))?;
        let value = value.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(1, col, format!("bad number '{v}'")))
        };
        let count = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::parse(1, col, format!("bad count '{v}'")))
        };
        match key.trim() {
            "M" => m = Some(count(value)?),
            "T" => t = Some(count(value)?),
            "dx" => dx = Some(num(value)?),
            "dt" => dt = Some(num(value)?),
            "x0" => x0 = num(value)?,
            "t0" => t0 = num(value)?,
            other => return Err(Error::parse(1, col, format!("unknown header key '{other}'"))),
        }
    }
    let missing = |name: &str| Error::parse(1, 1, format!("header lacks {name}"));
    Ok(Header {
        m: m.ok_or_else(|| missing("M"))?,
        t: t.ok_or_else(|| missing("T"))?,
        dx: dx.ok_or_else(|| missing("dx"))?,
        dt: dt.ok_or_else(|| missing("dt"))?,
        x0,
        t0,
    })
}

pub fn parse_grid_csv(text: &str) -> Result<GridField> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(1, 1, "empty grid file"))?;
    let h = parse_header(header_line.trim_end())?;
    if h.m == 0 || h.t == 0 {
        return Err(Error::parse(1, 1, "M and T must be positive"));
    }

    let mut data = Vec::with_capacity(h.m * h.t);
    let mut rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if rows == h.m {
            return Err(Error::parse(lineno, 1, format!("more than M={} data rows", h.m)));
        }
        let mut cols = 0;
        for (c, cell) in line.trim_end().split(',').enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(lineno, c + 1, format!("non-numeric cell '{}'", cell.trim())))?;
            data.push(v);
            cols += 1;
        }
        if cols != h.t {
            return Err(Error::parse(
                lineno,
                cols.min(h.t) + 1,
                format!("row has {cols} values, expected T={}", h.t),
            ));
        }
        rows += 1;
    }
    if rows != h.m {
        return Err(Error::parse(
            text.lines().count() + 1,
            1,
            format!("found {rows} data rows, expected M={}", h.m),
        ));
    }
    let mut field = GridField::new(Matrix::from_vec(h.m, h.t, data)?, h.dx, h.dt)
        .map_err(|e| Error::parse(1, 1, e.to_string()))?;
    field.x0 = h.x0;
    field.t0 = h.t0;
    Ok(field)
}
