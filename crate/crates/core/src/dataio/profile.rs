use std::fmt::Write as _;
use std::path::Path;

use super::grid::GridField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileAxis {
    /// One space cell across all times.
    FixedLocation,
    /// One time step across all cells.
    FixedTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub axis: ProfileAxis,
    pub index: usize,
    /// Time in seconds (fixed location) or position in meters (fixed time).
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn extract_profile(field: &GridField, axis: ProfileAxis, index: usize) -> Result<Profile> {
    let (m, t) = field.values.shape();
    let (coords, values) = match axis {
        ProfileAxis::FixedLocation => {
            if index >= m {
                return Err(Error::InvalidArgument(format!("cell {index} outside 0..{m}")));
            }
            (
                (0..t).map(|j| field.t_at(j)).collect(),
                field.values.row(index).to_vec(),
            )
        }
        ProfileAxis::FixedTime => {
            if index >= t {
                return Err(Error::InvalidArgument(format!("step {index} outside 0..{t}")));
            }
            (
                (0..m).map(|i| field.x_at(i)).collect(),
                field.values.column(index),
            )
        }
    };
    Ok(Profile {
        axis,
        index,
        coords,
        values,
    })
}

impl Profile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(match self.axis {
            ProfileAxis::FixedLocation => "t_s,value\n",
            ProfileAxis::FixedTime => "x_m,value\n",
        });
        for (c, v) in self.coords.iter().zip(&self.values) {
            let _ = writeln!(s, "{c},{v:.16e}");
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display(), e))
    }
}
