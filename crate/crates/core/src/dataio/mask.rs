use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Which grid cells are observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    m: usize,
    t: usize,
    observed: Vec<bool>,
    pub sampling_rate: f64,
    pub seed: u64,
}

impl ObservationMask {
    pub fn from_cells(m: usize, t: usize, observed: Vec<bool>, sampling_rate: f64, seed: u64) -> Result<Self> {
        if observed.len() != m * t {
            return Err(Error::Dimension(format!(
                "mask of {} cells for a {m}x{t} grid",
                observed.len()
            )));
        }
        Ok(Self {
            m,
            t,
            observed,
            sampling_rate,
            seed,
        })
    }

    pub fn full(m: usize, t: usize) -> Self {
        Self {
            m,
            t,
            observed: vec![true; m * t],
            sampling_rate: 1.0,
            seed: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.t)
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.t + j]
    }

    pub fn cells(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Row-major indices of observed cells, ascending.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&k| self.observed[k]).collect()
    }

    pub fn held_out_indices(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&k| !self.observed[k]).collect()
    }
}

/// Selects exactly `round(rate * M * T)` cells uniformly without replacement.
pub fn make_mask(m: usize, t: usize, rate: f64, seed: u64) -> Result<ObservationMask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must be in (0, 1], got {rate}"
        )));
    }
    if m == 0 || t == 0 {
        return Err(Error::InvalidArgument("mask grid must be non-empty".into()));
    }
    let total = m * t;
    let count = ((rate * total as f64).round() as usize).min(total);
    let mut observed = vec![false; total];
    let mut rng = substream(seed, Stream::Mask, 0);
    for k in index::sample(&mut rng, total, count) {
        observed[k] = true;
    }
    ObservationMask::from_cells(m, t, observed, rate, seed)
}
