//! Random spatiotemporal input functions for the branch network.
//!
//! Two generators are provided, both ending with a zero-mean, unit-std
//! normalization of the whole `M x T` field:
//!
//! * GRF: white noise smoothed by a separable Gaussian filter with standard
//!   deviations `l * M` and `l * T` grid cells.
//! * Chebyshev: a random combination of the `D^2` tensor-product basis fields
//!   `T_i(x) T_j(t)` on `linspace(-1, 1)` grids, with standard-normal
//!   coefficients.
//!
//! Function `k` of a batch draws from its own RNG substream, so any single
//! function can be regenerated from `(seed, k)` alone.

pub mod chebyshev;
pub mod filter;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;

pub use chebyshev::{chebyshev_t, linspace_unit};
pub use filter::gaussian_filter_2d;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::{substream, Stream};

/// Fields with a post-generation std below this are rejected as degenerate.
pub const DEGENERATE_STD: f64 = 1e-12;
/// Attempts per function before a degenerate draw becomes an error.
pub const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Grf,
    Chebyshev,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Grf => "grf",
            Generator::Chebyshev => "chebyshev",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grf" => Ok(Generator::Grf),
            "chebyshev" | "cheb" => Ok(Generator::Chebyshev),
            other => Err(Error::Config(format!("unknown generator '{other}'"))),
        }
    }
}

/// One realization `u(x, t)` on an `M x T` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFunction {
    pub values: Matrix,
    pub generator: Generator,
    pub seed: u64,
    /// Position within the generated batch; selects the RNG substream.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfConfig {
    /// Smoothness as a fraction of the domain.
    pub length_scale: f64,
    pub m: usize,
    pub t: usize,
    pub count: usize,
    pub seed: u64,
}

impl GrfConfig {
    pub fn new(m: usize, t: usize, count: usize, seed: u64) -> Self {
        Self {
            length_scale: 0.2,
            m,
            t,
            count,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebConfig {
    /// Number of polynomials per axis; the basis has `degree^2` fields.
    pub degree: usize,
    pub m: usize,
    pub t: usize,
    pub count: usize,
    pub seed: u64,
}

impl ChebConfig {
    pub const DEFAULT_DEGREE: usize = 6;

    pub fn new(m: usize, t: usize, count: usize, seed: u64) -> Self {
        Self {
            degree: Self::DEFAULT_DEGREE,
            m,
            t,
            count,
            seed,
        }
    }
}

fn check_grid(m: usize, t: usize, count: usize) -> Result<()> {
    if m < 2 || t < 2 {
        return Err(Error::InvalidArgument(format!(
            "function grid must be at least 2x2, got {m}x{t}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("function count must be >= 1".into()));
    }
    Ok(())
}

/// Shifts and scales to zero mean and unit population std. Returns `None` for
/// a degenerate (numerically constant) field.
pub fn normalize(field: &mut Matrix) -> Option<()> {
    let mean = field.mean();
    let std = field.std();
    if !(std >= DEGENERATE_STD) || !std.is_finite() {
        return None;
    }
    for v in field.as_mut_slice() {
        *v = (*v - mean) / std;
    }
    Some(())
}

fn generate_with_retries(
    generator: Generator,
    seed: u64,
    count: usize,
    mut draw: impl FnMut(&mut crate::rng::Rng) -> Result<Matrix>,
) -> Result<Vec<InputFunction>> {
    (0..count)
        .map(|k| {
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = substream(seed, Stream::Function, k as u64 * MAX_ATTEMPTS + attempt);
                let mut values = draw(&mut rng)?;
                if normalize(&mut values).is_some() {
                    return Ok(InputFunction {
                        values,
                        generator,
                        seed,
                        index: k,
                    });
                }
            }
            Err(Error::Degenerate(format!(
                "{generator} function {k} was constant after {MAX_ATTEMPTS} attempts"
            )))
        })
        .collect()
}

/// Filtered-white-noise Gaussian random fields.
pub fn generate_grf(cfg: &GrfConfig) -> Result<Vec<InputFunction>> {
    check_grid(cfg.m, cfg.t, cfg.count)?;
    if !(cfg.length_scale > 0.0) || !cfg.length_scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "length scale must be positive, got {}",
            cfg.length_scale
        )));
    }
    let sigma_x = cfg.length_scale * cfg.m as f64;
    let sigma_t = cfg.length_scale * cfg.t as f64;
    generate_with_retries(Generator::Grf, cfg.seed, cfg.count, |rng| {
        let noise = Matrix::from_fn(cfg.m, cfg.t, |_, _| rng.sample(StandardNormal));
        gaussian_filter_2d(&noise, sigma_x, sigma_t)
    })
}

/// Tensor-product Chebyshev basis `b[i * D + j] = T_i(x) (x) T_j(t)`.
pub fn chebyshev_basis(degree: usize, m: usize, t: usize) -> Vec<Matrix> {
    let xs = linspace_unit(m);
    let ts = linspace_unit(t);
    let mut basis = Vec::with_capacity(degree * degree);
    for i in 0..degree {
        let ti: Vec<f64> = xs.iter().map(|&x| chebyshev::chebyshev_t_unchecked(i, x)).collect();
        for j in 0..degree {
            let tj: Vec<f64> = ts.iter().map(|&t| chebyshev::chebyshev_t_unchecked(j, t)).collect();
            basis.push(Matrix::from_fn(m, t, |a, b| ti[a] * tj[b]));
        }
    }
    basis
}

/// Sum of basis fields weighted by `coefficients` (one per basis field).
pub fn combine_basis(basis: &[Matrix], coefficients: &[f64]) -> Result<Matrix> {
    if basis.len() != coefficients.len() || basis.is_empty() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} basis fields",
            coefficients.len(),
            basis.len()
        )));
    }
    let (m, t) = basis[0].shape();
    let mut f = Matrix::zeros(m, t);
    for (b, &c) in basis.iter().zip(coefficients) {
        for (acc, v) in f.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *acc += c * v;
        }
    }
    Ok(f)
}

/// Random Chebyshev expansions.
pub fn generate_chebyshev(cfg: &ChebConfig) -> Result<Vec<InputFunction>> {
    check_grid(cfg.m, cfg.t, cfg.count)?;
    if cfg.degree == 0 {
        return Err(Error::InvalidArgument("Chebyshev degree must be >= 1".into()));
    }
    let basis = chebyshev_basis(cfg.degree, cfg.m, cfg.t);
    generate_with_retries(Generator::Chebyshev, cfg.seed, cfg.count, |rng| {
        let c: Vec<f64> = (0..basis.len()).map(|_| rng.sample(StandardNormal)).collect();
        combine_basis(&basis, &c)
    })
}

/// Dispatches on `generator`. `length_scale` only affects GRF draws and
/// `degree` only Chebyshev draws.
pub fn generate(
    generator: Generator,
    m: usize,
    t: usize,
    count: usize,
    seed: u64,
    length_scale: f64,
    degree: usize,
) -> Result<Vec<InputFunction>> {
    match generator {
        Generator::Grf => generate_grf(&GrfConfig {
            length_scale,
            m,
            t,
            count,
            seed,
        }),
        Generator::Chebyshev => generate_chebyshev(&ChebConfig {
            degree,
            m,
            t,
            count,
            seed,
        }),
    }
}

/// Mean absolute difference between spatially adjacent cells.
pub fn mean_abs_spatial_difference(field: &Matrix) -> f64 {
    let (m, t) = field.shape();
    let mut sum = 0.0;
    for i in 1..m {
        for j in 0..t {
            sum += (field.get(i, j) - field.get(i - 1, j)).abs();
        }
    }
    sum / ((m - 1) * t) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_normalized(f: &InputFunction) {
        let mean = f.values.mean();
        let std = f.values.std();
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-9, "std {std}");
    }

    #[test]
    fn grf_functions_are_normalized_and_shaped() {
        let fs = generate_grf(&GrfConfig::new(21, 60, 5, 3)).unwrap();
        assert_eq!(fs.len(), 5);
        for (k, f) in fs.iter().enumerate() {
            assert_eq!(f.values.shape(), (21, 60));
            assert_eq!(f.index, k);
            assert_eq!(f.generator, Generator::Grf);
            assert_normalized(f);
        }
    }

    #[test]
    fn grf_is_deterministic() {
        let cfg = GrfConfig::new(8, 12, 3, 99);
        assert_eq!(generate_grf(&cfg).unwrap(), generate_grf(&cfg).unwrap());
        let other = GrfConfig { seed: 100, ..cfg };
        assert_ne!(generate_grf(&cfg).unwrap(), generate_grf(&other).unwrap());
    }

    #[test]
    fn larger_length_scale_is_smoother() {
        let smooth = generate_grf(&GrfConfig { length_scale: 0.2, ..GrfConfig::new(21, 200, 1, 5) }).unwrap();
        let rough = generate_grf(&GrfConfig { length_scale: 0.02, ..GrfConfig::new(21, 200, 1, 5) }).unwrap();
        assert!(
            mean_abs_spatial_difference(&smooth[0].values)
                < mean_abs_spatial_difference(&rough[0].values)
        );
    }

    #[test]
    fn chebyshev_functions_are_normalized() {
        for degree in 2..=7 {
            let fs = generate_chebyshev(&ChebConfig { degree, ..ChebConfig::new(21, 50, 4, 11) }).unwrap();
            fs.iter().for_each(assert_normalized);
        }
    }

    #[test]
    fn degree_one_is_degenerate() {
        let err = generate_chebyshev(&ChebConfig { degree: 1, ..ChebConfig::new(5, 5, 1, 0) }).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn single_t1_t1_coefficient_gives_outer_product() {
        let basis = chebyshev_basis(2, 5, 7);
        assert_eq!(basis.len(), 4);
        let f = combine_basis(&basis, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let xs = linspace_unit(5);
        let ts = linspace_unit(7);
        for i in 0..5 {
            for j in 0..7 {
                assert_eq!(f.get(i, j), xs[i] * ts[j]);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_grf(&GrfConfig::new(1, 10, 1, 0)).is_err());
        assert!(generate_grf(&GrfConfig::new(4, 4, 0, 0)).is_err());
        assert!(generate_grf(&GrfConfig { length_scale: 0.0, ..GrfConfig::new(4, 4, 1, 0) }).is_err());
        assert!(generate_chebyshev(&ChebConfig { degree: 0, ..ChebConfig::new(4, 4, 1, 0) }).is_err());
    }

    #[test]
    fn generator_names_parse() {
        assert_eq!("GRF".parse::<Generator>().unwrap(), Generator::Grf);
        assert_eq!("chebyshev".parse::<Generator>().unwrap(), Generator::Chebyshev);
        assert!("fourier".parse::<Generator>().is_err());
    }
}
