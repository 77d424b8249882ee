use crate::error::{Error, Result};
use crate::math::Matrix;

/// Kernel radius in samples for a Gaussian truncated at 4 sigma.
pub fn kernel_radius(sigma: f64) -> usize {
    (4.0 * sigma + 0.5).floor() as usize
}

/// Normalized 1-D Gaussian weights for offsets `-r..=r`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-0.5 * (d * d) as f64 / (sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for w in &mut k {
        *w /= total;
    }
    k
}

/// Half-sample symmetric reflection: `d c b a | a b c d | d c b a`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

fn convolve_1d(src: &[f64], kernel: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let r = (kernel.len() / 2) as isize;
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &w) in kernel.iter().enumerate() {
            acc += w * src[reflect(i as isize + k as isize - r, n)];
        }
        *out = acc;
    }
}

/// Separable Gaussian smoothing of an `M x T` field (rows are space, columns
/// time) with reflect boundaries and 4-sigma truncation.
pub fn gaussian_filter_2d(field: &Matrix, sigma_x: f64, sigma_t: f64) -> Result<Matrix> {
    if !(sigma_x > 0.0 && sigma_t > 0.0) || !sigma_x.is_finite() || !sigma_t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "filter sigmas must be positive, got ({sigma_x}, {sigma_t})"
        )));
    }
    let (m, t) = field.shape();
    let kx = gaussian_kernel(sigma_x);
    let kt = gaussian_kernel(sigma_t);

    let mut along_x = Matrix::zeros(m, t);
    let mut col = vec![0.0; m];
    let mut out_col = vec![0.0; m];
    for j in 0..t {
        for i in 0..m {
            col[i] = field.get(i, j);
        }
        convolve_1d(&col, &kx, &mut out_col);
        for i in 0..m {
            along_x.set(i, j, out_col[i]);
        }
    }

    let mut out = Matrix::zeros(m, t);
    for i in 0..m {
        convolve_1d(along_x.row(i), &kt, out.row_mut(i));
    }
    Ok(out)
}
