use crate::error::{Error, Result};

/// First-kind Chebyshev polynomial `T_n(x)` by the three-term recurrence.
pub fn chebyshev_t(n: usize, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("T_{n}({x}): x outside [-1, 1]")));
    }
    Ok(chebyshev_t_unchecked(n, x))
}

pub(crate) fn chebyshev_t_unchecked(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for _ in 1..n {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `n` evenly spaced points from -1 to 1 inclusive. Endpoints are exact.
pub fn linspace_unit(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![-1.0],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    1.0
                } else {
                    -1.0 + 2.0 * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn low_order_values() {
        assert_eq!(chebyshev_t(0, 0.7).unwrap(), 1.0);
        assert_eq!(chebyshev_t(2, 0.5).unwrap(), -0.5);
        assert_eq!(chebyshev_t(3, 0.5).unwrap(), -1.0);
        assert_eq!(chebyshev_t(5, 1.0).unwrap(), 1.0);
        assert_eq!(chebyshev_t(5, -1.0).unwrap(), -1.0);
    }

    #[test]
    fn matches_cosine_identity() {
        for n in 0..12 {
            for k in 0..=20 {
                let x = -1.0 + 0.1 * k as f64;
                let x = x.clamp(-1.0, 1.0);
                let expected = (n as f64 * x.acos()).cos();
                assert!((chebyshev_t(n, x).unwrap() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_error_outside_unit_interval() {
        assert!(chebyshev_t(2, 1.0000001).is_err());
        assert!(chebyshev_t(0, -1.5).is_err());
    }

    #[test]
    fn weighted_orthogonality() {
        // Gauss-Chebyshev: int f(x)/sqrt(1-x^2) dx = pi/n sum f(cos((2k-1) pi / 2n)).
        let nodes = 256;
        for i in 0..=6 {
            for j in 0..=6 {
                let sum: f64 = (1..=nodes)
                    .map(|k| {
                        let x = ((2 * k - 1) as f64 * PI / (2 * nodes) as f64).cos();
                        chebyshev_t(i, x).unwrap() * chebyshev_t(j, x).unwrap()
                    })
                    .sum();
                let integral = PI / nodes as f64 * sum;
                let expected = match (i, j) {
                    (0, 0) => PI,
                    _ if i == j => PI / 2.0,
                    _ => 0.0,
                };
                assert!((integral - expected).abs() < 1e-10, "({i},{j}) {integral}");
            }
        }
    }

    #[test]
    fn linspace_endpoints() {
        let x = linspace_unit(21);
        assert_eq!(x[0], -1.0);
        assert_eq!(x[20], 1.0);
        assert_eq!(x[10], 0.0);
    }
}
