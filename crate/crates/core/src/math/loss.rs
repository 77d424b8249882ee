use crate::error::{Error, Result};

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of empty vectors".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pairwise (tree) summation, a different association order than `mse`.
    fn pairwise_sum(v: &[f64]) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
        }
    }

    #[test]
    fn basic_values() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_pairwise_summation(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..200)
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let sq: Vec<f64> = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).collect();
            let oracle = pairwise_sum(&sq) / sq.len() as f64;
            let got = mse(&p, &t).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }
    }
}
