use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::GridField;
use super::mask::ObservationMask;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "tse-eval-report/1";

/// Cells with |truth| below this are skipped by MAPE.
pub const MAPE_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cells: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when no cell clears [`MAPE_FLOOR`].
    pub mape: Option<f64>,
}

/// Error metrics over the listed row-major cell indices, in field units.
pub fn metrics_over(pred: &GridField, truth: &GridField, cells: &[usize]) -> Result<Metrics> {
    if pred.values.shape() != truth.values.shape() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs truth {:?}",
            pred.values.shape(),
            truth.values.shape()
        )));
    }
    if cells.is_empty() {
        return Err(Error::InvalidArgument("no cells to evaluate".into()));
    }
    let p = pred.values.as_slice();
    let y = truth.values.as_slice();
    let (mut se, mut ae, mut ape, mut ape_n) = (0.0, 0.0, 0.0, 0usize);
    for &k in cells {
        let d = p[k] - y[k];
        se += d * d;
        ae += d.abs();
        if y[k].abs() >= MAPE_FLOOR {
            ape += d.abs() / y[k].abs();
            ape_n += 1;
        }
    }
    let n = cells.len() as f64;
    let mse = se / n;
    let m = Metrics {
        cells: cells.len(),
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
        mape: (ape_n > 0).then(|| 100.0 * ape / ape_n as f64),
    };
    debug_assert!(m.rmse + 1e-12 >= m.mae);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub sampling_rate: f64,
    pub mask_seed: u64,
    /// Held-out (masked-out) cells: the estimation targets.
    pub test: Metrics,
    /// Observed cells, when any exist.
    pub train: Option<Metrics>,
    pub runtime_seconds: Option<f64>,
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn rmse(&self) -> f64 {
        self.test.rmse
    }

    pub fn mae(&self) -> f64 {
        self.test.mae
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)
            .map_err(|e| Error::parse(e.line(), e.column(), e.to_string()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::parse(1, 1, format!("unsupported report schema '{}'", report.schema)));
        }
        Ok(report)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "sampling rate {:.0}% (mask seed {})\nheld-out cells {}: RMSE {:.4} m/s, MAE {:.4} m/s",
            self.sampling_rate * 100.0,
            self.mask_seed,
            self.test.cells,
            self.test.rmse,
            self.test.mae
        );
        if let Some(mape) = self.test.mape {
            s.push_str(&format!(", MAPE {mape:.2}%"));
        }
        if let Some(train) = &self.train {
            s.push_str(&format!(
                "\nobserved cells {}: RMSE {:.4} m/s, MAE {:.4} m/s",
                train.cells, train.rmse, train.mae
            ));
        }
        if let Some(rt) = self.runtime_seconds {
            s.push_str(&format!("\nruntime {rt:.2} s"));
        }
        s.push('\n');
        s
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display(), e))
    }
}

/// RMSE/MAE on the cells the mask leaves out.
pub fn evaluate(pred: &GridField, truth: &GridField, mask: &ObservationMask) -> Result<EvalReport> {
    if mask.shape() != truth.values.shape() {
        return Err(Error::Dimension(format!(
            "mask {:?} vs truth {:?}",
            mask.shape(),
            truth.values.shape()
        )));
    }
    let held_out = mask.held_out_indices();
    if held_out.is_empty() {
        return Err(Error::InvalidArgument(
            "every cell is observed; nothing is held out for evaluation".into(),
        ));
    }
    let test = metrics_over(pred, truth, &held_out)?;
    let observed = mask.observed_indices();
    let train = if observed.is_empty() {
        None
    } else {
        Some(metrics_over(pred, truth, &observed)?)
    };
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        sampling_rate: mask.sampling_rate,
        mask_seed: mask.seed,
        test,
        train,
        runtime_seconds: None,
        config: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Matrix;
    use proptest::prelude::*;

    fn field(values: Vec<f64>, m: usize, t: usize) -> GridField {
        GridField::new(Matrix::from_vec(m, t, values).unwrap(), 30.0, 1.5).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let truth = field(vec![10.0, 12.0, 14.0, 16.0], 2, 2);
        let mask = ObservationMask::from_cells(2, 2, vec![true, false, false, false], 0.25, 0).unwrap();
        let r = evaluate(&truth, &truth, &mask).unwrap();
        assert_eq!((r.rmse(), r.mae()), (0.0, 0.0));
        assert_eq!(r.test.cells, 3);
    }

    #[test]
    fn constant_offset() {
        let truth = field(vec![10.0, 12.0, 14.0, 16.0], 2, 2);
        let pred = field(vec![11.0, 13.0, 15.0, 17.0], 2, 2);
        let mask = ObservationMask::from_cells(2, 2, vec![false, true, false, false], 0.25, 0).unwrap();
        let r = evaluate(&pred, &truth, &mask).unwrap();
        assert!((r.rmse() - 1.0).abs() < 1e-15 && (r.mae() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_cell_holdout() {
        let truth = field(vec![5.0, 5.0, 5.0], 1, 3);
        let pred = field(vec![5.0, 7.0, 100.0], 1, 3);
        let mask = ObservationMask::from_cells(1, 3, vec![false, false, true], 1.0 / 3.0, 0).unwrap();
        let r = evaluate(&pred, &truth, &mask).unwrap();
        assert_eq!(r.mae(), 1.0);
        assert!((r.rmse() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.test.mape, Some(20.0));
    }

    #[test]
    fn all_observed_is_an_error() {
        let truth = field(vec![1.0; 4], 2, 2);
        assert!(evaluate(&truth, &truth, &ObservationMask::full(2, 2)).is_err());
    }

    #[test]
    fn mape_skips_near_zero_truth() {
        let truth = field(vec![0.05, 10.0], 1, 2);
        let pred = field(vec![1.0, 11.0], 1, 2);
        let m = metrics_over(&pred, &truth, &[0, 1]).unwrap();
        assert_eq!(m.mape, Some(10.0));
        let m = metrics_over(&pred, &truth, &[0]).unwrap();
        assert_eq!(m.mape, None);
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let truth = field(vec![10.0, 12.0, 14.0, 16.0], 2, 2);
        let pred = field(vec![11.0, 12.0, 14.0, 15.0], 2, 2);
        let mask = ObservationMask::from_cells(2, 2, vec![true, false, false, false], 0.25, 3).unwrap();
        let mut r = evaluate(&pred, &truth, &mask).unwrap();
        r.config.insert("mode".into(), "pi-deeponet".into());
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let bad = r.to_json().replace(REPORT_SCHEMA, "other/9");
        assert!(EvalReport::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae_and_is_symmetric(
            vals in prop::collection::vec((0.0f64..30.0, 0.0f64..30.0), 2..50),
            first_observed in any::<bool>(),
        ) {
            let n = vals.len();
            let (a, b): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
            let fa = field(a, 1, n);
            let fb = field(b, 1, n);
            let mut cells = vec![false; n];
            cells[0] = first_observed;
            let mask = ObservationMask::from_cells(1, n, cells, 0.5, 0).unwrap();
            let ab = evaluate(&fa, &fb, &mask).unwrap();
            let ba = evaluate(&fb, &fa, &mask).unwrap();
            prop_assert!(ab.rmse() + 1e-12 >= ab.mae());
            prop_assert_eq!(ab.mae(), ba.mae());
        }
    }
}
