use std::fmt::Write as _;
use std::time::Instant;

use super::config::RunConfig;
use crate::dataio::{evaluate, make_mask, EvalReport, GridField, ObservationMask};
use crate::error::{Error, Result};
use crate::funcgen::{generate, Generator};
use crate::operator::{
    build_training_set, sample_configuration_points, BaselineModel, Mode, Model, OperatorModel, TrainingSet,
};
use crate::physics::{StopReason, Trainer};

/// Mask, input functions and training set a configuration implies for a
/// truth field.
pub fn prepare(cfg: &RunConfig, truth: &GridField) -> Result<(ObservationMask, TrainingSet)> {
    cfg.validate()?;
    let (m, t) = truth.values.shape();
    let mask = make_mask(m, t, cfg.rate, cfg.mask_seed)?;
    let functions = generate(cfg.generator, m, t, cfg.functions, cfg.seed, cfg.length_scale, cfg.degree)?;
    let points = sample_configuration_points(cfg.config_points, cfg.seed)?;
    let set = build_training_set(truth, &mask, &functions, &points)?;
    Ok((mask, set))
}

/// Freshly initialized trainer for a configuration.
pub fn new_trainer(cfg: &RunConfig, set: &TrainingSet) -> Result<Trainer> {
    let mode = cfg.effective_mode();
    let model = match mode {
        Mode::MlpBaseline => Model::Baseline(BaselineModel::new(set.norm, cfg.hidden, cfg.hidden_layers, cfg.seed)?),
        Mode::DeepOnet | Mode::PiDeepOnet => {
            let points = sample_configuration_points(cfg.config_points, cfg.seed)?;
            Model::Operator(OperatorModel::new(set, points, cfg.hidden, cfg.hidden_layers, cfg.latent, cfg.seed)?)
        }
    };
    Trainer::new(model, mode, cfg.adam)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub trainer: Trainer,
    pub stop: StopReason,
    pub prediction: GridField,
    pub report: EvalReport,
    pub mask: ObservationMask,
}

/// Trains on the observed cells of `truth` and scores the held-out cells.
pub fn run_experiment(cfg: &RunConfig, truth: &GridField) -> Result<Experiment> {
    let start = Instant::now();
    let (mask, set) = prepare(cfg, truth)?;
    let mut trainer = new_trainer(cfg, &set)?;
    let stop = trainer.run(&set, &cfg.train_config(), cfg.epochs)?;
    let prediction = trainer.model.predict_field()?;
    let mut report = evaluate(&prediction, truth, &mask)?;
    report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    report.config = cfg.to_map();
    report.config.insert("mode".into(), trainer.mode.to_string());
    Ok(Experiment {
        trainer,
        stop,
        prediction,
        report,
        mask,
    })
}

/// Held-out RMSE of predicting every cell with the mean of the observed cells.
pub fn constant_mean_rmse(truth: &GridField, mask: &ObservationMask) -> Result<f64> {
    let observed = mask.observed_indices();
    if observed.is_empty() {
        return Err(Error::InvalidArgument("mask observes no cells".into()));
    }
    let v = truth.values.as_slice();
    let mean = observed.iter().map(|&k| v[k]).sum::<f64>() / observed.len() as f64;
    let pred = truth.with_values(crate::math::Matrix::filled(truth.m(), truth.t(), mean))?;
    Ok(evaluate(&pred, truth, mask)?.test.rmse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    ConfigPoints,
    Functions,
    Rate,
    LambdaP,
    Generator,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::ConfigPoints => "config_points",
            SweepParam::Functions => "functions",
            SweepParam::Rate => "rate",
            SweepParam::LambdaP => "lambda_p",
            SweepParam::Generator => "generator",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: Vec<String> = match self {
            SweepParam::ConfigPoints => [5, 10, 20, 30, 40, 50, 100, 200].iter().map(|v| v.to_string()).collect(),
            SweepParam::Functions => (1..=10).map(|k| (10 * k).to_string()).collect(),
            SweepParam::Rate => ["0.05", "0.1", "0.2"].map(String::from).to_vec(),
            SweepParam::LambdaP => ["0", "0.01", "0.1", "1"].map(String::from).to_vec(),
            SweepParam::Generator => [Generator::Grf, Generator::Chebyshev].iter().map(|g| g.to_string()).collect(),
        };
        v
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "config_points" => Ok(SweepParam::ConfigPoints),
            "n" | "functions" => Ok(SweepParam::Functions),
            "rate" => Ok(SweepParam::Rate),
            "lambda_p" => Ok(SweepParam::LambdaP),
            "generator" => Ok(SweepParam::Generator),
            other => Err(Error::Config(format!(
                "cannot sweep '{other}' (expected m, N, rate, lambda_p or generator)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<String>,
    pub reps: usize,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Option<Vec<String>>, reps: usize, base: RunConfig) -> Result<Self> {
        let values = values.unwrap_or_else(|| param.default_values());
        if values.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if reps == 0 {
            return Err(Error::Config("sweep repetitions must be >= 1".into()));
        }
        // Validate every value up front.
        for v in &values {
            let mut c = base.clone();
            c.set(param.key(), v)?;
            c.validate()?;
        }
        Ok(Self {
            param,
            values,
            reps,
            base,
        })
    }

    /// Configuration of one sweep cell; repetition `r` offsets both seeds.
    pub fn cell_config(&self, value_index: usize, rep: usize) -> Result<RunConfig> {
        let mut c = self.base.clone();
        c.set(self.param.key(), &self.values[value_index])?;
        c.seed = self.base.seed + rep as u64;
        c.mask_seed = self.base.mask_seed + rep as u64;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub rep: usize,
    pub seed: u64,
    pub report: EvalReport,
}

pub const SWEEP_HEADER: &str =
    "param,value,rep,seed,train_mse,train_rmse,train_mae,train_mape,test_mse,test_rmse,test_mae,test_mape,runtime_s";

/// Runs every (value, repetition) cell in order.
pub fn run_sweep(spec: &SweepSpec, truth: &GridField, mut progress: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(spec.values.len() * spec.reps);
    for (vi, value) in spec.values.iter().enumerate() {
        for rep in 0..spec.reps {
            let cfg = spec.cell_config(vi, rep)?;
            let exp = run_experiment(&cfg, truth)?;
            let row = SweepRow {
                param: spec.param.key().to_string(),
                value: value.clone(),
                rep,
                seed: cfg.seed,
                report: exp.report,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let test = &r.report.test;
        let (trm, trr, tra, trp) = match &r.report.train {
            Some(t) => (format!("{:.6}", t.mse), format!("{:.6}", t.rmse), format!("{:.6}", t.mae), opt(t.mape)),
            None => Default::default(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{trm},{trr},{tra},{trp},{:.6},{:.6},{:.6},{},{:.3}",
            r.param,
            r.value,
            r.rep,
            r.seed,
            test.mse,
            test.rmse,
            test.mae,
            opt(test.mape),
            r.report.runtime_seconds.unwrap_or(0.0)
        );
    }
    s
}

/// Median test RMSE per sweep value, in value order.
pub fn median_test_rmse(rows: &[SweepRow], values: &[String]) -> Vec<(String, f64)> {
    values
        .iter()
        .map(|v| {
            let mut r: Vec<f64> = rows.iter().filter(|row| &row.value == v).map(|row| row.report.test.rmse).collect();
            (v.clone(), median(&mut r))
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One-line description of how median test RMSE moves across the sweep.
pub fn trend_summary(medians: &[(String, f64)]) -> String {
    let steps: Vec<f64> = medians.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let down = steps.iter().filter(|d| **d < 0.0).count();
    let up = steps.iter().filter(|d| **d > 0.0).count();
    let trend = match (down, up) {
        (_, 0) if down > 0 => "decreasing",
        (0, _) if up > 0 => "increasing",
        _ if down > up => "mostly decreasing",
        _ if up > down => "mostly increasing",
        _ => "flat or mixed",
    };
    let path: Vec<String> = medians.iter().map(|(v, r)| format!("{v}:{r:.4}")).collect();
    format!("median test RMSE {trend} ({} falls, {} rises): {}", down, up, path.join(" "))
}
