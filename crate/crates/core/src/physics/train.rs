use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{total_loss_and_grad, LossBreakdown, PhysicsConfig, PhysicsPoints};
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState};
use crate::operator::{Checkpoint, Mode, Model, TrainingSet};
use crate::rng::{substream, Stream};

pub const HISTORY_HEADER: &str = "epoch,L_data,L_phys,L_total,grad_norm";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub adam: AdamConfig,
    pub physics: PhysicsConfig,
    /// Free-flow speed used by the residual, m/s.
    pub v_f: f64,
    /// Functions per Adam step; all of them when `None`.
    pub batch_functions: Option<usize>,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Seed for physics points and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            adam: AdamConfig::default(),
            physics: PhysicsConfig::default(),
            v_f: 19.965,
            batch_functions: None,
            grad_tol: 1e-8,
            seed: 0,
        }
    }
}

/// Losses before the epoch's update; averaged over its minibatches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub data: f64,
    pub physics: f64,
    pub total: f64,
    /// Gradient norm of the epoch's last step.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochCap,
    GradientTolerance,
}

/// Model, mode and optimizer state of one run; survives checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: Model,
    pub mode: Mode,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(model: Model, mode: Mode, adam: AdamConfig) -> Result<Self> {
        match (&model, mode) {
            (Model::Baseline(_), Mode::MlpBaseline) | (Model::Operator(_), Mode::DeepOnet | Mode::PiDeepOnet) => {}
            _ => return Err(Error::InvalidArgument(format!("model does not match mode {mode}"))),
        }
        let n = model.num_params();
        Ok(Self {
            model,
            mode,
            adam: AdamState::new(n, adam),
            epoch: 0,
            history: Vec::new(),
        })
    }

    /// Resumes from a checkpoint; a missing optimizer state starts fresh.
    pub fn from_checkpoint(ck: Checkpoint, adam: AdamConfig) -> Result<Self> {
        let mut t = Self::new(ck.model, ck.kind, adam)?;
        if let Some(state) = ck.adam {
            t.adam = state;
        }
        t.epoch = ck.epoch;
        Ok(t)
    }

    pub fn to_checkpoint(&self, config: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            kind: self.mode,
            model: self.model.clone(),
            epoch: self.epoch,
            adam: Some(self.adam.clone()),
            config,
        }
    }

    /// Loss and gradient at the current parameters for one batch.
    fn evaluate(&self, set: &TrainingSet, cfg: &TrainConfig, points: Option<&PhysicsPoints>) -> Result<(LossBreakdown, Vec<f64>)> {
        match &self.model {
            Model::Operator(op) => total_loss_and_grad(op, set, &cfg.physics, cfg.v_f, points),
            Model::Baseline(bl) => {
                let (loss, grads) = bl.loss_and_grad(set)?;
                let mut flat = Vec::with_capacity(bl.num_params());
                grads.write_flat(&mut flat);
                Ok((
                    LossBreakdown {
                        data: loss,
                        physics: 0.0,
                        total: loss,
                    },
                    flat,
                ))
            }
        }
    }

    fn batches(&self, n: usize, cfg: &TrainConfig) -> Vec<Vec<usize>> {
        match cfg.batch_functions {
            Some(b) if b < n && self.mode != Mode::MlpBaseline => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut substream(cfg.seed, Stream::Shuffle, self.epoch));
                order.chunks(b).map(<[usize]>::to_vec).collect()
            }
            _ => vec![(0..n).collect()],
        }
    }

    /// Runs up to `epochs` more epochs. On error the model holds the last
    /// parameters that produced a finite loss and gradient.
    pub fn run(&mut self, set: &TrainingSet, cfg: &TrainConfig, epochs: u64) -> Result<StopReason> {
        cfg.physics.validate()?;
        if cfg.batch_functions == Some(0) {
            return Err(Error::Config("batch_functions must be >= 1".into()));
        }
        if let Model::Operator(op) = &self.model {
            if set.branch_inputs.cols() != op.points.len() {
                return Err(Error::Dimension(format!(
                    "training set has {} branch inputs per function, model expects {}",
                    set.branch_inputs.cols(),
                    op.points.len()
                )));
            }
        }
        let n = set.num_functions();
        let mut flat = Vec::with_capacity(self.model.num_params());
        for _ in 0..epochs {
            let points = (self.mode == Mode::PiDeepOnet).then(|| {
                let index = if cfg.physics.resample_each_epoch { self.epoch } else { 0 };
                PhysicsPoints::sample(cfg.physics.q, cfg.seed, index)
            });
            let batches = self.batches(n, cfg);
            let mut sums = (0.0, 0.0, 0.0);
            let mut grad_norm = 0.0;
            let mut converged = false;
            for idx in &batches {
                let subset;
                let batch_set = if idx.len() == n {
                    set
                } else {
                    subset = set.select_functions(idx)?;
                    &subset
                };
                let (loss, grad) = self.evaluate(batch_set, cfg, points.as_ref())?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at epoch {} is {} (data {}, physics {})",
                        self.epoch + 1,
                        loss.total,
                        loss.data,
                        loss.physics
                    )));
                }
                let w = idx.len() as f64 / n as f64;
                sums.0 += w * loss.data;
                sums.1 += w * loss.physics;
                sums.2 += w * loss.total;
                grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if grad_norm < cfg.grad_tol && batches.len() == 1 {
                    converged = true;
                    break;
                }
                flat.clear();
                self.model.write_flat(&mut flat);
                self.adam.step(&mut flat, &grad)?;
                self.model.read_flat(&flat)?;
            }
            self.history.push(EpochRecord {
                epoch: self.epoch + 1,
                data: sums.0,
                physics: sums.1,
                total: sums.2,
                grad_norm,
            });
            if converged {
                return Ok(StopReason::GradientTolerance);
            }
            self.epoch += 1;
        }
        Ok(StopReason::EpochCap)
    }
}

pub fn history_csv(records: &[EpochRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in records {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", r.epoch, r.data, r.physics, r.total, r.grad_norm);
    }
    s
}

pub fn save_history_csv(records: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, history_csv(records)).map_err(|e| Error::io(path.display(), e))
}
