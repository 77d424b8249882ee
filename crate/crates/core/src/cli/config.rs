//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are listed in
//! [`KEYS`]; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::funcgen::Generator;
use crate::math::AdamConfig;
use crate::operator::Mode;
use crate::physics::{PhysicsConfig, TrainConfig};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "deeponet | pi-deeponet | mlp-baseline"),
    ("hidden_layers", "GELU layers per network"),
    ("hidden", "width of every hidden layer"),
    ("latent", "branch/trunk output width p"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("adam_eps", "Adam stabilizer"),
    ("epochs", "epoch cap"),
    ("grad_tol", "stop when the gradient norm drops below this"),
    ("batch_functions", "input functions per Adam step, 0 = all"),
    ("config_points", "configuration points m"),
    ("functions", "input functions N"),
    ("generator", "grf | chebyshev"),
    ("length_scale", "GRF length scale"),
    ("degree", "Chebyshev degree per axis"),
    ("q", "physics residual points per step"),
    ("lambda_o", "weight of the data term"),
    ("lambda_p", "weight of the physics term"),
    ("fd_step", "finite-difference step in normalized coordinates"),
    ("resample", "draw new physics points every epoch (true/false)"),
    ("v_f", "free-flow speed in m/s"),
    ("rate", "fraction of observed cells"),
    ("seed", "seed for functions, points, initialization and training"),
    ("mask_seed", "seed for the observation mask"),
    ("truth", "ground-truth speed grid (CSV)"),
    ("checkpoint", "model checkpoint path"),
    ("history", "loss-history CSV path"),
    ("report", "evaluation report JSON path"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub hidden_layers: usize,
    pub hidden: usize,
    pub latent: usize,
    pub adam: AdamConfig,
    pub epochs: u64,
    pub grad_tol: f64,
    pub batch_functions: usize,
    pub config_points: usize,
    pub functions: usize,
    pub generator: Generator,
    pub length_scale: f64,
    pub degree: usize,
    pub physics: PhysicsConfig,
    pub v_f: f64,
    pub rate: f64,
    pub seed: u64,
    pub mask_seed: u64,
    pub truth: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::PiDeepOnet,
            hidden_layers: 3,
            hidden: 128,
            latent: 128,
            adam: AdamConfig::default(),
            epochs: 2000,
            grad_tol: 1e-8,
            batch_functions: 0,
            config_points: 100,
            functions: 10,
            generator: Generator::Grf,
            length_scale: 0.2,
            degree: crate::funcgen::ChebConfig::DEFAULT_DEGREE,
            physics: PhysicsConfig::default(),
            v_f: 19.965,
            rate: 0.1,
            seed: 0,
            mask_seed: 0,
            truth: None,
            checkpoint: None,
            history: None,
            report: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value '{value}' for '{key}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad value '{value}' for '{key}': expected true or false"))),
    }
}

fn path_opt(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "hidden_layers" => self.hidden_layers = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "latent" => self.latent = parse(key, v)?,
            "lr" => self.adam.learning_rate = parse(key, v)?,
            "beta1" => self.adam.beta1 = parse(key, v)?,
            "beta2" => self.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.adam.eps = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "grad_tol" => self.grad_tol = parse(key, v)?,
            "batch_functions" => self.batch_functions = parse(key, v)?,
            "config_points" | "m" => self.config_points = parse(key, v)?,
            "functions" | "n" => self.functions = parse(key, v)?,
            "generator" => self.generator = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "length_scale" => self.length_scale = parse(key, v)?,
            "degree" => self.degree = parse(key, v)?,
            "q" => self.physics.q = parse(key, v)?,
            "lambda_o" => self.physics.lambda_o = parse(key, v)?,
            "lambda_p" => self.physics.lambda_p = parse(key, v)?,
            "fd_step" => self.physics.fd_step = parse(key, v)?,
            "resample" => self.physics.resample_each_epoch = parse_bool(key, v)?,
            "v_f" => self.v_f = parse(key, v)?,
            "rate" => self.rate = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "mask_seed" => self.mask_seed = parse(key, v)?,
            "truth" => self.truth = path_opt(v),
            "checkpoint" => self.checkpoint = path_opt(v),
            "history" => self.history = path_opt(v),
            "report" => self.report = path_opt(v),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order.
    pub fn apply<'a>(&mut self, assignments: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for a in assignments {
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{a}'")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse_str(&text)
    }

    /// Rebuilds a configuration from an echo map (as stored in checkpoints).
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        let positive = [
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("config_points", self.config_points),
            ("functions", self.functions),
            ("degree", self.degree),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("'{k}' must be >= 1")));
            }
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!("'rate' must be in (0, 1], got {}", self.rate)));
        }
        if !(self.adam.learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || !(self.adam.eps > 0.0) {
            return Err(Error::Config("Adam needs lr > 0, beta in [0, 1), eps > 0".into()));
        }
        if !(self.v_f > 0.0) || !(self.length_scale > 0.0) || !(self.grad_tol >= 0.0) {
            return Err(Error::Config("v_f and length_scale must be > 0, grad_tol >= 0".into()));
        }
        Ok(())
    }

    /// Mode actually trained: a physics-informed run with zero physics weight
    /// is plain operator training.
    pub fn effective_mode(&self) -> Mode {
        if self.mode == Mode::PiDeepOnet && self.physics.lambda_p == 0.0 {
            Mode::DeepOnet
        } else {
            self.mode
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: self.adam,
            physics: self.physics,
            v_f: self.v_f,
            batch_functions: (self.batch_functions > 0).then_some(self.batch_functions),
            grad_tol: self.grad_tol,
            seed: self.seed,
        }
    }

    /// Every key with its effective value.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let entries: [(&str, String); 29] = [
            ("mode", self.mode.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("latent", self.latent.to_string()),
            ("lr", format!("{:?}", self.adam.learning_rate)),
            ("beta1", format!("{:?}", self.adam.beta1)),
            ("beta2", format!("{:?}", self.adam.beta2)),
            ("adam_eps", format!("{:?}", self.adam.eps)),
            ("epochs", self.epochs.to_string()),
            ("grad_tol", format!("{:?}", self.grad_tol)),
            ("batch_functions", self.batch_functions.to_string()),
            ("config_points", self.config_points.to_string()),
            ("functions", self.functions.to_string()),
            ("generator", self.generator.to_string()),
            ("length_scale", format!("{:?}", self.length_scale)),
            ("degree", self.degree.to_string()),
            ("q", self.physics.q.to_string()),
            ("lambda_o", format!("{:?}", self.physics.lambda_o)),
            ("lambda_p", format!("{:?}", self.physics.lambda_p)),
            ("fd_step", format!("{:?}", self.physics.fd_step)),
            ("resample", self.physics.resample_each_epoch.to_string()),
            ("v_f", format!("{:?}", self.v_f)),
            ("rate", format!("{:?}", self.rate)),
            ("seed", self.seed.to_string()),
            ("mask_seed", self.mask_seed.to_string()),
            ("truth", p(&self.truth)),
            ("checkpoint", p(&self.checkpoint)),
            ("history", p(&self.history)),
            ("report", p(&self.report)),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The configuration as a loadable file, keys in [`KEYS`] order.
    pub fn to_file_string(&self) -> String {
        let map = self.to_map();
        KEYS.iter().map(|(k, _)| format!("{k} = {}\n", map[*k])).collect()
    }
}
