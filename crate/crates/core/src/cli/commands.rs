use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{RunConfig, KEYS};
use super::experiment::{median_test_rmse, new_trainer, prepare, run_sweep, sweep_csv, trend_summary, SweepParam, SweepSpec};
use crate::dataio::{
    evaluate, extract_profile, load_grid_csv, make_mask, render_heatmap, save_grid_csv, GridField, HeatmapOptions,
    ProfileAxis,
};
use crate::error::{Error, ErrorKind, Result};
use crate::math::Matrix;
use crate::operator::{load_checkpoint, save_checkpoint};
use crate::oracle::{Boundary, InitialProfile, LwrScenario};
use crate::physics::{
    calibrate_greenshields, density_speed_pairs, save_history_csv, history_csv, StopReason, Trainer,
    US101_REFERENCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Traffic speed-field estimation with physics-informed operator networks.
///
/// Exit codes: 0 success, 1 I/O error, 2 configuration or usage error,
/// 3 data error (bad file contents, shape mismatch, failed calibration),
/// 4 numerical failure (non-finite loss, CFL violation).
#[derive(Debug, Parser)]
#[command(name = "tse", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an LWR scenario and write its speed (and density) grid.
    Generate(GenerateArgs),
    /// Fit the Greenshields speed-density line.
    Calibrate(CalibrateArgs),
    /// Train a model on the observed cells of a truth grid.
    Train(TrainArgs),
    /// Score a checkpoint on the held-out cells of a truth grid.
    Eval(EvalArgs),
    /// Train and score one model per parameter value and repetition.
    Sweep(SweepArgs),
    /// Draw a grid as a heatmap and export profiles.
    Render(RenderArgs),
    /// List configuration keys with their defaults.
    Keys,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Speed grid output.
    #[arg(long, default_value = "speed.csv")]
    pub out: PathBuf,
    /// Density grid output.
    #[arg(long)]
    pub density: Option<PathBuf>,
    #[arg(long, default_value_t = 21)]
    pub cells: usize,
    #[arg(long, default_value_t = 600)]
    pub steps: usize,
    /// Road length in meters.
    #[arg(long, default_value_t = 630.0)]
    pub length: f64,
    /// Output interval in seconds.
    #[arg(long, default_value_t = 1.5)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    #[arg(long, default_value_t = 19.965)]
    pub v_f: f64,
    #[arg(long, default_value_t = 0.12)]
    pub rho_m: f64,
    /// Ring road with a sinusoidal initial density instead of open boundaries.
    #[arg(long)]
    pub periodic: bool,
    /// Randomize the bottleneck and inflow profile from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV of `density,speed` rows (an optional header line is skipped).
    #[arg(long, conflicts_with_all = ["density", "speed"])]
    pub pairs: Option<PathBuf>,
    /// Density grid (veh/m), used with --speed.
    #[arg(long, requires = "speed")]
    pub density: Option<PathBuf>,
    /// Speed grid (m/s), used with --density.
    #[arg(long, requires = "density")]
    pub speed: Option<PathBuf>,
    /// Also print the US-101 reference calibration and the relative gaps.
    #[arg(long)]
    pub compare_reference: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rate: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.sets.iter().map(String::as_str))?;
        self.apply_flags(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_flags(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(t) = &self.truth {
            cfg.truth = Some(t.clone());
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse()?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.rate {
            cfg.rate = r;
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Continue a checkpointed run; its stored configuration is reused and
    /// only --epochs (the total epoch cap) may change.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "prediction")]
    pub checkpoint: Option<PathBuf>,
    /// Score a precomputed prediction grid instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub prediction: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Observation rate of the mask; defaults to the checkpoint's.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    /// Report JSON output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the predicted speed grid.
    #[arg(long)]
    pub save_prediction: Option<PathBuf>,
    /// Write truth, prediction and absolute-error heatmaps into this directory.
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
    /// Export truth and prediction over time at this cell.
    #[arg(long)]
    pub profile_cell: Option<usize>,
    /// Export truth and prediction over space at this time step.
    #[arg(long)]
    pub profile_step: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// m, N, rate, lambda_p or generator.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values; the parameter's default list when omitted.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Image path; `.png` for PNG, anything else for binary PPM.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long, requires = "max")]
    pub min: Option<f64>,
    #[arg(long, requires = "min")]
    pub max: Option<f64>,
    #[arg(long)]
    pub profile_cell: Option<usize>,
    #[arg(long)]
    pub profile_step: Option<usize>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Keys => {
            let defaults = RunConfig::default().to_map();
            for (k, desc) in KEYS {
                println!("{k:<16} {:<12} {desc}", defaults[*k]);
            }
            Ok(())
        }
    }
}

fn echo_config(cfg: &RunConfig) {
    println!("# effective configuration");
    print!("{}", cfg.to_file_string());
}

/// The scenario described by generate's flags.
pub fn scenario_from(a: &GenerateArgs) -> Result<LwrScenario> {
    let mut sc = match a.seed {
        Some(seed) => LwrScenario::randomized(seed),
        None => LwrScenario::default(),
    };
    sc.cells = a.cells;
    sc.steps = a.steps;
    sc.length = a.length;
    sc.output_dt = a.dt;
    sc.cfl = a.cfl;
    sc.v_f = a.v_f;
    if a.rho_m != sc.rho_m {
        sc = sc.with_jam_density(a.rho_m);
    }
    if a.periodic {
        sc.boundary = Boundary::Periodic;
        sc.initial = InitialProfile::Sinusoid {
            mean: 0.4 * sc.rho_m,
            amplitude: 0.3 * sc.rho_m,
            waves: 1.0,
        };
    }
    Ok(sc)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let sc = scenario_from(a)?;
    let sim = sc.simulate()?;
    save_grid_csv(&sim.speed, &a.out)?;
    println!(
        "wrote {} ({}x{}, dx={} m, dt={} s, {} sub-steps per column)",
        a.out.display(),
        sc.cells,
        sc.steps,
        sc.dx(),
        sc.output_dt,
        sim.substeps_per_output
    );
    if let Some(d) = &a.density {
        save_grid_csv(&sim.density, d)?;
        println!("wrote {}", d.display());
    }
    if matches!(sc.boundary, Boundary::Periodic) {
        let first = sim.mass[0];
        let last = *sim.mass.last().unwrap_or(&first);
        println!(
            "mass conservation: initial {first:.12e} veh, final {last:.12e} veh, max per-step relative drift {:.3e}",
            sim.max_step_mass_drift
        );
    }
    Ok(())
}

/// `density,speed` rows; a first line that does not parse is taken as a header.
pub fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let parsed = match (cols.next(), cols.next(), cols.next()) {
            (Some(r), Some(v), None) => r.parse::<f64>().ok().zip(v.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => pairs.push(p),
            None if n == 0 => continue,
            None => {
                return Err(Error::parse(n + 1, 1, format!("expected 'density,speed', got '{line}'")));
            }
        }
    }
    Ok(pairs)
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let pairs = match (&a.pairs, &a.density, &a.speed) {
        (Some(p), _, _) => parse_pairs(&fs::read_to_string(p).map_err(|e| Error::io(p.display(), e))?)?,
        (None, Some(d), Some(s)) => density_speed_pairs(&load_grid_csv(d)?, &load_grid_csv(s)?)?,
        _ => return Err(Error::Config("give --pairs, or --density together with --speed".into())),
    };
    let fd = calibrate_greenshields(&pairs)?;
    println!("pairs   {}", fd.pairs);
    println!("v_f     {:.6} m/s", fd.v_f);
    println!("rho_m   {:.6} veh/m", fd.rho_m);
    println!("rmse    {:.6} m/s", fd.fit_rmse);
    println!("r2      {:.6}", fd.fit_r2);
    if a.compare_reference {
        let (v, r, r2) = US101_REFERENCE;
        let gap = |got: f64, want: f64| (got - want) / want * 100.0;
        println!("reference (US-101): v_f {v} m/s, rmse {r}, r2 {r2}");
        for (name, got, want) in [("v_f", fd.v_f, v), ("rmse", fd.fit_rmse, r), ("r2", fd.fit_r2, r2)] {
            let g = gap(got, want);
            let verdict = if g.abs() <= 5.0 { "within 5%" } else { "outside 5%" };
            println!("  {name:<5} {g:+.2}% ({verdict})");
        }
    }
    Ok(())
}

fn require_truth(cfg: &RunConfig) -> Result<GridField> {
    let path = cfg
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("no truth grid (use --truth or truth = ...)".into()))?;
    load_grid_csv(path)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (cfg, mut trainer) = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let mut cfg = RunConfig::from_map(&ck.config)?;
            if let Some(e) = a.config.epochs {
                cfg.epochs = e;
            }
            if let Some(t) = &a.config.truth {
                cfg.truth = Some(t.clone());
            }
            let trainer = Trainer::from_checkpoint(ck, cfg.adam)?;
            (cfg, trainer)
        }
        None => {
            let mut cfg = a.config.resolve()?;
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = Some(c.clone());
            }
            if let Some(h) = &a.history {
                cfg.history = Some(h.clone());
            }
            let truth = require_truth(&cfg)?;
            let (_, set) = prepare(&cfg, &truth)?;
            let trainer = new_trainer(&cfg, &set)?;
            (cfg, trainer)
        }
    };
    let ckpt_path = a
        .checkpoint
        .clone()
        .or_else(|| cfg.checkpoint.clone())
        .unwrap_or_else(|| PathBuf::from("model.ckpt"));
    let history_path = a.history.clone().or_else(|| cfg.history.clone());
    echo_config(&cfg);
    println!("# mode {}", trainer.mode);

    let truth = require_truth(&cfg)?;
    let (_, set) = prepare(&cfg, &truth)?;
    let remaining = cfg.epochs.saturating_sub(trainer.epoch);
    let first_new = trainer.history.len();
    let outcome = trainer.run(&set, &cfg.train_config(), remaining);

    save_checkpoint(&trainer.to_checkpoint(cfg.to_map()), &ckpt_path)?;
    if let Some(h) = &history_path {
        write_history(&trainer, first_new, h, a.resume.is_some())?;
    }
    let stop = outcome.inspect_err(|_| {
        eprintln!("training aborted; last finite model saved to {}", ckpt_path.display());
    })?;
    if let Some(last) = trainer.history.last() {
        println!(
            "epoch {}: L_data {:.6e}, L_phys {:.6e}, L_total {:.6e}, |grad| {:.3e}",
            last.epoch, last.data, last.physics, last.total, last.grad_norm
        );
    }
    let why = match stop {
        StopReason::EpochCap => "epoch cap",
        StopReason::GradientTolerance => "gradient tolerance",
    };
    println!("stopped at epoch {} ({why}); checkpoint {}", trainer.epoch, ckpt_path.display());
    Ok(())
}

fn write_history(trainer: &Trainer, from: usize, path: &Path, append: bool) -> Result<()> {
    let rows = &trainer.history[from..];
    if append && path.exists() {
        let csv = history_csv(rows);
        let body = csv.split_once('\n').map(|(_, b)| b).unwrap_or("");
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path.display(), e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path.display(), e))
    } else {
        save_history_csv(rows, path)
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (prediction, mut cfg, stored) = match (&a.checkpoint, &a.prediction) {
        (Some(ck_path), _) => {
            let ck = load_checkpoint(ck_path)?;
            let cfg = RunConfig::from_map(&ck.config)?;
            (ck.model.predict_field()?, cfg, Some(ck.config))
        }
        (None, Some(p)) => (load_grid_csv(p)?, RunConfig::default(), None),
        (None, None) => return Err(Error::Config("give --checkpoint or --prediction".into())),
    };
    if let Some(t) = &a.truth {
        cfg.truth = Some(t.clone());
    }
    if let Some(r) = a.rate {
        cfg.rate = r;
    }
    if let Some(s) = a.mask_seed {
        cfg.mask_seed = s;
    }
    let truth = require_truth(&cfg)?;
    if prediction.values.shape() != truth.values.shape() {
        return Err(Error::Dimension(format!(
            "prediction grid {:?} vs truth grid {:?}",
            prediction.values.shape(),
            truth.values.shape()
        )));
    }
    let mask = make_mask(truth.m(), truth.t(), cfg.rate, cfg.mask_seed)?;
    let mut report = evaluate(&prediction, &truth, &mask)?;
    report.config = stored.unwrap_or_else(|| cfg.to_map());
    report.config.insert("rate".into(), format!("{:?}", cfg.rate));
    report.config.insert("mask_seed".into(), cfg.mask_seed.to_string());
    print!("{}", report.to_text());
    if let Some(p) = a.report.as_ref().or(cfg.report.as_ref()) {
        report.save_json(p)?;
        println!("wrote {}", p.display());
    }
    if let Some(p) = &a.save_prediction {
        save_grid_csv(&prediction, p)?;
    }
    if let Some(dir) = &a.heatmaps {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        let lo = truth.values.min().min(prediction.values.min());
        let hi = truth.values.max().max(prediction.values.max());
        let opts = HeatmapOptions {
            bounds: Some((lo, hi)),
            scale: 2,
        };
        render_heatmap(&truth, dir.join("truth.png"), &opts)?;
        render_heatmap(&prediction, dir.join("prediction.png"), &opts)?;
        let err = Matrix::from_fn(truth.m(), truth.t(), |i, j| (prediction.values.get(i, j) - truth.values.get(i, j)).abs());
        render_heatmap(&truth.with_values(err)?, dir.join("abs_error.png"), &HeatmapOptions { bounds: None, scale: 2 })?;
        println!("wrote heatmaps to {}", dir.display());
    }
    let out_dir = a
        .heatmaps
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    for (axis, index, tag) in [
        (ProfileAxis::FixedLocation, a.profile_cell, "cell"),
        (ProfileAxis::FixedTime, a.profile_step, "step"),
    ] {
        if let Some(i) = index {
            for (field, name) in [(&truth, "truth"), (&prediction, "prediction")] {
                let path = out_dir.join(format!("profile_{tag}{i}_{name}.csv"));
                extract_profile(field, axis, i)?.save_csv(&path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let base = a.config.resolve()?;
    let truth = require_truth(&base)?;
    let param: SweepParam = a.param.parse()?;
    let spec = SweepSpec::new(param, a.values.clone(), a.reps, base)?;
    echo_config(&spec.base);
    println!("# sweep {} over [{}], {} repetition(s)", param.key(), spec.values.join(", "), spec.reps);
    let rows = run_sweep(&spec, &truth, |row| {
        println!(
            "{}={} rep {}: test RMSE {:.4}, MAE {:.4}",
            row.param, row.value, row.rep, row.report.test.rmse, row.report.test.mae
        );
    })?;
    fs::write(&a.out, sweep_csv(&rows)).map_err(|e| Error::io(a.out.display(), e))?;
    println!("{}", trend_summary(&median_test_rmse(&rows, &spec.values)));
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> Result<()> {
    let grid = load_grid_csv(&a.grid)?;
    let opts = HeatmapOptions {
        bounds: a.min.zip(a.max),
        scale: a.scale,
    };
    let raster = render_heatmap(&grid, &a.out, &opts)?;
    println!(
        "wrote {} ({}x{} px, range {} .. {})",
        a.out.display(),
        raster.width,
        raster.height,
        raster.bounds.0,
        raster.bounds.1
    );
    let stem = a.out.with_extension("");
    for (axis, index, tag) in [
        (ProfileAxis::FixedLocation, a.profile_cell, "cell"),
        (ProfileAxis::FixedTime, a.profile_step, "step"),
    ] {
        if let Some(i) = index {
            let path = PathBuf::from(format!("{}_{tag}{i}.csv", stem.display()));
            extract_profile(&grid, axis, i)?.save_csv(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_parsing() {
        let p = parse_pairs("density,speed\n0.01,18\n\n0.05, 12.5\n").unwrap();
        assert_eq!(p, vec![(0.01, 18.0), (0.05, 12.5)]);
        let e = parse_pairs("0.01,18\n0.02;17\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert_eq!(exit_code(&e), EXIT_DATA);
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run(["tse", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["tse", "train", "--set", "nonsense=1"]), EXIT_CONFIG);
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), EXIT_DATA);
        let io = Error::io("f", std::io::Error::other("boom"));
        assert_eq!(exit_code(&io), EXIT_IO);
    }
}
