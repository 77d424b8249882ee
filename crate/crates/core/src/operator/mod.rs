//! Branch/trunk operator network.
//!
//! The branch net encodes an input function through its values at a fixed
//! set of configuration points; the trunk net encodes a query coordinate.
//! The prediction is the plain dot product of the two latent vectors.
//!
//! Coordinates are normalized to `[0, 1]^2` (first to last cell center) and
//! speeds are z-scored with the mean and std of the observed cells.

mod baseline;
mod checkpoint;

pub use baseline::BaselineModel;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::dataio::{GridField, ObservationMask};
use crate::error::{Error, Result};
use crate::funcgen::InputFunction;
use crate::math::matrix::gemm;
use crate::math::{dot, Matrix, MlpGrads, MlpParams, MlpTape};
use crate::rng::{substream, Stream};

pub const DEFAULT_CONFIG_POINTS: usize = 100;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_HIDDEN_LAYERS: usize = 3;

/// Sample locations shared by every input function; fixed once a model exists.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationPoints {
    /// `(x, t)` in normalized coordinates.
    pub points: Vec<[f64; 2]>,
    pub seed: u64,
}

impl ConfigurationPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `m` i.i.d. uniform points on the unit square.
pub fn sample_configuration_points(m: usize, seed: u64) -> Result<ConfigurationPoints> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one configuration point".into()));
    }
    let mut rng = substream(seed, Stream::ConfigPoints, 0);
    let points = (0..m).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    Ok(ConfigurationPoints { points, seed })
}

/// Nearest cell of an `m x t` grid for a normalized coordinate pair.
pub fn nearest_cell(m: usize, t: usize, x: f64, tau: f64) -> (usize, usize) {
    let snap = |u: f64, n: usize| {
        if n <= 1 {
            0
        } else {
            ((u.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize).min(n - 1)
        }
    };
    (snap(x, m), snap(tau, t))
}

/// Values of `u` at the configuration points, nearest-cell.
pub fn sample_function_at(u: &Matrix, pts: &ConfigurationPoints) -> Vec<f64> {
    let (m, t) = u.shape();
    pts.points
        .iter()
        .map(|&[x, tau]| {
            let (i, j) = nearest_cell(m, t, x, tau);
            u.get(i, j)
        })
        .collect()
}

/// Grid geometry and speed scaling shared by training data and model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub m: usize,
    pub t: usize,
    pub dx: f64,
    pub dt: f64,
    pub x0: f64,
    pub t0: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
}

impl Normalization {
    /// Geometry of `field`, speed statistics over `cells` (row-major indices).
    pub fn from_field(field: &GridField, cells: &[usize]) -> Result<Self> {
        if field.m() < 2 || field.t() < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid must be at least 2x2 for training, got {}x{}",
                field.m(),
                field.t()
            )));
        }
        if cells.is_empty() {
            return Err(Error::InvalidArgument("no observed cells".into()));
        }
        let v = field.values.as_slice();
        let n = cells.len() as f64;
        let mean = cells.iter().map(|&k| v[k]).sum::<f64>() / n;
        let var = cells.iter().map(|&k| (v[k] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(Self {
            m: field.m(),
            t: field.t(),
            dx: field.dx,
            dt: field.dt,
            x0: field.x0,
            t0: field.t0,
            speed_mean: mean,
            speed_std: if std > 1e-12 { std } else { 1.0 },
        })
    }

    pub fn x_extent(&self) -> f64 {
        (self.m - 1) as f64 * self.dx
    }

    pub fn t_extent(&self) -> f64 {
        (self.t - 1) as f64 * self.dt
    }

    pub fn cell_coords(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 / (self.m - 1) as f64, j as f64 / (self.t - 1) as f64]
    }

    pub fn to_physical(&self, v_norm: f64) -> f64 {
        self.speed_mean + self.speed_std * v_norm
    }

    pub fn to_normalized(&self, v: f64) -> f64 {
        (v - self.speed_mean) / self.speed_std
    }

    /// Normalized coordinates of every cell, row-major, as a `(M*T) x 2` matrix.
    pub fn grid_points(&self) -> Matrix {
        let mut pts = Matrix::zeros(self.m * self.t, 2);
        for i in 0..self.m {
            for j in 0..self.t {
                pts.row_mut(i * self.t + j).copy_from_slice(&self.cell_coords(i, j));
            }
        }
        pts
    }

    /// Wraps normalized-speed values of a full grid into a physical field.
    pub fn to_field(&self, normalized: &[f64]) -> Result<GridField> {
        let values = Matrix::from_vec(self.m, self.t, normalized.iter().map(|&v| self.to_physical(v)).collect())?;
        let mut f = GridField::new(values, self.dx, self.dt)?;
        f.x0 = self.x0;
        f.t0 = self.t0;
        Ok(f)
    }
}

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    DeepOnet,
    PiDeepOnet,
    MlpBaseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DeepOnet => "deeponet",
            Mode::PiDeepOnet => "pi-deeponet",
            Mode::MlpBaseline => "mlp-baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deeponet" => Ok(Mode::DeepOnet),
            "pi-deeponet" | "pideeponet" | "pi_deeponet" => Ok(Mode::PiDeepOnet),
            "mlp-baseline" | "mlp" | "baseline" => Ok(Mode::MlpBaseline),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected deeponet, pi-deeponet or mlp-baseline)"
            ))),
        }
    }
}

/// Branch and trunk networks plus everything needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorModel {
    pub branch: MlpParams,
    pub trunk: MlpParams,
    pub points: ConfigurationPoints,
    pub norm: Normalization,
    /// Branch inputs of the training functions (`N x m`); field predictions
    /// average over them.
    pub reference_inputs: Matrix,
}

impl OperatorModel {
    /// Glorot-initialized networks with `hidden_layers` GELU layers of width
    /// `hidden` and latent width `latent`.
    pub fn new(
        set: &TrainingSet,
        points: ConfigurationPoints,
        hidden: usize,
        hidden_layers: usize,
        latent: usize,
        seed: u64,
    ) -> Result<Self> {
        if hidden == 0 || latent == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if set.branch_inputs.cols() != points.len() {
            return Err(Error::Dimension(format!(
                "training set sampled at {} points, model has {}",
                set.branch_inputs.cols(),
                points.len()
            )));
        }
        let dims = |input: usize| {
            let mut d = vec![input];
            d.extend(std::iter::repeat_n(hidden, hidden_layers));
            d.push(latent);
            d
        };
        let branch = MlpParams::glorot(&dims(points.len()), &mut substream(seed, Stream::Init, 0))?;
        let trunk = MlpParams::glorot(&dims(2), &mut substream(seed, Stream::Init, 1))?;
        Self::from_parts(branch, trunk, points, set.norm, set.branch_inputs.clone())
    }

    pub fn from_parts(
        branch: MlpParams,
        trunk: MlpParams,
        points: ConfigurationPoints,
        norm: Normalization,
        reference_inputs: Matrix,
    ) -> Result<Self> {
        if trunk.in_dim() != 2 {
            return Err(Error::Dimension(format!("trunk takes (x, t), has input dim {}", trunk.in_dim())));
        }
        if branch.out_dim() != trunk.out_dim() {
            return Err(Error::Dimension(format!(
                "branch latent {} != trunk latent {}",
                branch.out_dim(),
                trunk.out_dim()
            )));
        }
        if branch.in_dim() != points.len() || reference_inputs.cols() != points.len() {
            return Err(Error::Dimension(format!(
                "branch input {} / reference inputs {} / configuration points {}",
                branch.in_dim(),
                reference_inputs.cols(),
                points.len()
            )));
        }
        Ok(Self {
            branch,
            trunk,
            points,
            norm,
            reference_inputs,
        })
    }

    pub fn latent(&self) -> usize {
        self.trunk.out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.branch.num_params() + self.trunk.num_params()
    }

    /// Branch parameters then trunk parameters.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        self.branch.write_flat(out);
        self.trunk.write_flat(out);
    }

    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        let a = self.branch.read_flat(src)?;
        let b = self.trunk.read_flat(&src[a..])?;
        Ok(a + b)
    }

    pub fn branch_output(&self, branch_input: &[f64]) -> Result<Vec<f64>> {
        if branch_input.len() != self.points.len() {
            return Err(Error::Dimension(format!(
                "branch input has {} values, model has {} configuration points",
                branch_input.len(),
                self.points.len()
            )));
        }
        self.branch.forward(branch_input)
    }

    /// Normalized speed at a normalized query point.
    pub fn eval(&self, branch_input: &[f64], query: [f64; 2]) -> Result<f64> {
        let b = self.branch_output(branch_input)?;
        let t = self.trunk.forward(&query)?;
        Ok(dot(&b, &t))
    }

    /// Mean branch output over the reference inputs.
    pub fn mean_latent(&self) -> Result<Vec<f64>> {
        let out = self.branch.forward_batch(&self.reference_inputs)?;
        let b = out.output();
        let n = b.rows() as f64;
        Ok((0..b.cols()).map(|k| b.column(k).iter().sum::<f64>() / n).collect())
    }

    /// Normalized speeds at the given points for a latent vector.
    pub fn eval_points(&self, latent: &[f64], points: &Matrix) -> Result<Vec<f64>> {
        if latent.len() != self.latent() {
            return Err(Error::Dimension(format!("latent {} vs {}", latent.len(), self.latent())));
        }
        let t = self.trunk.forward_batch(points)?;
        Ok((0..points.rows()).map(|r| dot(latent, t.output().row(r))).collect())
    }

    /// Physical speed field on the training grid, averaged over the training
    /// functions.
    pub fn predict_field(&self) -> Result<GridField> {
        let latent = self.mean_latent()?;
        self.norm.to_field(&self.eval_points(&latent, &self.norm.grid_points())?)
    }

    /// Physical speed field for one specific input.
    pub fn predict_field_with(&self, branch_input: &[f64]) -> Result<GridField> {
        let latent = self.branch_output(branch_input)?;
        self.norm.to_field(&self.eval_points(&latent, &self.norm.grid_points())?)
    }
}

/// Either trained network family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Operator(OperatorModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn norm(&self) -> &Normalization {
        match self {
            Model::Operator(m) => &m.norm,
            Model::Baseline(m) => &m.norm,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Model::Operator(m) => m.num_params(),
            Model::Baseline(m) => m.num_params(),
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        match self {
            Model::Operator(m) => m.write_flat(out),
            Model::Baseline(m) => m.write_flat(out),
        }
    }

    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        match self {
            Model::Operator(m) => m.read_flat(src),
            Model::Baseline(m) => m.read_flat(src),
        }
    }

    /// Physical speed at position `x` (m) and time `t` (s), measured on the
    /// training grid's axes. Points off the grid extrapolate.
    pub fn speed_at(&self, x: f64, t: f64) -> Result<f64> {
        if !x.is_finite() || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("query ({x}, {t}) is not finite")));
        }
        let n = self.norm();
        let q = [(x - n.x0) / n.x_extent(), (t - n.t0) / n.t_extent()];
        let v = match self {
            Model::Operator(m) => {
                let latent = m.mean_latent()?;
                dot(&latent, &m.trunk.forward(&q)?)
            }
            Model::Baseline(m) => m.eval(q)?,
        };
        Ok(n.to_physical(v))
    }

    /// Physical speed field on the training grid.
    pub fn predict_field(&self) -> Result<GridField> {
        match self {
            Model::Operator(m) => m.predict_field(),
            Model::Baseline(m) => m.predict_field(),
        }
    }
}

/// Inputs and labels for one training run. Every function is paired with
/// the same labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// `N x m`, row `i` is function `i` at the configuration points.
    pub branch_inputs: Matrix,
    /// `P x 2` normalized coordinates of observed cells.
    pub points: Matrix,
    /// Normalized observed speeds, aligned with `points`.
    pub labels: Vec<f64>,
    /// Row-major grid index of each label.
    pub cells: Vec<usize>,
    pub norm: Normalization,
}

impl TrainingSet {
    pub fn num_functions(&self) -> usize {
        self.branch_inputs.rows()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Keeps only the listed functions.
    pub fn select_functions(&self, idx: &[usize]) -> Result<TrainingSet> {
        let m = self.branch_inputs.cols();
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            if i >= self.num_functions() {
                return Err(Error::InvalidArgument(format!("function {i} out of range")));
            }
            data.extend_from_slice(self.branch_inputs.row(i));
        }
        Ok(TrainingSet {
            branch_inputs: Matrix::from_vec(idx.len(), m, data)?,
            ..self.clone()
        })
    }
}

pub fn build_training_set(
    field: &GridField,
    mask: &ObservationMask,
    functions: &[InputFunction],
    points: &ConfigurationPoints,
) -> Result<TrainingSet> {
    if mask.shape() != field.values.shape() {
        return Err(Error::Dimension(format!(
            "mask {:?} vs field {:?}",
            mask.shape(),
            field.values.shape()
        )));
    }
    if functions.is_empty() {
        return Err(Error::InvalidArgument("need at least one input function".into()));
    }
    let cells = mask.observed_indices();
    if cells.is_empty() {
        return Err(Error::InvalidArgument("mask selects no cells".into()));
    }
    let norm = Normalization::from_field(field, &cells)?;
    let t = field.t();
    let mut pts = Matrix::zeros(cells.len(), 2);
    let labels = cells
        .iter()
        .enumerate()
        .map(|(r, &k)| {
            pts.row_mut(r).copy_from_slice(&norm.cell_coords(k / t, k % t));
            norm.to_normalized(field.values.as_slice()[k])
        })
        .collect();
    let m = points.len();
    let mut inputs = Matrix::zeros(functions.len(), m);
    for (i, f) in functions.iter().enumerate() {
        inputs.row_mut(i).copy_from_slice(&sample_function_at(&f.values, points));
    }
    Ok(TrainingSet {
        branch_inputs: inputs,
        points: pts,
        labels,
        cells,
        norm,
    })
}

/// Mean squared error over every (function, label) pair, in normalized units.
pub fn operator_loss(model: &OperatorModel, set: &TrainingSet) -> Result<f64> {
    let b = model.branch.forward_batch(&set.branch_inputs)?;
    let t = model.trunk.forward_batch(&set.points)?;
    Ok(data_term(b.output(), t.output(), &set.labels)?.0)
}

/// `(loss, dL/dS)` for `S = B T^T` against labels repeated for every row of `B`.
pub(crate) fn data_term(b: &Matrix, t: &Matrix, labels: &[f64]) -> Result<(f64, Matrix)> {
    let (n, p) = (b.rows(), t.rows());
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    if labels.len() != p || b.cols() != t.cols() {
        return Err(Error::Dimension(format!(
            "{} labels, trunk batch {:?}, branch batch {:?}",
            labels.len(),
            t.shape(),
            b.shape()
        )));
    }
    let mut s = Matrix::zeros(n, p);
    gemm(1.0, b, false, t, true, 0.0, &mut s);
    let scale = 1.0 / (n * p) as f64;
    let mut loss = 0.0;
    for i in 0..n {
        for (v, y) in s.row_mut(i).iter_mut().zip(labels) {
            let r = *v - y;
            loss += r * r;
            *v = 2.0 * scale * r;
        }
    }
    Ok((loss * scale, s))
}

/// Gradients for both networks, laid out like [`OperatorModel::write_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGrads {
    pub branch: MlpGrads,
    pub trunk: MlpGrads,
}

impl OperatorGrads {
    pub fn zeros(model: &OperatorModel) -> Self {
        Self {
            branch: model.branch.zero_grads(),
            trunk: model.trunk.zero_grads(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.branch.write_flat(&mut out);
        self.trunk.write_flat(&mut out);
        out
    }
}

/// Forward pass of both nets on a training set, kept for reuse by the
/// physics term.
pub(crate) struct ForwardCache {
    pub branch: MlpTape,
    pub trunk: MlpTape,
}

pub(crate) fn forward_data(model: &OperatorModel, set: &TrainingSet) -> Result<ForwardCache> {
    Ok(ForwardCache {
        branch: model.branch.forward_batch(&set.branch_inputs)?,
        trunk: model.trunk.forward_batch(&set.points)?,
    })
}

/// Data loss, `dL/dB` (scaled by `weight`), and trunk gradients accumulated
/// into `grads` (scaled by `weight`).
pub(crate) fn data_backward(
    model: &OperatorModel,
    cache: &ForwardCache,
    labels: &[f64],
    weight: f64,
    grads: &mut OperatorGrads,
) -> Result<(f64, Matrix)> {
    let b = cache.branch.output();
    let t = cache.trunk.output();
    let (loss, ds) = data_term(b, t, labels)?;
    let mut db = Matrix::zeros(b.rows(), b.cols());
    gemm(weight, &ds, false, t, false, 0.0, &mut db);
    let mut dt = Matrix::zeros(t.rows(), t.cols());
    gemm(weight, &ds, true, b, false, 0.0, &mut dt);
    model.trunk.backward_batch(&cache.trunk, &dt, &mut grads.trunk, false)?;
    Ok((loss, db))
}

/// Operator loss and its gradient.
pub fn operator_loss_and_grad(model: &OperatorModel, set: &TrainingSet) -> Result<(f64, OperatorGrads)> {
    let cache = forward_data(model, set)?;
    let mut grads = OperatorGrads::zeros(model);
    let (loss, db) = data_backward(model, &cache, &set.labels, 1.0, &mut grads)?;
    model.branch.backward_batch(&cache.branch, &db, &mut grads.branch, false)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcgen::{generate, Generator};
    use crate::math::{Activation, Dense};

    fn tiny_set(n: usize, rng_seed: u64) -> (TrainingSet, ConfigurationPoints) {
        let field = GridField::new(Matrix::from_fn(4, 5, |i, j| 10.0 + i as f64 - 0.5 * j as f64), 30.0, 1.5).unwrap();
        let funcs = generate(Generator::Chebyshev, 4, 5, n, rng_seed, 0.2, 3).unwrap();
        let pts = sample_configuration_points(3, rng_seed).unwrap();
        let mask = crate::dataio::make_mask(4, 5, 0.5, rng_seed).unwrap();
        (build_training_set(&field, &mask, &funcs, &pts).unwrap(), pts)
    }

    fn constant_net(input: usize, value: f64, out: usize) -> MlpParams {
        MlpParams::new(vec![Dense {
            weights: Matrix::zeros(out, input),
            bias: vec![value; out],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn configuration_points_are_reproducible() {
        let a = sample_configuration_points(100, 9).unwrap();
        assert_eq!(a, sample_configuration_points(100, 9).unwrap());
        assert!(a.points.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        let mx = a.points.iter().map(|p| p[0]).sum::<f64>() / 100.0;
        let mt = a.points.iter().map(|p| p[1]).sum::<f64>() / 100.0;
        assert!((mx - 0.5).abs() < 0.1 && (mt - 0.5).abs() < 0.1);
        assert_eq!(sample_configuration_points(1, 0).unwrap().len(), 1);
        assert!(sample_configuration_points(0, 0).is_err());
    }

    #[test]
    fn nearest_cell_sampling() {
        assert_eq!(nearest_cell(21, 1770, 0.0, 0.0), (0, 0));
        assert_eq!(nearest_cell(21, 1770, 1.0, 1.0), (20, 1769));
        // 0.5 * 20 = 10, 0.5 * 1769 = 884.5 rounds away from zero
        assert_eq!(nearest_cell(21, 1770, 0.5, 0.5), (10, 885));
        let u = Matrix::from_fn(3, 3, |i, j| (3 * i + j) as f64);
        let pts = ConfigurationPoints {
            points: vec![[0.0, 0.0], [1.0, 1.0], [0.4, 0.8]],
            seed: 0,
        };
        assert_eq!(sample_function_at(&u, &pts), vec![0.0, 8.0, 5.0]);
    }

    #[test]
    fn training_set_layout() {
        let field = GridField::new(Matrix::from_fn(21, 1770, |i, j| (i + j) as f64), 30.0, 1.5).unwrap();
        let mask = crate::dataio::make_mask(21, 1770, 0.1, 3).unwrap();
        let funcs = generate(Generator::Chebyshev, 21, 1770, 2, 1, 0.2, 2).unwrap();
        let pts = sample_configuration_points(10, 1).unwrap();
        let set = build_training_set(&field, &mask, &funcs, &pts).unwrap();
        assert_eq!(set.num_labels(), 3717);
        assert_eq!(set.branch_inputs.shape(), (2, 10));
        assert_eq!(set.branch_inputs.row(1), sample_function_at(&funcs[1].values, &pts).as_slice());
        let k = set.cells[7];
        let v = set.norm.to_physical(set.labels[7]);
        assert!((v - field.values.as_slice()[k]).abs() < 1e-12);

        let full = build_training_set(&field, &ObservationMask::full(21, 1770), &funcs, &pts).unwrap();
        assert_eq!(full.num_labels(), 21 * 1770);
        let empty = ObservationMask::from_cells(21, 1770, vec![false; 21 * 1770], 0.0, 0).unwrap();
        assert!(build_training_set(&field, &empty, &funcs, &pts).is_err());
    }

    #[test]
    fn zero_branch_gives_zero_output() {
        let (set, pts) = tiny_set(2, 4);
        let mut model = OperatorModel::new(&set, pts, 6, 2, 4, 1).unwrap();
        model.branch = MlpParams::zeros(&model.branch.dims()).unwrap();
        for q in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(model.eval(set.branch_inputs.row(0), q).unwrap(), 0.0);
        }
    }

    #[test]
    fn dot_product_fusion() {
        let (set, pts) = tiny_set(1, 4);
        let model = OperatorModel::from_parts(
            constant_net(3, 2.0, 1),
            constant_net(2, 3.0, 1),
            pts,
            set.norm,
            set.branch_inputs.clone(),
        )
        .unwrap();
        assert_eq!(model.eval(&[0.1, 0.2, 0.3], [0.5, 0.5]).unwrap(), 6.0);
        assert!(matches!(model.eval(&[0.1], [0.5, 0.5]), Err(Error::Dimension(_))));
    }

    #[test]
    fn eval_is_explicit_latent_sum() {
        let (set, pts) = tiny_set(2, 5);
        let model = OperatorModel::new(&set, pts, 5, 2, 3, 7).unwrap();
        let u = set.branch_inputs.row(1);
        let b = model.branch.forward(u).unwrap();
        let t = model.trunk.forward(&[0.25, 0.75]).unwrap();
        let mut expected = 0.0;
        for k in 0..3 {
            expected += b[k] * t[k];
        }
        assert!((model.eval(u, [0.25, 0.75]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn operator_loss_hand_sums() {
        let (mut set, pts) = tiny_set(1, 4);
        // N = 1, one label 1.0, constant prediction 3.0
        set.points = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        set.labels = vec![1.0];
        let model = OperatorModel::from_parts(
            constant_net(3, 1.5, 1),
            constant_net(2, 2.0, 1),
            pts.clone(),
            set.norm,
            set.branch_inputs.clone(),
        )
        .unwrap();
        assert_eq!(operator_loss(&model, &set).unwrap(), 4.0);

        // N = 2 with a branch that copies its first input, trunk that reads x
        let branch = MlpParams::new(vec![Dense {
            weights: Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let trunk = MlpParams::new(vec![Dense {
            weights: Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let inputs = Matrix::from_vec(2, 3, vec![2.0, 9.0, 9.0, -1.0, 9.0, 9.0]).unwrap();
        let model = OperatorModel::from_parts(branch, trunk, pts, set.norm, inputs.clone()).unwrap();
        set.branch_inputs = inputs;
        set.points = Matrix::from_vec(2, 2, vec![0.5, 0.0, 1.0, 0.0]).unwrap();
        set.labels = vec![1.0, 0.0];
        // predictions: f1 -> [1, 2], f2 -> [-0.5, -1]
        // squared errors: 0, 4, 2.25, 1 -> 7.25 / 4
        assert_eq!(operator_loss(&model, &set).unwrap(), 7.25 / 4.0);

        set.labels.clear();
        set.points = Matrix::zeros(0, 2);
        assert!(operator_loss(&model, &set).is_err());
    }

    #[test]
    fn perfect_model_has_zero_loss() {
        let (mut set, pts) = tiny_set(3, 4);
        let model = OperatorModel::from_parts(
            constant_net(3, 1.0, 1),
            constant_net(2, 0.7, 1),
            pts,
            set.norm,
            set.branch_inputs.clone(),
        )
        .unwrap();
        set.labels = vec![0.7; set.num_labels()];
        assert_eq!(operator_loss(&model, &set).unwrap(), 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let (set, pts) = tiny_set(2, 4);
        let model = OperatorModel::new(&set, pts, 4, 1, 3, 2).unwrap();
        let mut flat = Vec::new();
        model.write_flat(&mut flat);
        assert_eq!(flat.len(), model.num_params());
        let mut other = model.clone();
        other.branch = MlpParams::zeros(&model.branch.dims()).unwrap();
        other.trunk = MlpParams::zeros(&model.trunk.dims()).unwrap();
        assert_eq!(other.read_flat(&flat).unwrap(), flat.len());
        assert_eq!(other, model);
    }

    #[test]
    fn mode_names() {
        for m in [Mode::DeepOnet, Mode::PiDeepOnet, Mode::MlpBaseline] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("pinn".parse::<Mode>().is_err());
    }
}
