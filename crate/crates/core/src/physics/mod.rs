//! Greenshields calibration, the LWR speed-form residual and the combined
//! training objective.
//!
//! With the Greenshields relation `v = v_f (1 - rho / rho_m)` the LWR
//! conservation law becomes a closed equation in speed,
//! `v_t + (2 v - v_f) v_x = 0`, which no longer involves `rho_m`.
//!
//! Residuals are evaluated in physical units. The network works in
//! normalized coordinates `(xi, tau)` in `[0, 1]^2` and normalized speed, so
//! derivatives pick up `sigma / L_x` and `sigma / L_t` from the chain rule.

mod train;

pub use train::{history_csv, save_history_csv, EpochRecord, StopReason, TrainConfig, Trainer, HISTORY_HEADER};

use rand::Rng as _;

use crate::dataio::GridField;
use crate::error::{Error, Result};
use crate::math::matrix::gemm;
use crate::math::Matrix;
use crate::operator::{
    data_backward, forward_data, Normalization, OperatorGrads, OperatorModel, TrainingSet,
};
use crate::rng::{substream, Stream};

/// Calibration reported for the gridded NGSIM US-101 data: `(v_f, rmse, r2)`.
pub const US101_REFERENCE: (f64, f64, f64) = (19.965, 4.154, 0.721);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalDiagram {
    /// Free-flow speed, m/s.
    pub v_f: f64,
    /// Jam density, veh/m.
    pub rho_m: f64,
    pub fit_rmse: f64,
    pub fit_r2: f64,
    pub pairs: usize,
}

impl FundamentalDiagram {
    pub fn speed(&self, rho: f64) -> f64 {
        self.v_f * (1.0 - rho / self.rho_m)
    }
}

/// Least-squares line `v = a + b rho` through `(rho, v)` pairs;
/// `v_f = a`, `rho_m = -a / b`.
pub fn calibrate_greenshields(pairs: &[(f64, f64)]) -> Result<FundamentalDiagram> {
    if pairs.len() < 3 {
        return Err(Error::Calibration(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if let Some(k) = pairs.iter().position(|(r, v)| !r.is_finite() || !v.is_finite()) {
        return Err(Error::NonFinite(format!("pair {k} is {:?}", pairs[k])));
    }
    let n = pairs.len() as f64;
    let mean_r = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(r, v) in pairs {
        let (dr, dv) = (r - mean_r, v - mean_v);
        sxx += dr * dr;
        sxy += dr * dv;
        syy += dv * dv;
    }
    if !(sxx > 1e-12 * mean_r.abs().max(1e-12).powi(2) * n) {
        return Err(Error::Calibration("densities have no spread".into()));
    }
    let b = sxy / sxx;
    if !(b < 0.0) {
        return Err(Error::Calibration(format!(
            "speed does not decrease with density (slope {b})"
        )));
    }
    let a = mean_v - b * mean_r;
    let ss_res: f64 = pairs.iter().map(|&(r, v)| (v - a - b * r).powi(2)).sum();
    Ok(FundamentalDiagram {
        v_f: a,
        rho_m: -a / b,
        fit_rmse: (ss_res / n).sqrt(),
        fit_r2: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
        pairs: pairs.len(),
    })
}

/// Cell-by-cell `(rho, v)` pairs from matching density and speed grids.
pub fn density_speed_pairs(density: &GridField, speed: &GridField) -> Result<Vec<(f64, f64)>> {
    if density.values.shape() != speed.values.shape() {
        return Err(Error::Dimension(format!(
            "density {:?} vs speed {:?}",
            density.values.shape(),
            speed.values.shape()
        )));
    }
    Ok(density
        .values
        .as_slice()
        .iter()
        .copied()
        .zip(speed.values.as_slice().iter().copied())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConfig {
    /// Residual points per loss evaluation.
    pub q: usize,
    pub lambda_o: f64,
    pub lambda_p: f64,
    /// Finite-difference step in normalized coordinates.
    pub fd_step: f64,
    pub resample_each_epoch: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            q: 128,
            lambda_o: 1.0,
            lambda_p: 0.1,
            fd_step: 1e-3,
            resample_each_epoch: true,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("physics point count Q must be >= 1".into()));
        }
        if !(self.lambda_o >= 0.0 && self.lambda_p >= 0.0) || !self.lambda_o.is_finite() || !self.lambda_p.is_finite() {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0, got {} and {}",
                self.lambda_o, self.lambda_p
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return Err(Error::Config(format!("fd step must be in (0, 0.1), got {}", self.fd_step)));
        }
        Ok(())
    }
}

/// Central-difference stencil of one point, one-sided where `+-h` leaves the
/// unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub center: [f64; 2],
    pub x_plus: [f64; 2],
    pub x_minus: [f64; 2],
    pub t_plus: [f64; 2],
    pub t_minus: [f64; 2],
}

impl Stencil {
    pub fn new(point: [f64; 2], h: f64) -> Self {
        let [x, t] = point;
        let up = |u: f64| (u + h).min(1.0);
        let down = |u: f64| (u - h).max(0.0);
        Self {
            center: point,
            x_plus: [up(x), t],
            x_minus: [down(x), t],
            t_plus: [x, up(t)],
            t_minus: [x, down(t)],
        }
    }

    pub fn x_span(&self) -> f64 {
        self.x_plus[0] - self.x_minus[0]
    }

    pub fn t_span(&self) -> f64 {
        self.t_plus[1] - self.t_minus[1]
    }
}

/// `v_t + (2 v - v_f) v_x` in physical units for a normalized-speed
/// evaluator on normalized coordinates.
pub fn lwr_residual<F>(eval: F, norm: &Normalization, point: [f64; 2], v_f: f64, h: f64) -> Result<f64>
where
    F: Fn([f64; 2]) -> Result<f64>,
{
    if !(h > 0.0 && h < 0.1) {
        return Err(Error::InvalidArgument(format!("fd step must be in (0, 0.1), got {h}")));
    }
    if !point.iter().all(|u| (0.0..=1.0).contains(u)) {
        return Err(Error::Domain(format!("residual point {point:?} outside the unit square")));
    }
    let s = Stencil::new(point, h);
    let v = eval(s.center)?;
    let dx = (eval(s.x_plus)? - eval(s.x_minus)?) / s.x_span();
    let dt = (eval(s.t_plus)? - eval(s.t_minus)?) / s.t_span();
    let r = residual_from_normalized(norm, v_f, v, dx, dt);
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("residual at {point:?} (speed {v}, d/dx {dx}, d/dt {dt})")));
    }
    Ok(r)
}

#[inline]
fn residual_from_normalized(norm: &Normalization, v_f: f64, v: f64, dx: f64, dt: f64) -> f64 {
    let sigma = norm.speed_std;
    let v_phys = norm.to_physical(v);
    sigma / norm.t_extent() * dt + (2.0 * v_phys - v_f) * sigma / norm.x_extent() * dx
}

/// Residual of the operator network for one input function.
pub fn model_residual(model: &OperatorModel, branch_input: &[f64], point: [f64; 2], v_f: f64, h: f64) -> Result<f64> {
    let latent = model.branch_output(branch_input)?;
    lwr_residual(
        |q| Ok(crate::math::dot(&latent, &model.trunk.forward(&q)?)),
        &model.norm,
        point,
        v_f,
        h,
    )
}

/// Residual points for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsPoints {
    pub points: Vec<[f64; 2]>,
}

impl PhysicsPoints {
    /// `q` uniform points drawn from the substream of `index` (the epoch).
    pub fn sample(q: usize, seed: u64, index: u64) -> Self {
        let mut rng = substream(seed, Stream::Physics, index);
        Self {
            points: (0..q).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Mean of squared residuals.
pub fn mean_squared_residual(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument("no residuals".into()));
    }
    Ok(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64)
}

/// Physics loss over every input function and residual point.
pub fn physics_loss(
    model: &OperatorModel,
    branch_inputs: &Matrix,
    v_f: f64,
    points: &PhysicsPoints,
    h: f64,
) -> Result<f64> {
    let tape = model.branch.forward_batch(branch_inputs)?;
    let mut grads = OperatorGrads::zeros(model);
    Ok(physics_backward(model, tape.output(), v_f, points, h, 0.0, &mut grads)?.0)
}

/// Physics loss and `weight * dL/dB`; trunk gradients scaled by `weight`
/// are accumulated into `grads.trunk`.
fn physics_backward(
    model: &OperatorModel,
    b: &Matrix,
    v_f: f64,
    points: &PhysicsPoints,
    h: f64,
    weight: f64,
    grads: &mut OperatorGrads,
) -> Result<(f64, Matrix)> {
    let q = points.len();
    if q == 0 {
        return Err(Error::InvalidArgument("no physics points".into()));
    }
    if !(h > 0.0 && h < 0.1) {
        return Err(Error::InvalidArgument(format!("fd step must be in (0, 0.1), got {h}")));
    }
    let stencils: Vec<Stencil> = points.points.iter().map(|&p| Stencil::new(p, h)).collect();
    let mut input = Matrix::zeros(5 * q, 2);
    for (k, s) in stencils.iter().enumerate() {
        input.row_mut(k).copy_from_slice(&s.center);
        input.row_mut(q + k).copy_from_slice(&s.x_plus);
        input.row_mut(2 * q + k).copy_from_slice(&s.x_minus);
        input.row_mut(3 * q + k).copy_from_slice(&s.t_plus);
        input.row_mut(4 * q + k).copy_from_slice(&s.t_minus);
    }
    let tape = model.trunk.forward_batch(&input)?;
    let t = tape.output();
    let p = t.cols();
    let block = |start: usize| Matrix::from_fn(q, p, |k, c| t.get(start + k, c));
    let tc = block(0);
    let mut dxm = Matrix::zeros(q, p);
    let mut dtm = Matrix::zeros(q, p);
    for (k, s) in stencils.iter().enumerate() {
        let (sx, st) = (s.x_span(), s.t_span());
        for c in 0..p {
            dxm.set(k, c, (t.get(q + k, c) - t.get(2 * q + k, c)) / sx);
            dtm.set(k, c, (t.get(3 * q + k, c) - t.get(4 * q + k, c)) / st);
        }
    }

    let n = b.rows();
    let mut v = Matrix::zeros(n, q);
    let mut vx = Matrix::zeros(n, q);
    let mut vt = Matrix::zeros(n, q);
    gemm(1.0, b, false, &tc, true, 0.0, &mut v);
    gemm(1.0, b, false, &dxm, true, 0.0, &mut vx);
    gemm(1.0, b, false, &dtm, true, 0.0, &mut vt);

    let norm = &model.norm;
    let sigma = norm.speed_std;
    let (cx, ct) = (sigma / norm.x_extent(), sigma / norm.t_extent());
    let scale = 1.0 / (n * q) as f64;
    let mut loss = 0.0;
    // Reuse the three buffers for the cotangents of v, v_x and v_t.
    for i in 0..n {
        for k in 0..q {
            let (vn, dx, dt) = (v.get(i, k), vx.get(i, k), vt.get(i, k));
            let drive = 2.0 * norm.to_physical(vn) - v_f;
            let r = ct * dt + drive * cx * dx;
            if !r.is_finite() {
                return Err(Error::NonFinite(format!(
                    "physics residual for function {i} at {:?}",
                    points.points[k]
                )));
            }
            loss += r * r;
            let g = weight * 2.0 * scale * r;
            v.set(i, k, g * 2.0 * sigma * cx * dx);
            vx.set(i, k, g * drive * cx);
            vt.set(i, k, g * ct);
        }
    }

    let mut db = Matrix::zeros(n, p);
    gemm(1.0, &v, false, &tc, false, 0.0, &mut db);
    gemm(1.0, &vx, false, &dxm, false, 1.0, &mut db);
    gemm(1.0, &vt, false, &dtm, false, 1.0, &mut db);

    let mut d_c = Matrix::zeros(q, p);
    let mut d_x = Matrix::zeros(q, p);
    let mut d_t = Matrix::zeros(q, p);
    gemm(1.0, &v, true, b, false, 0.0, &mut d_c);
    gemm(1.0, &vx, true, b, false, 0.0, &mut d_x);
    gemm(1.0, &vt, true, b, false, 0.0, &mut d_t);
    let mut dtrunk = Matrix::zeros(5 * q, p);
    for (k, s) in stencils.iter().enumerate() {
        let (sx, st) = (s.x_span(), s.t_span());
        for c in 0..p {
            dtrunk.set(k, c, d_c.get(k, c));
            dtrunk.set(q + k, c, d_x.get(k, c) / sx);
            dtrunk.set(2 * q + k, c, -d_x.get(k, c) / sx);
            dtrunk.set(3 * q + k, c, d_t.get(k, c) / st);
            dtrunk.set(4 * q + k, c, -d_t.get(k, c) / st);
        }
    }
    model.trunk.backward_batch(&tape, &dtrunk, &mut grads.trunk, false)?;
    Ok((loss * scale, db))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub data: f64,
    pub physics: f64,
    pub total: f64,
}

/// `lambda_o * data + lambda_p * physics`.
pub fn combine_losses(data: f64, physics: f64, cfg: &PhysicsConfig) -> LossBreakdown {
    LossBreakdown {
        data,
        physics,
        total: cfg.lambda_o * data + cfg.lambda_p * physics,
    }
}

/// Total loss and its flat gradient (branch then trunk). Without physics
/// points only the data term is formed and `physics` is reported as zero.
pub fn total_loss_and_grad(
    model: &OperatorModel,
    set: &TrainingSet,
    cfg: &PhysicsConfig,
    v_f: f64,
    points: Option<&PhysicsPoints>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let cache = forward_data(model, set)?;
    let mut grads = OperatorGrads::zeros(model);
    let (data, mut db) = data_backward(model, &cache, &set.labels, cfg.lambda_o, &mut grads)?;
    let mut physics = 0.0;
    let mut phys_trunk = None;
    if let Some(points) = points {
        let mut pg = OperatorGrads::zeros(model);
        let (loss, dbp) = physics_backward(model, cache.branch.output(), v_f, points, cfg.fd_step, cfg.lambda_p, &mut pg)?;
        physics = loss;
        for (a, b) in db.as_mut_slice().iter_mut().zip(dbp.as_slice()) {
            *a += b;
        }
        phys_trunk = Some(pg.trunk);
    }
    model.branch.backward_batch(&cache.branch, &db, &mut grads.branch, false)?;
    let mut flat = grads.flat();
    if let Some(pt) = phys_trunk {
        let mut extra = Vec::with_capacity(model.trunk.num_params());
        pt.write_flat(&mut extra);
        let offset = model.branch.num_params();
        for (a, b) in flat[offset..].iter_mut().zip(&extra) {
            *a += b;
        }
    }
    let breakdown = if points.is_some() {
        combine_losses(data, physics, cfg)
    } else {
        LossBreakdown {
            data,
            physics: 0.0,
            total: cfg.lambda_o * data,
        }
    };
    Ok((breakdown, flat))
}

/// Total loss with a fixed set of physics points.
pub fn total_loss(
    model: &OperatorModel,
    set: &TrainingSet,
    cfg: &PhysicsConfig,
    v_f: f64,
    points: &PhysicsPoints,
) -> Result<LossBreakdown> {
    let data = crate::operator::operator_loss(model, set)?;
    let physics = physics_loss(model, &set.branch_inputs, v_f, points, cfg.fd_step)?;
    Ok(combine_losses(data, physics, cfg))
}
