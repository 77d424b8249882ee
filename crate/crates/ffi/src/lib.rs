//! C ABI over `tse-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`TseStatus`]; on failure the message is kept per thread and can be read
//! with [`tse_last_error`]. Out-pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tse_core::dataio::{evaluate, load_grid_csv, make_mask, save_grid_csv, GridField};
use tse_core::math::Matrix;
use tse_core::operator::{load_checkpoint, Model};
use tse_core::oracle::LwrScenario;
use tse_core::physics::calibrate_greenshields;
use tse_core::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TseStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

/// A speed or density grid: `m` cells by `t` time steps, row-major by cell.
pub struct TseGrid(GridField);

impl TseGrid {
    pub fn field(&self) -> &GridField {
        &self.0
    }
}

/// A trained model loaded from a checkpoint.
pub struct TseModel(Model);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TseMetrics {
    pub test_cells: usize,
    pub test_mse: f64,
    pub test_rmse: f64,
    pub test_mae: f64,
    /// Percent; NaN when undefined.
    pub test_mape: f64,
    /// Zero when nothing is observed.
    pub train_cells: usize,
    pub train_rmse: f64,
    pub train_mae: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TseCalibration {
    pub pairs: usize,
    pub v_f: f64,
    pub rho_m: f64,
    pub rmse: f64,
    pub r2: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> TseStatus {
    match err.kind() {
        ErrorKind::Io => TseStatus::Io,
        ErrorKind::Config => TseStatus::Config,
        ErrorKind::Data => TseStatus::Data,
        ErrorKind::Numerical => TseStatus::Numerical,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TseStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TseStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            TseStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length in bytes.
/// `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tse_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a grid from `m * t` row-major values with spacings `dx` (m) and
/// `dt` (s).
///
/// # Safety
/// `values` must point to `m * t` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_new(
    values: *const f64,
    m: usize,
    t: usize,
    dx: f64,
    dt: f64,
    out: *mut *mut TseGrid,
) -> TseStatus {
    guard(|| {
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let n = m
            .checked_mul(t)
            .ok_or_else(|| Error::InvalidArgument("grid size overflows".into()))?;
        let data = std::slice::from_raw_parts(values, n).to_vec();
        let grid = GridField::new(Matrix::from_vec(m, t, data)?, dx, dt)?;
        put(out, boxed(TseGrid(grid)), "out")
    })
}

/// Reads a grid CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_load(path: *const c_char, out: *mut *mut TseGrid) -> TseStatus {
    guard(|| {
        let grid = load_grid_csv(path_arg(path)?)?;
        put(out, boxed(TseGrid(grid)), "out")
    })
}

/// Writes a grid CSV file.
///
/// # Safety
/// `grid` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_save(grid: *const TseGrid, path: *const c_char) -> TseStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        save_grid_csv(&g.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live handle; `m` and `t` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_shape(grid: *const TseGrid, m: *mut usize, t: *mut usize) -> TseStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if m.is_null() || t.is_null() {
            return Err(Fail::Null("shape output"));
        }
        m.write(g.0.m());
        t.write(g.0.t());
        Ok(())
    })
}

/// Copies the row-major values into `buf`, which must hold exactly `m * t`
/// doubles.
///
/// # Safety
/// `grid` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_values(grid: *const TseGrid, buf: *mut f64, len: usize) -> TseStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let src = g.0.values.as_slice();
        if len != src.len() {
            return Err(Error::Dimension(format!("buffer holds {len} values, grid has {}", src.len())).into());
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        Ok(())
    })
}

/// Releases a grid. Null is ignored.
///
/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tse_grid_free(grid: *mut TseGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Simulates the built-in LWR scenario (21 cells by 600 steps). `density_out`
/// may be null.
///
/// # Safety
/// `speed_out` must be writable; `density_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn tse_simulate_default(speed_out: *mut *mut TseGrid, density_out: *mut *mut TseGrid) -> TseStatus {
    guard(|| {
        if speed_out.is_null() {
            return Err(Fail::Null("speed_out"));
        }
        let sim = LwrScenario::default().simulate()?;
        speed_out.write(boxed(TseGrid(sim.speed)));
        if !density_out.is_null() {
            density_out.write(boxed(TseGrid(sim.density)));
        }
        Ok(())
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_model_load(path: *const c_char, out: *mut *mut TseModel) -> TseStatus {
    guard(|| {
        let ck = load_checkpoint(path_arg(path)?)?;
        put(out, boxed(TseModel(ck.model)), "out")
    })
}

/// Predicted speed (m/s) at position `x` (m) and time `t` (s).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_model_speed_at(model: *const TseModel, x: f64, t: f64, out: *mut f64) -> TseStatus {
    guard(|| {
        let v = deref(model, "model")?.0.speed_at(x, t)?;
        put(out, v, "out")
    })
}

/// Predicted speed field on the model's training grid.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_model_predict(model: *const TseModel, out: *mut *mut TseGrid) -> TseStatus {
    guard(|| {
        let field = deref(model, "model")?.0.predict_field()?;
        put(out, boxed(TseGrid(field)), "out")
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tse_model_free(model: *mut TseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `pred` against `truth` under the observation mask drawn from
/// `rate` and `mask_seed`.
///
/// # Safety
/// `pred` and `truth` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_evaluate(
    pred: *const TseGrid,
    truth: *const TseGrid,
    rate: f64,
    mask_seed: u64,
    out: *mut TseMetrics,
) -> TseStatus {
    guard(|| {
        let p = &deref(pred, "pred")?.0;
        let t = &deref(truth, "truth")?.0;
        let mask = make_mask(t.m(), t.t(), rate, mask_seed)?;
        let r = evaluate(p, t, &mask)?;
        let mut m = TseMetrics {
            test_cells: r.test.cells,
            test_mse: r.test.mse,
            test_rmse: r.test.rmse,
            test_mae: r.test.mae,
            test_mape: r.test.mape.unwrap_or(f64::NAN),
            ..TseMetrics::default()
        };
        if let Some(tr) = r.train {
            m.train_cells = tr.cells;
            m.train_rmse = tr.rmse;
            m.train_mae = tr.mae;
        }
        put(out, m, "out")
    })
}

/// Least-squares Greenshields fit to `n` density (veh/m) and speed (m/s) pairs.
///
/// # Safety
/// `density` and `speed` must each point to `n` readable doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn tse_calibrate(
    density: *const f64,
    speed: *const f64,
    n: usize,
    out: *mut TseCalibration,
) -> TseStatus {
    guard(|| {
        if density.is_null() || speed.is_null() {
            return Err(Fail::Null("pairs"));
        }
        let d = std::slice::from_raw_parts(density, n);
        let s = std::slice::from_raw_parts(speed, n);
        let pairs: Vec<(f64, f64)> = d.iter().copied().zip(s.iter().copied()).collect();
        let fd = calibrate_greenshields(&pairs)?;
        put(
            out,
            TseCalibration {
                pairs: fd.pairs,
                v_f: fd.v_f,
                rho_m: fd.rho_m,
                rmse: fd.fit_rmse,
                r2: fd.fit_r2,
            },
            "out",
        )
    })
}
