use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use tse_core::cli::experiment::{new_trainer, prepare};
use tse_core::cli::RunConfig;
use tse_ffi::*;

fn last_error() -> String {
    let n = unsafe { tse_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; n + 1];
    unsafe { tse_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(tse_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn grid_round_trip_through_handles() {
    let values: Vec<f64> = (0..12).map(|k| 0.1 + k as f64 / 7.0).collect();
    let mut g: *mut TseGrid = ptr::null_mut();
    assert_eq!(unsafe { tse_grid_new(values.as_ptr(), 3, 4, 30.0, 1.5, &mut g) }, TseStatus::Ok);
    let (mut m, mut t) = (0usize, 0usize);
    assert_eq!(unsafe { tse_grid_shape(g, &mut m, &mut t) }, TseStatus::Ok);
    assert_eq!((m, t), (3, 4));

    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("g.csv"));
    assert_eq!(unsafe { tse_grid_save(g, path.as_ptr()) }, TseStatus::Ok);
    let mut h: *mut TseGrid = ptr::null_mut();
    assert_eq!(unsafe { tse_grid_load(path.as_ptr(), &mut h) }, TseStatus::Ok);
    let mut back = vec![0.0; 12];
    assert_eq!(unsafe { tse_grid_values(h, back.as_mut_ptr(), 12) }, TseStatus::Ok);
    assert_eq!(back, values);

    assert_eq!(unsafe { tse_grid_values(h, back.as_mut_ptr(), 11) }, TseStatus::Data);
    assert!(last_error().contains("11"), "{}", last_error());
    unsafe {
        tse_grid_free(g);
        tse_grid_free(h);
        tse_grid_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut g: *mut TseGrid = ptr::null_mut();
    let missing = CString::new("/nonexistent/grid.csv").unwrap();
    assert_eq!(unsafe { tse_grid_load(missing.as_ptr(), &mut g) }, TseStatus::Io);
    assert!(g.is_null());
    assert!(last_error().contains("/nonexistent/grid.csv"));

    assert_eq!(unsafe { tse_grid_load(ptr::null(), &mut g) }, TseStatus::NullPointer);
    let v = [1.0; 4];
    assert_eq!(unsafe { tse_grid_new(v.as_ptr(), 2, 2, -1.0, 1.0, &mut g) }, TseStatus::Config);

    let mut out = 0.0;
    assert_eq!(unsafe { tse_model_speed_at(ptr::null(), 0.0, 0.0, &mut out) }, TseStatus::NullPointer);

    let d = [0.01, 0.01];
    let s = [10.0, 10.0];
    let mut c = TseCalibration::default();
    assert_eq!(unsafe { tse_calibrate(d.as_ptr(), s.as_ptr(), 2, &mut c) }, TseStatus::Data);
}

#[test]
fn calibration_recovers_line() {
    let d: Vec<f64> = (1..40).map(|k| k as f64 * 0.003).collect();
    let s: Vec<f64> = d.iter().map(|r| 19.965 * (1.0 - r / 0.12)).collect();
    let mut c = TseCalibration::default();
    assert_eq!(unsafe { tse_calibrate(d.as_ptr(), s.as_ptr(), d.len(), &mut c) }, TseStatus::Ok);
    assert!((c.v_f - 19.965).abs() < 1e-9 && (c.rho_m - 0.12).abs() < 1e-12);
    assert_eq!(c.pairs, 39);
}

#[test]
fn simulate_evaluate_and_model_queries() {
    let mut speed: *mut TseGrid = ptr::null_mut();
    let mut density: *mut TseGrid = ptr::null_mut();
    assert_eq!(unsafe { tse_simulate_default(&mut speed, &mut density) }, TseStatus::Ok);
    let mut metrics = TseMetrics::default();
    assert_eq!(unsafe { tse_evaluate(speed, speed, 0.1, 0, &mut metrics) }, TseStatus::Ok);
    assert_eq!(metrics.test_rmse, 0.0);
    assert_eq!(metrics.test_cells + metrics.train_cells, 21 * 600);

    // Train a tiny model briefly, checkpoint it, and query it through the ABI.
    let truth = unsafe { &*speed }.field().clone();
    let mut cfg = RunConfig::default();
    cfg.apply(["hidden=8", "latent=8", "hidden_layers=1", "config_points=10", "epochs=3"]).unwrap();
    let (_, set) = prepare(&cfg, &truth).unwrap();
    let mut trainer = new_trainer(&cfg, &set).unwrap();
    trainer.run(&set, &cfg.train_config(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.ckpt");
    tse_core::operator::save_checkpoint(&trainer.to_checkpoint(cfg.to_map()), &ck).unwrap();

    let mut model: *mut TseModel = ptr::null_mut();
    assert_eq!(unsafe { tse_model_load(cpath(&ck).as_ptr(), &mut model) }, TseStatus::Ok);
    let mut pred: *mut TseGrid = ptr::null_mut();
    assert_eq!(unsafe { tse_model_predict(model, &mut pred) }, TseStatus::Ok);
    let field = unsafe { &*pred }.field();
    let mut v = 0.0;
    for (i, j) in [(0, 0), (10, 300), (20, 599)] {
        let status = unsafe { tse_model_speed_at(model, field.x_at(i), field.t_at(j), &mut v) };
        assert_eq!(status, TseStatus::Ok);
        assert!((v - field.values.get(i, j)).abs() < 1e-9, "{v} vs {}", field.values.get(i, j));
    }
    assert_eq!(unsafe { tse_model_speed_at(model, f64::NAN, 0.0, &mut v) }, TseStatus::Config);
    unsafe {
        tse_model_free(model);
        tse_grid_free(pred);
        tse_grid_free(speed);
        tse_grid_free(density);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tse.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "tse_version",
        "tse_last_error",
        "tse_grid_new",
        "tse_grid_load",
        "tse_grid_save",
        "tse_grid_shape",
        "tse_grid_values",
        "tse_grid_free",
        "tse_simulate_default",
        "tse_model_load",
        "tse_model_speed_at",
        "tse_model_predict",
        "tse_model_free",
        "tse_evaluate",
        "tse_calibrate",
        "typedef struct TseGrid TseGrid",
        "TSE_STATUS_NULL_POINTER",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let src = "#include \"tse.h\"\nint main(void) { TseGrid *g = 0; return tse_grid_free(g), 0; }\n";
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("t.c");
    std::fs::write(&c, src).unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&c)
        .status()
    {
        Ok(st) => assert!(st.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler; skipped syntax check"),
    }
}

#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(cc.status.success());
    // target/<profile>/deps/ffi-* -> target/<profile>
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libtse_ffi.so").exists() {
        eprintln!("shared library not found in {}; skipped", lib_dir.display());
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("c/smoke.c"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-ltse_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let out = Command::new(&exe).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("grid 21x600 v_f 19.965000 rho_m 0.120000 held-out 11340 rmse 0.0"), "{text}");
}
