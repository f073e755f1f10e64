use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use boltzforce_ffi::*;

const CFG: &str = r#"
[grids]
dx = 1
nx = 8
dv = 2
nv = 16
rv = 6.0
n_sigma = 8

[kernel]
order = 4

[reference]
epsilon = 0.5
t0 = 1.0
a = 0.0
big_a = 0.0

[initial]
kind = "taylor-green"
amp = 0.1
amp_theta = 0.1
"#;

fn last_error() -> String {
    let p = bf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> Result<*mut BfConfig, (BfStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    match unsafe { bf_config_parse(c.as_ptr(), &mut out) } {
        BfStatus::Ok => Ok(out),
        s => Err((s, last_error())),
    }
}

#[test]
fn missing_epsilon_reports_key_path() {
    let (status, msg) = config("[grids]\nnx = 8\n").unwrap_err();
    assert_eq!(status, BfStatus::Config);
    assert!(msg.contains("reference"), "{msg}");
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { bf_config_parse(ptr::null(), &mut out) }, BfStatus::NullPointer);
    assert!(last_error().contains("text"));
    assert_eq!(unsafe { bf_kinetic_step(ptr::null_mut(), 0.1) }, BfStatus::NullPointer);
    assert_eq!(unsafe { bf_kinetic_len(ptr::null()) }, 0);
    unsafe { bf_config_free(ptr::null_mut()) };
}

#[test]
fn success_clears_last_error() {
    let _ = config("nonsense = [");
    assert!(!bf_last_error().is_null());
    let cfg = config(CFG).unwrap();
    assert!(bf_last_error().is_null());
    unsafe { bf_config_free(cfg) };
}

#[test]
fn kinetic_round_trip_conserves_mass() {
    let cfg = config(CFG).unwrap();
    let mut k = ptr::null_mut();
    unsafe {
        assert_eq!(bf_kinetic_new(cfg, 0.5, &mut k), BfStatus::Ok);
        assert_eq!(bf_kinetic_new(cfg, 0.0, &mut k), BfStatus::InvalidArgument);
        let n = bf_kinetic_len(k);
        assert_eq!(n, 256 * 8);
        let (mut m0, mut e0, mut m1, mut e1) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(bf_kinetic_moments(k, &mut m0, &mut e0), BfStatus::Ok);
        for _ in 0..4 {
            assert_eq!(bf_kinetic_step(k, 0.05), BfStatus::Ok);
        }
        assert_eq!(bf_kinetic_moments(k, &mut m1, &mut e1), BfStatus::Ok);
        assert!(((m1 - m0) / m0).abs() < 1e-10, "{m0} {m1}");
        let mut t = 0.0;
        bf_kinetic_time(k, &mut t);
        assert!((t - 0.2).abs() < 1e-12);

        let mut buf = vec![0.0; n];
        assert_eq!(bf_kinetic_get_state(k, buf.as_mut_ptr(), n), BfStatus::Ok);
        assert_eq!(bf_kinetic_get_state(k, buf.as_mut_ptr(), n + 1), BfStatus::InvalidArgument);
        buf[0] = f64::NAN;
        assert_eq!(bf_kinetic_set_state(k, 0.0, buf.as_ptr(), n), BfStatus::InvalidArgument);
        buf[0] = 0.0;
        assert_eq!(bf_kinetic_set_state(k, 0.0, buf.as_ptr(), n), BfStatus::Ok);
        assert_eq!(bf_kinetic_step(k, -1.0), BfStatus::InvalidArgument);
        bf_kinetic_free(k);
        bf_config_free(cfg);
    }
}

#[test]
fn fluid_handle_steps_and_exports() {
    let text = format!("{CFG}\n[fluid]\nnu = 0.5\nkappa = 1.0\n");
    let cfg = config(&text).unwrap();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(bf_fluid_new(cfg, &mut f), BfStatus::Ok, "{}", last_error());
        let n = bf_fluid_len(f);
        assert_eq!(n, 8);
        let (mut nu, mut kappa) = (0.0, 0.0);
        bf_fluid_coefficients(f, &mut nu, &mut kappa);
        assert_eq!((nu, kappa), (0.5, 1.0));
        let mut th0 = vec![0.0; n];
        bf_fluid_get_theta(f, th0.as_mut_ptr(), n);
        assert_eq!(bf_fluid_step(f, 0.01), BfStatus::Ok);
        let mut th1 = vec![0.0; n];
        bf_fluid_get_theta(f, th1.as_mut_ptr(), n);
        // single mode sin x: pure decay e^{-κ t}
        let r = (-kappa * 0.01f64).exp();
        for (a, b) in th0.iter().zip(&th1) {
            assert!((a * r - b).abs() < 1e-12);
        }
        let mut u = vec![0.0; n];
        assert_eq!(bf_fluid_get_velocity(f, 1, u.as_mut_ptr(), n), BfStatus::Ok);
        assert_eq!(bf_fluid_get_velocity(f, 5, u.as_mut_ptr(), n), BfStatus::InvalidArgument);
        bf_fluid_free(f);
        bf_config_free(cfg);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(bf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let h = std::fs::read_to_string(dir.join("include/boltzforce.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compiles and runs a C client against the static library when a C
/// compiler is available.
#[test]
fn c_client_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libboltzforce_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("mass "));
}
