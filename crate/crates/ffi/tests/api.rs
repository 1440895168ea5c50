use std::ffi::{CStr, CString};
use std::ptr;

use multiwell_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = mw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn gl() -> *mut MwPotential {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { mw_potential_builtin(cstr("gl-scalar").as_ptr(), &mut p) }, MwStatus::Ok);
    p
}

#[test]
fn potential_round_trip() {
    let p = gl();
    unsafe {
        assert_eq!((mw_potential_dim(p), mw_potential_num_wells(p)), (1, 2));
        let mut w = [0.0; 1];
        assert_eq!(mw_potential_well(p, 1, w.as_mut_ptr(), 1), MwStatus::Ok);
        assert_eq!(w[0], 1.0);
        assert_eq!(mw_potential_well(p, 2, w.as_mut_ptr(), 1), MwStatus::InvalidArgument);
        let (y, mut v, mut g) = ([0.0], 0.0, [1.0]);
        assert_eq!(mw_potential_eval(p, y.as_ptr(), 1, &mut v, g.as_mut_ptr()), MwStatus::Ok);
        assert_eq!((v, g[0]), (0.25, 0.0));
        assert_eq!(mw_potential_eval(p, y.as_ptr(), 2, &mut v, ptr::null_mut()), MwStatus::InvalidArgument);
        assert!(last_error().contains("components"));
        mw_potential_free(p);
    }
}

#[test]
fn errors_are_reported() {
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(mw_potential_builtin(cstr("no-such").as_ptr(), &mut p), MwStatus::InvalidConfig);
        assert!(p.is_null() && last_error().contains("no-such"));
        assert_eq!(mw_potential_builtin(ptr::null(), &mut p), MwStatus::NullPointer);
        assert_eq!(mw_potential_from_json(cstr("{\"name\": 1}").as_ptr(), &mut p), MwStatus::InvalidConfig);
        let mut f = ptr::null_mut();
        assert_eq!(mw_field_load(cstr("/nonexistent/field.json").as_ptr(), &mut f), MwStatus::Io);
        assert_eq!(mw_potential_dim(ptr::null()), 0);
        mw_potential_free(ptr::null_mut());
        mw_field_free(ptr::null_mut());
    }
    assert!(!mw_version().is_null());
}

#[test]
fn solve_save_load_and_diagnostics() {
    let p = gl();
    let req = cstr(
        r#"{"domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1},
            "boundary": "two-phase:90", "epsilon": 0.1, "grid_ratio": 4}"#,
    );
    let mut f = ptr::null_mut();
    let mut info = MwSolveInfo::default();
    unsafe {
        assert_eq!(mw_solve(p, req.as_ptr(), &mut f, &mut info), MwStatus::Ok, "{}", last_error());
        assert_eq!(info.converged, 1);
        let mut e = 0.0;
        assert_eq!(mw_energy(f, p, &mut e), MwStatus::Ok);
        assert!((e - info.energy).abs() <= 0.05 * info.energy && (e - 2.0 * 2f64.sqrt() / 3.0).abs() < 0.05, "{e} {}", info.energy);
        let mut poho = MwPohozaev::default();
        assert_eq!(mw_pohozaev(f, p, 0.5, 0.5, 0.3, &mut poho), MwStatus::Ok);
        assert!(poho.lhs > 0.0 && poho.residual.abs() < 0.1 * poho.lhs, "{poho:?}");
        assert_eq!(mw_pohozaev(f, p, 0.9, 0.5, 0.3, &mut poho), MwStatus::OutsideDomain);
        let (mut nx, mut ny, mut k, mut eps) = (0, 0, 0, 0.0);
        assert_eq!(mw_field_shape(f, &mut nx, &mut ny, &mut k, &mut eps), MwStatus::Ok);
        assert_eq!((nx, ny, k, eps), (41, 41, 1, 0.1));
        let mut small = [0.0; 4];
        assert_eq!(mw_field_values(f, small.as_mut_ptr(), 4), MwStatus::BufferTooSmall);
        let mut vals = vec![0.0; nx * ny * k];
        assert_eq!(mw_field_values(f, vals.as_mut_ptr(), vals.len()), MwStatus::Ok);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("u");
        assert_eq!(mw_field_save(f, cstr(stem.to_str().unwrap()).as_ptr(), 0), MwStatus::Ok);
        let mut g = ptr::null_mut();
        assert_eq!(mw_field_load(cstr(stem.with_extension("json").to_str().unwrap()).as_ptr(), &mut g), MwStatus::Ok);
        let mut back = vec![0.0; vals.len()];
        assert_eq!(mw_field_values(g, back.as_mut_ptr(), back.len()), MwStatus::Ok);
        assert_eq!(vals, back);
        mw_field_free(g);
        mw_field_free(f);
        let bad = cstr(r#"{"domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1}, "boundary": "two-phase:0", "epsilon": 0.1}"#);
        assert_eq!(mw_solve(p, bad.as_ptr(), &mut f, ptr::null_mut()), MwStatus::InvalidConfig);
        assert!(f.is_null() && last_error().contains("grid_ratio"));
        mw_potential_free(p);
    }
}

#[test]
fn header_declares_every_export() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/multiwell.h")).unwrap();
    let src = std::fs::read_to_string(format!("{dir}/src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 15, "{names:?}");
    for n in names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
}
