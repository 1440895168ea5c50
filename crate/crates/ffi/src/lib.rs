//! C ABI over the multiwell solver: potentials, fields, single-epsilon
//! solves and energy diagnostics. Objects are opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns an `MwStatus`; the message of the last failure on the calling
//! thread is available from `mw_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde::Deserialize;

use multiwell::boundary::BoundarySpec;
use multiwell::functionals::{pohozaev_residual, total_energy};
use multiwell::grid::{DiskSpec, Domain, Field};
use multiwell::io::{read_field, write_field, Payload};
use multiwell::potential::Potential;
use multiwell::solver::{solve_family, SolveConfig};
use multiwell::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Io = 4,
    NotConverged = 5,
    OutsideDomain = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// Potential handle.
pub struct MwPotential(Potential);

/// Field handle.
pub struct MwField(Field);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MwSolveInfo {
    pub converged: c_int,
    pub energy: f64,
    pub final_residual: f64,
    pub newton_iters: usize,
    pub flow_steps: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MwPohozaev {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MwStatus {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) | Error::UnknownPotential(_) | Error::InvalidPotential(_) => MwStatus::InvalidConfig,
        Error::Io(_) | Error::Format(_) | Error::MissingArtifacts(_) => MwStatus::Io,
        Error::BlowUp { .. } | Error::Stagnation { .. } => MwStatus::NotConverged,
        Error::DiskOutsideDomain | Error::CircleOutsideDomain | Error::RegionOutsideDomain | Error::AnnulusOutsideDomain => {
            MwStatus::OutsideDomain
        }
        Error::Precondition(_) | Error::InvalidGrid(_) => MwStatus::InvalidArgument,
        _ => MwStatus::Internal,
    }
}

fn fail(status: MwStatus, msg: impl Into<String>) -> MwStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MwStatus>) -> MwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MwStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(MwStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: multiwell::Result<T>) -> Result<T, MwStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, MwStatus> {
    if s.is_null() {
        return Err(fail(MwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(MwStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, MwStatus> {
    p.as_ref().ok_or_else(|| fail(MwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MwStatus> {
    p.as_mut().ok_or_else(|| fail(MwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], MwStatus> {
    if p.is_null() {
        return Err(fail(MwStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], MwStatus> {
    if p.is_null() {
        return Err(fail(MwStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(fail(MwStatus::BufferTooSmall, format!("{what} holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in potential by name (`gl-scalar`, `triple-well-2d`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_builtin(name: *const c_char, out: *mut *mut MwPotential) -> MwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = lift(Potential::builtin(str_arg(name, "name")?))?;
        *out = Box::into_raw(Box::new(MwPotential(p)));
        Ok(())
    })
}

/// Polynomial potential from its JSON specification.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_from_json(json: *const c_char, out: *mut *mut MwPotential) -> MwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = lift(Potential::from_json(str_arg(json, "json")?))?;
        *out = Box::into_raw(Box::new(MwPotential(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from a potential constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_free(p: *mut MwPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Target dimension `k`, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_dim(p: *const MwPotential) -> usize {
    p.as_ref().map_or(0, |p| p.0.k())
}

/// Number of wells, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_num_wells(p: *const MwPotential) -> usize {
    p.as_ref().map_or(0, |p| p.0.q())
}

/// Copies well `i` into `out[0..k]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_well(p: *const MwPotential, i: usize, out: *mut f64, len: usize) -> MwStatus {
    guard(|| {
        let p = &ref_arg(p, "potential")?.0;
        if i >= p.q() {
            return Err(fail(MwStatus::InvalidArgument, format!("well {i} out of range (q = {})", p.q())));
        }
        slice_out(out, len, p.k(), "out")?.copy_from_slice(p.well(i));
        Ok(())
    })
}

/// `V(y)` and, when `grad` is non-null, `grad V(y)` into `grad[0..k]`.
///
/// # Safety
/// `y` must point to `k` doubles, `value` must be valid and `grad` null or
/// `k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_potential_eval(p: *const MwPotential, y: *const f64, k: usize, value: *mut f64, grad: *mut f64) -> MwStatus {
    guard(|| {
        let p = &ref_arg(p, "potential")?.0;
        if k != p.k() {
            return Err(fail(MwStatus::InvalidArgument, format!("point has {k} components, potential has {}", p.k())));
        }
        let y = slice_arg(y, k, "y")?;
        let v = out_arg(value, "value")?;
        *v = p.eval(y);
        if !grad.is_null() {
            p.grad(y, std::slice::from_raw_parts_mut(grad, k));
        }
        Ok(())
    })
}

/// Reads a field from its JSON header path.
///
/// # Safety
/// `header_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_field_load(header_path: *const c_char, out: *mut *mut MwField) -> MwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = lift(read_field(Path::new(str_arg(header_path, "header_path")?)))?;
        *out = Box::into_raw(Box::new(MwField(f)));
        Ok(())
    })
}

/// Writes `<stem>.json` and `<stem>.bin` (or `<stem>.csv` when `csv` is
/// non-zero).
///
/// # Safety
/// `f` must be a live handle and `stem` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mw_field_save(f: *const MwField, stem: *const c_char, csv: c_int) -> MwStatus {
    guard(|| {
        let f = &ref_arg(f, "field")?.0;
        let payload = if csv != 0 { Payload::Csv } else { Payload::Bin };
        lift(write_field(f, Path::new(str_arg(stem, "stem")?), payload))?;
        Ok(())
    })
}

/// # Safety
/// `f` must come from `mw_field_load` or `mw_solve` and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn mw_field_free(f: *mut MwField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Lattice size `(nx + 1) x (ny + 1)`, components `k` and `eps`.
///
/// # Safety
/// `f` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mw_field_shape(f: *const MwField, nx: *mut usize, ny: *mut usize, k: *mut usize, eps: *mut f64) -> MwStatus {
    guard(|| {
        let f = &ref_arg(f, "field")?.0;
        *out_arg(nx, "nx")? = f.grid.nx + 1;
        *out_arg(ny, "ny")? = f.grid.ny + 1;
        *out_arg(k, "k")? = f.k;
        *out_arg(eps, "eps")? = f.epsilon;
        Ok(())
    })
}

/// Copies the node values, node-major (`out[idx * k + c]`, `idx = j * nx + i`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_field_values(f: *const MwField, out: *mut f64, len: usize) -> MwStatus {
    guard(|| {
        let f = &ref_arg(f, "field")?.0;
        slice_out(out, len, f.values.len(), "out")?.copy_from_slice(&f.values);
        Ok(())
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveRequest {
    domain: Domain,
    boundary: BoundarySpec,
    epsilon: f64,
    grid_ratio: usize,
    #[serde(default)]
    solver: SolveConfig,
}

/// Solves at one `eps` from a JSON request
/// `{"domain": .., "boundary": .., "epsilon": .., "grid_ratio": .., "solver": {..}}`.
/// A field is returned through `out` whenever the solver produced one,
/// including non-converged runs, which report `NotConverged`.
///
/// # Safety
/// `p` must be a live handle, `request` a NUL-terminated string, `out` valid
/// and `info` null or valid.
#[no_mangle]
pub unsafe extern "C" fn mw_solve(p: *const MwPotential, request: *const c_char, out: *mut *mut MwField, info: *mut MwSolveInfo) -> MwStatus {
    guard(|| {
        let p = &ref_arg(p, "potential")?.0;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let req: SolveRequest =
            serde_json::from_str(str_arg(request, "request")?).map_err(|e| fail(MwStatus::InvalidConfig, format!("request: {e}")))?;
        if req.grid_ratio < 4 {
            return Err(fail(MwStatus::InvalidConfig, format!("grid_ratio = {} must be >= 4", req.grid_ratio)));
        }
        let fam = lift(solve_family(&req.boundary, p, &req.domain, &[req.epsilon], req.grid_ratio, &req.solver))?;
        let member = fam.members.into_iter().next().ok_or_else(|| fail(MwStatus::Internal, "empty family"))?;
        let r = match member.result {
            Some(r) => r,
            None => return Err(fail(MwStatus::NotConverged, member.error.unwrap_or_else(|| "solver produced no field".into()))),
        };
        if let Some(i) = info.as_mut() {
            *i = MwSolveInfo {
                converged: r.converged as c_int,
                energy: r.energy,
                final_residual: r.final_residual(),
                newton_iters: r.newton_iters,
                flow_steps: r.flow_steps,
            };
        }
        let converged = r.converged;
        *out = Box::into_raw(Box::new(MwField(r.field)));
        if converged {
            Ok(())
        } else {
            Err(fail(MwStatus::NotConverged, "solver did not reach the residual tolerance"))
        }
    })
}

/// Ginzburg-Landau energy of the field over the whole domain.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mw_energy(f: *const MwField, p: *const MwPotential, out: *mut f64) -> MwStatus {
    guard(|| {
        let (f, p) = (&ref_arg(f, "field")?.0, &ref_arg(p, "potential")?.0);
        if f.k != p.k() {
            return Err(fail(MwStatus::InvalidArgument, format!("field has {} components, potential has {}", f.k, p.k())));
        }
        *out_arg(out, "out")? = total_energy(f, p);
        Ok(())
    })
}

/// Pohozaev balance on the disk `D((cx, cy), r)`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mw_pohozaev(f: *const MwField, p: *const MwPotential, cx: f64, cy: f64, r: f64, out: *mut MwPohozaev) -> MwStatus {
    guard(|| {
        let (f, p) = (&ref_arg(f, "field")?.0, &ref_arg(p, "potential")?.0);
        if !(r > 0.0) {
            return Err(fail(MwStatus::InvalidArgument, format!("radius {r} must be positive")));
        }
        let res = lift(pohozaev_residual(f, p, &DiskSpec::new([cx, cy], r)))?;
        *out_arg(out, "out")? = MwPohozaev { lhs: res.lhs, rhs: res.rhs, residual: res.residual };
        Ok(())
    })
}
