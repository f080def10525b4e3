//! C ABI over `cra_core`.
//!
//! Every function returns a [`CraStatus`]. On failure the message is kept in
//! a thread-local slot readable through [`cra_last_error`]. Handles are
//! opaque; free them with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cra_core::body::{generate_toy_model, smpl_forward, BodyModel, SmplParams};
use cra_core::io::Container;
use cra_core::network::THETA_DIM;
use cra_core::synth::{read_evidence, Evidence};
use cra_core::train::{inputs_from_evidence, predict, LoadedNetwork};
use cra_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Io = 4,
    InvalidModel = 5,
    Format = 6,
    Numeric = 7,
    Internal = 8,
    Panic = 9,
}

/// A body model.
pub struct CraModel(BodyModel);

/// A trained network restored from a checkpoint.
pub struct CraNetwork(LoadedNetwork);

/// Network inputs loaded from a dataset or evidence file.
pub struct CraEvidence(Vec<Evidence>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CraStatus {
    match e {
        Error::InvalidArgument(_) | Error::Shape { .. } | Error::Config(_) => CraStatus::InvalidArgument,
        Error::Io { .. } => CraStatus::Io,
        Error::InvalidModel(_) => CraStatus::InvalidModel,
        Error::Container(_) | Error::MissingTensor(_) | Error::InvalidIuv(_) | Error::Image(_) => CraStatus::Format,
        Error::NonFinite(_) | Error::Diverged { .. } | Error::Degenerate(_) | Error::NonPositiveDepth(_) => {
            CraStatus::Numeric
        }
        _ => CraStatus::Internal,
    }
}

struct Fail(CraStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CraStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CraStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CraStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CraStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Copies `src` into an optional output buffer of `cap` values.
unsafe fn write_out(src: &[f64], dst: *mut f64, cap: usize, what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Ok(());
    }
    if cap < src.len() {
        return Err(Fail(
            CraStatus::BufferTooSmall,
            format!("{what}: need {} values, buffer holds {cap}", src.len()),
        ));
    }
    std::slice::from_raw_parts_mut(dst, src.len()).copy_from_slice(src);
    Ok(())
}

unsafe fn store_handle<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a body model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cra_model_load(path: *const c_char, out: *mut *mut CraModel) -> CraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = BodyModel::load(path_arg(path)?)?;
        store_handle(out, CraModel(m));
        Ok(())
    })
}

/// Generates a procedural body model.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cra_model_generate(seed: u64, num_vertices: usize, out: *mut *mut CraModel) -> CraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        store_handle(out, CraModel(generate_toy_model(seed, num_vertices)?));
        Ok(())
    })
}

/// Writes a body model file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cra_model_save(model: *const CraModel, path: *const c_char) -> CraStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Vertex, face and output-joint counts. Any output pointer may be null.
///
/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cra_model_sizes(
    model: *const CraModel,
    vertices: *mut usize,
    faces: *mut usize,
    joints: *mut usize,
) -> CraStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        for (p, v) in [(vertices, m.num_vertices()), (faces, m.num_faces()), (joints, m.num_output_joints())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Poses the model. `theta` holds 72 axis-angle values, `beta` 10 shape
/// values. Vertices and joints are written as packed xyz triples; either
/// output may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cra_model_forward(
    model: *const CraModel,
    theta: *const f64,
    beta: *const f64,
    vertices: *mut f64,
    vertices_cap: usize,
    joints: *mut f64,
    joints_cap: usize,
) -> CraStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let params = SmplParams::from_flat(slice_arg(theta, 72, "theta")?, slice_arg(beta, 10, "beta")?)?;
        let mesh = smpl_forward(m, &params)?;
        let flat = |v: &[[f64; 3]]| v.iter().flatten().copied().collect::<Vec<_>>();
        write_out(&flat(&mesh.vertices), vertices, vertices_cap, "vertices")?;
        write_out(&flat(&mesh.joints), joints, joints_cap, "joints")?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cra_model_free(model: *mut CraModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a training checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cra_network_load(path: *const c_char, out: *mut *mut CraNetwork) -> CraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = Container::read(path_arg(path)?)?;
        store_handle(out, CraNetwork(LoadedNetwork::from_checkpoint(&c)?));
        Ok(())
    })
}

/// Vertex count, output-joint count and length of the parameter vector.
///
/// # Safety
/// `net` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cra_network_sizes(
    net: *const CraNetwork,
    vertices: *mut usize,
    joints: *mut usize,
    theta: *mut usize,
) -> CraStatus {
    guard(|| {
        let l = &net.as_ref().ok_or_else(|| null("net"))?.0;
        for (p, v) in [(vertices, l.model.num_vertices()), (joints, l.model.num_output_joints()), (theta, THETA_DIM)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cra_network_free(net: *mut CraNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads the network inputs of a dataset or evidence file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cra_evidence_load(path: *const c_char, out: *mut *mut CraEvidence) -> CraStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ev = read_evidence(&Container::read(path_arg(path)?)?)?;
        store_handle(out, CraEvidence(ev));
        Ok(())
    })
}

/// Number of samples in an evidence handle.
///
/// # Safety
/// `ev` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cra_evidence_len(ev: *const CraEvidence, len: *mut usize) -> CraStatus {
    guard(|| {
        let e = ev.as_ref().ok_or_else(|| null("evidence"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = e.0.len();
        Ok(())
    })
}

/// # Safety
/// `ev` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cra_evidence_free(ev: *mut CraEvidence) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Predicts the mesh for sample `index`. Outputs are packed rows: vertices
/// and 3D joints as xyz, 2D joints as xy, plus the raw parameter vector. Any
/// output may be null.
///
/// # Safety
/// Handles must come from this library; buffers must hold their `*_cap`
/// values.
#[no_mangle]
pub unsafe extern "C" fn cra_network_predict(
    net: *const CraNetwork,
    ev: *const CraEvidence,
    index: usize,
    vertices: *mut f64,
    vertices_cap: usize,
    joints3d: *mut f64,
    joints3d_cap: usize,
    j2d: *mut f64,
    j2d_cap: usize,
    theta: *mut f64,
    theta_cap: usize,
) -> CraStatus {
    guard(|| {
        let l = &net.as_ref().ok_or_else(|| null("net"))?.0;
        let e = &ev.as_ref().ok_or_else(|| null("evidence"))?.0;
        let sample = e.get(index).ok_or_else(|| {
            Fail(CraStatus::InvalidArgument, format!("index {index} out of range for {} samples", e.len()))
        })?;
        let x = inputs_from_evidence::<f32>(&l.net.dims, &[sample])?;
        let p = predict(&l.net, &l.store, &x)?.remove(0);
        write_out(&p.vertices.iter().flatten().copied().collect::<Vec<_>>(), vertices, vertices_cap, "vertices")?;
        write_out(&p.joints3d.iter().flatten().copied().collect::<Vec<_>>(), joints3d, joints3d_cap, "joints3d")?;
        write_out(&p.j2d.iter().flatten().copied().collect::<Vec<_>>(), j2d, j2d_cap, "j2d")?;
        write_out(&p.theta, theta, theta_cap, "theta")?;
        Ok(())
    })
}
