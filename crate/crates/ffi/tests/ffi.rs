use std::ffi::{CStr, CString};
use std::ptr;

use cra_core::body::{generate_toy_model, smpl_forward, SmplParams};
use cra_core::io::{Container, RunConfig};
use cra_core::synth::{read_evidence, write_dataset};
use cra_core::train::{inputs_from_evidence, predict, LoadedNetwork, Trainer};
use cra_ffi::*;

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cra_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn model_forward_matches_core() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cra_model_generate(5, 200, &mut m) }, CraStatus::Ok);
    let (mut nv, mut nf, mut nj) = (0, 0, 0);
    assert_eq!(unsafe { cra_model_sizes(m, &mut nv, &mut nf, &mut nj) }, CraStatus::Ok);

    let theta: Vec<f64> = (0..72).map(|i| 0.01 * (i % 7) as f64).collect();
    let beta = [0.3; 10];
    let mut v = vec![0.0; nv * 3];
    let mut j = vec![0.0; nj * 3];
    let s = unsafe { cra_model_forward(m, theta.as_ptr(), beta.as_ptr(), v.as_mut_ptr(), v.len(), j.as_mut_ptr(), j.len()) };
    assert_eq!(s, CraStatus::Ok);

    let core = generate_toy_model(5, 200).unwrap();
    let want = smpl_forward(&core, &SmplParams::from_flat(&theta, &beta).unwrap()).unwrap();
    assert_eq!(v, want.vertices.iter().flatten().copied().collect::<Vec<_>>());
    assert_eq!(j, want.joints.iter().flatten().copied().collect::<Vec<_>>());

    // too small a buffer
    let s = unsafe { cra_model_forward(m, theta.as_ptr(), beta.as_ptr(), v.as_mut_ptr(), 3, ptr::null_mut(), 0) };
    assert_eq!(s, CraStatus::BufferTooSmall);
    assert!(last_error().contains("vertices"));

    // save, reload, same sizes
    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("m.crat"));
    assert_eq!(unsafe { cra_model_save(m, path.as_ptr()) }, CraStatus::Ok);
    let mut m2 = ptr::null_mut();
    assert_eq!(unsafe { cra_model_load(path.as_ptr(), &mut m2) }, CraStatus::Ok);
    let mut nv2 = 0;
    assert_eq!(unsafe { cra_model_sizes(m2, &mut nv2, ptr::null_mut(), ptr::null_mut()) }, CraStatus::Ok);
    assert_eq!(nv2, nv);
    unsafe {
        cra_model_free(m);
        cra_model_free(m2);
    }
}

#[test]
fn error_codes() {
    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.crat").unwrap();
    assert_eq!(unsafe { cra_model_load(missing.as_ptr(), &mut m) }, CraStatus::Io);
    assert!(m.is_null());
    assert!(last_error().contains("/nonexistent/model.crat"));
    assert_eq!(unsafe { cra_model_load(ptr::null(), &mut m) }, CraStatus::NullPointer);
    assert_eq!(unsafe { cra_model_generate(1, 10, &mut m) }, CraStatus::InvalidArgument);
    assert_eq!(unsafe { cra_model_sizes(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, CraStatus::NullPointer);
    unsafe {
        cra_model_free(ptr::null_mut());
        cra_network_free(ptr::null_mut());
        cra_evidence_free(ptr::null_mut());
    }
}

#[test]
fn network_prediction_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(
        "height = 16\nsensor = 64\nfeat_channels = 16\nmlp_channels = 8,4\nreg_hidden = 32\n\
         model_verts = 200\npose_bank_size = 16\nseed = 3\nbatch_size = 2\ntrain_samples = 4\nsteps = 2\n",
    )
    .unwrap();
    let mut t = Trainer::new(&cfg).unwrap();
    t.run(Some(dir.path())).unwrap();
    let data = dir.path().join("data.crat");
    write_dataset(&data, &t.synthesizer().materialize(100, 2).unwrap(), &cfg.to_text()).unwrap();

    let (mut net, mut ev) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { cra_network_load(cpath(&dir.path().join("final.crat")).as_ptr(), &mut net) }, CraStatus::Ok);
    assert_eq!(unsafe { cra_evidence_load(cpath(&data).as_ptr(), &mut ev) }, CraStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { cra_evidence_len(ev, &mut n) }, CraStatus::Ok);
    assert_eq!(n, 2);
    let (mut nv, mut nj, mut nt) = (0, 0, 0);
    assert_eq!(unsafe { cra_network_sizes(net, &mut nv, &mut nj, &mut nt) }, CraStatus::Ok);

    let mut v = vec![0.0; nv * 3];
    let mut j3 = vec![0.0; nj * 3];
    let mut j2 = vec![0.0; nj * 2];
    let mut th = vec![0.0; nt];
    let s = unsafe {
        cra_network_predict(
            net,
            ev,
            1,
            v.as_mut_ptr(),
            v.len(),
            j3.as_mut_ptr(),
            j3.len(),
            j2.as_mut_ptr(),
            j2.len(),
            th.as_mut_ptr(),
            th.len(),
        )
    };
    assert_eq!(s, CraStatus::Ok, "{}", last_error());

    let l = LoadedNetwork::from_checkpoint(&Container::read(dir.path().join("final.crat")).unwrap()).unwrap();
    let e = read_evidence(&Container::read(&data).unwrap()).unwrap();
    let x = inputs_from_evidence::<f32>(&l.net.dims, &[&e[1]]).unwrap();
    let p = predict(&l.net, &l.store, &x).unwrap().remove(0);
    assert_eq!(v, p.vertices.iter().flatten().copied().collect::<Vec<_>>());
    assert_eq!(j2, p.j2d.iter().flatten().copied().collect::<Vec<_>>());
    assert_eq!(th, p.theta);

    let none = ptr::null_mut();
    let s = unsafe { cra_network_predict(net, ev, 2, none, 0, none, 0, none, 0, none, 0) };
    assert_eq!(s, CraStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    unsafe {
        cra_network_free(net);
        cra_evidence_free(ev);
    }
}
