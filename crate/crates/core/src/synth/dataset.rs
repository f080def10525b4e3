use std::path::Path;

use super::{SampleCamera, SynthSample};
use crate::body::NUM_BETAS;
use crate::error::{Error, Result};
use crate::io::Container;
use crate::iuv::IuvMap;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config_text: String,
    pub samples: Vec<SynthSample>,
}

/// Network inputs only: heatmaps, IUV map and evidence joints.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub heatmaps: Vec<f32>,
    pub iuv: IuvMap,
    pub j2d: Vec<[f64; 2]>,
}

fn flat2(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn flat3(v: &[[f64; 3]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

pub fn dataset_container(samples: &[SynthSample], config_text: &str) -> Result<Container> {
    let mut c = Container::new();
    for (i, s) in samples.iter().enumerate() {
        let (h, w) = (s.iuv.height, s.iuv.width);
        let nj = s.j2d.len();
        c.insert_f32(format!("s{i}/J"), &[nj, h, w], s.heatmaps.clone())?;
        c.insert_f32(format!("s{i}/M"), &[3, h, w], s.iuv.data.clone())?;
        c.insert_f64(format!("s{i}/j2d"), &[nj, 2], &flat2(&s.j2d))?;
        c.insert_f64(format!("s{i}/j2d_gt"), &[nj, 2], &flat2(&s.j2d_gt))?;
        c.insert_f64(format!("s{i}/theta"), &[s.theta.len(), 3], &flat3(&s.theta))?;
        c.insert_f64(format!("s{i}/beta"), &[NUM_BETAS], &s.beta)?;
        c.insert_f64(format!("s{i}/v"), &[s.vertices.len(), 3], &flat3(&s.vertices))?;
        c.insert_f64(format!("s{i}/j3d"), &[s.joints3d.len(), 3], &flat3(&s.joints3d))?;
        c.insert_f64(format!("s{i}/cam"), &[10], &s.camera.to_vec())?;
    }
    c.insert_text("meta/config", config_text)?;
    Ok(c)
}

pub fn write_dataset(path: &Path, samples: &[SynthSample], config_text: &str) -> Result<()> {
    dataset_container(samples, config_text)?.write(path)
}

/// Number of samples, from the `s{i}/J` entries (without reading them).
fn sample_count(c: &Container) -> Result<usize> {
    let n = c.names().filter(|n| n.starts_with('s') && n.ends_with("/J")).count();
    if n == 0 {
        return Err(Error::Container("dataset has no samples".into()));
    }
    if let Some(i) = (0..n).find(|i| !c.contains(&format!("s{i}/J"))) {
        return Err(Error::MissingTensor(format!("s{i}/J")));
    }
    Ok(n)
}

fn rows<const N: usize>(c: &Container, name: &str, rows: Option<usize>) -> Result<Vec<[f64; N]>> {
    let (shape, data) = c.f32(name)?;
    if shape.len() != 2 || shape[1] != N || rows.is_some_and(|r| r != shape[0]) {
        return Err(Error::shape("dataset", format!("`{}` has shape {:?}", name, shape)));
    }
    Ok(data.chunks(N).map(|r| std::array::from_fn(|k| r[k] as f64)).collect())
}

fn evidence_at(c: &Container, i: usize, res: &mut Option<(usize, usize, usize)>) -> Result<Evidence> {
    let (js, jd) = c.f32(&format!("s{i}/J"))?;
    let (ms, md) = c.f32(&format!("s{i}/M"))?;
    if js.len() != 3 || ms.len() != 3 || ms[0] != 3 || js[1..] != ms[1..] {
        return Err(Error::shape("dataset", format!("sample {}: J {:?}, M {:?}", i, js, ms)));
    }
    let r = (js[0], js[1], js[2]);
    match res {
        None => *res = Some(r),
        Some(prev) if *prev != r => {
            return Err(Error::Container(format!(
                "mixed resolutions: sample {} is {}x{} with {} joints, expected {}x{} with {}",
                i, r.1, r.2, r.0, prev.1, prev.2, prev.0
            )))
        }
        _ => {}
    }
    let iuv = IuvMap::from_data(js[1], js[2], md.to_vec())?;
    iuv.validate()?;
    Ok(Evidence {
        heatmaps: jd.to_vec(),
        iuv,
        j2d: rows::<2>(c, &format!("s{i}/j2d"), Some(js[0]))?,
    })
}

/// Reads only the network inputs of every sample; 3D targets are never
/// touched.
pub fn read_evidence(c: &Container) -> Result<Vec<Evidence>> {
    let n = sample_count(c)?;
    let mut res = None;
    (0..n).map(|i| evidence_at(c, i, &mut res)).collect()
}

pub fn dataset_from_container(c: &Container) -> Result<Dataset> {
    let n = sample_count(c)?;
    let mut res = None;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let ev = evidence_at(c, i, &mut res)?;
        let nj = ev.j2d.len();
        let beta = c.f64_checked(&format!("s{i}/beta"), &[NUM_BETAS])?;
        let cam = c.f64_checked(&format!("s{i}/cam"), &[10])?;
        samples.push(SynthSample {
            heatmaps: ev.heatmaps,
            iuv: ev.iuv,
            j2d: ev.j2d,
            j2d_gt: rows::<2>(c, &format!("s{i}/j2d_gt"), Some(nj))?,
            theta: rows::<3>(c, &format!("s{i}/theta"), Some(crate::body::NUM_JOINTS))?,
            beta: std::array::from_fn(|k| beta[k]),
            vertices: rows::<3>(c, &format!("s{i}/v"), None)?,
            joints3d: rows::<3>(c, &format!("s{i}/j3d"), Some(nj))?,
            camera: SampleCamera::from_slice(&cam)?,
        });
    }
    Ok(Dataset {
        config_text: c.text("meta/config")?,
        samples,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_container(&Container::read(path)?)
}
