//! SMPL-compatible parametric body model.
//!
//! Vertices are produced by adding linear shape offsets to a template,
//! optionally pose-corrective offsets, and then linear blend skinning along
//! a 24-joint kinematic tree. Output joints are a fixed linear regression
//! of the posed vertices.

mod forward;
pub mod rotation;
mod toy;

use std::path::Path;

pub use forward::{smpl_forward, BodyVars, PreparedModel};
pub use toy::generate_toy_model;

use crate::error::{Error, Result};
use crate::io::Container;

pub const NUM_JOINTS: usize = 24;
pub const NUM_BETAS: usize = 10;
/// Body parts of the IUV representation.
pub const NUM_PARTS: usize = 24;
pub const NUM_COCO_JOINTS: usize = 17;
/// Pose-corrective feature length: `(R_k - I)` for the 23 non-root joints.
pub const POSE_FEATURES: usize = (NUM_JOINTS - 1) * 9;

pub const SMPL_PARENTS: [i32; NUM_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

pub const SMPL_JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck", "left_collar",
    "right_collar", "head", "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hand", "right_hand",
];

pub const COCO_JOINT_NAMES: [&str; NUM_COCO_JOINTS] = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
];

/// Indices of the two hips among the COCO joints; their midpoint serves as
/// the root for root-aligned metrics.
pub const COCO_HIPS: [usize; 2] = [11, 12];

/// Body model data. Real-valued tensors hold values exactly representable
/// in `f32`, so saving and loading is lossless.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    /// `V x 3` rest vertices in meters.
    pub template: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// `V x 3 x 10`, row-major.
    pub shape_dirs: Vec<f64>,
    /// `V x 24`.
    pub skin_weights: Vec<f64>,
    pub parents: Vec<i32>,
    /// `24 x V`, regresses rest joints from the shaped template.
    pub rest_regressor: Vec<f64>,
    /// `N_J x V`, regresses output joints from posed vertices.
    pub joint_regressor: Vec<f64>,
    /// Per vertex `(part, u, v)` with part in `1..=P`.
    pub iuv_template: Vec<[f64; 3]>,
    /// Optional `V x 3 x 207` pose-corrective offsets.
    pub pose_dirs: Option<Vec<f64>>,
}

/// Pose as 24 axis-angle vectors (radians) plus 10 shape coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SmplParams {
    pub pose: Vec<[f64; 3]>,
    pub beta: [f64; NUM_BETAS],
}

impl SmplParams {
    pub fn zero() -> Self {
        Self {
            pose: vec![[0.0; 3]; NUM_JOINTS],
            beta: [0.0; NUM_BETAS],
        }
    }

    /// From a flat 72-vector and 10 betas.
    pub fn from_flat(pose: &[f64], beta: &[f64]) -> Result<Self> {
        if pose.len() != NUM_JOINTS * 3 || beta.len() != NUM_BETAS {
            return Err(Error::InvalidArgument(format!(
                "expected 72 pose and 10 shape values, got {} and {}",
                pose.len(),
                beta.len()
            )));
        }
        Ok(Self {
            pose: pose.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            beta: beta.try_into().unwrap(),
        })
    }

    pub fn pose_flat(&self) -> Vec<f64> {
        self.pose.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshOutput {
    pub vertices: Vec<[f64; 3]>,
    pub joints: Vec<[f64; 3]>,
}

impl BodyModel {
    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    /// Number of regressed output joints (`N_J`).
    pub fn num_output_joints(&self) -> usize {
        if self.template.is_empty() {
            0
        } else {
            self.joint_regressor.len() / self.template.len()
        }
    }

    pub fn part_of_vertex(&self, v: usize) -> usize {
        self.iuv_template[v][0] as usize
    }

    /// Part index of a face; faces are part-pure, so the first vertex decides.
    pub fn part_of_face(&self, f: usize) -> usize {
        self.part_of_vertex(self.faces[f][0])
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.template.len();
        let bad = |m: String| Err(Error::InvalidModel(m));
        if nv == 0 {
            return bad("no vertices".into());
        }
        if self.parents.len() != NUM_JOINTS {
            return bad(format!("{} joints, expected {}", self.parents.len(), NUM_JOINTS));
        }
        for (j, &p) in self.parents.iter().enumerate() {
            let ok = if j == 0 { p == -1 } else { p >= 0 && (p as usize) < j };
            if !ok {
                return bad(format!("joint {} has parent {}; tree must be topologically sorted with root 0", j, p));
            }
        }
        let sizes = [
            ("shape_dirs", self.shape_dirs.len(), nv * 3 * NUM_BETAS),
            ("skin_weights", self.skin_weights.len(), nv * NUM_JOINTS),
            ("rest_regressor", self.rest_regressor.len(), NUM_JOINTS * nv),
            ("iuv_template", self.iuv_template.len(), nv),
        ];
        for (name, got, want) in sizes {
            if got != want {
                return bad(format!("{} has {} values, expected {}", name, got, want));
            }
        }
        if self.joint_regressor.is_empty() || self.joint_regressor.len() % nv != 0 {
            return bad(format!("joint_regressor has {} values, not a multiple of V={}", self.joint_regressor.len(), nv));
        }
        if let Some(pd) = &self.pose_dirs {
            if pd.len() != nv * 3 * POSE_FEATURES {
                return bad(format!("pose_dirs has {} values, expected {}", pd.len(), nv * 3 * POSE_FEATURES));
            }
        }
        let finite = self.template.iter().flatten().all(|x| x.is_finite())
            && self.shape_dirs.iter().all(|x| x.is_finite())
            && self.rest_regressor.iter().all(|x| x.is_finite())
            && self.joint_regressor.iter().all(|x| x.is_finite());
        if !finite {
            return bad("non-finite model data".into());
        }
        for (v, row) in self.skin_weights.chunks(NUM_JOINTS).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (s - 1.0).abs() > 1e-6 {
                return bad(format!("skinning weights of vertex {} are negative or sum to {}", v, s));
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= nv) {
                return bad(format!("face {} references a vertex beyond {}", f, nv));
            }
        }
        for (v, iuv) in self.iuv_template.iter().enumerate() {
            let p = iuv[0];
            if p.fract() != 0.0 || !(1.0..=NUM_PARTS as f64).contains(&p) {
                return bad(format!("vertex {} has part index {}", v, p));
            }
            if !(0.0..=1.0).contains(&iuv[1]) || !(0.0..=1.0).contains(&iuv[2]) {
                return bad(format!("vertex {} has uv ({}, {}) outside [0, 1]", v, iuv[1], iuv[2]));
            }
        }
        Ok(())
    }

    pub fn to_container(&self) -> Result<Container> {
        let nv = self.num_vertices();
        let mut c = Container::new();
        let flat3 = |v: &[[f64; 3]]| v.iter().flatten().copied().collect::<Vec<f64>>();
        c.insert_f64("template", &[nv, 3], &flat3(&self.template))?;
        c.insert_i32(
            "faces",
            &[self.faces.len(), 3],
            self.faces.iter().flatten().map(|&i| i as i32).collect(),
        )?;
        c.insert_f64("shape_dirs", &[nv, 3, NUM_BETAS], &self.shape_dirs)?;
        c.insert_f64("skin_weights", &[nv, NUM_JOINTS], &self.skin_weights)?;
        c.insert_i32("parents", &[NUM_JOINTS], self.parents.clone())?;
        c.insert_f64("rest_regressor", &[NUM_JOINTS, nv], &self.rest_regressor)?;
        c.insert_f64("joint_regressor", &[self.num_output_joints(), nv], &self.joint_regressor)?;
        c.insert_f64("iuv_template", &[nv, 3], &flat3(&self.iuv_template))?;
        if let Some(pd) = &self.pose_dirs {
            c.insert_f64("pose_dirs", &[nv, 3, POSE_FEATURES], pd)?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (ts, _) = c.f32("template")?;
        if ts.len() != 2 || ts[1] != 3 {
            return Err(Error::InvalidModel(format!("template shape {:?}", ts)));
        }
        let nv = ts[0];
        let rows3 = |d: Vec<f64>| d.chunks(3).map(|r| [r[0], r[1], r[2]]).collect::<Vec<_>>();
        let template = rows3(c.f64_checked("template", &[nv, 3])?);
        let (fs, fd) = c.i32("faces")?;
        if fs.len() != 2 || fs[1] != 3 || fd.iter().any(|&i| i < 0) {
            return Err(Error::InvalidModel(format!("faces shape {:?} or negative index", fs)));
        }
        let faces = fd.chunks(3).map(|r| [r[0] as usize, r[1] as usize, r[2] as usize]).collect();
        let (js, _) = c.f32("joint_regressor")?;
        if js.len() != 2 || js[1] != nv {
            return Err(Error::InvalidModel(format!("joint_regressor shape {:?}", js)));
        }
        let nj = js[0];
        let (_, parents) = c.i32("parents")?;
        let pose_dirs = if c.contains("pose_dirs") {
            Some(c.f64_checked("pose_dirs", &[nv, 3, POSE_FEATURES])?)
        } else {
            None
        };
        let model = BodyModel {
            template,
            faces,
            shape_dirs: c.f64_checked("shape_dirs", &[nv, 3, NUM_BETAS])?,
            skin_weights: c.f64_checked("skin_weights", &[nv, NUM_JOINTS])?,
            parents: parents.to_vec(),
            rest_regressor: c.f64_checked("rest_regressor", &[NUM_JOINTS, nv])?,
            joint_regressor: c.f64_checked("joint_regressor", &[nj, nv])?,
            iuv_template: rows3(c.f64_checked("iuv_template", &[nv, 3])?),
            pose_dirs,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    /// Shaped template `template + shape_dirs . beta` (before articulation).
    pub fn shaped_template(&self, beta: &[f64; NUM_BETAS]) -> Vec<[f64; 3]> {
        self.template
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let mut p = *t;
                for (a, pa) in p.iter_mut().enumerate() {
                    let dirs = &self.shape_dirs[(v * 3 + a) * NUM_BETAS..(v * 3 + a + 1) * NUM_BETAS];
                    *pa += dirs.iter().zip(beta).map(|(d, b)| d * b).sum::<f64>();
                }
                p
            })
            .collect()
    }

    /// Applies a `rows x V` regressor to per-vertex points.
    pub fn regress(regressor: &[f64], points: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let nv = points.len();
        regressor
            .chunks(nv)
            .map(|row| {
                let mut acc = [0.0; 3];
                for (w, p) in row.iter().zip(points) {
                    if *w != 0.0 {
                        for a in 0..3 {
                            acc[a] += w * p[a];
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
