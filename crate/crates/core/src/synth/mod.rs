//! Paired synthetic samples: heatmaps, IUV maps and 2D joints rendered from
//! sampled pose, shape and camera, together with their 3D targets.

mod bank;
mod dataset;
#[cfg(test)]
mod tests;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use bank::{joint_limits, within_limits, Pose, PoseBank};
pub use dataset::{dataset_container, dataset_from_container, read_dataset, read_evidence, write_dataset, Dataset, Evidence};

use crate::body::{generate_toy_model, BodyModel, PreparedModel, SmplParams, NUM_BETAS, NUM_JOINTS};
use crate::camera::{crop_transform, pixel_to_normalized, project_perspective, CropTransform, PerspectiveCamera};
use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::iuv::{rasterize_iuv, IuvMap, Projection};
use crate::represent::{heatmaps_from_normalized, joint_jitter, occlusion_box, part_drop, vertex_perturb, AugmentConfig};

fn f32r(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSampler {
    pub mean: [f64; NUM_BETAS],
    pub std: [f64; NUM_BETAS],
}

impl ShapeSampler {
    pub fn isotropic(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidArgument(format!("shape std must be positive, got {}", std)));
        }
        Ok(Self {
            mean: [mean; NUM_BETAS],
            std: [std; NUM_BETAS],
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; NUM_BETAS] {
        std::array::from_fn(|i| f32r(Normal::new(self.mean[i], self.std[i]).expect("positive std").sample(rng)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraSampler {
    pub tx_std: f64,
    pub ty_std: f64,
    pub tz_mean: f64,
    pub tz_std: f64,
    pub tz_min: f64,
}

impl CameraSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let n = |m: f64, s: f64, rng: &mut R| if s > 0.0 { Normal::new(m, s).expect("std").sample(rng) } else { m };
        let tx = n(0.0, self.tx_std, rng);
        let ty = n(0.0, self.ty_std, rng);
        let tz = n(self.tz_mean, self.tz_std, rng).max(self.tz_min);
        [f32r(tx), f32r(ty), f32r(tz)]
    }
}

/// Everything needed to regenerate a sample's renders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleCamera {
    pub translation: [f64; 3],
    pub focal: f64,
    pub sensor: usize,
    pub crop: CropTransform,
}

impl SampleCamera {
    pub fn full(&self) -> PerspectiveCamera {
        PerspectiveCamera::centered(self.translation, self.focal, self.sensor, self.sensor)
    }

    /// Camera rendering directly into the cropped `out_w x out_h` frame.
    pub fn cropped(&self) -> PerspectiveCamera {
        self.crop.camera(&self.full())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let t = self.translation;
        vec![
            t[0],
            t[1],
            t[2],
            self.focal,
            self.sensor as f64,
            self.crop.origin[0],
            self.crop.origin[1],
            self.crop.side,
            self.crop.out_w as f64,
            self.crop.out_h as f64,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 10 {
            return Err(Error::shape("sample_camera", format!("expected 10 values, got {}", v.len())));
        }
        Ok(Self {
            translation: [v[0], v[1], v[2]],
            focal: v[3],
            sensor: v[4] as usize,
            crop: CropTransform {
                origin: [v[5], v[6]],
                side: v[7],
                out_w: v[8] as usize,
                out_h: v[9] as usize,
            },
        })
    }
}

/// One paired sample. All float fields hold `f32`-representable values so a
/// dataset file reproduces them exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    /// `N_J x H x W`.
    pub heatmaps: Vec<f32>,
    pub iuv: IuvMap,
    /// Evidence joints in normalized crop coordinates (after jitter).
    pub j2d: Vec<[f64; 2]>,
    /// Clean projected joints, normalized.
    pub j2d_gt: Vec<[f64; 2]>,
    pub theta: Vec<[f64; 3]>,
    pub beta: [f64; NUM_BETAS],
    pub vertices: Vec<[f64; 3]>,
    pub joints3d: Vec<[f64; 3]>,
    pub camera: SampleCamera,
}

/// Samplers and settings shared by every sample of a run.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub model: BodyModel,
    pub prepared: PreparedModel<f64>,
    pub bank: PoseBank,
    pub shape: ShapeSampler,
    pub camera: CameraSampler,
    pub height: usize,
    pub width: usize,
    pub sensor: usize,
    pub focal: f64,
    pub crop_scale: f64,
    pub heatmap_sigma: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

/// Body model named by the config, or the procedural one.
pub fn load_model(cfg: &RunConfig) -> Result<BodyModel> {
    if cfg.model.is_empty() {
        generate_toy_model(cfg.model_seed, cfg.model_verts)
    } else {
        BodyModel::load(std::path::Path::new(&cfg.model))
    }
}

pub fn load_bank(cfg: &RunConfig) -> Result<PoseBank> {
    if cfg.pose_bank.is_empty() {
        PoseBank::procedural(cfg.seed ^ 0x9e37_79b9, cfg.pose_bank_size)
    } else {
        PoseBank::load(std::path::Path::new(&cfg.pose_bank))
    }
}

const MAX_CAMERA_ATTEMPTS: usize = 10;

impl Synthesizer {
    pub fn new(cfg: &RunConfig, model: BodyModel, bank: PoseBank) -> Result<Self> {
        cfg.validate()?;
        bank.validate()?;
        if model.num_output_joints() != cfg.num_joints {
            return Err(Error::Config(format!(
                "model regresses {} joints, config expects {}",
                model.num_output_joints(),
                cfg.num_joints
            )));
        }
        Ok(Self {
            prepared: PreparedModel::new(&model)?,
            model,
            bank,
            shape: ShapeSampler::isotropic(cfg.beta_mean, cfg.beta_std)?,
            camera: CameraSampler {
                tx_std: cfg.tx_std,
                ty_std: cfg.ty_std,
                tz_mean: cfg.tz_mean,
                tz_std: cfg.tz_std,
                tz_min: cfg.tz_min,
            },
            height: cfg.height,
            width: cfg.width,
            sensor: cfg.sensor,
            focal: f32r(cfg.focal),
            crop_scale: cfg.crop_scale,
            heatmap_sigma: cfg.heatmap_sigma,
            augment: cfg.effective_augment(),
            seed: cfg.seed,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg, load_model(cfg)?, load_bank(cfg)?)
    }

    /// Independent stream for sample `index`.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    pub fn sample(&self, index: u64) -> Result<SynthSample> {
        self.synthesize(&mut self.sample_rng(index))
    }

    pub fn synthesize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SynthSample> {
        let pose = self.bank.poses[rng.random_range(0..self.bank.len())];
        let params = SmplParams {
            pose: pose.to_vec(),
            beta: self.shape.sample(rng),
        };
        let mesh = self.prepared.evaluate(&params)?;
        let mut render_verts = mesh.vertices.clone();
        vertex_perturb(&mut render_verts, self.augment.vertex_perturb, rng);

        let mut chosen = None;
        for _ in 0..MAX_CAMERA_ATTEMPTS {
            let t = self.camera.sample(rng);
            let full = PerspectiveCamera::centered(t, self.focal, self.sensor, self.sensor);
            let (m, _) = match self.render(&render_verts, &full, self.sensor, self.sensor) {
                Ok(r) => r,
                Err(Error::NonPositiveDepth(_)) => continue,
                Err(e) => return Err(e),
            };
            if let Some(bb) = m.foreground_bbox() {
                let c = crop_transform(&bb, self.crop_scale, self.height, self.width)?;
                let crop = CropTransform {
                    origin: [f32r(c.origin[0]), f32r(c.origin[1])],
                    side: f32r(c.side),
                    ..c
                };
                chosen = Some(SampleCamera {
                    translation: t,
                    focal: self.focal,
                    sensor: self.sensor,
                    crop,
                });
                break;
            }
        }
        let camera = chosen.ok_or_else(|| {
            Error::Synthesis(format!("body out of frame after {} camera samples", MAX_CAMERA_ATTEMPTS))
        })?;

        let cam = camera.cropped();
        let (mut iuv, _) = self.render(&render_verts, &cam, self.height, self.width)?;
        let to_norm = |p: [f64; 2]| {
            let n = pixel_to_normalized(p, self.width, self.height);
            [f32r(n[0]), f32r(n[1])]
        };
        let j_px = project_perspective(&mesh.joints, &cam)?;
        let j2d_gt: Vec<[f64; 2]> = j_px.iter().map(|&p| to_norm(p)).collect();

        let mut noisy = j_px.clone();
        joint_jitter(&mut noisy, &self.augment, rng);
        part_drop(&mut iuv, &self.augment, rng);
        occlusion_box(&mut iuv, &self.augment, rng);
        let j2d: Vec<[f64; 2]> = noisy.iter().map(|&p| to_norm(p)).collect();
        let heatmaps = heatmaps_from_normalized(&j2d, self.height, self.width, self.heatmap_sigma)?;

        let r3 = |v: &Vec<[f64; 3]>| v.iter().map(|p| p.map(f32r)).collect::<Vec<_>>();
        Ok(SynthSample {
            heatmaps,
            iuv,
            j2d,
            j2d_gt,
            theta: params.pose,
            beta: params.beta,
            vertices: r3(&mesh.vertices),
            joints3d: r3(&mesh.joints),
            camera,
        })
    }

    fn render(&self, verts: &[[f64; 3]], cam: &PerspectiveCamera, h: usize, w: usize) -> Result<(IuvMap, crate::iuv::RasterBuffers)> {
        rasterize_iuv(verts, &self.model.faces, &self.model.iuv_template, &Projection::Perspective(*cam), h, w)
    }

    /// Re-renders the IUV map of a sample from its stored targets and camera
    /// (meaningful when vertex perturbation is off).
    pub fn regenerate_iuv(&self, theta: &[[f64; 3]], beta: &[f64; NUM_BETAS], camera: &SampleCamera) -> Result<IuvMap> {
        let mesh = self.prepared.evaluate(&SmplParams {
            pose: theta.to_vec(),
            beta: *beta,
        })?;
        let (m, _) = self.render(&mesh.vertices, &camera.cropped(), camera.crop.out_h, camera.crop.out_w)?;
        Ok(m)
    }

    /// Samples `first..first + n` in order.
    pub fn materialize(&self, first: u64, n: usize) -> Result<Vec<SynthSample>> {
        (0..n as u64).map(|i| self.sample(first + i)).collect()
    }
}

/// Checks sample shapes against the pose/joint conventions.
pub fn check_sample(s: &SynthSample, num_joints: usize) -> Result<()> {
    let (h, w) = (s.iuv.height, s.iuv.width);
    if s.heatmaps.len() != num_joints * h * w || s.j2d.len() != num_joints || s.j2d_gt.len() != num_joints {
        return Err(Error::shape("synth_sample", format!("inconsistent joint tensors for {}x{}", h, w)));
    }
    if s.theta.len() != NUM_JOINTS || s.joints3d.len() != num_joints {
        return Err(Error::shape("synth_sample", "inconsistent targets".to_string()));
    }
    s.iuv.validate()
}
