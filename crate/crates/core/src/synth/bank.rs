use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::body::NUM_JOINTS;
use crate::error::{Error, Result};
use crate::io::Container;

pub type Pose = [[f64; 3]; NUM_JOINTS];

/// Axis-angle poses, `K x 24 x 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseBank {
    pub poses: Vec<Pose>,
}

/// Per-joint, per-component axis-angle bounds `[lo, hi]` in radians, for a
/// body in the camera frame (y down, facing -z) with arms out to the sides.
pub fn joint_limits() -> [[[f64; 2]; 3]; NUM_JOINTS] {
    let sym = |a: f64, b: f64, c: f64| [[-a, a], [-b, b], [-c, c]];
    let mut l = [sym(0.0, 0.0, 0.0); NUM_JOINTS];
    l[0] = sym(0.3, 0.6, 0.2);
    l[1] = [[-1.2, 0.4], [-0.3, 0.3], [-0.6, 0.2]];
    l[2] = [[-1.2, 0.4], [-0.3, 0.3], [-0.2, 0.6]];
    l[3] = sym(0.3, 0.3, 0.2);
    l[4] = [[0.0, 1.6], [-0.1, 0.1], [-0.1, 0.1]];
    l[5] = [[0.0, 1.6], [-0.1, 0.1], [-0.1, 0.1]];
    l[6] = sym(0.2, 0.2, 0.1);
    l[7] = sym(0.3, 0.2, 0.2);
    l[8] = sym(0.3, 0.2, 0.2);
    l[9] = sym(0.2, 0.2, 0.1);
    l[10] = sym(0.2, 0.1, 0.1);
    l[11] = sym(0.2, 0.1, 0.1);
    l[12] = sym(0.4, 0.4, 0.3);
    l[13] = sym(0.1, 0.2, 0.2);
    l[14] = sym(0.1, 0.2, 0.2);
    l[15] = sym(0.3, 0.4, 0.3);
    l[16] = [[-0.6, 0.6], [-0.6, 0.6], [-0.5, 1.3]];
    l[17] = [[-0.6, 0.6], [-0.6, 0.6], [-1.3, 0.5]];
    l[18] = [[-0.1, 0.1], [0.0, 1.8], [-0.1, 0.1]];
    l[19] = [[-0.1, 0.1], [-1.8, 0.0], [-0.1, 0.1]];
    l[20] = sym(0.3, 0.3, 0.3);
    l[21] = sym(0.3, 0.3, 0.3);
    l[22] = sym(0.1, 0.1, 0.1);
    l[23] = sym(0.1, 0.1, 0.1);
    l
}

/// Nearest `f32` value that stays inside `[lo, hi]`.
fn round_within(x: f64, lo: f64, hi: f64) -> f64 {
    let r = x as f32;
    if (r as f64) > hi {
        r.next_down() as f64
    } else if (r as f64) < lo {
        r.next_up() as f64
    } else {
        r as f64
    }
}

pub fn within_limits(pose: &Pose, limits: &[[[f64; 2]; 3]; NUM_JOINTS]) -> bool {
    pose.iter()
        .zip(limits)
        .all(|(aa, lim)| (0..3).all(|c| aa[c] >= lim[c][0] && aa[c] <= lim[c][1]))
}

impl PoseBank {
    /// Random anchor poses within the joint limits, with each bank entry an
    /// interpolation between two anchors plus clamped Gaussian noise.
    pub fn procedural(seed: u64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("pose bank needs at least one pose".into()));
        }
        let limits = joint_limits();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_anchors = (k / 8).clamp(2, 64);
        let anchors: Vec<Pose> = (0..n_anchors)
            .map(|_| {
                std::array::from_fn(|j| {
                    std::array::from_fn(|c| {
                        let [lo, hi] = limits[j][c];
                        if lo == hi {
                            lo
                        } else {
                            rng.random_range(lo..=hi)
                        }
                    })
                })
            })
            .collect();
        let noise = Normal::new(0.0, 0.08).expect("valid std");
        let poses = (0..k)
            .map(|_| {
                let a = &anchors[rng.random_range(0..n_anchors)];
                let b = &anchors[rng.random_range(0..n_anchors)];
                let t: f64 = rng.random();
                std::array::from_fn(|j| {
                    std::array::from_fn(|c| {
                        let [lo, hi] = limits[j][c];
                        let x = (1.0 - t) * a[j][c] + t * b[j][c] + noise.sample(&mut rng);
                        round_within(x.clamp(lo, hi), lo, hi)
                    })
                })
            })
            .collect();
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() {
            return Err(Error::InvalidArgument("empty pose bank".into()));
        }
        if !self.poses.iter().flatten().flatten().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("pose bank".into()));
        }
        Ok(())
    }

    /// Container with a single `poses` tensor of shape `(K, 72)`.
    pub fn to_container(&self) -> Result<Container> {
        let flat: Vec<f64> = self.poses.iter().flatten().flatten().copied().collect();
        let mut c = Container::new();
        c.insert_f64("poses", &[self.poses.len(), NUM_JOINTS * 3], &flat)?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (shape, data) = c.f32("poses")?;
        if shape.len() != 2 || shape[1] != NUM_JOINTS * 3 {
            return Err(Error::shape("pose_bank", format!("expected (K, 72), got {:?}", shape)));
        }
        let poses = data
            .chunks(NUM_JOINTS * 3)
            .map(|p| std::array::from_fn(|j| std::array::from_fn(|c| p[j * 3 + c] as f64)))
            .collect();
        let bank = Self { poses };
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }
}
