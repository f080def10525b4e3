//! Flat `key = value` run configuration. Unknown keys are rejected and
//! [`RunConfig::to_text`] writes every resolved value.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::body::NUM_COCO_JOINTS;
use crate::camera::default_focal;
use crate::error::{Error, Result};
use crate::represent::{default_heatmap_sigma, AugmentConfig, PartGroups};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    /// Two streams with cross-representation fusion.
    Cra,
    /// One encoder over concatenated heatmap and IUV channels.
    Concat,
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cra" => Ok(Arch::Cra),
            "concat" => Ok(Arch::Concat),
            _ => Err(Error::Config(format!("arch must be `cra` or `concat`, got `{}`", s))),
        }
    }
}

impl Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Cra => "cra",
            Arch::Concat => "concat",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub feat_height: usize,
    pub feat_width: usize,
    pub feat_channels: usize,
    pub mlp_channels: Vec<usize>,
    pub reg_hidden: usize,
    pub fuse_hidden: usize,
    pub ief_iters: usize,
    pub head_gain: f64,
    pub arch: Arch,
    pub num_joints: usize,

    pub sensor: usize,
    pub focal: f64,
    pub crop_scale: f64,
    pub heatmap_sigma: f64,
    pub beta_mean: f64,
    pub beta_std: f64,
    pub tx_std: f64,
    pub ty_std: f64,
    pub tz_mean: f64,
    pub tz_std: f64,
    pub tz_min: f64,
    pub augment_enabled: bool,
    pub augment: AugmentConfig,

    pub model: String,
    pub model_seed: u64,
    pub model_verts: usize,
    pub pose_bank: String,
    pub pose_bank_size: usize,

    pub batch_size: usize,
    pub steps: u64,
    pub lr: f64,
    pub train_samples: usize,
    pub train_dataset: String,
    pub eval_dataset: String,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub refine_steps: u64,
    pub refine_lr: f64,
}

/// Keys in the order they are written.
pub const KEYS: &[&str] = &[
    "seed",
    "height",
    "width",
    "feat_height",
    "feat_width",
    "feat_channels",
    "mlp_channels",
    "reg_hidden",
    "fuse_hidden",
    "ief_iters",
    "head_gain",
    "arch",
    "num_joints",
    "sensor",
    "focal",
    "crop_scale",
    "heatmap_sigma",
    "beta_mean",
    "beta_std",
    "tx_std",
    "ty_std",
    "tz_mean",
    "tz_std",
    "tz_min",
    "augment",
    "p_part_drop",
    "p_occlusion_box",
    "p_joint_jitter",
    "jitter_std",
    "box_min",
    "box_max",
    "vertex_perturb",
    "part_groups",
    "model",
    "model_seed",
    "model_verts",
    "pose_bank",
    "pose_bank_size",
    "batch_size",
    "steps",
    "lr",
    "train_samples",
    "train_dataset",
    "eval_dataset",
    "eval_every",
    "checkpoint_every",
    "log_every",
    "refine_steps",
    "refine_lr",
];

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{}` for `{}`", v, key)))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|x| parse_val(key, x.trim())).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_resolution(64, 64, 128)
    }
}

impl RunConfig {
    /// Defaults with resolution-dependent values derived from `h`, `w` and
    /// the render sensor size.
    pub fn for_resolution(height: usize, width: usize, sensor: usize) -> Self {
        let fuse_dim = 2 * (8 * 4 * 4 + 3 * 4 * 4 + 2 * NUM_COCO_JOINTS);
        Self {
            seed: 0,
            height,
            width,
            feat_height: 4,
            feat_width: 4,
            feat_channels: 128,
            mlp_channels: vec![64, 16, 8],
            reg_hidden: 256,
            fuse_hidden: fuse_dim,
            ief_iters: 3,
            head_gain: 0.01,
            arch: Arch::Cra,
            num_joints: NUM_COCO_JOINTS,
            sensor,
            focal: default_focal(sensor),
            crop_scale: 1.2,
            heatmap_sigma: default_heatmap_sigma(height),
            beta_mean: 0.0,
            beta_std: 1.25,
            tx_std: 0.05,
            ty_std: 0.05,
            tz_mean: 2.5,
            tz_std: 0.25,
            tz_min: 1.5,
            augment_enabled: true,
            augment: AugmentConfig::for_resolution(height),
            model: String::new(),
            model_seed: 7,
            model_verts: 600,
            pose_bank: String::new(),
            pose_bank_size: 2000,
            batch_size: 16,
            steps: 2000,
            lr: 1e-4,
            train_samples: 0,
            train_dataset: String::new(),
            eval_dataset: String::new(),
            eval_every: 0,
            checkpoint_every: 500,
            log_every: 50,
            refine_steps: 100,
            refine_lr: 1e-6,
        }
    }

    /// Length of the fusion regressor's feature input.
    pub fn fuse_input_dim(&self) -> usize {
        let hw = self.feat_height * self.feat_width;
        let cl = *self.mlp_channels.last().unwrap_or(&0);
        2 * (cl * hw + 3 * hw + 2 * self.num_joints)
    }

    /// Augmentation actually applied to network inputs.
    pub fn effective_augment(&self) -> AugmentConfig {
        if self.augment_enabled {
            self.augment.clone()
        } else {
            AugmentConfig {
                groups: self.augment.groups.clone(),
                ..AugmentConfig::disabled()
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("unknown key `{}`", k)));
            }
            if pairs.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key `{}`", k)));
            }
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str, d: usize| pairs.get(k).map_or(Ok(d), |v| parse_val(k, v));
        let height = get("height", 64)?;
        let width = get("width", height)?;
        let sensor = get("sensor", 128)?;
        let mut cfg = Self::for_resolution(height, width, sensor);
        // structural keys first so "auto" values resolve against them
        let order = ["feat_height", "feat_width", "mlp_channels", "num_joints"];
        for k in order {
            if let Some(v) = pairs.get(k) {
                cfg.set(k, v)?;
            }
        }
        cfg.fuse_hidden = cfg.fuse_input_dim();
        for (k, v) in pairs {
            if !order.contains(&k.as_str()) && !["height", "width", "sensor"].contains(&k.as_str()) {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; `auto` restores a derived default where one exists.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let auto = v == "auto";
        match key {
            "seed" => self.seed = parse_val(key, v)?,
            "height" => self.height = parse_val(key, v)?,
            "width" => self.width = parse_val(key, v)?,
            "feat_height" => self.feat_height = parse_val(key, v)?,
            "feat_width" => self.feat_width = parse_val(key, v)?,
            "feat_channels" => self.feat_channels = parse_val(key, v)?,
            "mlp_channels" => self.mlp_channels = parse_list(key, v)?,
            "reg_hidden" => self.reg_hidden = parse_val(key, v)?,
            "fuse_hidden" if auto => self.fuse_hidden = self.fuse_input_dim(),
            "fuse_hidden" => self.fuse_hidden = parse_val(key, v)?,
            "ief_iters" => self.ief_iters = parse_val(key, v)?,
            "head_gain" => self.head_gain = parse_val(key, v)?,
            "arch" => self.arch = v.parse()?,
            "num_joints" => self.num_joints = parse_val(key, v)?,
            "sensor" => self.sensor = parse_val(key, v)?,
            "focal" if auto => self.focal = default_focal(self.sensor),
            "focal" => self.focal = parse_val(key, v)?,
            "crop_scale" => self.crop_scale = parse_val(key, v)?,
            "heatmap_sigma" if auto => self.heatmap_sigma = default_heatmap_sigma(self.height),
            "heatmap_sigma" => self.heatmap_sigma = parse_val(key, v)?,
            "beta_mean" => self.beta_mean = parse_val(key, v)?,
            "beta_std" => self.beta_std = parse_val(key, v)?,
            "tx_std" => self.tx_std = parse_val(key, v)?,
            "ty_std" => self.ty_std = parse_val(key, v)?,
            "tz_mean" => self.tz_mean = parse_val(key, v)?,
            "tz_std" => self.tz_std = parse_val(key, v)?,
            "tz_min" => self.tz_min = parse_val(key, v)?,
            "augment" => self.augment_enabled = parse_val(key, v)?,
            "p_part_drop" => self.augment.p_part_drop = parse_val(key, v)?,
            "p_occlusion_box" => self.augment.p_occlusion_box = parse_val(key, v)?,
            "p_joint_jitter" => self.augment.p_joint_jitter = parse_val(key, v)?,
            "jitter_std" if auto => self.augment.jitter_std = 2.0 * self.height as f64 / 64.0,
            "jitter_std" => self.augment.jitter_std = parse_val(key, v)?,
            "box_min" => self.augment.box_min = parse_val(key, v)?,
            "box_max" => self.augment.box_max = parse_val(key, v)?,
            "vertex_perturb" => self.augment.vertex_perturb = parse_val(key, v)?,
            "part_groups" if auto => self.augment.groups = PartGroups::default(),
            "part_groups" => self.augment.groups = PartGroups::parse(v)?,
            "model" => self.model = v.to_string(),
            "model_seed" => self.model_seed = parse_val(key, v)?,
            "model_verts" => self.model_verts = parse_val(key, v)?,
            "pose_bank" => self.pose_bank = v.to_string(),
            "pose_bank_size" => self.pose_bank_size = parse_val(key, v)?,
            "batch_size" => self.batch_size = parse_val(key, v)?,
            "steps" => self.steps = parse_val(key, v)?,
            "lr" => self.lr = parse_val(key, v)?,
            "train_samples" => self.train_samples = parse_val(key, v)?,
            "train_dataset" => self.train_dataset = v.to_string(),
            "eval_dataset" => self.eval_dataset = v.to_string(),
            "eval_every" => self.eval_every = parse_val(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_val(key, v)?,
            "log_every" => self.log_every = parse_val(key, v)?,
            "refine_steps" => self.refine_steps = parse_val(key, v)?,
            "refine_lr" => self.refine_lr = parse_val(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{}`", key))),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let a = &self.augment;
        match key {
            "seed" => self.seed.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "feat_height" => self.feat_height.to_string(),
            "feat_width" => self.feat_width.to_string(),
            "feat_channels" => self.feat_channels.to_string(),
            "mlp_channels" => self.mlp_channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            "reg_hidden" => self.reg_hidden.to_string(),
            "fuse_hidden" => self.fuse_hidden.to_string(),
            "ief_iters" => self.ief_iters.to_string(),
            "head_gain" => self.head_gain.to_string(),
            "arch" => self.arch.to_string(),
            "num_joints" => self.num_joints.to_string(),
            "sensor" => self.sensor.to_string(),
            "focal" => self.focal.to_string(),
            "crop_scale" => self.crop_scale.to_string(),
            "heatmap_sigma" => self.heatmap_sigma.to_string(),
            "beta_mean" => self.beta_mean.to_string(),
            "beta_std" => self.beta_std.to_string(),
            "tx_std" => self.tx_std.to_string(),
            "ty_std" => self.ty_std.to_string(),
            "tz_mean" => self.tz_mean.to_string(),
            "tz_std" => self.tz_std.to_string(),
            "tz_min" => self.tz_min.to_string(),
            "augment" => self.augment_enabled.to_string(),
            "p_part_drop" => a.p_part_drop.to_string(),
            "p_occlusion_box" => a.p_occlusion_box.to_string(),
            "p_joint_jitter" => a.p_joint_jitter.to_string(),
            "jitter_std" => a.jitter_std.to_string(),
            "box_min" => a.box_min.to_string(),
            "box_max" => a.box_max.to_string(),
            "vertex_perturb" => a.vertex_perturb.to_string(),
            "part_groups" => a.groups.to_text(),
            "model" => self.model.clone(),
            "model_seed" => self.model_seed.to_string(),
            "model_verts" => self.model_verts.to_string(),
            "pose_bank" => self.pose_bank.clone(),
            "pose_bank_size" => self.pose_bank_size.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "steps" => self.steps.to_string(),
            "lr" => self.lr.to_string(),
            "train_samples" => self.train_samples.to_string(),
            "train_dataset" => self.train_dataset.clone(),
            "eval_dataset" => self.eval_dataset.clone(),
            "eval_every" => self.eval_every.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "log_every" => self.log_every.to_string(),
            "refine_steps" => self.refine_steps.to_string(),
            "refine_lr" => self.refine_lr.to_string(),
            _ => unreachable!("key list and accessor out of sync: {key}"),
        }
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{} = {}\n", k, self.value_of(k))).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("height", self.height),
            ("width", self.width),
            ("feat_height", self.feat_height),
            ("feat_width", self.feat_width),
            ("feat_channels", self.feat_channels),
            ("reg_hidden", self.reg_hidden),
            ("fuse_hidden", self.fuse_hidden),
            ("ief_iters", self.ief_iters),
            ("num_joints", self.num_joints),
            ("sensor", self.sensor),
            ("batch_size", self.batch_size),
            ("pose_bank_size", self.pose_bank_size),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{}` must be at least 1", k)));
        }
        for (k, full, feat) in [("height", self.height, self.feat_height), ("width", self.width, self.feat_width)] {
            if full % feat != 0 || !(full / feat).is_power_of_two() {
                return Err(Error::Config(format!("{} {} must be a power-of-two multiple of {}", k, full, feat)));
            }
        }
        if (self.height / self.feat_height) != (self.width / self.feat_width) {
            return Err(Error::Config("height and width must downsample by the same factor".into()));
        }
        if self.mlp_channels.is_empty() || self.mlp_channels.windows(2).any(|w| w[1] >= w[0]) || self.mlp_channels[0] == 0 {
            return Err(Error::Config(format!("mlp_channels {:?} must be non-empty and strictly decreasing", self.mlp_channels)));
        }
        let checks = [
            ("focal", self.focal > 0.0),
            ("crop_scale", self.crop_scale >= 1.0),
            ("heatmap_sigma", self.heatmap_sigma > 0.0),
            ("beta_std", self.beta_std > 0.0),
            ("tx_std", self.tx_std >= 0.0),
            ("ty_std", self.ty_std >= 0.0),
            ("tz_std", self.tz_std >= 0.0),
            ("tz_min", self.tz_min > 0.0),
            ("lr", self.lr >= 0.0 && self.lr.is_finite()),
            ("refine_lr", self.refine_lr >= 0.0 && self.refine_lr.is_finite()),
            ("head_gain", self.head_gain > 0.0),
        ];
        if let Some((k, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::Config(format!("`{}` is out of range", k)));
        }
        self.augment.validate()
    }
}
