//! Gaussian joint heatmaps and input-side augmentations (part drop,
//! occlusion boxes, joint jitter, vertex perturbation).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::body::NUM_PARTS;
use crate::camera::normalized_to_pixel;
use crate::error::{Error, Result};
use crate::iuv::IuvMap;

/// Unnormalized Gaussians `exp(-d^2 / (2 sigma^2))` evaluated at pixel
/// centers, one `H x W` plane per joint. Joints outside the frame give zero
/// planes. Joint coordinates are in pixels.
pub fn joints_to_heatmaps(j2d_px: &[[f64; 2]], h: usize, w: usize, sigma: f64) -> Result<Vec<f32>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("heatmap sigma must be positive, got {}", sigma)));
    }
    let mut out = vec![0.0f32; j2d_px.len() * h * w];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (j, p) in j2d_px.iter().enumerate() {
        let in_frame = p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w as f64 && p[1] < h as f64;
        if !in_frame {
            continue;
        }
        let plane = &mut out[j * h * w..(j + 1) * h * w];
        for y in 0..h {
            let dy = y as f64 + 0.5 - p[1];
            for x in 0..w {
                let dx = x as f64 + 0.5 - p[0];
                plane[y * w + x] = (-(dx * dx + dy * dy) * inv).exp() as f32;
            }
        }
    }
    Ok(out)
}

/// Heatmaps from normalized `[-1, 1]` joints.
pub fn heatmaps_from_normalized(j2d: &[[f64; 2]], h: usize, w: usize, sigma: f64) -> Result<Vec<f32>> {
    let px: Vec<[f64; 2]> = j2d.iter().map(|&p| normalized_to_pixel(p, w, h)).collect();
    joints_to_heatmaps(&px, h, w, sigma)
}

pub fn default_heatmap_sigma(h: usize) -> f64 {
    h as f64 / 64.0
}

pub const GROUP_NAMES: [&str; 6] = ["head", "torso", "left_arm", "right_arm", "left_leg", "right_leg"];

/// Assignment of the 24 surface parts to six coarse groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartGroups {
    /// `group[p]` for parts `1..=24`; index 0 unused.
    pub group: [usize; NUM_PARTS + 1],
}

impl Default for PartGroups {
    fn default() -> Self {
        let table: [&[usize]; 6] = [
            &[23, 24],
            &[1, 2],
            &[15, 17, 19, 21, 4],
            &[16, 18, 20, 22, 3],
            &[8, 10, 12, 14, 5],
            &[7, 9, 11, 13, 6],
        ];
        let mut group = [0; NUM_PARTS + 1];
        for (g, parts) in table.iter().enumerate() {
            for &p in *parts {
                group[p] = g;
            }
        }
        Self { group }
    }
}

impl PartGroups {
    /// Parses `head:23,24;torso:1,2;...` with all six groups.
    pub fn parse(text: &str) -> Result<Self> {
        let mut group = [usize::MAX; NUM_PARTS + 1];
        let mut seen_groups = [false; 6];
        for entry in text.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            let (name, parts) = entry
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("part group entry `{}` lacks `name:`", entry)))?;
            let g = GROUP_NAMES
                .iter()
                .position(|n| *n == name.trim())
                .ok_or_else(|| Error::Config(format!("unknown part group `{}`", name.trim())))?;
            seen_groups[g] = true;
            for p in parts.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let p: usize = p.parse().map_err(|_| Error::Config(format!("bad part index `{}`", p)))?;
                if !(1..=NUM_PARTS).contains(&p) {
                    return Err(Error::Config(format!("part index {} out of range", p)));
                }
                if group[p] != usize::MAX {
                    return Err(Error::Config(format!("part {} assigned twice", p)));
                }
                group[p] = g;
            }
        }
        if let Some(p) = (1..=NUM_PARTS).find(|&p| group[p] == usize::MAX) {
            return Err(Error::Config(format!("part {} not assigned to a group", p)));
        }
        if !seen_groups.iter().all(|&s| s) {
            return Err(Error::Config("all six part groups must be listed".into()));
        }
        group[0] = 0;
        Ok(Self { group })
    }

    pub fn to_text(&self) -> String {
        (0..6)
            .map(|g| {
                let parts: Vec<String> = (1..=NUM_PARTS).filter(|&p| self.group[p] == g).map(|p| p.to_string()).collect();
                format!("{}:{}", GROUP_NAMES[g], parts.join(","))
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_part_drop: f64,
    pub p_occlusion_box: f64,
    pub p_joint_jitter: f64,
    /// Pixels at the working resolution.
    pub jitter_std: f64,
    /// Box side range as a fraction of the image side.
    pub box_min: f64,
    pub box_max: f64,
    /// Half-width of the uniform per-vertex offset, meters.
    pub vertex_perturb: f64,
    pub groups: PartGroups,
}

impl AugmentConfig {
    /// Defaults for an `h`-pixel input.
    pub fn for_resolution(h: usize) -> Self {
        Self {
            p_part_drop: 0.2,
            p_occlusion_box: 0.2,
            p_joint_jitter: 0.2,
            jitter_std: 2.0 * h as f64 / 64.0,
            box_min: 0.1,
            box_max: 0.4,
            vertex_perturb: 0.01,
            groups: PartGroups::default(),
        }
    }

    pub fn disabled() -> Self {
        Self {
            p_part_drop: 0.0,
            p_occlusion_box: 0.0,
            p_joint_jitter: 0.0,
            vertex_perturb: 0.0,
            ..Self::for_resolution(64)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_part_drop", self.p_part_drop),
            ("p_occlusion_box", self.p_occlusion_box),
            ("p_joint_jitter", self.p_joint_jitter),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{} = {} is not a probability", name, p)));
            }
        }
        if !(self.jitter_std >= 0.0) || !(self.vertex_perturb >= 0.0) {
            return Err(Error::Config("jitter_std and vertex_perturb must be non-negative".into()));
        }
        if !(0.0 < self.box_min && self.box_min <= self.box_max && self.box_max <= 1.0) {
            return Err(Error::Config(format!("box range [{}, {}] must lie in (0, 1]", self.box_min, self.box_max)));
        }
        Ok(())
    }
}

/// Removes all pixels of one coarse group from the map.
pub fn drop_group(m: &mut IuvMap, groups: &PartGroups, g: usize) {
    for y in 0..m.height {
        for x in 0..m.width {
            let p = m.part(y, x);
            if p != 0 && groups.group[p] == g {
                m.clear(y, x);
            }
        }
    }
}

/// With probability `p_part_drop`, masks one uniformly chosen coarse group.
/// Returns the dropped group.
pub fn part_drop<R: Rng + ?Sized>(m: &mut IuvMap, cfg: &AugmentConfig, rng: &mut R) -> Option<usize> {
    if !rng.random_bool(cfg.p_part_drop) {
        return None;
    }
    let g = rng.random_range(0..GROUP_NAMES.len());
    drop_group(m, &cfg.groups, g);
    Some(g)
}

/// With probability `p_occlusion_box`, zeroes a rectangle whose sides are
/// drawn from `[box_min, box_max]` of the image side. Returns
/// `(x0, y0, w, h)` of the box.
pub fn occlusion_box<R: Rng + ?Sized>(
    m: &mut IuvMap,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Option<(usize, usize, usize, usize)> {
    if !rng.random_bool(cfg.p_occlusion_box) {
        return None;
    }
    let side = |n: usize, rng: &mut R| {
        let f = rng.random_range(cfg.box_min..=cfg.box_max);
        ((f * n as f64).round() as usize).clamp(1, n)
    };
    let (bw, bh) = (side(m.width, rng), side(m.height, rng));
    let x0 = rng.random_range(0..=m.width - bw);
    let y0 = rng.random_range(0..=m.height - bh);
    for y in y0..y0 + bh {
        for x in x0..x0 + bw {
            m.clear(y, x);
        }
    }
    Some((x0, y0, bw, bh))
}

/// With probability `p_joint_jitter`, adds i.i.d. Gaussian noise of
/// `jitter_std` pixels to every joint coordinate.
pub fn joint_jitter<R: Rng + ?Sized>(j2d_px: &mut [[f64; 2]], cfg: &AugmentConfig, rng: &mut R) -> bool {
    if !rng.random_bool(cfg.p_joint_jitter) || cfg.jitter_std == 0.0 {
        return false;
    }
    let n = Normal::new(0.0, cfg.jitter_std).expect("validated std");
    for p in j2d_px.iter_mut() {
        p[0] += n.sample(rng);
        p[1] += n.sample(rng);
    }
    true
}

/// Uniform per-coordinate offsets in `[-range, range]` meters.
pub fn vertex_perturb<R: Rng + ?Sized>(vertices: &mut [[f64; 3]], range: f64, rng: &mut R) {
    if range == 0.0 {
        return;
    }
    for v in vertices.iter_mut() {
        for c in v.iter_mut() {
            *c += rng.random_range(-range..=range);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> IuvMap {
        let mut m = IuvMap::background(h, w);
        for y in 0..h {
            for x in 0..w {
                if rng.random_bool(0.7) {
                    m.set(y, x, rng.random_range(1..=NUM_PARTS), rng.random(), rng.random());
                }
            }
        }
        m
    }

    #[test]
    fn heatmap_examples() {
        let hm = joints_to_heatmaps(&[[10.5, 10.5], [-3.0, 5.0], [12.5, 40.0]], 32, 32, 1.5).unwrap();
        let plane = &hm[..32 * 32];
        let (arg, max) = plane.iter().enumerate().fold((0, 0.0f32), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_eq!((arg / 32, arg % 32), (10, 10));
        assert_eq!(max, 1.0);
        assert!(hm[32 * 32..].iter().all(|&v| v == 0.0));
        assert!((plane[10 * 32 + 12] as f64 - (-0.5 * (2.0 / 1.5f64).powi(2)).exp()).abs() < 1e-6);
        let one = joints_to_heatmaps(&[[10.5, 10.5]], 32, 32, 2.0).unwrap();
        assert!((one[10 * 32 + 12] as f64 - (-0.5f64).exp()).abs() < 1e-6);
        assert!(plane.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(joints_to_heatmaps(&[[1.0, 1.0]], 4, 4, 0.0).is_err());
    }

    #[test]
    fn default_groups_cover_each_part_once() {
        let g = PartGroups::default();
        let mut counts = [0; 6];
        for p in 1..=NUM_PARTS {
            counts[g.group[p]] += 1;
        }
        assert_eq!(counts, [2, 2, 5, 5, 5, 5]);
        assert_eq!(PartGroups::parse(&g.to_text()).unwrap(), g);
        assert!(PartGroups::parse("head:23,24;torso:1,2").is_err());
        assert!(PartGroups::parse(&g.to_text().replace("torso:1,2", "torso:1,2,3")).is_err());
    }

    #[test]
    fn disabled_config_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AugmentConfig::disabled();
        let m = random_map(&mut rng, 16, 16);
        let mut m2 = m.clone();
        assert!(part_drop(&mut m2, &cfg, &mut rng).is_none());
        assert!(occlusion_box(&mut m2, &cfg, &mut rng).is_none());
        assert_eq!(m2, m);
        let mut j = vec![[3.0, 4.0]; 5];
        assert!(!joint_jitter(&mut j, &cfg, &mut rng));
        assert_eq!(j, vec![[3.0, 4.0]; 5]);
        let mut v = vec![[0.1, 0.2, 0.3]; 4];
        vertex_perturb(&mut v, cfg.vertex_perturb, &mut rng);
        assert_eq!(v, vec![[0.1, 0.2, 0.3]; 4]);
    }

    #[test]
    fn dropping_head_removes_exactly_head_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_map(&mut rng, 20, 20);
        let mut d = m.clone();
        drop_group(&mut d, &PartGroups::default(), 0);
        for y in 0..20 {
            for x in 0..20 {
                let p = m.part(y, x);
                if p == 23 || p == 24 {
                    assert_eq!(d.part(y, x), 0);
                } else {
                    assert_eq!((d.i(y, x), d.u(y, x), d.v(y, x)), (m.i(y, x), m.u(y, x), m.v(y, x)));
                }
            }
        }
    }

    #[test]
    fn vertex_perturbation_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = vec![[0.0; 3]; 1000];
        vertex_perturb(&mut v, 0.01, &mut rng);
        assert!(v.iter().flatten().all(|c| c.abs() <= 0.01));
        assert!(v.iter().flatten().any(|c| c.abs() > 0.009));
    }

    #[test]
    fn augmentations_preserve_invariants_and_are_reproducible() {
        let cfg = AugmentConfig {
            p_part_drop: 0.5,
            p_occlusion_box: 0.5,
            p_joint_jitter: 0.5,
            ..AugmentConfig::for_resolution(32)
        };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::new();
            for _ in 0..1000 {
                let mut m = random_map(&mut rng, 12, 12);
                part_drop(&mut m, &cfg, &mut rng);
                occlusion_box(&mut m, &cfg, &mut rng);
                m.validate().unwrap();
                let mut j = vec![[6.0, 6.0]; 3];
                joint_jitter(&mut j, &cfg, &mut rng);
                out.push((m, j));
            }
            out
        };
        assert_eq!(run(9), run(9));
    }
}
