//! Procedural low-poly humanoid with the SMPL joint layout.
//!
//! The body is a union of closed capsules, one per limb segment plus torso
//! and head. Each capsule is split into angular patches that map one-to-one
//! onto the 24 IUV parts (front/back halves for torso and limbs, left/right
//! halves for the head, a single patch for hands and feet). Patches own
//! their vertices, so seam vertices are duplicated and every face is
//! part-pure. Joints are regressed as averages of capsule end rings, which
//! keeps them on the capsule axes for every shape.
//!
//! Geometry is laid out in an SMPL-like frame (y up, +z front) and mapped
//! into the camera frame (y down, facing -z) at the end, so the identity
//! pose stands upright facing a camera looking along +z.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BodyModel, NUM_BETAS, NUM_COCO_JOINTS, NUM_JOINTS, SMPL_PARENTS};
use crate::error::{Error, Result};

type P3 = [f64; 3];

fn add(a: P3, b: P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: P3, s: f64) -> P3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: P3) -> P3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

fn smooth(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Free parameters of the procedural body, in the y-up frame.
#[derive(Clone, Debug)]
struct Geom {
    joints: [P3; NUM_JOINTS],
    torso_r: [f64; 2],
    torso_bottom: f64,
    head_r: [f64; 2],
    head_len: f64,
    upper_leg_r: f64,
    lower_leg_r: f64,
    foot_r: f64,
    upper_arm_r: f64,
    lower_arm_r: f64,
    hand_r: f64,
}

impl Default for Geom {
    fn default() -> Self {
        let joints = [
            [0.0, 0.0, 0.0],
            [0.09, -0.08, 0.0],
            [-0.09, -0.08, 0.0],
            [0.0, 0.11, 0.0],
            [0.10, -0.47, 0.0],
            [-0.10, -0.47, 0.0],
            [0.0, 0.24, 0.0],
            [0.10, -0.87, 0.0],
            [-0.10, -0.87, 0.0],
            [0.0, 0.32, 0.0],
            [0.11, -0.93, 0.10],
            [-0.11, -0.93, 0.10],
            [0.0, 0.50, 0.0],
            [0.07, 0.42, 0.0],
            [-0.07, 0.42, 0.0],
            [0.0, 0.58, 0.0],
            [0.18, 0.44, 0.0],
            [-0.18, 0.44, 0.0],
            [0.44, 0.44, 0.0],
            [-0.44, 0.44, 0.0],
            [0.68, 0.44, 0.0],
            [-0.68, 0.44, 0.0],
            [0.76, 0.44, 0.0],
            [-0.76, 0.44, 0.0],
        ];
        Self {
            joints,
            torso_r: [0.15, 0.10],
            torso_bottom: 0.12,
            head_r: [0.085, 0.10],
            head_len: 0.28,
            upper_leg_r: 0.07,
            lower_leg_r: 0.052,
            foot_r: 0.04,
            upper_arm_r: 0.048,
            lower_arm_r: 0.04,
            hand_r: 0.035,
        }
    }
}

const LEG_JOINTS: [usize; 6] = [4, 5, 7, 8, 10, 11];
const ARM_JOINTS: [usize; 6] = [18, 19, 20, 21, 22, 23];

impl Geom {
    /// Shape mode `k` moved by `a` units; every parameter is affine in `a`.
    fn with_mode(&self, k: usize, a: f64) -> Geom {
        let mut g = self.clone();
        let pelvis_y = self.joints[0][1];
        match k {
            // stature
            0 => {
                let f = 1.0 + 0.03 * a;
                for j in g.joints.iter_mut() {
                    j[1] = pelvis_y + (j[1] - pelvis_y) * f;
                }
                g.torso_bottom *= f;
                g.head_len *= f;
            }
            // trunk and leg girth
            1 => {
                let f = 1.0 + 0.06 * a;
                g.torso_r = [g.torso_r[0] * f, g.torso_r[1] * f];
                g.upper_leg_r *= f;
                g.lower_leg_r *= f;
            }
            // leg length
            2 => {
                for &j in &LEG_JOINTS {
                    let hip_y = self.joints[if j % 2 == 0 { 1 } else { 2 }][1];
                    g.joints[j][1] = hip_y + (self.joints[j][1] - hip_y) * (1.0 + 0.05 * a);
                }
            }
            // arm length
            3 => {
                for &j in &ARM_JOINTS {
                    let sh_x = self.joints[if j % 2 == 0 { 16 } else { 17 }][0];
                    g.joints[j][0] = sh_x + (self.joints[j][0] - sh_x) * (1.0 + 0.05 * a);
                }
            }
            // shoulder width
            4 => {
                for j in [13, 14, 16, 17, 18, 19, 20, 21, 22, 23] {
                    g.joints[j][0] += self.joints[j][0].signum() * 0.012 * a;
                }
            }
            // hip width
            5 => {
                for j in [1, 2, 4, 5, 7, 8, 10, 11] {
                    g.joints[j][0] += self.joints[j][0].signum() * 0.01 * a;
                }
            }
            // torso length
            6 => {
                for (i, j) in g.joints.iter_mut().enumerate() {
                    if ![0, 1, 2].contains(&i) && !LEG_JOINTS.contains(&i) {
                        j[1] = pelvis_y + (j[1] - pelvis_y) * (1.0 + 0.04 * a);
                    }
                }
            }
            // head size
            7 => {
                let f = 1.0 + 0.08 * a;
                g.head_r = [g.head_r[0] * f, g.head_r[1] * f];
                g.head_len *= f;
            }
            // belly depth
            8 => g.torso_r[1] *= 1.0 + 0.10 * a,
            // arm and extremity thickness
            9 => {
                let f = 1.0 + 0.08 * a;
                g.upper_arm_r *= f;
                g.lower_arm_r *= f;
                g.hand_r *= f;
                g.foot_r *= f;
            }
            _ => unreachable!("shape mode {}", k),
        }
        g
    }
}

#[derive(Clone, Copy, Debug)]
enum Skin {
    /// Rigid on `driver`, blending half-way toward `start`/`end` near the
    /// capsule ends.
    Bone {
        driver: usize,
        start: Option<usize>,
        end: Option<usize>,
    },
    Torso,
}

#[derive(Clone, Copy, Debug)]
struct PatchSpec {
    part: usize,
    phi0: f64,
    phi1: f64,
}

#[derive(Clone, Debug)]
struct CapsuleSpec {
    patches: Vec<PatchSpec>,
    /// Reference direction for the second cross-section axis.
    reference: P3,
    skin: Skin,
}

fn halves(first: usize, second: usize, phi0: f64) -> Vec<PatchSpec> {
    vec![
        PatchSpec { part: first, phi0, phi1: phi0 + PI },
        PatchSpec { part: second, phi0: phi0 + PI, phi1: phi0 + TAU },
    ]
}

fn full(part: usize) -> Vec<PatchSpec> {
    vec![PatchSpec { part, phi0: 0.0, phi1: TAU }]
}

const FRONT: P3 = [0.0, 0.0, 1.0];
const UP: P3 = [0.0, 1.0, 0.0];

fn bone(driver: usize, start: Option<usize>, end: Option<usize>) -> Skin {
    Skin::Bone { driver, start, end }
}

/// Capsule order: torso, head, legs (upper, lower, foot; left then right),
/// arms (upper, lower, hand; left then right).
fn capsule_specs() -> Vec<CapsuleSpec> {
    let c = |patches, reference, skin| CapsuleSpec { patches, reference, skin };
    vec![
        // front half first: phi in [0, pi] faces +z
        c(halves(2, 1, 0.0), FRONT, Skin::Torso),
        c(halves(24, 23, -PI / 2.0), FRONT, bone(15, Some(12), None)),
        c(halves(10, 8, 0.0), FRONT, bone(1, Some(0), Some(4))),
        c(halves(9, 7, 0.0), FRONT, bone(2, Some(0), Some(5))),
        c(halves(14, 12, 0.0), FRONT, bone(4, Some(1), Some(7))),
        c(halves(13, 11, 0.0), FRONT, bone(5, Some(2), Some(8))),
        c(full(5), UP, bone(7, Some(4), Some(10))),
        c(full(6), UP, bone(8, Some(5), Some(11))),
        c(halves(17, 15, 0.0), FRONT, bone(16, Some(13), Some(18))),
        c(halves(18, 16, 0.0), FRONT, bone(17, Some(14), Some(19))),
        c(halves(21, 19, 0.0), FRONT, bone(18, Some(16), Some(20))),
        c(halves(22, 20, 0.0), FRONT, bone(19, Some(17), Some(21))),
        c(full(4), FRONT, bone(20, Some(18), Some(22))),
        c(full(3), FRONT, bone(21, Some(19), Some(23))),
    ]
}

/// Axis endpoints and cross-section radii of each capsule.
fn capsule_axes(g: &Geom) -> Vec<(P3, P3, [f64; 2])> {
    let j = &g.joints;
    let toe = |ankle: usize, foot: usize| add(j[ankle], scale(sub(j[foot], j[ankle]), 1.0 / FOOT_JOINT_T));
    let hand_tip = |wrist: usize, hand: usize| add(j[wrist], scale(sub(j[hand], j[wrist]), 1.0 / HAND_JOINT_T));
    let r = |x: f64| [x, x];
    vec![
        (sub(j[0], [0.0, g.torso_bottom, 0.0]), j[12], g.torso_r),
        (j[12], add(j[12], [0.0, g.head_len, 0.0]), g.head_r),
        (j[1], j[4], r(g.upper_leg_r)),
        (j[2], j[5], r(g.upper_leg_r)),
        (j[4], j[7], r(g.lower_leg_r)),
        (j[5], j[8], r(g.lower_leg_r)),
        (j[7], toe(7, 10), r(g.foot_r)),
        (j[8], toe(8, 11), r(g.foot_r)),
        (j[16], j[18], r(g.upper_arm_r)),
        (j[17], j[19], r(g.upper_arm_r)),
        (j[18], j[20], r(g.lower_arm_r)),
        (j[19], j[21], r(g.lower_arm_r)),
        (j[20], hand_tip(20, 22), r(g.hand_r)),
        (j[21], hand_tip(21, 23), r(g.hand_r)),
    ]
}

/// Position of the foot joint along the ankle-to-toe capsule axis.
const FOOT_JOINT_T: f64 = 0.6;
/// Position of the hand joint along the wrist-to-fingertip capsule axis.
const HAND_JOINT_T: f64 = 0.5;

/// Resolved tessellation of one patch.
#[derive(Clone, Debug)]
struct PatchTopo {
    spec: PatchSpec,
    /// Angular segments; the patch has `segments + 1` vertex columns.
    segments: usize,
    first_vertex: usize,
}

#[derive(Clone, Debug)]
struct CapsuleTopo {
    rings: usize,
    patches: Vec<PatchTopo>,
}

impl PatchTopo {
    fn columns(&self) -> usize {
        self.segments + 1
    }

    fn vertex(&self, ring: usize, col: usize) -> usize {
        self.first_vertex + ring * self.columns() + col
    }

    fn apex(&self, rings: usize, end: bool) -> usize {
        self.first_vertex + rings * self.columns() + end as usize
    }

    fn num_vertices(&self, rings: usize) -> usize {
        rings * self.columns() + 2
    }
}

fn topology(g: &Geom, around: usize, ring_spacing: f64) -> (Vec<CapsuleTopo>, usize) {
    let mut next = 0;
    let topo = capsule_specs()
        .into_iter()
        .zip(capsule_axes(g))
        .map(|(spec, (a, b, _))| {
            let len = dot(sub(b, a), sub(b, a)).sqrt();
            let rings = ((len / ring_spacing).round() as usize + 1).max(2);
            let patches = spec
                .patches
                .iter()
                .map(|&p| {
                    let segments = ((around as f64) * (p.phi1 - p.phi0) / TAU).round() as usize;
                    let t = PatchTopo { spec: p, segments, first_vertex: next };
                    next += t.num_vertices(rings);
                    t
                })
                .collect();
            CapsuleTopo { rings, patches }
        })
        .collect();
    (topo, next)
}

fn frame(a: P3, b: P3, reference: P3) -> (P3, P3, P3) {
    let d = normalize(sub(b, a));
    let e2 = normalize(sub(reference, scale(d, dot(reference, d))));
    let e1 = cross(d, e2);
    (d, e1, e2)
}

fn ring_s(ring: usize, rings: usize) -> f64 {
    ring as f64 / (rings - 1) as f64
}

fn patch_phi(p: &PatchTopo, col: usize) -> f64 {
    p.spec.phi0 + (p.spec.phi1 - p.spec.phi0) * col as f64 / p.segments as f64
}

fn positions(g: &Geom, topo: &[CapsuleTopo], nv: usize) -> Vec<P3> {
    let mut out = vec![[0.0; 3]; nv];
    for ((spec, ct), (a, b, r)) in capsule_specs().iter().zip(topo).zip(capsule_axes(g)) {
        let (d, e1, e2) = frame(a, b, spec.reference);
        let cap = 0.8 * r[0].min(r[1]);
        for p in &ct.patches {
            for ring in 0..ct.rings {
                let center = add(a, scale(sub(b, a), ring_s(ring, ct.rings)));
                for col in 0..p.columns() {
                    let phi = patch_phi(p, col);
                    let off = add(scale(e1, r[0] * phi.cos()), scale(e2, r[1] * phi.sin()));
                    out[p.vertex(ring, col)] = add(center, off);
                }
            }
            out[p.apex(ct.rings, false)] = sub(a, scale(d, cap));
            out[p.apex(ct.rings, true)] = add(b, scale(d, cap));
        }
    }
    out
}

fn faces_and_iuv(topo: &[CapsuleTopo], nv: usize) -> (Vec<[usize; 3]>, Vec<[f64; 3]>) {
    let mut faces = Vec::new();
    let mut iuv = vec![[0.0; 3]; nv];
    for ct in topo {
        let nr = ct.rings;
        for p in &ct.patches {
            let part = p.spec.part as f64;
            for ring in 0..nr {
                for col in 0..p.columns() {
                    iuv[p.vertex(ring, col)] = [part, col as f64 / p.segments as f64, ring_s(ring, nr)];
                }
            }
            iuv[p.apex(nr, false)] = [part, 0.5, 0.0];
            iuv[p.apex(nr, true)] = [part, 0.5, 1.0];
            for col in 0..p.segments {
                for ring in 0..nr - 1 {
                    let (v00, v01) = (p.vertex(ring, col), p.vertex(ring, col + 1));
                    let (v10, v11) = (p.vertex(ring + 1, col), p.vertex(ring + 1, col + 1));
                    faces.push([v00, v01, v11]);
                    faces.push([v00, v11, v10]);
                }
                faces.push([p.apex(nr, false), p.vertex(0, col + 1), p.vertex(0, col)]);
                faces.push([p.apex(nr, true), p.vertex(nr - 1, col), p.vertex(nr - 1, col + 1)]);
            }
        }
    }
    (faces, iuv)
}

/// `(vertex, weight)` pairs averaging the distinct angular samples of one
/// ring (or an end apex pair for degenerate rings).
fn ring_average(ct: &CapsuleTopo, ring: usize) -> Vec<(usize, f64)> {
    let mut verts = Vec::new();
    for p in &ct.patches {
        // the last column duplicates the next patch's first (or the seam)
        for col in 0..p.segments {
            verts.push(p.vertex(ring, col));
        }
    }
    let w = 1.0 / verts.len() as f64;
    verts.into_iter().map(|v| (v, w)).collect()
}

/// Point at axis parameter `t` as a blend of the two end rings.
fn axis_point(ct: &CapsuleTopo, t: f64) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    for (v, w) in ring_average(ct, 0) {
        row.push((v, w * (1.0 - t)));
    }
    for (v, w) in ring_average(ct, ct.rings - 1) {
        row.push((v, w * t));
    }
    row
}

fn combine(parts: &[(f64, Vec<(usize, f64)>)]) -> Vec<(usize, f64)> {
    parts
        .iter()
        .flat_map(|(s, row)| row.iter().map(move |&(v, w)| (v, w * s)))
        .collect()
}

const TORSO: usize = 0;
const HEAD: usize = 1;

/// Sparse rest-joint regressor rows.
fn rest_regressor_rows(g: &Geom, topo: &[CapsuleTopo]) -> Vec<Vec<(usize, f64)>> {
    let axes = capsule_axes(g);
    let torso_t = |y: f64| {
        let (a, b, _) = axes[TORSO];
        (y - a[1]) / (b[1] - a[1])
    };
    let j = &g.joints;
    let start = |c: usize| ring_average(&topo[c], 0);
    let end = |c: usize| ring_average(&topo[c], topo[c].rings - 1);
    let collar = |k: usize, arm: usize| {
        let (sh, co) = (j[axes_start_joint(arm)], j[k]);
        let alpha = 1.0 - co[0] / sh[0];
        let y = (co[1] - (1.0 - alpha) * sh[1]) / alpha;
        combine(&[(alpha, axis_point(&topo[TORSO], torso_t(y))), (1.0 - alpha, start(arm))])
    };
    let mut rows = vec![Vec::new(); NUM_JOINTS];
    rows[0] = axis_point(&topo[TORSO], torso_t(j[0][1]));
    rows[1] = start(2);
    rows[2] = start(3);
    rows[3] = axis_point(&topo[TORSO], torso_t(j[3][1]));
    rows[4] = end(2);
    rows[5] = end(3);
    rows[6] = axis_point(&topo[TORSO], torso_t(j[6][1]));
    rows[7] = end(4);
    rows[8] = end(5);
    rows[9] = axis_point(&topo[TORSO], torso_t(j[9][1]));
    rows[10] = axis_point(&topo[6], FOOT_JOINT_T);
    rows[11] = axis_point(&topo[7], FOOT_JOINT_T);
    rows[12] = end(TORSO);
    rows[13] = collar(13, 8);
    rows[14] = collar(14, 9);
    rows[15] = axis_point(&topo[HEAD], (j[15][1] - j[12][1]) / g.head_len);
    rows[16] = start(8);
    rows[17] = start(9);
    rows[18] = end(8);
    rows[19] = end(9);
    rows[20] = end(10);
    rows[21] = end(11);
    rows[22] = axis_point(&topo[12], HAND_JOINT_T);
    rows[23] = axis_point(&topo[13], HAND_JOINT_T);
    rows
}

/// Joint at the start of an arm capsule.
fn axes_start_joint(arm_capsule: usize) -> usize {
    match arm_capsule {
        8 => 16,
        9 => 17,
        _ => unreachable!(),
    }
}

/// COCO-17 regressor rows: limb joints reuse rest-joint rows, face
/// keypoints average the three nearest head vertices to anatomical targets.
fn coco_regressor_rows(g: &Geom, rest_rows: &[Vec<(usize, f64)>], pos: &[P3], iuv: &[[f64; 3]]) -> Vec<Vec<(usize, f64)>> {
    let neck = g.joints[12];
    let (rx, rz) = (g.head_r[0], g.head_r[1]);
    let at = |x: f64, h: f64, z: f64| [neck[0] + x, neck[1] + h * g.head_len, neck[2] + z];
    let targets = [
        at(0.0, 0.45, rz),
        at(0.3 * rx, 0.6, 0.85 * rz),
        at(-0.3 * rx, 0.6, 0.85 * rz),
        at(rx, 0.5, 0.0),
        at(-rx, 0.5, 0.0),
    ];
    let head_verts: Vec<usize> = (0..pos.len()).filter(|&v| iuv[v][0] >= 23.0).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = targets
        .iter()
        .map(|&t| {
            let mut by_dist: Vec<(f64, usize)> = head_verts
                .iter()
                .map(|&v| (dot(sub(pos[v], t), sub(pos[v], t)), v))
                .collect();
            by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
            by_dist.iter().take(3).map(|&(_, v)| (v, 1.0 / 3.0)).collect()
        })
        .collect();
    for smpl in [16, 17, 18, 19, 20, 21, 1, 2, 4, 5, 7, 8] {
        rows.push(rest_rows[smpl].clone());
    }
    debug_assert_eq!(rows.len(), NUM_COCO_JOINTS);
    rows
}

fn skin_weights(g: &Geom, topo: &[CapsuleTopo], pos: &[P3], nv: usize) -> Vec<f64> {
    let mut w = vec![0.0; nv * NUM_JOINTS];
    let axes = capsule_axes(g);
    for ((spec, ct), (a, b, _)) in capsule_specs().iter().zip(topo).zip(&axes) {
        let axis = sub(*b, *a);
        let len2 = dot(axis, axis);
        for p in &ct.patches {
            for v in p.first_vertex..p.first_vertex + p.num_vertices(ct.rings) {
                let s = (dot(sub(pos[v], *a), axis) / len2).clamp(0.0, 1.0);
                let row = &mut w[v * NUM_JOINTS..(v + 1) * NUM_JOINTS];
                match spec.skin {
                    Skin::Bone { driver, start, end } => {
                        let ws = start.map_or(0.0, |_| 0.5 * smooth((0.25 - s) / 0.25));
                        let we = end.map_or(0.0, |_| 0.5 * smooth((s - 0.75) / 0.25));
                        row[driver] += 1.0 - ws - we;
                        if let Some(j) = start {
                            row[j] += ws;
                        }
                        if let Some(j) = end {
                            row[j] += we;
                        }
                    }
                    Skin::Torso => torso_weights(g, &axes[TORSO], pos[v], s, row),
                }
            }
        }
    }
    w
}

fn torso_weights(g: &Geom, axis: &(P3, P3, [f64; 2]), p: P3, s: f64, row: &mut [f64]) {
    let (a, b, _) = *axis;
    let t_of = |j: usize| (g.joints[j][1] - a[1]) / (b[1] - a[1]);
    let knots = [(0usize, t_of(0)), (3, t_of(3)), (6, t_of(6)), (9, t_of(9)), (12, 1.0)];
    let mut base = [0.0; NUM_JOINTS];
    if s <= knots[0].1 {
        base[0] = 1.0;
    } else {
        for k in 0..knots.len() - 1 {
            let ((j0, t0), (j1, t1)) = (knots[k], knots[k + 1]);
            if s <= t1 || k == knots.len() - 2 {
                let f = ((s - t0) / (t1 - t0)).clamp(0.0, 1.0);
                base[j0] = 1.0 - f;
                base[j1] = f;
                break;
            }
        }
    }
    let side_left = (0.5 + p[0] / 0.1).clamp(0.0, 1.0);
    // hips below the pelvis
    let t0 = knots[0].1;
    let w_hip = 0.5 * smooth((t0 - s) / t0);
    // collars at the shoulders
    let t9 = knots[3].1;
    let w_col = 0.6 * smooth((s - t9) / (1.0 - t9)) * smooth((p[0].abs() - 0.04) / 0.08);
    let keep = 1.0 - w_hip - w_col;
    for (r, bw) in row.iter_mut().zip(base) {
        *r += bw * keep;
    }
    row[1] += w_hip * side_left;
    row[2] += w_hip * (1.0 - side_left);
    let (col_l, col_r) = if p[0] >= 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    row[13] += w_col * col_l;
    row[14] += w_col * col_r;
}

fn round32(x: f64) -> f64 {
    x as f32 as f64
}

/// y-up/+z-front to camera frame (y down, facing -z): rotation by pi about x.
fn to_camera(p: P3) -> P3 {
    [p[0], -p[1], -p[2]]
}

fn dense(rows: &[Vec<(usize, f64)>], nv: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len() * nv];
    for (r, row) in rows.iter().enumerate() {
        for &(v, w) in row {
            out[r * nv + v] += w;
        }
    }
    out.iter().map(|&x| round32(x)).collect()
}

/// Builds a toy body with roughly `target_vertices` vertices. The seed
/// perturbs body proportions; equal seeds give bitwise-equal models.
pub fn generate_toy_model(seed: u64, target_vertices: usize) -> Result<BodyModel> {
    if target_vertices < 200 {
        return Err(Error::InvalidArgument(format!(
            "toy model needs at least 200 vertices, got {}",
            target_vertices
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut geom = Geom::default();
    for k in 0..NUM_BETAS {
        geom = geom.with_mode(k, rng.random_range(-0.5..0.5));
    }

    let (around, spacing) = (3..200)
        .map(|q| (2 * q, 0.6 / q as f64))
        .min_by_key(|&(around, spacing)| {
            let (_, nv) = topology(&geom, around, spacing);
            (nv as i64 - target_vertices as i64).abs()
        })
        .unwrap();
    let (topo, nv) = topology(&geom, around, spacing);

    let pos = positions(&geom, &topo, nv);
    let (faces, iuv) = faces_and_iuv(&topo, nv);

    let mut shape_dirs = vec![0.0; nv * 3 * NUM_BETAS];
    for k in 0..NUM_BETAS {
        let plus = positions(&geom.with_mode(k, 1.0), &topo, nv);
        let minus = positions(&geom.with_mode(k, -1.0), &topo, nv);
        for v in 0..nv {
            let d = to_camera(scale(sub(plus[v], minus[v]), 0.5));
            for a in 0..3 {
                shape_dirs[(v * 3 + a) * NUM_BETAS + k] = round32(d[a]);
            }
        }
    }

    let mut skin = skin_weights(&geom, &topo, &pos, nv);
    for row in skin.chunks_mut(NUM_JOINTS) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w = round32(*w / s));
    }

    let rest_rows = rest_regressor_rows(&geom, &topo);
    let coco_rows = coco_regressor_rows(&geom, &rest_rows, &pos, &iuv);

    let model = BodyModel {
        template: pos.iter().map(|&p| to_camera(p).map(round32)).collect(),
        faces,
        shape_dirs,
        skin_weights: skin,
        parents: SMPL_PARENTS.to_vec(),
        rest_regressor: dense(&rest_rows, nv),
        joint_regressor: dense(&coco_rows, nv),
        iuv_template: iuv.iter().map(|t| t.map(round32)).collect(),
        pose_dirs: None,
    };
    model.validate()?;
    Ok(model)
}
