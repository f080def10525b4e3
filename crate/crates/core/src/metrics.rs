//! 3D pose and shape error metrics, in millimetres.
//!
//! Joint sets are root-aligned on the hip midpoint before MPJPE, PVE and
//! MPJPE-SC. PMPJPE, PCK and AUC use the optimal similarity alignment.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::body::COCO_HIPS;
use crate::error::{Error, Result};

pub type P3 = [f64; 3];

pub const PCK_THRESHOLD_MM: f64 = 150.0;
pub const AUC_STEP_MM: f64 = 5.0;

fn check_pair(op: &'static str, pred: &[P3], gt: &[P3]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::shape(op, format!("{} vs {} points", pred.len(), gt.len())));
    }
    Ok(())
}

fn dist(a: P3, b: P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Per-point Euclidean errors in mm, without alignment.
pub fn point_errors(pred: &[P3], gt: &[P3]) -> Result<Vec<f64>> {
    check_pair("point_errors", pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&p, &g)| 1000.0 * dist(p, g)).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean per-point error in mm without alignment.
pub fn mean_error(pred: &[P3], gt: &[P3]) -> Result<f64> {
    Ok(mean(&point_errors(pred, gt)?))
}

/// Midpoint of the two hips of a COCO-ordered joint set.
pub fn root(joints: &[P3]) -> Result<P3> {
    let [l, r] = COCO_HIPS;
    if joints.len() <= l.max(r) {
        return Err(Error::InvalidArgument(format!("{} joints have no hip pair", joints.len())));
    }
    Ok([0, 1, 2].map(|k| 0.5 * (joints[l][k] + joints[r][k])))
}

fn shift(points: &[P3], by: P3) -> Vec<P3> {
    points.iter().map(|&p| sub(p, by)).collect()
}

/// Root-aligned MPJPE.
pub fn mpjpe(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair("mpjpe", pred, gt)?;
    mean_error(&shift(pred, root(pred)?), &shift(gt, root(gt)?))
}

/// Per-vertex error with each mesh shifted by its own joint root.
pub fn pve(pred_v: &[P3], gt_v: &[P3], pred_root: P3, gt_root: P3) -> Result<f64> {
    check_pair("pve", pred_v, gt_v)?;
    mean_error(&shift(pred_v, pred_root), &shift(gt_v, gt_root))
}

/// Least-squares scale `<pred, gt> / <pred, pred>`.
pub fn least_squares_scale(pred: &[P3], gt: &[P3]) -> Result<f64> {
    let dot = |a: &[P3], b: &[P3]| a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum::<f64>();
    let pp = dot(pred, pred);
    if pp <= f64::MIN_POSITIVE {
        return Err(Error::Degenerate("scale correction of an all-zero prediction".into()));
    }
    Ok(dot(pred, gt) / pp)
}

fn scaled_error(p: &[P3], g: &[P3], s: f64) -> f64 {
    p.iter().zip(g).map(|(a, b)| dist(a.map(|v| v * s), *b)).sum::<f64>() / p.len() as f64
}

/// Root-aligned MPJPE after one global scale. The scale minimizes the mean
/// joint error itself (a convex 1-D problem), so the result never exceeds
/// plain MPJPE; each joint's own optimum brackets the search.
pub fn mpjpe_sc(pred: &[P3], gt: &[P3]) -> Result<f64> {
    check_pair("mpjpe_sc", pred, gt)?;
    let p = shift(pred, root(pred)?);
    let g = shift(gt, root(gt)?);
    let s_ls = least_squares_scale(&p, &g)?;
    let (mut lo, mut hi) = (s_ls.min(1.0), s_ls.max(1.0));
    for (a, b) in p.iter().zip(&g) {
        let aa = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        if aa > 0.0 {
            let si = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / aa;
            lo = lo.min(si);
            hi = hi.max(si);
        }
    }
    let f = |s: f64| scaled_error(&p, &g, s);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok(1000.0 * f1.min(f2).min(f(s_ls)))
}

/// Similarity `(s, R, t)` minimizing `sum |s R p + t - g|^2`.
#[derive(Clone, Copy, Debug)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: P3) -> P3 {
        let v = self.rotation * Vector3::from(p) * self.scale + self.translation;
        [v.x, v.y, v.z]
    }
}

fn centroid(pts: &[P3]) -> Vector3<f64> {
    pts.iter().fold(Vector3::zeros(), |a, p| a + Vector3::from(*p)) / pts.len() as f64
}

/// Closed-form orthogonal Procrustes with scale. Errors when `pred` is
/// collinear (rotation not determined).
pub fn procrustes(pred: &[P3], gt: &[P3]) -> Result<Similarity> {
    check_pair("procrustes", pred, gt)?;
    let (mp, mg) = (centroid(pred), centroid(gt));
    let mut k = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let x = Vector3::from(*p) - mp;
        let y = Vector3::from(*g) - mg;
        k += y * x.transpose();
        cov += x * x.transpose();
        var += x.norm_squared();
    }
    let sv = cov.symmetric_eigenvalues();
    let mut ev: Vec<f64> = sv.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if var <= f64::MIN_POSITIVE || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate("procrustes needs at least 3 non-collinear points".into()));
    }
    let svd = k.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (u * vt).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = u * fix * vt;
    // singular values are sorted, so a reflection flips the smallest
    let trace = (fix * Matrix3::from_diagonal(&svd.singular_values)).trace();
    let scale = trace / var;
    let translation = mg - rotation * mp * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// Per-joint errors after similarity alignment.
pub fn aligned_errors(pred: &[P3], gt: &[P3]) -> Result<Vec<f64>> {
    let t = procrustes(pred, gt)?;
    let aligned: Vec<P3> = pred.iter().map(|&p| t.apply(p)).collect();
    point_errors(&aligned, gt)
}

pub fn pmpjpe(pred: &[P3], gt: &[P3]) -> Result<f64> {
    Ok(mean(&aligned_errors(pred, gt)?))
}

/// `(PCK, AUC)` in percent from per-joint errors in mm. A joint counts as
/// correct when its error is at most the threshold; AUC averages PCK over
/// `0, 5, ..., threshold` mm.
pub fn pck_auc(errors_mm: &[f64], threshold: f64) -> (f64, f64) {
    if errors_mm.is_empty() {
        return (0.0, 0.0);
    }
    let pck = |t: f64| 100.0 * errors_mm.iter().filter(|&&e| e <= t).count() as f64 / errors_mm.len() as f64;
    let n = (threshold / AUC_STEP_MM).round() as usize;
    let auc = (0..=n).map(|i| pck(i as f64 * AUC_STEP_MM)).sum::<f64>() / (n + 1) as f64;
    (pck(threshold), auc)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleMetrics {
    pub mpjpe: f64,
    pub pmpjpe: f64,
    pub pve: f64,
    pub mpjpe_sc: f64,
    pub pck: f64,
    pub auc: f64,
}

impl SampleMetrics {
    pub fn compute(pred_j: &[P3], gt_j: &[P3], pred_v: &[P3], gt_v: &[P3]) -> Result<Self> {
        let aligned = aligned_errors(pred_j, gt_j)?;
        let (pck, auc) = pck_auc(&aligned, PCK_THRESHOLD_MM);
        Ok(Self {
            mpjpe: mpjpe(pred_j, gt_j)?,
            pmpjpe: mean(&aligned),
            pve: pve(pred_v, gt_v, root(pred_j)?, root(gt_j)?)?,
            mpjpe_sc: mpjpe_sc(pred_j, gt_j)?,
            pck,
            auc,
        })
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("mpjpe", self.mpjpe),
            ("pmpjpe", self.pmpjpe),
            ("pve", self.pve),
            ("mpjpe_sc", self.mpjpe_sc),
            ("pck", self.pck),
            ("auc", self.auc),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<SampleMetrics>,
    pub mean: SampleMetrics,
}

impl EvalReport {
    pub fn new(samples: Vec<SampleMetrics>) -> Self {
        let n = samples.len().max(1) as f64;
        let avg = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        let mean = SampleMetrics {
            mpjpe: avg(|s| s.mpjpe),
            pmpjpe: avg(|s| s.pmpjpe),
            pve: avg(|s| s.pve),
            mpjpe_sc: avg(|s| s.mpjpe_sc),
            pck: avg(|s| s.pck),
            auc: avg(|s| s.auc),
        };
        Self { samples, mean }
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples: {}", self.count());
        let _ = writeln!(s, "{:<10} {:>10}", "metric", "value");
        for (k, v) in self.mean.fields() {
            let unit = if k == "pck" || k == "auc" { "%" } else { "mm" };
            let _ = writeln!(s, "{:<10} {:>10.3} {}", k, v, unit);
        }
        let _ = writeln!(
            s,
            "root: hip midpoint; pck@{PCK_THRESHOLD_MM}mm and auc over 0..{PCK_THRESHOLD_MM}mm step {AUC_STEP_MM}mm after similarity alignment; mpjpe_sc uses one optimal scalar scale"
        );
        s
    }

    /// One `key=value` record per sample followed by the aggregate.
    pub fn records(&self) -> String {
        let line = |s: &mut String, head: String, m: &SampleMetrics| {
            let _ = write!(s, "{head}");
            for (k, v) in m.fields() {
                let _ = write!(s, " {k}={v:.6}");
            }
            s.push('\n');
        };
        let mut s = String::new();
        for (i, m) in self.samples.iter().enumerate() {
            line(&mut s, format!("sample={i}"), m);
        }
        line(&mut s, format!("aggregate count={}", self.count()), &self.mean);
        s
    }
}
