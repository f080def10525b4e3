//! Perspective and weak-perspective projection, normalized image
//! coordinates and square crops.
//!
//! Pixel coordinates put pixel `(i, j)`'s center at `(j + 0.5, i + 0.5)`.
//! Normalized coordinates use `x_norm = 2 x_px / W - 1`, so the image spans
//! `[-1, 1]` edge to edge.

use crate::autodiff::{Graph, Var};
use crate::body::rotation::{mat_vec, Mat3, IDENTITY};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Default focal length in pixels for a square sensor of `size` pixels.
pub fn default_focal(size: usize) -> f64 {
    300.0 * size as f64 / 256.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerspectiveCamera {
    pub rotation: Mat3,
    pub translation: [f64; 3],
    pub focal: [f64; 2],
    pub principal: [f64; 2],
}

impl PerspectiveCamera {
    /// Identity rotation, principal point at the center of a `w x h` image.
    pub fn centered(translation: [f64; 3], focal: f64, w: usize, h: usize) -> Self {
        Self {
            rotation: IDENTITY,
            translation,
            focal: [focal, focal],
            principal: [w as f64 / 2.0, h as f64 / 2.0],
        }
    }

    pub fn to_camera_frame(&self, p: [f64; 3]) -> [f64; 3] {
        let r = mat_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakPerspectiveCamera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Projects to pixel coordinates; errors with the indices of points whose
/// camera-frame depth is not positive.
pub fn project_perspective(points: &[[f64; 3]], cam: &PerspectiveCamera) -> Result<Vec<[f64; 2]>> {
    let cam_pts: Vec<[f64; 3]> = points.iter().map(|&p| cam.to_camera_frame(p)).collect();
    let bad: Vec<usize> = cam_pts
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p[2] > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveDepth(bad));
    }
    Ok(cam_pts
        .iter()
        .map(|p| {
            [
                cam.focal[0] * p[0] / p[2] + cam.principal[0],
                cam.focal[1] * p[1] / p[2] + cam.principal[1],
            ]
        })
        .collect())
}

/// `(x, y) = s (X, Y) + t`, in normalized units.
pub fn project_weak_perspective(points: &[[f64; 3]], cam: &WeakPerspectiveCamera) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| [cam.scale * p[0] + cam.tx, cam.scale * p[1] + cam.ty])
        .collect()
}

/// Differentiable perspective projection of camera-frame points `(B, N, 3)`
/// with identity rotation; returns pixels `(B, N, 2)`. Depth is checked on
/// the forward values.
pub fn project_perspective_graph<T: Real>(
    g: &mut Graph<T>,
    points: Var,
    focal: [f64; 2],
    principal: [f64; 2],
) -> Result<Var> {
    let s = g.shape(points).to_vec();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::shape("project_perspective", format!("points {:?}", s)));
    }
    let bad: Vec<usize> = g
        .value(points)
        .data()
        .chunks(3)
        .enumerate()
        .filter(|(_, p)| !(p[2] > T::zero()))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveDepth(bad));
    }
    let x = g.slice(points, 2, 0, 1)?;
    let y = g.slice(points, 2, 1, 1)?;
    let z = g.slice(points, 2, 2, 1)?;
    let inv_z = g.reciprocal(z);
    let xz = g.mul(x, inv_z)?;
    let yz = g.mul(y, inv_z)?;
    let px = g.mul_scalar(xz, focal[0]);
    let px = g.add_scalar(px, principal[0]);
    let py = g.mul_scalar(yz, focal[1]);
    let py = g.add_scalar(py, principal[1]);
    g.concat(&[px, py], 2)
}

pub fn pixel_to_normalized(p: [f64; 2], w: usize, h: usize) -> [f64; 2] {
    [2.0 * p[0] / w as f64 - 1.0, 2.0 * p[1] / h as f64 - 1.0]
}

pub fn normalized_to_pixel(p: [f64; 2], w: usize, h: usize) -> [f64; 2] {
    [(p[0] + 1.0) * w as f64 / 2.0, (p[1] + 1.0) * h as f64 / 2.0]
}

/// Axis-aligned box in pixel coordinates, `min` inclusive, `max` exclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0]
    }
}

/// Square crop mapped to an output raster: `out = (p - origin) * out_size / side`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropTransform {
    pub origin: [f64; 2],
    pub side: f64,
    pub out_w: usize,
    pub out_h: usize,
}

impl CropTransform {
    pub fn scale_x(&self) -> f64 {
        self.out_w as f64 / self.side
    }

    pub fn scale_y(&self) -> f64 {
        self.out_h as f64 / self.side
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) * self.scale_x(),
            (p[1] - self.origin[1]) * self.scale_y(),
        ]
    }

    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] / self.scale_x() + self.origin[0],
            p[1] / self.scale_y() + self.origin[1],
        ]
    }

    /// Folds the crop into a centered perspective camera, so rendering with
    /// the returned camera at `out_w x out_h` equals cropping the full render.
    pub fn camera(&self, cam: &PerspectiveCamera) -> PerspectiveCamera {
        PerspectiveCamera {
            focal: [cam.focal[0] * self.scale_x(), cam.focal[1] * self.scale_y()],
            principal: [
                (cam.principal[0] - self.origin[0]) * self.scale_x(),
                (cam.principal[1] - self.origin[1]) * self.scale_y(),
            ],
            ..*cam
        }
    }
}

/// Square crop of side `scale * max(bbox sides)` centered on the box.
pub fn crop_transform(bbox: &BBox, scale: f64, out_h: usize, out_w: usize) -> Result<CropTransform> {
    let side = scale * bbox.width().max(bbox.height());
    if !(side > 0.0) || !side.is_finite() || out_h == 0 || out_w == 0 {
        return Err(Error::Degenerate(format!("cannot crop box {:?} at scale {}", bbox, scale)));
    }
    let c = bbox.center();
    Ok(CropTransform {
        origin: [c[0] - side / 2.0, c[1] - side / 2.0],
        side,
        out_w,
        out_h,
    })
}

/// Weak-perspective parameters that reproduce a perspective camera for
/// points near depth `z0` (after normalization to a `w x h` image).
pub fn weak_from_perspective(cam: &PerspectiveCamera, z0: f64, w: usize, h: usize) -> WeakPerspectiveCamera {
    let s = cam.focal[0] / (z0 * w as f64 / 2.0);
    let t = cam.translation;
    let c = pixel_to_normalized(cam.principal, w, h);
    WeakPerspectiveCamera {
        scale: s,
        tx: s * t[0] + c[0],
        ty: cam.focal[1] / (z0 * h as f64 / 2.0) * t[1] + c[1],
    }
}

/// Helper for graph code: camera parameters `(B, 3)` as a constant.
pub fn weak_tensor<T: Real>(cams: &[WeakPerspectiveCamera]) -> Tensor<T> {
    let data: Vec<f64> = cams.iter().flat_map(|c| [c.scale, c.tx, c.ty]).collect();
    Tensor::from_f64(&[cams.len(), 3], &data).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradcheck, GradcheckOptions};

    #[test]
    fn perspective_examples() {
        let cam = PerspectiveCamera::centered([0.0; 3], 1250.0, 64, 64);
        let p = project_perspective(&[[0.0, 0.0, 2.5], [0.1, 0.0, 2.5]], &cam).unwrap();
        assert_eq!(p[0], [32.0, 32.0]);
        assert!((p[1][0] - 82.0).abs() < 1e-12);
        let far = project_perspective(&[[0.1, 0.0, 5.0]], &cam).unwrap();
        assert!(((far[0][0] - 32.0) - (p[1][0] - 32.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perspective_rejects_behind_camera() {
        let cam = PerspectiveCamera::centered([0.0, 0.0, -1.0], 100.0, 32, 32);
        match project_perspective(&[[0.0, 0.0, 2.0], [0.0, 0.0, 0.5], [0.0, 0.0, 1.0]], &cam) {
            Err(Error::NonPositiveDepth(idx)) => assert_eq!(idx, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weak_perspective_examples() {
        let id = WeakPerspectiveCamera { scale: 1.0, tx: 0.0, ty: 0.0 };
        assert_eq!(project_weak_perspective(&[[0.3, -0.2, 7.0]], &id)[0], [0.3, -0.2]);
        let c = WeakPerspectiveCamera { scale: 2.0, tx: 0.1, ty: 0.0 };
        let p = project_weak_perspective(&[[0.2, 0.3, 1.0]], &c)[0];
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn weak_perspective_scale_gradient_is_orthographic_projection() {
        let pts = [[0.2, -0.4, 1.0], [0.7, 0.1, 3.0]];
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = pts.iter().flatten().copied().collect();
        let p = g.constant(Tensor::new(vec![1, 2, 3], data).unwrap());
        let cam = g.param(Tensor::new(vec![1, 3], vec![1.3, 0.1, -0.2]).unwrap());
        let out = g.weak_perspective(p, cam).unwrap();
        let x0 = g.slice(out, 1, 0, 1).unwrap();
        let x0 = g.slice(x0, 2, 0, 1).unwrap();
        let s = g.sum(x0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(cam).unwrap().data()[0], 0.2);
    }

    #[test]
    fn weak_and_perspective_agree_for_fronto_parallel_points() {
        let (w, h) = (64, 64);
        let z0 = 3.0;
        let cam = PerspectiveCamera::centered([0.0; 3], 80.0, w, h);
        let pts: Vec<[f64; 3]> = (0..20).map(|i| [0.05 * i as f64 - 0.5, 0.3 - 0.03 * i as f64, z0]).collect();
        let persp = project_perspective(&pts, &cam).unwrap();
        let weak = project_weak_perspective(&pts, &weak_from_perspective(&cam, z0, w, h));
        for (a, b) in persp.iter().zip(&weak) {
            let n = pixel_to_normalized(*a, w, h);
            assert!((n[0] - b[0]).abs() < 1e-6 && (n[1] - b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_roundtrip_is_exact() {
        for &(x, y) in &[(0.0, 0.0), (12.5, 63.0), (31.75, 0.25)] {
            let n = pixel_to_normalized([x, y], 64, 64);
            assert_eq!(normalized_to_pixel(n, 64, 64), [x, y]);
        }
    }

    #[test]
    fn perspective_graph_gradcheck() {
        let pts = Tensor::new(vec![1, 3, 3], vec![0.1, 0.2, 2.0, -0.3, 0.1, 2.5, 0.0, -0.4, 3.0]).unwrap();
        let report = gradcheck(
            |g, v| {
                let p = project_perspective_graph(g, v[0], [120.0, 110.0], [16.0, 16.0])?;
                Ok(g.sum(p))
            },
            &[pts],
            GradcheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn crop_examples() {
        let full = BBox { x_min: 0.0, y_min: 0.0, x_max: 64.0, y_max: 64.0 };
        let c = crop_transform(&full, 1.0, 64, 64).unwrap();
        assert_eq!(c.apply([10.0, 20.0]), [10.0, 20.0]);
        let b = BBox { x_min: 10.0, y_min: 4.0, x_max: 30.0, y_max: 40.0 };
        let c = crop_transform(&b, 1.2, 32, 32).unwrap();
        assert_eq!(c.apply(b.center()), [16.0, 16.0]);
        for p in [[0.0, 0.0], [13.3, 27.9], [50.0, 2.0]] {
            let back = c.inverse(c.apply(p));
            assert!((back[0] - p[0]).abs() < 0.5 && (back[1] - p[1]).abs() < 0.5);
        }
        let empty = BBox { x_min: 5.0, y_min: 5.0, x_max: 5.0, y_max: 5.0 };
        assert!(crop_transform(&empty, 1.2, 32, 32).is_err());
    }

    #[test]
    fn crop_folds_into_camera() {
        let cam = PerspectiveCamera::centered([0.05, -0.02, 2.4], 150.0, 128, 128);
        let b = BBox { x_min: 30.0, y_min: 10.0, x_max: 90.0, y_max: 120.0 };
        let crop = crop_transform(&b, 1.2, 32, 32).unwrap();
        let pts = [[0.1, 0.2, 0.0], [-0.3, 0.5, 0.1]];
        let direct = project_perspective(&pts, &crop.camera(&cam)).unwrap();
        let via = project_perspective(&pts, &cam).unwrap();
        for (d, v) in direct.iter().zip(&via) {
            let c = crop.apply(*v);
            assert!((d[0] - c[0]).abs() < 1e-9 && (d[1] - c[1]).abs() < 1e-9);
        }
    }
}
