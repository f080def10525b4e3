use crate::autodiff::{PixelFace, UvAssignment};
use crate::camera::{normalized_to_pixel, PerspectiveCamera, WeakPerspectiveCamera};
use crate::error::{Error, Result};

use super::map::IuvMap;

/// Per-pixel visibility from the z-buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterBuffers {
    pub height: usize,
    pub width: usize,
    /// `+inf` on background.
    pub depth: Vec<f64>,
    /// `-1` on background.
    pub face_id: Vec<i32>,
    /// Barycentric weights in the face's own vertex order.
    pub bary: Vec<[f64; 3]>,
    pub degenerate_faces: usize,
}

impl RasterBuffers {
    pub fn empty(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            depth: vec![f64::INFINITY; n],
            face_id: vec![-1; n],
            bary: vec![[0.0; 3]; n],
            degenerate_faces: 0,
        }
    }

    pub fn covered(&self) -> usize {
        self.face_id.iter().filter(|&&f| f >= 0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// Renders in pixel space of the target raster.
    Perspective(PerspectiveCamera),
    /// Normalized image units; depth is the vertex z.
    WeakPerspective(WeakPerspectiveCamera),
}

/// Screen positions in pixels and depths for a `w x h` raster.
pub fn project_vertices(
    vertices: &[[f64; 3]],
    proj: &Projection,
    h: usize,
    w: usize,
) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    match proj {
        Projection::Perspective(cam) => {
            let screen = crate::camera::project_perspective(vertices, cam)?;
            let depth = vertices.iter().map(|&v| cam.to_camera_frame(v)[2]).collect();
            Ok((screen, depth))
        }
        Projection::WeakPerspective(cam) => {
            let screen = vertices
                .iter()
                .map(|v| normalized_to_pixel([cam.scale * v[0] + cam.tx, cam.scale * v[1] + cam.ty], w, h))
                .collect();
            Ok((screen, vertices.iter().map(|v| v[2]).collect()))
        }
    }
}

/// Edge function of directed edge `a -> b` at `q`, evaluated in a canonical
/// vertex order so the two faces sharing an edge see exact negatives.
#[inline]
fn edge_fn(p: &[[f64; 2]], a: usize, b: usize, q: [f64; 2]) -> f64 {
    let e = |s: [f64; 2], t: [f64; 2]| (t[0] - s[0]) * (q[1] - s[1]) - (t[1] - s[1]) * (q[0] - s[0]);
    if a < b {
        e(p[a], p[b])
    } else {
        -e(p[b], p[a])
    }
}

/// Top or left edge for positively oriented triangles in y-down pixels.
#[inline]
fn is_top_left(pa: [f64; 2], pb: [f64; 2]) -> bool {
    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Z-buffered coverage of screen-space triangles. Pixel centers sit at
/// half-integer coordinates, shared edges follow the top-left rule, and
/// equal depths keep the lower face index.
pub fn rasterize(screen: &[[f64; 2]], depth: &[f64], faces: &[[usize; 3]], h: usize, w: usize) -> Result<RasterBuffers> {
    if screen.len() != depth.len() {
        return Err(Error::shape("rasterize", format!("{} positions, {} depths", screen.len(), depth.len())));
    }
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v >= screen.len())) {
        return Err(Error::InvalidArgument(format!("face {:?} references a missing vertex", f)));
    }
    let mut buf = RasterBuffers::empty(h, w);
    for (fi, f) in faces.iter().enumerate() {
        let mut ord = *f;
        let area = {
            let (a, b, c) = (screen[ord[0]], screen[ord[1]], screen[ord[2]]);
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        };
        if area == 0.0 || !area.is_finite() || !f.iter().all(|&v| depth[v].is_finite()) {
            buf.degenerate_faces += 1;
            continue;
        }
        let swapped = area < 0.0;
        if swapped {
            ord.swap(1, 2);
        }
        let pts = [screen[ord[0]], screen[ord[1]], screen[ord[2]]];
        let lo = |k: usize| pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = |k: usize| pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        // one pixel of slack so rounding at the box edge cannot drop a pixel
        let range = |l: f64, u: f64, n: usize| {
            let a = (l - 1.5).floor().max(0.0) as usize;
            let b = ((u + 0.5).ceil().max(0.0) as usize).min(n);
            a..b
        };
        let top_left = [
            is_top_left(pts[1], pts[2]),
            is_top_left(pts[2], pts[0]),
            is_top_left(pts[0], pts[1]),
        ];
        for y in range(lo(1), hi(1), h) {
            for x in range(lo(0), hi(0), w) {
                let q = [x as f64 + 0.5, y as f64 + 0.5];
                let wts = [
                    edge_fn(screen, ord[1], ord[2], q),
                    edge_fn(screen, ord[2], ord[0], q),
                    edge_fn(screen, ord[0], ord[1], q),
                ];
                if !(0..3).all(|k| wts[k] > 0.0 || (wts[k] == 0.0 && top_left[k])) {
                    continue;
                }
                let sum = wts[0] + wts[1] + wts[2];
                let b = [wts[0] / sum, wts[1] / sum, wts[2] / sum];
                let z = b[0] * depth[ord[0]] + b[1] * depth[ord[1]] + b[2] * depth[ord[2]];
                let k = y * w + x;
                if z < buf.depth[k] {
                    buf.depth[k] = z;
                    buf.face_id[k] = fi as i32;
                    buf.bary[k] = if swapped { [b[0], b[2], b[1]] } else { b };
                }
            }
        }
    }
    Ok(buf)
}

/// Compact IUV map from visibility and per-vertex `(part, u, v)`.
pub fn iuv_from_buffers(buf: &RasterBuffers, faces: &[[usize; 3]], iuv_template: &[[f64; 3]]) -> IuvMap {
    let mut m = IuvMap::background(buf.height, buf.width);
    for (k, &fi) in buf.face_id.iter().enumerate() {
        if fi < 0 {
            continue;
        }
        let f = faces[fi as usize];
        let b = buf.bary[k];
        let part = iuv_template[f[0]][0] as usize;
        let mut uv = [0.0; 2];
        for c in 0..2 {
            uv[c] = (0..3).map(|i| b[i] * iuv_template[f[i]][c + 1]).sum::<f64>();
        }
        m.set(k / buf.width, k % buf.width, part, uv[0] as f32, uv[1] as f32);
    }
    m
}

pub fn rasterize_iuv(
    vertices: &[[f64; 3]],
    faces: &[[usize; 3]],
    iuv_template: &[[f64; 3]],
    proj: &Projection,
    h: usize,
    w: usize,
) -> Result<(IuvMap, RasterBuffers)> {
    if iuv_template.len() != vertices.len() {
        return Err(Error::shape("rasterize_iuv", format!("{} vertices, {} template rows", vertices.len(), iuv_template.len())));
    }
    let (screen, depth) = project_vertices(vertices, proj, h, w)?;
    let buf = rasterize(&screen, &depth, faces, h, w)?;
    if buf.degenerate_faces > 0 {
        log::debug!("rasterize_iuv: skipped {} degenerate faces", buf.degenerate_faces);
    }
    Ok((iuv_from_buffers(&buf, faces, iuv_template), buf))
}

/// Frozen face assignment for differentiable U/V interpolation over a batch
/// of rasters of equal size.
pub fn uv_assignment(bufs: &[RasterBuffers], faces: &[[usize; 3]], iuv_template: &[[f64; 3]]) -> Result<UvAssignment> {
    let (h, w) = bufs.first().map_or((0, 0), |b| (b.height, b.width));
    let mut pixels = Vec::with_capacity(bufs.len() * h * w);
    for b in bufs {
        if (b.height, b.width) != (h, w) {
            return Err(Error::shape("uv_assignment", format!("{}x{} vs {}x{}", b.height, b.width, h, w)));
        }
        pixels.extend(b.face_id.iter().map(|&fi| {
            (fi >= 0).then(|| {
                let f = faces[fi as usize];
                PixelFace {
                    verts: f,
                    u: f.map(|v| iuv_template[v][1]),
                    v: f.map(|v| iuv_template[v][2]),
                }
            })
        }));
    }
    Ok(UvAssignment {
        batch: bufs.len(),
        height: h,
        width: w,
        pixels,
    })
}
