//! Fused geometric operations with hand-written backward rules: rotation
//! parameterizations, kinematic chains, linear blend skinning, projection
//! and barycentric UV interpolation.
//!
//! Rotation matrices are stored row-major in the trailing 9 elements.

use super::graph::{Function, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

type V3<T> = [T; 3];
type M3<T> = [[T; 3]; 3];

#[inline]
fn dot<T: Real>(a: V3<T>, b: V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn scale<T: Real>(a: V3<T>, s: T) -> V3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn sub<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn add<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn load_m3<T: Real>(d: &[T]) -> M3<T> {
    [[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]]
}

fn store_m3<T: Real>(m: &M3<T>, d: &mut [T]) {
    for r in 0..3 {
        for c in 0..3 {
            d[r * 3 + c] = m[r][c];
        }
    }
}

fn mat_mul<T: Real>(a: &M3<T>, b: &M3<T>) -> M3<T> {
    let mut o = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            o[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    o
}

fn mat_vec<T: Real>(a: &M3<T>, v: V3<T>) -> V3<T> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn mat_t_vec<T: Real>(a: &M3<T>, v: V3<T>) -> V3<T> {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

fn transpose<T: Real>(a: &M3<T>) -> M3<T> {
    let mut o = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            o[r][c] = a[c][r];
        }
    }
    o
}

fn mat_add_assign<T: Real>(a: &mut M3<T>, b: &M3<T>) {
    for r in 0..3 {
        for c in 0..3 {
            a[r][c] += b[r][c];
        }
    }
}

fn outer<T: Real>(a: V3<T>, b: V3<T>) -> M3<T> {
    let mut o = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            o[r][c] = a[r] * b[c];
        }
    }
    o
}

/// Norm below which the first 6D column is rejected.
pub const ROT6D_MIN_NORM: f64 = 1e-8;

/// Angle below which Rodrigues' coefficients use their Taylor expansion.
pub const AXIS_ANGLE_TAYLOR: f64 = 1e-6;

/// Gram-Schmidt of the two 3-vectors in `r6`, returned as the columns
/// `[b1 b2 b3]` together with the intermediate norms.
pub(crate) fn rot6d_forward<T: Real>(r6: &[T]) -> Option<(V3<T>, V3<T>, V3<T>, T, T)> {
    let a1 = [r6[0], r6[1], r6[2]];
    let a2 = [r6[3], r6[4], r6[5]];
    let n1 = dot(a1, a1).sqrt();
    if !(n1.as_f64() >= ROT6D_MIN_NORM) {
        return None;
    }
    let b1 = scale(a1, T::one() / n1);
    let s = dot(b1, a2);
    let u2 = sub(a2, scale(b1, s));
    let n2 = dot(u2, u2).sqrt();
    if !(n2.as_f64() >= ROT6D_MIN_NORM) {
        return None;
    }
    let b2 = scale(u2, T::one() / n2);
    let b3 = cross(b1, b2);
    Some((b1, b2, b3, n1, n2))
}

struct Rot6d;

impl<T: Real> Function<T> for Rot6d {
    fn name(&self) -> &'static str {
        "rot6d_to_matrix"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0].data();
        let g = grad.data();
        let mut gx = vec![T::zero(); x.len()];
        for (i, (r6, gm)) in x.chunks(6).zip(g.chunks(9)).enumerate() {
            let (b1, b2, _b3, n1, n2) = rot6d_forward(r6).expect("validated in forward");
            let a2 = [r6[3], r6[4], r6[5]];
            // columns of the output matrix
            let col = |c: usize| [gm[c], gm[3 + c], gm[6 + c]];
            let (mut gb1, mut gb2, gb3) = (col(0), col(1), col(2));
            gb1 = add(gb1, cross(b2, gb3));
            gb2 = add(gb2, cross(gb3, b1));
            let gu2 = scale(sub(gb2, scale(b2, dot(b2, gb2))), T::one() / n2);
            let s = dot(b1, a2);
            let mut ga2 = gu2;
            let gs = -dot(b1, gu2);
            gb1 = sub(gb1, scale(gu2, s));
            gb1 = add(gb1, scale(a2, gs));
            ga2 = add(ga2, scale(b1, gs));
            let ga1 = scale(sub(gb1, scale(b1, dot(b1, gb1))), T::one() / n1);
            gx[i * 6..i * 6 + 3].copy_from_slice(&ga1);
            gx[i * 6 + 3..i * 6 + 6].copy_from_slice(&ga2);
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), gx).unwrap())]
    }
}

/// Rodrigues coefficients `(sin t / t, (1 - cos t) / t^2)` and their
/// derivatives divided by `t`, i.e. `d coef / d aa_i = aa_i * dcoef`.
fn rodrigues_coefs<T: Real>(aa: V3<T>) -> (T, T, T, T) {
    let t2 = dot(aa, aa);
    let t = t2.sqrt();
    if t.as_f64() < AXIS_ANGLE_TAYLOR {
        let alpha = T::one() - t2 / T::lit(6.0);
        let beta = T::lit(0.5) - t2 / T::lit(24.0);
        (alpha, beta, T::lit(-1.0 / 3.0), T::lit(-1.0 / 12.0))
    } else {
        let (s, c) = (t.sin(), t.cos());
        let alpha = s / t;
        let beta = (T::one() - c) / t2;
        let dalpha = (t * c - s) / (t2 * t);
        let dbeta = (t * s - T::lit(2.0) * (T::one() - c)) / (t2 * t2);
        (alpha, beta, dalpha, dbeta)
    }
}

fn skew<T: Real>(v: V3<T>) -> M3<T> {
    let z = T::zero();
    [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]]
}

pub(crate) fn axis_angle_matrix<T: Real>(aa: V3<T>) -> M3<T> {
    let (alpha, beta, _, _) = rodrigues_coefs(aa);
    let k = skew(aa);
    let k2 = mat_mul(&k, &k);
    let mut r = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { T::one() } else { T::zero() };
            r[i][j] = id + alpha * k[i][j] + beta * k2[i][j];
        }
    }
    r
}

struct AxisAngle;

impl<T: Real> Function<T> for AxisAngle {
    fn name(&self) -> &'static str {
        "axis_angle_to_matrix"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0].data();
        let g = grad.data();
        let mut gx = vec![T::zero(); x.len()];
        for (i, (a, gm)) in x.chunks(3).zip(g.chunks(9)).enumerate() {
            let aa = [a[0], a[1], a[2]];
            let (alpha, beta, da, db) = rodrigues_coefs(aa);
            let k = skew(aa);
            let k2 = mat_mul(&k, &k);
            let gmat = load_m3(gm);
            let frob = |m: &M3<T>| {
                let mut s = T::zero();
                for r in 0..3 {
                    for c in 0..3 {
                        s += m[r][c] * gmat[r][c];
                    }
                }
                s
            };
            let gk = frob(&k);
            let gk2 = frob(&k2);
            for comp in 0..3 {
                let mut e = [T::zero(); 3];
                e[comp] = T::one();
                let ei = skew(e);
                let eik = mat_mul(&ei, &k);
                let kei = mat_mul(&k, &ei);
                let mut sym = eik;
                mat_add_assign(&mut sym, &kei);
                let v = aa[comp] * da * gk + alpha * frob(&ei) + aa[comp] * db * gk2 + beta * frob(&sym);
                gx[i * 3 + comp] = v;
            }
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), gx).unwrap())]
    }
}

/// Composes per-joint rotations along a parent-indexed tree.
///
/// Inputs: rotations `(B, J, 9)`, rest joints `(B, J, 3)`. Output
/// `(B, J, 12)`: skinning transform `[R | t]` per joint with
/// `R = R_world`, `t = t_world - R_world * rest_joint`.
struct KinematicChain {
    parents: Vec<i32>,
}

fn chain_forward<T: Real>(
    parents: &[i32],
    rots: &[T],
    rest: &[T],
) -> (Vec<M3<T>>, Vec<V3<T>>) {
    let nj = parents.len();
    let mut rw: Vec<M3<T>> = Vec::with_capacity(nj);
    let mut tw: Vec<V3<T>> = Vec::with_capacity(nj);
    for k in 0..nj {
        let r = load_m3(&rots[k * 9..k * 9 + 9]);
        let j = [rest[k * 3], rest[k * 3 + 1], rest[k * 3 + 2]];
        if parents[k] < 0 {
            rw.push(r);
            tw.push(j);
        } else {
            let p = parents[k] as usize;
            let jp = [rest[p * 3], rest[p * 3 + 1], rest[p * 3 + 2]];
            let rwk = mat_mul(&rw[p], &r);
            let twk = add(mat_vec(&rw[p], sub(j, jp)), tw[p]);
            rw.push(rwk);
            tw.push(twk);
        }
    }
    (rw, tw)
}

impl<T: Real> Function<T> for KinematicChain {
    fn name(&self) -> &'static str {
        "kinematic_chain"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let nj = self.parents.len();
        let (rots, rest) = (inputs[0].data(), inputs[1].data());
        let g = grad.data();
        let batch = rots.len() / (nj * 9);
        let mut grot = vec![T::zero(); rots.len()];
        let mut grest = vec![T::zero(); rest.len()];
        for b in 0..batch {
            let r = &rots[b * nj * 9..(b + 1) * nj * 9];
            let j = &rest[b * nj * 3..(b + 1) * nj * 3];
            let (rw, _tw) = chain_forward(&self.parents, r, j);
            let jt = |k: usize| [j[k * 3], j[k * 3 + 1], j[k * 3 + 2]];
            let mut grw = vec![[[T::zero(); 3]; 3]; nj];
            let mut gtw = vec![[T::zero(); 3]; nj];
            let mut gj = vec![[T::zero(); 3]; nj];
            for k in 0..nj {
                let go = &g[(b * nj + k) * 12..(b * nj + k + 1) * 12];
                let ga_r = load_m3(&go[..9]);
                let ga_t = [go[9], go[10], go[11]];
                mat_add_assign(&mut grw[k], &ga_r);
                let o = outer(ga_t, jt(k));
                for rr in 0..3 {
                    for cc in 0..3 {
                        grw[k][rr][cc] -= o[rr][cc];
                    }
                }
                gtw[k] = add(gtw[k], ga_t);
                gj[k] = sub(gj[k], mat_t_vec(&rw[k], ga_t));
            }
            let mut gr = vec![[[T::zero(); 3]; 3]; nj];
            for k in (0..nj).rev() {
                let rk = load_m3(&r[k * 9..k * 9 + 9]);
                if self.parents[k] < 0 {
                    mat_add_assign(&mut gr[k], &grw[k]);
                    gj[k] = add(gj[k], gtw[k]);
                } else {
                    let p = self.parents[k] as usize;
                    let d = sub(jt(k), jt(p));
                    let to_parent = mat_mul(&grw[k], &transpose(&rk));
                    let to_rot = mat_mul(&transpose(&rw[p]), &grw[k]);
                    mat_add_assign(&mut grw[p], &to_parent);
                    mat_add_assign(&mut gr[k], &to_rot);
                    let o = outer(gtw[k], d);
                    mat_add_assign(&mut grw[p], &o);
                    let gd = mat_t_vec(&rw[p], gtw[k]);
                    gj[k] = add(gj[k], gd);
                    gj[p] = sub(gj[p], gd);
                    let gtk = gtw[k];
                    gtw[p] = add(gtw[p], gtk);
                }
            }
            for k in 0..nj {
                store_m3(&gr[k], &mut grot[(b * nj + k) * 9..(b * nj + k + 1) * 9]);
                grest[(b * nj + k) * 3..(b * nj + k + 1) * 3].copy_from_slice(&gj[k]);
            }
        }
        vec![
            needs[0].then(|| Tensor::new(inputs[0].shape().to_vec(), grot).unwrap()),
            needs[1].then(|| Tensor::new(inputs[1].shape().to_vec(), grest).unwrap()),
        ]
    }
}

/// Sparse skinning weights: per vertex, `(joint, weight)` pairs.
#[derive(Clone, Debug)]
pub struct SparseRows<T> {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseRows<T> {
    pub fn from_dense(data: &[f64], rows: usize, cols: usize) -> Self {
        let rows = (0..rows)
            .map(|r| {
                (0..cols)
                    .filter_map(|c| {
                        let v = data[r * cols + c];
                        (v != 0.0).then(|| (c, T::lit(v)))
                    })
                    .collect()
            })
            .collect();
        Self { cols, rows }
    }
}

/// `v' = sum_k w[v, k] (R_k v + t_k)`; inputs transforms `(B, J, 12)` and
/// rest-shaped vertices `(B, V, 3)`.
struct BlendSkin<T> {
    weights: std::sync::Arc<SparseRows<T>>,
}

impl<T: Real> Function<T> for BlendSkin<T> {
    fn name(&self) -> &'static str {
        "blend_skin"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (tf, verts) = (inputs[0].data(), inputs[1].data());
        let nj = self.weights.cols;
        let nv = self.weights.rows.len();
        let batch = verts.len() / (nv * 3);
        let g = grad.data();
        let mut gtf = vec![T::zero(); tf.len()];
        let mut gv = vec![T::zero(); verts.len()];
        for b in 0..batch {
            let t = &tf[b * nj * 12..(b + 1) * nj * 12];
            for (i, row) in self.weights.rows.iter().enumerate() {
                let vi = (b * nv + i) * 3;
                let v = [verts[vi], verts[vi + 1], verts[vi + 2]];
                let go = [g[vi], g[vi + 1], g[vi + 2]];
                let mut m = [[T::zero(); 3]; 3];
                for &(k, w) in row {
                    let tk = &t[k * 12..k * 12 + 12];
                    for r in 0..3 {
                        for c in 0..3 {
                            m[r][c] += w * tk[r * 3 + c];
                        }
                    }
                    if needs[0] {
                        let gk = &mut gtf[(b * nj + k) * 12..(b * nj + k + 1) * 12];
                        for r in 0..3 {
                            let wg = w * go[r];
                            for c in 0..3 {
                                gk[r * 3 + c] += wg * v[c];
                            }
                            gk[9 + r] += wg;
                        }
                    }
                }
                let gvi = mat_t_vec(&m, go);
                gv[vi..vi + 3].copy_from_slice(&gvi);
            }
        }
        vec![
            needs[0].then(|| Tensor::new(inputs[0].shape().to_vec(), gtf).unwrap()),
            needs[1].then(|| Tensor::new(inputs[1].shape().to_vec(), gv).unwrap()),
        ]
    }
}

/// `out[b, p, c] = sum_v M[p, v] x[b, v, c]` for a constant sparse `M`.
struct SparseLeftMatmul<T> {
    mat: std::sync::Arc<SparseRows<T>>,
}

impl<T: Real> Function<T> for SparseLeftMatmul<T> {
    fn name(&self) -> &'static str {
        "sparse_left_matmul"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let s = inputs[0].shape();
        let (batch, nv, nc) = (s[0], s[1], s[2]);
        let np = self.mat.rows.len();
        let g = grad.data();
        let mut gx = vec![T::zero(); inputs[0].numel()];
        for b in 0..batch {
            for (p, row) in self.mat.rows.iter().enumerate() {
                let go = &g[(b * np + p) * nc..(b * np + p + 1) * nc];
                for &(v, w) in row {
                    let dst = &mut gx[(b * nv + v) * nc..(b * nv + v + 1) * nc];
                    for (d, &gg) in dst.iter_mut().zip(go) {
                        *d += w * gg;
                    }
                }
            }
        }
        vec![Some(Tensor::new(s.to_vec(), gx).unwrap())]
    }
}

/// Points `(B, N, 3)` and cameras `(B, 3) = [s, tx, ty]` to `(B, N, 2)`.
struct WeakPerspective;

impl<T: Real> Function<T> for WeakPerspective {
    fn name(&self) -> &'static str {
        "weak_perspective"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (pts, cam) = (inputs[0].data(), inputs[1].data());
        let batch = cam.len() / 3;
        let n = pts.len() / (batch * 3);
        let g = grad.data();
        let mut gp = vec![T::zero(); pts.len()];
        let mut gc = vec![T::zero(); cam.len()];
        for b in 0..batch {
            let s = cam[b * 3];
            for i in 0..n {
                let pi = (b * n + i) * 3;
                let gi = (b * n + i) * 2;
                let (gx, gy) = (g[gi], g[gi + 1]);
                gp[pi] = s * gx;
                gp[pi + 1] = s * gy;
                gc[b * 3] += pts[pi] * gx + pts[pi + 1] * gy;
                gc[b * 3 + 1] += gx;
                gc[b * 3 + 2] += gy;
            }
        }
        vec![
            needs[0].then(|| Tensor::new(inputs[0].shape().to_vec(), gp).unwrap()),
            needs[1].then(|| Tensor::new(inputs[1].shape().to_vec(), gc).unwrap()),
        ]
    }
}

/// One rendered pixel's face, used to interpolate per-vertex UV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelFace {
    pub verts: [usize; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
}

/// Frozen visibility for [`Graph::interp_uv`]: `(B, H, W)` pixel faces.
#[derive(Clone, Debug)]
pub struct UvAssignment {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<Option<PixelFace>>,
}

/// Signed double area of `(p, q, r)`; positive for the vertex order used by
/// the rasterizer.
#[inline]
pub fn edge<T: Real>(p: [T; 2], q: [T; 2], r: [T; 2]) -> T {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

/// Partial derivatives of [`edge`] w.r.t. `p`, `q`, `r`.
#[inline]
fn edge_grad<T: Real>(p: [T; 2], q: [T; 2], r: [T; 2]) -> [[T; 2]; 3] {
    [
        [q[1] - r[1], r[0] - q[0]],
        [r[1] - p[1], p[0] - r[0]],
        [p[1] - q[1], q[0] - p[0]],
    ]
}

/// Barycentric weights of `pt` in `(a, b, c)`.
#[inline]
pub fn barycentric<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2], pt: [T; 2]) -> [T; 3] {
    let area = edge(a, b, c);
    [edge(b, c, pt) / area, edge(c, a, pt) / area, edge(a, b, pt) / area]
}

struct InterpUv {
    assign: std::sync::Arc<UvAssignment>,
    to_px: [f64; 4],
}

impl InterpUv {
    fn pixel_pos<T: Real>(&self, xy: &[T], b: usize, nv: usize, vi: usize) -> [T; 2] {
        let k = (b * nv + vi) * 2;
        [
            xy[k] * T::lit(self.to_px[0]) + T::lit(self.to_px[1]),
            xy[k + 1] * T::lit(self.to_px[2]) + T::lit(self.to_px[3]),
        ]
    }
}

impl<T: Real> Function<T> for InterpUv {
    fn name(&self) -> &'static str {
        "interp_uv"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let xy = inputs[0].data();
        let nv = inputs[0].shape()[1];
        let a = &self.assign;
        let hw = a.height * a.width;
        let g = grad.data();
        let mut gxy = vec![T::zero(); xy.len()];
        for b in 0..a.batch {
            for pix in 0..hw {
                let Some(f) = a.pixels[b * hw + pix] else { continue };
                let (py, px) = (pix / a.width, pix % a.width);
                let pt = [T::lit(px as f64 + 0.5), T::lit(py as f64 + 0.5)];
                let p: Vec<[T; 2]> = f.verts.iter().map(|&v| self.pixel_pos(xy, b, nv, v)).collect();
                let area = edge(p[0], p[1], p[2]);
                let e = [edge(p[1], p[2], pt), edge(p[2], p[0], pt), edge(p[0], p[1], pt)];
                let gu = g[(b * 2) * hw + pix];
                let gv = g[(b * 2 + 1) * hw + pix];
                // d out / d e_i = (u_i) / area ; d out / d area = -out / area
                let mut coef_e = [T::zero(); 3];
                let mut out_val = T::zero();
                for i in 0..3 {
                    let c = gu * T::lit(f.u[i]) + gv * T::lit(f.v[i]);
                    coef_e[i] = c / area;
                    out_val += c * e[i];
                }
                let coef_area = -out_val / (area * area);
                // e_0 = edge(p1, p2, pt), e_1 = edge(p2, p0, pt), e_2 = edge(p0, p1, pt)
                let mut gp = [[T::zero(); 2]; 3];
                let pairs = [(1usize, 2usize), (2, 0), (0, 1)];
                for (i, &(qa, qb)) in pairs.iter().enumerate() {
                    let eg = edge_grad(p[qa], p[qb], pt);
                    for d in 0..2 {
                        gp[qa][d] += coef_e[i] * eg[0][d];
                        gp[qb][d] += coef_e[i] * eg[1][d];
                    }
                }
                let ag = edge_grad(p[0], p[1], p[2]);
                for (vi, agv) in ag.iter().enumerate() {
                    for d in 0..2 {
                        gp[vi][d] += coef_area * agv[d];
                    }
                }
                for (k, &v) in f.verts.iter().enumerate() {
                    let idx = (b * nv + v) * 2;
                    gxy[idx] += gp[k][0] * T::lit(self.to_px[0]);
                    gxy[idx + 1] += gp[k][1] * T::lit(self.to_px[2]);
                }
            }
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), gxy).unwrap())]
    }
}

fn check_last_dim(op: &'static str, shape: &[usize], dim: usize) -> Result<()> {
    if shape.last() != Some(&dim) {
        return Err(Error::shape(op, format!("expected trailing dim {}, got {:?}", dim, shape)));
    }
    Ok(())
}

impl<T: Real> Graph<T> {
    /// `(..., 6) -> (..., 9)` via Gram-Schmidt; errors on a near-zero first
    /// column (or a second column parallel to it).
    pub fn rot6d_to_matrix(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        check_last_dim("rot6d_to_matrix", &s, 6)?;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(data.len() / 6 * 9);
        for (i, r6) in data.chunks(6).enumerate() {
            let Some((b1, b2, b3, _, _)) = rot6d_forward(r6) else {
                return Err(Error::Degenerate(format!(
                    "rot6d entry {} has a near-zero column (norm < {:e})",
                    i, ROT6D_MIN_NORM
                )));
            };
            for r in 0..3 {
                out.extend_from_slice(&[b1[r], b2[r], b3[r]]);
            }
        }
        let mut os = s;
        *os.last_mut().unwrap() = 9;
        let value = Tensor::new(os, out)?;
        Ok(self.push(value, vec![x], Box::new(Rot6d)))
    }

    /// `(..., 3) -> (..., 9)` via Rodrigues' formula.
    pub fn axis_angle_to_matrix(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        check_last_dim("axis_angle_to_matrix", &s, 3)?;
        let data = self.value(x).data();
        let mut out = vec![T::zero(); data.len() / 3 * 9];
        for (a, o) in data.chunks(3).zip(out.chunks_mut(9)) {
            store_m3(&axis_angle_matrix([a[0], a[1], a[2]]), o);
        }
        let mut os = s;
        *os.last_mut().unwrap() = 9;
        let value = Tensor::new(os, out)?;
        Ok(self.push(value, vec![x], Box::new(AxisAngle)))
    }

    /// Rotations `(B, J, 9)` and rest joints `(B, J, 3)` to skinning
    /// transforms `(B, J, 12)`. `parents` must be topologically sorted.
    pub fn kinematic_chain(&mut self, rots: Var, rest: Var, parents: &[i32]) -> Result<Var> {
        let (sr, sj) = (self.shape(rots).to_vec(), self.shape(rest).to_vec());
        let nj = parents.len();
        if sr.len() != 3 || sj.len() != 3 || sr[0] != sj[0] || sr[1] != nj || sj[1] != nj || sr[2] != 9 || sj[2] != 3 {
            return Err(Error::shape(
                "kinematic_chain",
                format!("rots {:?}, rest {:?}, {} joints", sr, sj, nj),
            ));
        }
        let batch = sr[0];
        let (rd, jd) = (self.value(rots).data(), self.value(rest).data());
        let mut out = vec![T::zero(); batch * nj * 12];
        for b in 0..batch {
            let j = &jd[b * nj * 3..(b + 1) * nj * 3];
            let (rw, tw) = chain_forward(parents, &rd[b * nj * 9..(b + 1) * nj * 9], j);
            for k in 0..nj {
                let o = &mut out[(b * nj + k) * 12..(b * nj + k + 1) * 12];
                store_m3(&rw[k], &mut o[..9]);
                let jk = [j[k * 3], j[k * 3 + 1], j[k * 3 + 2]];
                let t = sub(tw[k], mat_vec(&rw[k], jk));
                o[9..12].copy_from_slice(&t);
            }
        }
        let value = Tensor::new(vec![batch, nj, 12], out)?;
        Ok(self.push(
            value,
            vec![rots, rest],
            Box::new(KinematicChain {
                parents: parents.to_vec(),
            }),
        ))
    }

    /// Linear blend skinning of `(B, V, 3)` vertices by `(B, J, 12)`
    /// transforms.
    pub fn blend_skin(
        &mut self,
        transforms: Var,
        verts: Var,
        weights: &std::sync::Arc<SparseRows<T>>,
    ) -> Result<Var> {
        let (st, sv) = (self.shape(transforms).to_vec(), self.shape(verts).to_vec());
        let (nj, nv) = (weights.cols, weights.rows.len());
        if st.len() != 3 || sv.len() != 3 || st[0] != sv[0] || st[1] != nj || st[2] != 12 || sv[1] != nv || sv[2] != 3 {
            return Err(Error::shape(
                "blend_skin",
                format!("transforms {:?}, verts {:?}, weights {}x{}", st, sv, nv, nj),
            ));
        }
        let batch = st[0];
        let (td, vd) = (self.value(transforms).data(), self.value(verts).data());
        let mut out = vec![T::zero(); vd.len()];
        for b in 0..batch {
            let t = &td[b * nj * 12..(b + 1) * nj * 12];
            for (i, row) in weights.rows.iter().enumerate() {
                let vi = (b * nv + i) * 3;
                let v = [vd[vi], vd[vi + 1], vd[vi + 2]];
                let mut acc = [T::zero(); 3];
                for &(k, w) in row {
                    let tk = &t[k * 12..k * 12 + 12];
                    for r in 0..3 {
                        acc[r] += w * (tk[r * 3] * v[0] + tk[r * 3 + 1] * v[1] + tk[r * 3 + 2] * v[2] + tk[9 + r]);
                    }
                }
                out[vi..vi + 3].copy_from_slice(&acc);
            }
        }
        let value = Tensor::new(sv, out)?;
        Ok(self.push(
            value,
            vec![transforms, verts],
            Box::new(BlendSkin {
                weights: weights.clone(),
            }),
        ))
    }

    /// `(B, V, C) -> (B, P, C)` by a constant sparse `(P, V)` matrix.
    pub fn sparse_left_matmul(&mut self, mat: &std::sync::Arc<SparseRows<T>>, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[1] != mat.cols {
            return Err(Error::shape(
                "sparse_left_matmul",
                format!("matrix {}x{} vs input {:?}", mat.rows.len(), mat.cols, s),
            ));
        }
        let (batch, nv, nc) = (s[0], s[1], s[2]);
        let np = mat.rows.len();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); batch * np * nc];
        for b in 0..batch {
            for (p, row) in mat.rows.iter().enumerate() {
                let dst = &mut out[(b * np + p) * nc..(b * np + p + 1) * nc];
                for &(v, w) in row {
                    let src = &xd[(b * nv + v) * nc..(b * nv + v + 1) * nc];
                    for (d, &xv) in dst.iter_mut().zip(src) {
                        *d += w * xv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch, np, nc], out)?;
        Ok(self.push(value, vec![x], Box::new(SparseLeftMatmul { mat: mat.clone() })))
    }

    /// Scaled orthographic projection `s * (X, Y) + (tx, ty)`.
    pub fn weak_perspective(&mut self, points: Var, cam: Var) -> Result<Var> {
        let (sp, sc) = (self.shape(points).to_vec(), self.shape(cam).to_vec());
        if sp.len() != 3 || sp[2] != 3 || sc != [sp[0], 3] {
            return Err(Error::shape("weak_perspective", format!("points {:?}, cam {:?}", sp, sc)));
        }
        let (batch, n) = (sp[0], sp[1]);
        let (pd, cd) = (self.value(points).data(), self.value(cam).data());
        let mut out = Vec::with_capacity(batch * n * 2);
        for b in 0..batch {
            let (s, tx, ty) = (cd[b * 3], cd[b * 3 + 1], cd[b * 3 + 2]);
            for i in 0..n {
                let pi = (b * n + i) * 3;
                out.push(s * pd[pi] + tx);
                out.push(s * pd[pi + 1] + ty);
            }
        }
        let value = Tensor::new(vec![batch, n, 2], out)?;
        Ok(self.push(value, vec![points, cam], Box::new(WeakPerspective)))
    }

    /// Barycentric U/V interpolation `(B, 2, H, W)` from normalized
    /// projected vertices `(B, V, 2)` with a frozen face assignment.
    /// Pixel coordinates are `x_px = (x + 1) * W / 2`.
    pub fn interp_uv(&mut self, xy: Var, assign: &std::sync::Arc<UvAssignment>) -> Result<Var> {
        let s = self.shape(xy).to_vec();
        if s.len() != 3 || s[2] != 2 || s[0] != assign.batch {
            return Err(Error::shape("interp_uv", format!("xy {:?}, batch {}", s, assign.batch)));
        }
        let (w, h) = (assign.width as f64, assign.height as f64);
        let op = InterpUv {
            assign: assign.clone(),
            to_px: [w / 2.0, w / 2.0, h / 2.0, h / 2.0],
        };
        let nv = s[1];
        let xd = self.value(xy).data();
        let hw = assign.height * assign.width;
        let mut out = vec![T::zero(); assign.batch * 2 * hw];
        for b in 0..assign.batch {
            for pix in 0..hw {
                let Some(f) = assign.pixels[b * hw + pix] else { continue };
                if f.verts.iter().any(|&v| v >= nv) {
                    return Err(Error::shape("interp_uv", format!("face {:?} beyond {} vertices", f.verts, nv)));
                }
                let (py, px) = (pix / assign.width, pix % assign.width);
                let pt = [T::lit(px as f64 + 0.5), T::lit(py as f64 + 0.5)];
                let p: Vec<[T; 2]> = f.verts.iter().map(|&v| op.pixel_pos(xd, b, nv, v)).collect();
                let bc = barycentric(p[0], p[1], p[2], pt);
                let mut u = T::zero();
                let mut v = T::zero();
                for i in 0..3 {
                    u += bc[i] * T::lit(f.u[i]);
                    v += bc[i] * T::lit(f.v[i]);
                }
                out[(b * 2) * hw + pix] = u;
                out[(b * 2 + 1) * hw + pix] = v;
            }
        }
        let value = Tensor::new(vec![assign.batch, 2, assign.height, assign.width], out)?;
        Ok(self.push(value, vec![xy], Box::new(op)))
    }
}
