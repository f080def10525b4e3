//! 2-D convolution (im2col + GEMM) and average pooling over `(B, C, H, W)`.

use super::graph::{Function, Graph, Var};
use super::ops::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    /// Output indices `o` whose input coordinate `o * stride + kk - pad`
    /// falls inside `[0, size)`.
    fn valid(&self, kk: usize, size: usize, out: usize) -> std::ops::Range<usize> {
        let s = self.stride as isize;
        let off = kk as isize - self.pad as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= size-1
        let hi_num = size as isize - 1 - off;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let lo = lo.max(0) as usize;
        let hi = (hi + 1).clamp(0, out as isize) as usize;
        lo..hi.max(lo)
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn plane_out(&self) -> usize {
        self.ho * self.wo
    }

    /// Patch matrix `(Cin*K*K, Ho*Wo)` of one image; padding reads as zero.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let po = self.plane_out();
        cols.iter_mut().for_each(|v| *v = T::zero());
        for c in 0..self.cin {
            let xp = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                let ys = self.valid(ky, self.h, self.ho);
                for kx in 0..self.k {
                    let xs = self.valid(kx, self.w, self.wo);
                    let row = &mut cols[((c * self.k + ky) * self.k + kx) * po..][..po];
                    for oy in ys.clone() {
                        let iy = oy * self.stride + ky - self.pad;
                        for ox in xs.clone() {
                            row[oy * self.wo + ox] = xp[iy * self.w + ox * self.stride + kx - self.pad];
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters patch gradients into `gx`.
    fn col2im<T: Real>(&self, cols: &[T], gx: &mut [T]) {
        let po = self.plane_out();
        for c in 0..self.cin {
            let gp = &mut gx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                let ys = self.valid(ky, self.h, self.ho);
                for kx in 0..self.k {
                    let xs = self.valid(kx, self.w, self.wo);
                    let row = &cols[((c * self.k + ky) * self.k + kx) * po..][..po];
                    for oy in ys.clone() {
                        let iy = oy * self.stride + ky - self.pad;
                        for ox in xs.clone() {
                            gp[iy * self.w + ox * self.stride + kx - self.pad] += row[oy * self.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2d {
    geom: ConvGeom,
}

impl<T: Real> Function<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let g = self.geom;
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let gd = grad.data();
        let mut gx = if needs[0] { Some(vec![T::zero(); x.len()]) } else { None };
        let mut gw = if needs[1] { Some(vec![T::zero(); w.len()]) } else { None };
        let plane_in = g.cin * g.h * g.w;
        let plane_out = g.plane_out();
        let (rows, pg) = (g.rows(), g.cout * plane_out);
        let mut cols = vec![T::zero(); rows * plane_out];
        for b in 0..g.batch {
            let gb = &gd[b * pg..(b + 1) * pg];
            if let Some(gw) = gw.as_mut() {
                g.im2col(&x[b * plane_in..(b + 1) * plane_in], &mut cols);
                gemm_nt_acc(gb, &cols, gw, g.cout, rows, plane_out);
            }
            if let Some(gx) = gx.as_mut() {
                cols.iter_mut().for_each(|v| *v = T::zero());
                gemm_tn_acc(w, gb, &mut cols, g.cout, rows, plane_out);
                g.col2im(&cols, &mut gx[b * plane_in..(b + 1) * plane_in]);
            }
        }
        let mut out = vec![
            gx.map(|d| Tensor::new(inputs[0].shape().to_vec(), d).unwrap()),
            gw.map(|d| Tensor::new(inputs[1].shape().to_vec(), d).unwrap()),
        ];
        if inputs.len() > 2 {
            out.push(if needs[2] {
                let mut gb = vec![T::zero(); g.cout];
                for b in 0..g.batch {
                    for (o, acc) in gb.iter_mut().enumerate() {
                        let base = (b * g.cout + o) * plane_out;
                        *acc += gd[base..base + plane_out].iter().copied().sum::<T>();
                    }
                }
                Some(Tensor::new(vec![g.cout], gb).unwrap())
            } else {
                None
            });
        }
        out
    }
}

struct AvgPool {
    kh: usize,
    kw: usize,
}

impl<T: Real> Function<T> for AvgPool {
    fn name(&self) -> &'static str {
        "avg_pool2d"
    }
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let s = inputs[0].shape();
        let (h, w) = (s[2], s[3]);
        let (ho, wo) = (output.shape()[2], output.shape()[3]);
        let planes = s[0] * s[1];
        let scale = T::one() / T::lit((self.kh * self.kw) as f64);
        let mut gx = vec![T::zero(); inputs[0].numel()];
        let gd = grad.data();
        for p in 0..planes {
            for y in 0..h {
                for x in 0..w {
                    let (oy, ox) = (y / self.kh, x / self.kw);
                    gx[p * h * w + y * w + x] = gd[p * ho * wo + oy * wo + ox] * scale;
                }
            }
        }
        vec![Some(Tensor::new(s.to_vec(), gx).unwrap())]
    }
}

impl<T: Real> Graph<T> {
    /// `x: (B, Cin, H, W)`, `w: (Cout, Cin, K, K)`, optional `b: (Cout)`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sw[2] != sw[3] || stride == 0 {
            return Err(Error::shape("conv2d", format!("x {:?}, w {:?}", sx, sw)));
        }
        let (k, h, wd) = (sw[2], sx[2], sx[3]);
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::shape("conv2d", format!("kernel {} larger than padded input {:?}", k, sx)));
        }
        let geom = ConvGeom {
            batch: sx[0],
            cin: sx[1],
            h,
            w: wd,
            cout: sw[0],
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (wd + 2 * pad - k) / stride + 1,
        };
        if let Some(b) = b {
            if self.shape(b) != [geom.cout] {
                return Err(Error::shape("conv2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let xd = self.value(x).data();
        let wdt = self.value(w).data();
        let plane_in = geom.cin * geom.h * geom.w;
        let plane_out = geom.plane_out();
        let pg = geom.cout * plane_out;
        let mut out = vec![T::zero(); geom.batch * pg];
        let mut cols = vec![T::zero(); geom.rows() * plane_out];
        for bi in 0..geom.batch {
            let ob = &mut out[bi * pg..(bi + 1) * pg];
            if let Some(b) = b {
                for (o, &bv) in self.value(b).data().iter().enumerate() {
                    ob[o * plane_out..(o + 1) * plane_out].iter_mut().for_each(|v| *v = bv);
                }
            }
            geom.im2col(&xd[bi * plane_in..(bi + 1) * plane_in], &mut cols);
            gemm_acc(wdt, &cols, ob, geom.cout, geom.rows(), plane_out);
        }
        let value = Tensor::new(vec![geom.batch, geom.cout, geom.ho, geom.wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, inputs, Box::new(Conv2d { geom })))
    }

    /// Non-overlapping average pooling with window `(kh, kw)`.
    pub fn avg_pool2d(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || kh == 0 || kw == 0 || s[2] % kh != 0 || s[3] % kw != 0 {
            return Err(Error::shape("avg_pool2d", format!("{:?} with window {}x{}", s, kh, kw)));
        }
        let (h, w) = (s[2], s[3]);
        let (ho, wo) = (h / kh, w / kw);
        let planes = s[0] * s[1];
        let xd = self.value(x).data();
        let scale = T::one() / T::lit((kh * kw) as f64);
        let mut out = vec![T::zero(); planes * ho * wo];
        for p in 0..planes {
            for y in 0..h {
                for xx in 0..w {
                    out[p * ho * wo + (y / kh) * wo + xx / kw] += xd[p * h * w + y * w + xx];
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        let value = Tensor::new(vec![s[0], s[1], ho, wo], out)?;
        Ok(self.push(value, vec![x], Box::new(AvgPool { kh, kw })))
    }

    /// `(B, C, H, W) -> (B, C, 1, 1)`
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::shape("global_avg_pool", format!("{:?}", s)));
        }
        self.avg_pool2d(x, s[2], s[3])
    }
}
