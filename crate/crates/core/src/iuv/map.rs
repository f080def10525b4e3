use crate::body::NUM_PARTS;
use crate::camera::{BBox, CropTransform};
use crate::error::{Error, Result};

/// Compact IUV map `3 x H x W`: normalized part index, then U, then V.
#[derive(Clone, Debug, PartialEq)]
pub struct IuvMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// Encoded I value for a part index.
pub fn part_value(part: usize) -> f32 {
    part as f32 / NUM_PARTS as f32
}

/// Part index of an encoded I value, if it is an exact multiple of `1/P`.
pub fn decode_part(i: f32) -> Option<usize> {
    let p = (i * NUM_PARTS as f32).round();
    if !(0.0..=NUM_PARTS as f32).contains(&p) || part_value(p as usize) != i {
        return None;
    }
    Some(p as usize)
}

impl IuvMap {
    pub fn background(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::shape("iuv_map", format!("{} values for 3x{}x{}", data.len(), height, width)));
        }
        Ok(Self { height, width, data })
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn i(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn u(&self, y: usize, x: usize) -> f32 {
        self.data[self.plane() + y * self.width + x]
    }

    pub fn v(&self, y: usize, x: usize) -> f32 {
        self.data[2 * self.plane() + y * self.width + x]
    }

    /// Part index at a pixel; assumes a valid map.
    pub fn part(&self, y: usize, x: usize) -> usize {
        decode_part(self.i(y, x)).unwrap_or(0)
    }

    pub fn set(&mut self, y: usize, x: usize, part: usize, u: f32, v: f32) {
        let (hw, k) = (self.plane(), y * self.width + x);
        if part == 0 {
            self.data[k] = 0.0;
            self.data[hw + k] = 0.0;
            self.data[2 * hw + k] = 0.0;
        } else {
            self.data[k] = part_value(part);
            self.data[hw + k] = u.clamp(0.0, 1.0);
            self.data[2 * hw + k] = v.clamp(0.0, 1.0);
        }
    }

    pub fn clear(&mut self, y: usize, x: usize) {
        self.set(y, x, 0, 0.0, 0.0);
    }

    pub fn foreground_count(&self) -> usize {
        self.data[..self.plane()].iter().filter(|&&i| i != 0.0).count()
    }

    /// Pixel extent of the foreground, `None` when the map is empty.
    pub fn foreground_bbox(&self) -> Option<BBox> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.i(y, x) != 0.0 {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb.map(|(x0, y0, x1, y1)| BBox {
            x_min: x0 as f64,
            y_min: y0 as f64,
            x_max: (x1 + 1) as f64,
            y_max: (y1 + 1) as f64,
        })
    }

    /// Checks the map's invariants: exact part multiples, U/V in `[0, 1]`,
    /// zero U/V on background.
    pub fn validate(&self) -> Result<()> {
        if self.data.len() != 3 * self.plane() {
            return Err(Error::InvalidIuv(format!("{} values for {}x{}", self.data.len(), self.height, self.width)));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let (i, u, v) = (self.i(y, x), self.u(y, x), self.v(y, x));
                let Some(p) = decode_part(i) else {
                    return Err(Error::InvalidIuv(format!("I value {} at ({}, {}) is not a multiple of 1/{}", i, y, x, NUM_PARTS)));
                };
                if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidIuv(format!("U/V ({}, {}) out of range at ({}, {})", u, v, y, x)));
                }
                if p == 0 && (u != 0.0 || v != 0.0) {
                    return Err(Error::InvalidIuv(format!("background pixel ({}, {}) has nonzero U/V", y, x)));
                }
            }
        }
        Ok(())
    }
}

/// One-hot IUV: `(P+1) x H x W` planes for I, U and V.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotIuv {
    pub height: usize,
    pub width: usize,
    pub i: Vec<f32>,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

pub fn compact_to_onehot(m: &IuvMap) -> Result<OneHotIuv> {
    m.validate()?;
    let hw = m.height * m.width;
    let n = (NUM_PARTS + 1) * hw;
    let mut out = OneHotIuv {
        height: m.height,
        width: m.width,
        i: vec![0.0; n],
        u: vec![0.0; n],
        v: vec![0.0; n],
    };
    for y in 0..m.height {
        for x in 0..m.width {
            let k = y * m.width + x;
            let c = m.part(y, x) * hw + k;
            out.i[c] = 1.0;
            out.u[c] = m.u(y, x);
            out.v[c] = m.v(y, x);
        }
    }
    Ok(out)
}

pub fn onehot_to_compact(o: &OneHotIuv) -> Result<IuvMap> {
    let hw = o.height * o.width;
    let n = (NUM_PARTS + 1) * hw;
    if o.i.len() != n || o.u.len() != n || o.v.len() != n {
        return Err(Error::shape("onehot_to_compact", format!("planes of {} for {}x{}", o.i.len(), o.height, o.width)));
    }
    let mut m = IuvMap::background(o.height, o.width);
    for k in 0..hw {
        let mut active = None;
        for c in 0..=NUM_PARTS {
            let idx = c * hw + k;
            match o.i[idx] {
                0.0 => {
                    if o.u[idx] != 0.0 || o.v[idx] != 0.0 {
                        return Err(Error::InvalidIuv(format!("U/V set on inactive channel {} at pixel {}", c, k)));
                    }
                }
                1.0 if active.is_none() => active = Some(c),
                val => return Err(Error::InvalidIuv(format!("I plane value {} at channel {}, pixel {}", val, c, k))),
            }
        }
        let Some(c) = active else {
            return Err(Error::InvalidIuv(format!("no active channel at pixel {}", k)));
        };
        let (u, v) = (o.u[c * hw + k], o.v[c * hw + k]);
        if c == 0 && (u != 0.0 || v != 0.0) {
            return Err(Error::InvalidIuv(format!("background pixel {} has nonzero U/V", k)));
        }
        m.set(k / o.width, k % o.width, c, u, v);
    }
    Ok(m)
}

/// Nearest-neighbor resampling; output pixel `i` reads source row
/// `floor((i + 0.5) H / H0)`.
pub fn downsample_iuv(m: &IuvMap, h0: usize, w0: usize) -> Result<IuvMap> {
    if h0 == 0 || w0 == 0 || h0 > m.height || w0 > m.width {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {}x{} to {}x{}",
            m.height, m.width, h0, w0
        )));
    }
    let src = |i: usize, n0: usize, n: usize| ((2 * i + 1) * n) / (2 * n0);
    let mut out = IuvMap::background(h0, w0);
    let (hw, ohw) = (m.height * m.width, h0 * w0);
    for y in 0..h0 {
        let sy = src(y, h0, m.height);
        for x in 0..w0 {
            let sx = src(x, w0, m.width);
            for c in 0..3 {
                out.data[c * ohw + y * w0 + x] = m.data[c * hw + sy * m.width + sx];
            }
        }
    }
    Ok(out)
}

/// Resamples a map through a crop: nearest for the part index, bilinear
/// for U/V restricted to source pixels of the same part.
pub fn warp_crop(m: &IuvMap, crop: &CropTransform) -> IuvMap {
    let mut out = IuvMap::background(crop.out_h, crop.out_w);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < m.width && (y as usize) < m.height;
    for y in 0..crop.out_h {
        for x in 0..crop.out_w {
            let s = crop.inverse([x as f64 + 0.5, y as f64 + 0.5]);
            let (nx, ny) = (s[0].floor() as i64, s[1].floor() as i64);
            if !inside(nx, ny) {
                continue;
            }
            let part = m.part(ny as usize, nx as usize);
            if part == 0 {
                continue;
            }
            let (gx, gy) = (s[0] - 0.5, s[1] - 0.5);
            let (x0, y0) = (gx.floor() as i64, gy.floor() as i64);
            let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
            let (mut wsum, mut usum, mut vsum) = (0.0, 0.0, 0.0);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let (px, py) = (x0 + dx, y0 + dy);
                    let w = wx * wy;
                    if w <= 0.0 || !inside(px, py) || m.part(py as usize, px as usize) != part {
                        continue;
                    }
                    wsum += w;
                    usum += w * m.u(py as usize, px as usize) as f64;
                    vsum += w * m.v(py as usize, px as usize) as f64;
                }
            }
            out.set(y, x, part, (usum / wsum) as f32, (vsum / wsum) as f32);
        }
    }
    out
}
