use std::sync::Arc;

use crate::autodiff::{Graph, UvAssignment, Var};
use crate::camera::normalized_to_pixel;
use crate::error::{Error, Result};
use crate::iuv::{part_value, rasterize, uv_assignment, RasterBuffers};
use crate::tensor::{Real, Tensor};

/// Hard-raster visibility captured on one forward pass and replayed on
/// later passes, so finite differences see a frozen face assignment.
#[derive(Clone, Debug, Default)]
pub struct RasterMemo {
    frames: Vec<Frame>,
    cursor: usize,
    replay: bool,
}

#[derive(Clone, Debug)]
struct Frame {
    assign: Arc<UvAssignment>,
    parts: Vec<f64>,
}

impl RasterMemo {
    pub fn recording() -> Self {
        Self::default()
    }

    /// Switches to replay from the first recorded frame.
    pub fn rewind(&mut self) {
        self.replay = true;
        self.cursor = 0;
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Renders an IUV map `(B, 3, H, W)` of weak-perspective projected vertices
/// `xy (B, V, 2)` with depth from `depth_of` (the vertex z). The I channel is
/// a constant; U and V carry gradients to `xy`.
pub fn render_iuv<T: Real>(
    g: &mut Graph<T>,
    xy: Var,
    vertices: Var,
    faces: &[[usize; 3]],
    iuv_template: &[[f64; 3]],
    h: usize,
    w: usize,
    memo: Option<&mut RasterMemo>,
) -> Result<Var> {
    let s = g.shape(xy).to_vec();
    if s.len() != 3 || s[2] != 2 || g.shape(vertices) != [s[0], s[1], 3] {
        return Err(Error::shape("render_iuv", format!("xy {:?}, vertices {:?}", s, g.shape(vertices))));
    }
    let (batch, nv) = (s[0], s[1]);
    let live = || -> Result<Frame> {
        let xyv = g.value(xy).data();
        let vv = g.value(vertices).data();
        let mut bufs: Vec<RasterBuffers> = Vec::with_capacity(batch);
        for b in 0..batch {
            let screen: Vec<[f64; 2]> = (0..nv)
                .map(|i| {
                    let k = (b * nv + i) * 2;
                    normalized_to_pixel([xyv[k].as_f64(), xyv[k + 1].as_f64()], w, h)
                })
                .collect();
            let depth: Vec<f64> = (0..nv).map(|i| vv[(b * nv + i) * 3 + 2].as_f64()).collect();
            bufs.push(rasterize(&screen, &depth, faces, h, w)?);
        }
        let parts = bufs
            .iter()
            .flat_map(|buf| {
                buf.face_id.iter().map(|&f| {
                    if f < 0 {
                        0.0
                    } else {
                        part_value(iuv_template[faces[f as usize][0]][0] as usize) as f64
                    }
                })
            })
            .collect();
        Ok(Frame {
            assign: Arc::new(uv_assignment(&bufs, faces, iuv_template)?),
            parts,
        })
    };
    let frame = match memo {
        Some(m) if m.replay => {
            let f = m
                .frames
                .get(m.cursor)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument("raster memo exhausted".into()))?;
            m.cursor += 1;
            f
        }
        Some(m) => {
            let f = live()?;
            m.frames.push(f.clone());
            f
        }
        None => live()?,
    };
    if frame.assign.batch != batch || frame.assign.height != h || frame.assign.width != w {
        return Err(Error::shape("render_iuv", "replayed frame does not match the batch".to_string()));
    }
    let uv = g.interp_uv(xy, &frame.assign)?;
    let i_plane = Tensor::from_f64(&[batch, 1, h, w], &frame.parts)?;
    let i_plane = g.constant(i_plane);
    g.concat(&[i_plane, uv], 1)
}
