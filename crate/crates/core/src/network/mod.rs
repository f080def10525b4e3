//! Two-stream regression network with cross-representation alignment.
//!
//! Each stream encodes one 2D representation (joint heatmaps or the IUV
//! map), reduces the features to a global vector and a fine-grained map,
//! and regresses body parameters in two stages. The fusion regressor sees
//! both streams' fine-grained features together with how well each stream's
//! prediction reprojects onto both kinds of evidence.

mod discrepancy;
mod layers;
mod render;

use rand::Rng;

pub use discrepancy::{discrepancy_iuv, discrepancy_iuv_terms, discrepancy_joints, IUV_EPS};
pub use layers::{encoder_channels, Encoder, FeatureReducer, Regressor};
pub use render::{render_iuv, RasterMemo};

use crate::autodiff::{Binding, Graph, ParamStore, Var};
use crate::body::{BodyModel, PreparedModel, NUM_BETAS, NUM_JOINTS};
use crate::body::rotation::IDENTITY_6D;
use crate::error::{Error, Result};
use crate::io::{Arch, RunConfig};
use crate::iuv::{downsample_iuv, IuvMap};
use crate::tensor::{Real, Tensor};

/// 24 6D rotations, 10 shape coefficients, weak-perspective `(s, tx, ty)`.
pub const THETA_DIM: usize = NUM_JOINTS * 6 + NUM_BETAS + 3;
pub const BETA_OFFSET: usize = NUM_JOINTS * 6;
pub const CAM_OFFSET: usize = BETA_OFFSET + NUM_BETAS;
/// Initial weak-perspective scale.
pub const INIT_SCALE: f64 = 0.9;

/// The initial parameter vector: identity rotations, mean shape, a centered
/// camera.
pub fn theta0_values() -> Vec<f64> {
    let mut t = Vec::with_capacity(THETA_DIM);
    for _ in 0..NUM_JOINTS {
        t.extend_from_slice(&IDENTITY_6D);
    }
    t.extend_from_slice(&[0.0; NUM_BETAS]);
    t.extend_from_slice(&[INIT_SCALE, 0.0, 0.0]);
    t
}

pub fn theta0<T: Real>(batch: usize) -> Tensor<T> {
    let one = theta0_values();
    let data: Vec<f64> = (0..batch).flat_map(|_| one.iter().copied()).collect();
    Tensor::from_f64(&[batch, THETA_DIM], &data).expect("sized")
}

/// Graph nodes decoded from a parameter vector and passed through the body
/// model and camera.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub theta: Var,
    /// `(B, 24, 9)` row-major rotation matrices.
    pub rots: Var,
    /// `(B, 10)`.
    pub betas: Var,
    /// `(B, 3)`.
    pub cam: Var,
    /// `(B, V, 3)`.
    pub vertices: Var,
    /// `(B, N_J, 3)`.
    pub joints3d: Var,
    /// `(B, N_J, 2)` normalized image coordinates.
    pub j2d: Var,
    /// `(B, V, 2)` normalized image coordinates.
    pub verts2d: Var,
}

/// Network inputs already placed in a graph.
#[derive(Clone, Copy, Debug)]
pub struct InputVars {
    /// `(B, N_J, H, W)`.
    pub heatmaps: Var,
    /// `(B, 3, H, W)`.
    pub iuv: Var,
    /// `(B, 3, H0, W0)`.
    pub iuv_small: Var,
    /// `(B, N_J, 2)`.
    pub j2d: Var,
}

/// Host-side inputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInputs<T> {
    pub heatmaps: Tensor<T>,
    pub iuv: Tensor<T>,
    pub iuv_small: Tensor<T>,
    pub j2d: Tensor<T>,
}

impl<T: Real> NetInputs<T> {
    pub fn batch(&self) -> usize {
        self.heatmaps.shape()[0]
    }

    /// Stacks per-sample `(heatmaps, IUV map, evidence joints)` into a batch;
    /// the IUV map is also downsampled to the feature grid.
    pub fn from_parts(dims: &NetworkDims, parts: &[(&[f32], &IuvMap, &[[f64; 2]])]) -> Result<Self> {
        let (nj, h, w) = (dims.num_joints, dims.height, dims.width);
        let b = parts.len();
        let mut hm = Vec::with_capacity(b * nj * h * w);
        let mut iuv = Vec::with_capacity(b * 3 * h * w);
        let mut small = Vec::with_capacity(b * 3 * dims.h0 * dims.w0);
        let mut j2d = Vec::with_capacity(b * nj * 2);
        for (i, (heat, m, j)) in parts.iter().enumerate() {
            if heat.len() != nj * h * w || (m.height, m.width) != (h, w) || j.len() != nj {
                return Err(Error::shape(
                    "net_inputs",
                    format!("sample {} does not match {} joints at {}x{}", i, nj, h, w),
                ));
            }
            hm.extend(heat.iter().map(|&x| T::lit(x as f64)));
            iuv.extend(m.data.iter().map(|&x| T::lit(x as f64)));
            small.extend(downsample_iuv(m, dims.h0, dims.w0)?.data.iter().map(|&x| T::lit(x as f64)));
            j2d.extend(j.iter().flatten().map(|&x| T::lit(x)));
        }
        Ok(Self {
            heatmaps: Tensor::new(vec![b, nj, h, w], hm)?,
            iuv: Tensor::new(vec![b, 3, h, w], iuv)?,
            iuv_small: Tensor::new(vec![b, 3, dims.h0, dims.w0], small)?,
            j2d: Tensor::new(vec![b, nj, 2], j2d)?,
        })
    }

    pub fn to_graph(&self, g: &mut Graph<T>) -> InputVars {
        InputVars {
            heatmaps: g.constant(self.heatmaps.clone()),
            iuv: g.constant(self.iuv.clone()),
            iuv_small: g.constant(self.iuv_small.clone()),
            j2d: g.constant(self.j2d.clone()),
        }
    }
}

/// One stream: encoder, feature reduction, and the global then fine-grained
/// regressors.
#[derive(Clone, Debug)]
pub struct Stream {
    pub encoder: Encoder,
    pub reducer: FeatureReducer,
    pub r1: Regressor,
    pub r2: Regressor,
}

#[derive(Clone, Copy, Debug)]
pub struct StreamOut {
    pub theta_global: Var,
    pub theta: Var,
    pub phi_g: Var,
    /// `(B, C_L, H0, W0)`.
    pub phi_l: Var,
}

impl Stream {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        dims: &NetworkDims,
        rng: &mut R,
    ) -> Self {
        let encoder = Encoder::new(store, &format!("{name}.enc"), in_channels, dims.c0, dims.stages, rng);
        let reducer = FeatureReducer::new(store, &format!("{name}.reduce"), dims.c0, &dims.mlp, rng);
        let cl = *dims.mlp.last().expect("validated");
        let r1 = Regressor::new(store, &format!("{name}.r1"), dims.c0, dims.reg_hidden, dims.iters, dims.head_gain, rng);
        let r2 = Regressor::new(
            store,
            &format!("{name}.r2"),
            cl * dims.h0 * dims.w0,
            dims.reg_hidden,
            dims.iters,
            dims.head_gain,
            rng,
        );
        Self { encoder, reducer, r1, r2 }
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, bind: &mut Binding, store: &ParamStore<T>, x: Var) -> Result<StreamOut> {
        let batch = g.shape(x)[0];
        let phi0 = self.encoder.forward(g, bind, store, x)?;
        let (phi_g, phi_l) = self.reducer.forward(g, bind, store, phi0)?;
        let t0 = g.constant(theta0(batch));
        let theta_global = self.r1.forward(g, bind, store, phi_g, t0)?;
        let flat = flatten(g, phi_l)?;
        let theta = self.r2.forward(g, bind, store, flat, theta_global)?;
        Ok(StreamOut {
            theta_global,
            theta,
            phi_g,
            phi_l,
        })
    }
}

/// One stream's alignment against both pieces of evidence.
#[derive(Clone, Copy, Debug)]
pub struct Alignment {
    pub theta: Var,
    /// `(B, N_J, 2)`.
    pub dj: Var,
    /// `(B, 3, H0, W0)`.
    pub dm_terms: Var,
    pub phi_l: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkDims {
    pub num_joints: usize,
    pub height: usize,
    pub width: usize,
    pub h0: usize,
    pub w0: usize,
    pub stages: usize,
    pub c0: usize,
    pub mlp: Vec<usize>,
    pub reg_hidden: usize,
    pub fuse_hidden: usize,
    pub iters: usize,
    pub head_gain: f64,
    pub arch: Arch,
}

impl NetworkDims {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let ratio = cfg.height / cfg.feat_height;
        if cfg.width / cfg.feat_width != ratio {
            return Err(Error::Config(format!(
                "input {}x{} and feature grid {}x{} must share one downsampling factor",
                cfg.height, cfg.width, cfg.feat_height, cfg.feat_width
            )));
        }
        Ok(Self {
            num_joints: cfg.num_joints,
            height: cfg.height,
            width: cfg.width,
            h0: cfg.feat_height,
            w0: cfg.feat_width,
            stages: ratio.trailing_zeros() as usize,
            c0: cfg.feat_channels,
            mlp: cfg.mlp_channels.clone(),
            reg_hidden: cfg.reg_hidden,
            fuse_hidden: cfg.fuse_hidden,
            iters: cfg.ief_iters,
            head_gain: cfg.head_gain,
            arch: cfg.arch,
        })
    }

    /// Width of one stream's part of the fusion input.
    pub fn alignment_dim(&self) -> usize {
        let cells = self.h0 * self.w0;
        self.mlp.last().copied().unwrap_or(0) * cells + 3 * cells + 2 * self.num_joints
    }

    pub fn fuse_input_dim(&self) -> usize {
        2 * self.alignment_dim()
    }
}

#[derive(Clone, Debug)]
pub enum Heads {
    Cra { j: Stream, m: Stream, fuse: Regressor },
    /// Both representations stacked along channels into a single stream.
    Concat { s: Stream },
}

#[derive(Clone, Debug)]
pub struct NetOutput {
    /// Final `(B, 157)` parameters.
    pub theta: Var,
    /// Per-stream outputs (two for the alignment network, one for concat).
    pub streams: Vec<StreamOut>,
    pub alignments: Vec<Alignment>,
    pub fuse_input: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Network<T: Real> {
    pub dims: NetworkDims,
    pub heads: Heads,
    pub body: PreparedModel<T>,
    pub faces: Vec<[usize; 3]>,
    pub iuv_template: Vec<[f64; 3]>,
}

fn flatten<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let rest: usize = s[1..].iter().product();
    g.reshape(x, &[s[0], rest])
}

impl<T: Real> Network<T> {
    /// Registers all layers in `store` (stable names, fixed order).
    pub fn new<R: Rng>(cfg: &RunConfig, model: &BodyModel, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        let dims = NetworkDims::from_config(cfg)?;
        if model.num_output_joints() != dims.num_joints {
            return Err(Error::Config(format!(
                "model regresses {} joints, config expects {}",
                model.num_output_joints(),
                dims.num_joints
            )));
        }
        let heads = match dims.arch {
            Arch::Cra => {
                let j = Stream::new(store, "j", dims.num_joints, &dims, rng);
                let m = Stream::new(store, "m", 3, &dims, rng);
                let fuse = Regressor::new(store, "fuse", dims.fuse_input_dim(), dims.fuse_hidden, dims.iters, dims.head_gain, rng);
                Heads::Cra { j, m, fuse }
            }
            Arch::Concat => Heads::Concat {
                s: Stream::new(store, "x", dims.num_joints + 3, &dims, rng),
            },
        };
        Ok(Self {
            dims,
            heads,
            body: PreparedModel::new(model)?,
            faces: model.faces.clone(),
            iuv_template: model.iuv_template.clone(),
        })
    }

    fn check_inputs(&self, g: &Graph<T>, x: &InputVars) -> Result<usize> {
        let d = &self.dims;
        let b = g.shape(x.heatmaps).first().copied().unwrap_or(0);
        let want = [
            ("heatmaps", x.heatmaps, vec![b, d.num_joints, d.height, d.width]),
            ("iuv", x.iuv, vec![b, 3, d.height, d.width]),
            ("iuv_small", x.iuv_small, vec![b, 3, d.h0, d.w0]),
            ("j2d", x.j2d, vec![b, d.num_joints, 2]),
        ];
        for (name, v, shape) in want {
            if g.shape(v) != shape.as_slice() {
                return Err(Error::shape("network", format!("{} is {:?}, expected {:?}", name, g.shape(v), shape)));
            }
        }
        Ok(b)
    }

    /// Decodes `theta (B, 157)` and runs the body model and camera.
    pub fn predict(&self, g: &mut Graph<T>, theta: Var) -> Result<Prediction> {
        let s = g.shape(theta).to_vec();
        if s.len() != 2 || s[1] != THETA_DIM {
            return Err(Error::shape("predict", format!("theta {:?}", s)));
        }
        let batch = s[0];
        let r6 = g.slice(theta, 1, 0, BETA_OFFSET)?;
        let r6 = g.reshape(r6, &[batch, NUM_JOINTS, 6])?;
        let rots = g.rot6d_to_matrix(r6)?;
        let betas = g.slice(theta, 1, BETA_OFFSET, NUM_BETAS)?;
        let cam = g.slice(theta, 1, CAM_OFFSET, 3)?;
        let body = self.body.forward(g, rots, betas)?;
        let j2d = g.weak_perspective(body.joints, cam)?;
        let verts2d = g.weak_perspective(body.vertices, cam)?;
        Ok(Prediction {
            theta,
            rots,
            betas,
            cam,
            vertices: body.vertices,
            joints3d: body.joints,
            j2d,
            verts2d,
        })
    }

    /// Rendered IUV map `(B, 3, H0, W0)` of a prediction.
    pub fn render(&self, g: &mut Graph<T>, pred: &Prediction, memo: Option<&mut RasterMemo>) -> Result<Var> {
        render_iuv(
            g,
            pred.verts2d,
            pred.vertices,
            &self.faces,
            &self.iuv_template,
            self.dims.h0,
            self.dims.w0,
            memo,
        )
    }

    /// Reprojects and re-renders `theta`, comparing with both kinds of
    /// evidence.
    pub fn align(
        &self,
        g: &mut Graph<T>,
        x: &InputVars,
        out: &StreamOut,
        memo: Option<&mut RasterMemo>,
    ) -> Result<Alignment> {
        let pred = self.predict(g, out.theta)?;
        let dj = discrepancy_joints(g, pred.j2d, x.j2d)?;
        let rendered = self.render(g, &pred, memo)?;
        let dm_terms = discrepancy_iuv_terms(g, rendered, x.iuv_small)?;
        Ok(Alignment {
            theta: out.theta,
            dj,
            dm_terms,
            phi_l: out.phi_l,
        })
    }

    /// Fusion regression from two alignments, in `(joint stream, IUV stream)`
    /// order. Returns the final parameters and the fusion input vector.
    pub fn fuse(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        a: &Alignment,
        b: &Alignment,
    ) -> Result<(Var, Var)> {
        let Heads::Cra { fuse, .. } = &self.heads else {
            return Err(Error::Config("the concat baseline has no fusion stage".into()));
        };
        let mut parts = Vec::with_capacity(6);
        for al in [a, b] {
            parts.push(flatten(g, al.dj)?);
            parts.push(flatten(g, al.dm_terms)?);
            parts.push(flatten(g, al.phi_l)?);
        }
        let input = g.concat(&parts, 1)?;
        let sum = g.add(a.theta, b.theta)?;
        let init = g.mul_scalar(sum, 0.5);
        let theta = fuse.forward(g, bind, store, input, init)?;
        Ok((theta, input))
    }

    pub fn forward(
        &self,
        g: &mut Graph<T>,
        bind: &mut Binding,
        store: &ParamStore<T>,
        x: &InputVars,
        mut memo: Option<&mut RasterMemo>,
    ) -> Result<NetOutput> {
        self.check_inputs(g, x)?;
        match &self.heads {
            Heads::Cra { j, m, .. } => {
                let sj = j.forward(g, bind, store, x.heatmaps)?;
                let sm = m.forward(g, bind, store, x.iuv)?;
                let aj = self.align(g, x, &sj, memo.as_deref_mut())?;
                let am = self.align(g, x, &sm, memo.as_deref_mut())?;
                let (theta, input) = self.fuse(g, bind, store, &aj, &am)?;
                Ok(NetOutput {
                    theta,
                    streams: vec![sj, sm],
                    alignments: vec![aj, am],
                    fuse_input: Some(input),
                })
            }
            Heads::Concat { s } => {
                let stacked = g.concat(&[x.heatmaps, x.iuv], 1)?;
                let so = s.forward(g, bind, store, stacked)?;
                Ok(NetOutput {
                    theta: so.theta,
                    streams: vec![so],
                    alignments: Vec::new(),
                    fuse_input: None,
                })
            }
        }
    }
}
