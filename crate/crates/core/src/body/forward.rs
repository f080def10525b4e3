use std::sync::Arc;

use super::rotation::axis_angle_to_matrix;
use super::{BodyModel, MeshOutput, SmplParams, NUM_BETAS, NUM_JOINTS, POSE_FEATURES};
use crate::autodiff::{Graph, SparseRows, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Model tensors laid out for graph evaluation in precision `T`.
#[derive(Clone, Debug)]
pub struct PreparedModel<T: Real> {
    pub num_vertices: usize,
    pub num_output_joints: usize,
    template: Tensor<T>,
    /// `(10, V*3)`.
    shape_dirs: Tensor<T>,
    /// `(207, V*3)`.
    pose_dirs: Option<Tensor<T>>,
    skin: Arc<SparseRows<T>>,
    rest_regressor: Arc<SparseRows<T>>,
    joint_regressor: Arc<SparseRows<T>>,
    parents: Vec<i32>,
}

/// Graph nodes produced by [`PreparedModel::forward`].
#[derive(Clone, Copy, Debug)]
pub struct BodyVars {
    /// `(B, V, 3)` shaped template before articulation.
    pub shaped: Var,
    /// `(B, 24, 3)`.
    pub rest_joints: Var,
    /// `(B, V, 3)`.
    pub vertices: Var,
    /// `(B, N_J, 3)`.
    pub joints: Var,
}

fn transpose_last(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

impl<T: Real> PreparedModel<T> {
    pub fn new(model: &BodyModel) -> Result<Self> {
        model.validate()?;
        let nv = model.num_vertices();
        let flat: Vec<f64> = model.template.iter().flatten().copied().collect();
        let template = Tensor::from_f64(&[nv * 3], &flat)?;
        let shape_dirs = Tensor::from_f64(
            &[NUM_BETAS, nv * 3],
            &transpose_last(&model.shape_dirs, nv * 3, NUM_BETAS),
        )?;
        let pose_dirs = model
            .pose_dirs
            .as_ref()
            .map(|pd| Tensor::from_f64(&[POSE_FEATURES, nv * 3], &transpose_last(pd, nv * 3, POSE_FEATURES)))
            .transpose()?;
        let nj = model.num_output_joints();
        Ok(Self {
            num_vertices: nv,
            num_output_joints: nj,
            template,
            shape_dirs,
            pose_dirs,
            skin: Arc::new(SparseRows::from_dense(&model.skin_weights, nv, NUM_JOINTS)),
            rest_regressor: Arc::new(SparseRows::from_dense(&model.rest_regressor, NUM_JOINTS, nv)),
            joint_regressor: Arc::new(SparseRows::from_dense(&model.joint_regressor, nj, nv)),
            parents: model.parents.clone(),
        })
    }

    /// Differentiable body forward from rotation matrices `(B, 24, 9)` and
    /// shape `(B, 10)`.
    pub fn forward(&self, g: &mut Graph<T>, rots: Var, betas: Var) -> Result<BodyVars> {
        let (sr, sb) = (g.shape(rots).to_vec(), g.shape(betas).to_vec());
        if sr.len() != 3 || sr[1] != NUM_JOINTS || sr[2] != 9 || sb != [sr[0], NUM_BETAS] {
            return Err(Error::shape("body_forward", format!("rots {:?}, betas {:?}", sr, sb)));
        }
        let batch = sr[0];
        let nv = self.num_vertices;
        let dirs = g.constant(self.shape_dirs.clone());
        let template = g.constant(self.template.clone());
        let mut offsets = g.linear(betas, dirs, Some(template))?;
        let shaped = g.reshape(offsets, &[batch, nv, 3])?;
        let rest_joints = g.sparse_left_matmul(&self.rest_regressor, shaped)?;
        if let Some(pd) = &self.pose_dirs {
            let non_root = g.slice(rots, 1, 1, NUM_JOINTS - 1)?;
            let feat = g.reshape(non_root, &[batch, POSE_FEATURES])?;
            let mut eye = vec![T::zero(); batch * POSE_FEATURES];
            for chunk in eye.chunks_mut(9) {
                chunk[0] = -T::one();
                chunk[4] = -T::one();
                chunk[8] = -T::one();
            }
            let eye = g.constant(Tensor::new(vec![batch, POSE_FEATURES], eye)?);
            let feat = g.add(feat, eye)?;
            let pd = g.constant(pd.clone());
            let pose_off = g.linear(feat, pd, None)?;
            offsets = g.add(offsets, pose_off)?;
        }
        let posed_rest = g.reshape(offsets, &[batch, nv, 3])?;
        let transforms = g.kinematic_chain(rots, rest_joints, &self.parents)?;
        let vertices = g.blend_skin(transforms, posed_rest, &self.skin)?;
        let joints = g.sparse_left_matmul(&self.joint_regressor, vertices)?;
        Ok(BodyVars {
            shaped,
            rest_joints,
            vertices,
            joints,
        })
    }

    /// Non-differentiable evaluation of one parameter set.
    pub fn evaluate(&self, params: &SmplParams) -> Result<MeshOutput> {
        check_params(params)?;
        let mut rot = Vec::with_capacity(NUM_JOINTS * 9);
        for aa in &params.pose {
            rot.extend(super::rotation::flatten(&axis_angle_to_matrix(*aa)));
        }
        let mut g = Graph::<T>::new();
        let rots = g.constant(Tensor::from_f64(&[1, NUM_JOINTS, 9], &rot)?);
        let betas = g.constant(Tensor::from_f64(&[1, NUM_BETAS], &params.beta)?);
        let out = self.forward(&mut g, rots, betas)?;
        let rows = |v: Var| {
            g.value(v)
                .data()
                .chunks(3)
                .map(|c| [c[0].as_f64(), c[1].as_f64(), c[2].as_f64()])
                .collect::<Vec<_>>()
        };
        Ok(MeshOutput {
            vertices: rows(out.vertices),
            joints: rows(out.joints),
        })
    }
}

fn check_params(params: &SmplParams) -> Result<()> {
    if params.pose.len() != NUM_JOINTS {
        return Err(Error::InvalidArgument(format!("pose has {} joints, expected {}", params.pose.len(), NUM_JOINTS)));
    }
    if !params.pose.iter().flatten().chain(&params.beta).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("body model parameters".into()));
    }
    if let Some(b) = params.beta.iter().find(|b| b.abs() > 5.0) {
        log::warn!("shape coefficient {} is outside the typical range |beta| <= 5", b);
    }
    Ok(())
}

/// Posed vertices and output joints for one parameter set (`f64`).
pub fn smpl_forward(model: &BodyModel, params: &SmplParams) -> Result<MeshOutput> {
    PreparedModel::<f64>::new(model)?.evaluate(params)
}
