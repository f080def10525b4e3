use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::network::{discrepancy_iuv, Prediction};
use crate::tensor::Real;

/// Number of supervised terms: vertices, 2D joints, 3D joints, SMPL
/// parameters.
pub const NUM_TERMS: usize = 4;
pub const TERM_NAMES: [&str; NUM_TERMS] = ["v", "j2d", "j3d", "smpl"];

/// Regression targets placed in a graph.
#[derive(Clone, Copy, Debug)]
pub struct TargetVars {
    /// `(B, V, 3)`.
    pub vertices: Var,
    /// `(B, N_J, 2)` clean projected joints.
    pub j2d: Var,
    /// `(B, N_J, 3)`.
    pub j3d: Var,
    /// `(B, 24 * 9 + 10)`: flattened rotation matrices then shape.
    pub smpl: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct RegLoss {
    pub total: Var,
    /// `(4,)` per-term MSEs.
    pub mse: Var,
}

/// `(B, 226)` prediction in the same encoding as [`TargetVars::smpl`].
pub fn smpl_vector<T: Real>(g: &mut Graph<T>, pred: &Prediction) -> Result<Var> {
    let b = g.shape(pred.rots)[0];
    let r = g.reshape(pred.rots, &[b, g.shape(pred.rots)[1] * 9])?;
    g.concat(&[r, pred.betas], 1)
}

/// Mean over points of the squared Euclidean distance, for `(.., D)` point
/// sets.
pub fn point_mse<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let d = *g.shape(a).last().unwrap_or(&1);
    let m = g.mse(a, b)?;
    Ok(g.mul_scalar(m, d as f64))
}

/// Per-term MSEs stacked as a `(4,)` vector. Point terms use squared
/// distances per point; the parameter term is an elementwise mean.
pub fn term_mses<T: Real>(g: &mut Graph<T>, pred: &Prediction, target: &TargetVars) -> Result<Var> {
    let smpl = smpl_vector(g, pred)?;
    let pairs = [
        (pred.vertices, target.vertices),
        (pred.j2d, target.j2d),
        (pred.joints3d, target.j3d),
    ];
    let mut terms = Vec::with_capacity(NUM_TERMS);
    for (a, b) in pairs {
        let m = point_mse(g, a, b)?;
        terms.push(g.reshape(m, &[1])?);
    }
    let m = g.mse(smpl, target.smpl)?;
    terms.push(g.reshape(m, &[1])?);
    g.concat(&terms, 0)
}

/// `sum_k m_k exp(-2 s_k) + sum_k s_k` for MSEs `m (4,)` and log standard
/// deviations `s (4,)`.
pub fn weighted_sum<T: Real>(g: &mut Graph<T>, mse: Var, log_sigma: Var) -> Result<Var> {
    if g.shape(mse) != [NUM_TERMS] || g.shape(log_sigma) != [NUM_TERMS] {
        return Err(Error::shape(
            "loss_reg",
            format!("mse {:?}, log_sigma {:?}", g.shape(mse), g.shape(log_sigma)),
        ));
    }
    let s2 = g.mul_scalar(log_sigma, -2.0);
    let w = g.exp(s2);
    let weighted = g.mul(mse, w)?;
    let a = g.sum(weighted);
    let b = g.sum(log_sigma);
    g.add(a, b)
}

/// The homoscedastic multi-task regression loss.
pub fn loss_reg<T: Real>(g: &mut Graph<T>, pred: &Prediction, target: &TargetVars, log_sigma: Var) -> Result<RegLoss> {
    let mse = term_mses(g, pred, target)?;
    let total = weighted_sum(g, mse, log_sigma)?;
    if !g.value(total).is_finite() {
        return Err(Error::NonFinite("regression loss".into()));
    }
    Ok(RegLoss { total, mse })
}

/// Self-supervised loss against 2D evidence only: joint MSE plus the
/// spatial mean of the IUV discrepancy map.
pub fn loss_refine<T: Real>(g: &mut Graph<T>, j2d_pred: Var, iuv_pred: Var, j2d: Var, iuv: Var) -> Result<Var> {
    let a = point_mse(g, j2d_pred, j2d)?;
    let d = discrepancy_iuv(g, iuv_pred, iuv)?;
    let b = g.mean(d);
    g.add(a, b)
}
