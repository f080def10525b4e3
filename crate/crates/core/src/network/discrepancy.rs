//! Alignment discrepancies between a prediction and the 2D evidence.

use crate::autodiff::{Graph, Var};
use crate::body::NUM_PARTS;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Guard in the denominator of the differentiable part indicator.
pub const IUV_EPS: f64 = 1e-5;

/// `pred - evidence` for `(B, N_J, 2)` joints.
pub fn discrepancy_joints<T: Real>(g: &mut Graph<T>, pred: Var, evidence: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(evidence) {
        return Err(Error::shape(
            "discrepancy_joints",
            format!("{:?} vs {:?}", g.shape(pred), g.shape(evidence)),
        ));
    }
    g.sub(pred, evidence)
}

/// `1` where an I value is a nonzero multiple of `1/P`, in either `f64` or
/// the `f32` rounding that stored maps carry.
fn part_mask<T: Real>(i: &[T]) -> Vec<T> {
    i.iter()
        .map(|&x| {
            let x = x.as_f64();
            let p = (x * NUM_PARTS as f64).round();
            let q = p / NUM_PARTS as f64;
            let exact = (1.0..=NUM_PARTS as f64).contains(&p) && (x == q || x == q as f32 as f64);
            if exact {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Per-pixel terms `(B, 3, H0, W0)` for maps `(B, 3, H0, W0)`:
/// channel 0 is `|dI| / (|dI|_detached + eps)`, channels 1 and 2 are the
/// signed differences of part-masked U and V.
pub fn discrepancy_iuv_terms<T: Real>(g: &mut Graph<T>, pred: Var, evidence: Var) -> Result<Var> {
    let (sp, se) = (g.shape(pred).to_vec(), g.shape(evidence).to_vec());
    if sp != se || sp.len() != 4 || sp[1] != 3 {
        return Err(Error::shape("discrepancy_iuv", format!("{:?} vs {:?}", sp, se)));
    }
    let mask_shape = [sp[0], 1, sp[2], sp[3]];
    let channel = |g: &mut Graph<T>, m: Var, c: usize| g.slice(m, 1, c, 1);
    let (pi, ei) = (channel(g, pred, 0)?, channel(g, evidence, 0)?);
    let d = g.sub(pi, ei)?;
    let num = g.abs(d);
    let den = g.detach(num);
    let den = g.add_scalar(den, IUV_EPS);
    let inv = g.reciprocal(den);
    let term1 = g.mul(num, inv)?;

    let pm = Tensor::new(mask_shape.to_vec(), part_mask(g.value(pi).data()))?;
    let em = Tensor::new(mask_shape.to_vec(), part_mask(g.value(ei).data()))?;
    let pm = g.constant(pm);
    let em = g.constant(em);
    let mut terms = vec![term1];
    for c in 1..3 {
        let pc = channel(g, pred, c)?;
        let ec = channel(g, evidence, c)?;
        let a = g.mul(pm, pc)?;
        let b = g.mul(em, ec)?;
        terms.push(g.sub(a, b)?);
    }
    g.concat(&terms, 1)
}

/// The discrepancy map `(B, H0, W0)`: the sum of the three terms.
pub fn discrepancy_iuv<T: Real>(g: &mut Graph<T>, pred: Var, evidence: Var) -> Result<Var> {
    let terms = discrepancy_iuv_terms(g, pred, evidence)?;
    let s = g.shape(terms).to_vec();
    let t: Vec<Var> = (0..3).map(|c| g.slice(terms, 1, c, 1)).collect::<Result<_>>()?;
    let a = g.add(t[0], t[1])?;
    let sum = g.add(a, t[2])?;
    g.reshape(sum, &[s[0], s[2], s[3]])
}
