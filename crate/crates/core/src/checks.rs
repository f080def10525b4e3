//! Registered finite-difference gradient checks, grouped by scope.
//!
//! Every differentiable op is checked in 64-bit at `eps = 1e-6` with a
//! relative tolerance of `1e-5` (`detach` is a deliberate non-derivative and
//! is covered by unit examples instead); the composed training and refinement losses
//! through the whole network use `1e-3`.

use std::cell::RefCell;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    barycentric, gradcheck, gradcheck_entries, Binding, GradcheckOptions, GradcheckReport, Graph, ParamStore, PixelFace,
    SparseRows, UvAssignment, Var,
};
use crate::body::{generate_toy_model, PreparedModel, NUM_BETAS, NUM_JOINTS};
use crate::camera::project_perspective_graph;
use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::network::{discrepancy_iuv, discrepancy_joints, Network, RasterMemo};
use crate::synth::Synthesizer;
use crate::tensor::Tensor;
use crate::train::{inputs_from_samples, loss_refine, loss_reg, weighted_sum, Targets};

pub const OP_TOL: f64 = 1e-5;
pub const PIPELINE_TOL: f64 = 1e-3;
pub const SCOPES: &[&str] = &["ops", "geometry", "loss", "network"];

pub struct Check {
    pub scope: &'static str,
    pub name: &'static str,
    pub run: fn() -> Result<GradcheckReport>,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub scope: &'static str,
    pub name: &'static str,
    pub report: GradcheckReport,
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Contracts `y` with fixed weights so each output element counts
/// differently in the scalar.
fn weigh(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    let n = g.value(y).numel();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 5.0 + 0.1).collect();
    let wt = g.constant(Tensor::new(g.shape(y).to_vec(), w)?);
    let p = g.mul(y, wt)?;
    Ok(g.sum(p))
}

fn op_opts() -> GradcheckOptions {
    GradcheckOptions {
        eps: 1e-6,
        tol: OP_TOL,
        ..Default::default()
    }
}

/// Runs several single-op checks and keeps the worst.
fn merge(reports: Vec<GradcheckReport>) -> GradcheckReport {
    let mut it = reports.into_iter();
    let mut acc = it.next().expect("at least one report");
    for r in it {
        acc.checked += r.checked;
        acc.passed &= r.passed;
        acc.max_abs_error = acc.max_abs_error.max(r.max_abs_error);
        if r.max_rel_error > acc.max_rel_error {
            acc.max_rel_error = r.max_rel_error;
            acc.worst = r.worst;
        }
    }
    acc
}

macro_rules! unary {
    ($op:ident, $x:expr) => {
        gradcheck(|g, v| { let y = g.$op(v[0]); weigh(g, y) }, &[$x.clone()], op_opts())?
    };
}

fn elementwise() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4], 0.2, 2.0);
    let b = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let s = rand_tensor(&mut rng, &[1], 0.5, 1.5);
    // keep relu/abs inputs off their kinks
    let away = b.map(|x| if x.abs() < 0.05 { x + 0.2 } else { x });
    let ab = [a.clone(), b.clone()];
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = g.add(v[0], v[1])?; weigh(g, y) }, &ab, o)?,
        gradcheck(|g, v| { let y = g.sub(v[0], v[1])?; weigh(g, y) }, &ab, o)?,
        gradcheck(|g, v| { let y = g.mul(v[0], v[1])?; weigh(g, y) }, &ab, o)?,
        gradcheck(|g, v| { let y = g.mul(v[0], v[1])?; weigh(g, y) }, &[a.clone(), s.clone()], o)?,
        gradcheck(|g, v| { let y = g.sub(v[1], v[0])?; weigh(g, y) }, &[a.clone(), s], o)?,
        unary!(log, a),
        unary!(exp, b),
        unary!(reciprocal, a),
        unary!(sqrt, a),
        unary!(square, b),
        unary!(neg, b),
        unary!(relu, away),
        unary!(abs, away),
        gradcheck(|g, v| { let y = g.add_scalar(v[0], 0.3); let y = g.mul_scalar(y, -2.5); weigh(g, y) }, &[b.clone()], o)?,
        gradcheck(|g, v| g.mse(v[0], v[1]), &ab, o)?,
        gradcheck(|g, v| Ok(g.mean(v[0])), &[a.clone()], o)?,
        gradcheck(|g, v| { let s = g.sum(v[0]); let t = g.square(s); Ok(t) }, &[b], o)?,
    ]))
}

fn structural() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = g.concat(&[v[0], v[1]], 1)?; weigh(g, y) }, &[a.clone(), b], o)?,
        gradcheck(|g, v| { let y = g.slice(v[0], 2, 1, 2)?; weigh(g, y) }, &[a.clone()], o)?,
        gradcheck(|g, v| { let y = g.gather(v[0], 1, &[2, 0, 2])?; weigh(g, y) }, &[a.clone()], o)?,
        gradcheck(|g, v| { let y = g.reshape(v[0], &[6, 4])?; weigh(g, y) }, &[a], o)?,
    ]))
}

fn dense() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[5, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[4], -1.0, 1.0);
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = g.matmul(v[0], v[1])?; weigh(g, y) }, &[x.clone(), w.clone()], o)?,
        gradcheck(|g, v| { let y = g.linear(v[0], v[1], Some(v[2]))?; weigh(g, y) }, &[x.clone(), w.clone(), b], o)?,
        gradcheck(|g, v| { let y = g.linear(v[0], v[1], None)?; weigh(g, y) }, &[x, w], o)?,
    ]))
}

fn conv() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[2, 2, 5, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[3], -1.0, 1.0);
    let p = rand_tensor(&mut rng, &[1, 2, 4, 6], -1.0, 1.0);
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?; weigh(g, y) }, &[x.clone(), w.clone(), b], o)?,
        gradcheck(|g, v| { let y = g.conv2d(v[0], v[1], None, 1, 0)?; weigh(g, y) }, &[x, w], o)?,
        gradcheck(|g, v| { let y = g.avg_pool2d(v[0], 2, 3)?; weigh(g, y) }, &[p.clone()], o)?,
        gradcheck(|g, v| { let y = g.global_avg_pool(v[0])?; weigh(g, y) }, &[p], o)?,
    ]))
}

fn rotations() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r6 = rand_tensor(&mut rng, &[2, 3, 6], -1.0, 1.0);
    let aa = rand_tensor(&mut rng, &[4, 3], -1.5, 1.5);
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = g.rot6d_to_matrix(v[0])?; weigh(g, y) }, &[r6], o)?,
        gradcheck(|g, v| { let y = g.axis_angle_to_matrix(v[0])?; weigh(g, y) }, &[aa], o)?,
    ]))
}

fn kinematics() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let parents = [-1, 0, 1, 1, 3];
    let nj = parents.len();
    let r6 = rand_tensor(&mut rng, &[2, nj, 6], -1.0, 1.0);
    let rest = rand_tensor(&mut rng, &[2, nj, 3], -1.0, 1.0);
    let nv = 6;
    let dense: Vec<f64> = (0..nv * nj)
        .map(|i| if i % 3 == 0 { 0.0 } else { ((i * 37) % 11) as f64 / 10.0 })
        .collect();
    let weights = Arc::new(SparseRows::from_dense(&dense, nv, nj));
    let reg = Arc::new(SparseRows::from_dense(&dense[..3 * nv], 3, nv));
    let verts = rand_tensor(&mut rng, &[2, nv, 3], -1.0, 1.0);
    let cam = rand_tensor(&mut rng, &[2, 3], 0.5, 1.0);
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(
            |g, v| {
                let r = g.rot6d_to_matrix(v[0])?;
                let y = g.kinematic_chain(r, v[1], &parents)?;
                weigh(g, y)
            },
            &[r6.clone(), rest.clone()],
            o,
        )?,
        gradcheck(
            |g, v| {
                let r = g.rot6d_to_matrix(v[0])?;
                let t = g.kinematic_chain(r, v[1], &parents)?;
                let y = g.blend_skin(t, v[2], &weights)?;
                weigh(g, y)
            },
            &[r6, rest, verts.clone()],
            o,
        )?,
        gradcheck(|g, v| { let y = g.sparse_left_matmul(&reg, v[0])?; weigh(g, y) }, &[verts.clone()], o)?,
        gradcheck(|g, v| { let y = g.weak_perspective(v[0], v[1])?; weigh(g, y) }, &[verts, cam], o)?,
    ]))
}

fn perspective() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = rand_tensor(&mut rng, &[2, 5, 3], -0.5, 0.5);
    for c in p.data_mut().chunks_mut(3) {
        c[2] += 2.5;
    }
    gradcheck(
        |g, v| {
            let y = project_perspective_graph(g, v[0], [40.0, 42.0], [16.0, 15.5])?;
            weigh(g, y)
        },
        &[p],
        op_opts(),
    )
}

fn body_forward() -> Result<GradcheckReport> {
    let model = generate_toy_model(7, 200)?;
    let prepared = PreparedModel::<f64>::new(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r6 = rand_tensor(&mut rng, &[1, NUM_JOINTS, 6], -1.0, 1.0);
    let beta = rand_tensor(&mut rng, &[1, NUM_BETAS], -1.0, 1.0);
    gradcheck(
        |g, v| {
            let r = g.rot6d_to_matrix(v[0])?;
            let r = g.reshape(r, &[1, NUM_JOINTS, 9])?;
            let out = prepared.forward(g, r, v[1])?;
            let a = weigh(g, out.vertices)?;
            let b = weigh(g, out.joints)?;
            g.add(a, b)
        },
        &[r6, beta],
        op_opts(),
    )
}

fn interp_uv() -> Result<GradcheckReport> {
    let xy = Tensor::new(vec![1, 4, 2], vec![-0.9, -0.8, 0.85, -0.9, -0.8, 0.9, 0.8, 0.7])?;
    let (h, w) = (4, 4);
    let mut pixels = vec![None; h * w];
    let fa = PixelFace { verts: [0, 1, 2], u: [0.1, 0.9, 0.2], v: [0.3, 0.2, 0.8] };
    let fb = PixelFace { verts: [1, 3, 2], u: [0.9, 0.6, 0.2], v: [0.2, 0.95, 0.8] };
    let d = xy.data();
    let p: Vec<[f64; 2]> = (0..4)
        .map(|i| [(d[2 * i] + 1.0) * w as f64 / 2.0, (d[2 * i + 1] + 1.0) * h as f64 / 2.0])
        .collect();
    for y in 0..h {
        for x in 0..w {
            let pt = [x as f64 + 0.5, y as f64 + 0.5];
            pixels[y * w + x] = [fa, fb].into_iter().find(|f| {
                let [a, b, c] = f.verts;
                barycentric(p[a], p[b], p[c], pt).iter().all(|&t| t >= 0.0)
            });
        }
    }
    let assign = Arc::new(UvAssignment { batch: 1, height: h, width: w, pixels });
    gradcheck(|g, v| { let y = g.interp_uv(v[0], &assign)?; weigh(g, y) }, &[xy], op_opts())
}

fn discrepancies() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (b, nj, h, w) = (2, 5, 3, 4);
    let j2d = rand_tensor(&mut rng, &[b, nj, 2], -1.0, 1.0);
    let ev = rand_tensor(&mut rng, &[b, nj, 2], -1.0, 1.0);
    // predicted I plane constant and U/V free; target with mixed parts
    let mut pred = rand_tensor(&mut rng, &[b, 3, h, w], 0.05, 0.95);
    let mut tgt = rand_tensor(&mut rng, &[b, 3, h, w], 0.05, 0.95);
    let hw = h * w;
    for bi in 0..b {
        for k in 0..hw {
            pred.data_mut()[bi * 3 * hw + k] = [0.0, 3.0 / 24.0, 7.0 / 24.0][k % 3];
            tgt.data_mut()[bi * 3 * hw + k] = [3.0 / 24.0, 0.0, 7.0 / 24.0, 3.0 / 24.0][k % 4];
        }
    }
    let (pi, ti) = (pred.clone(), tgt.clone());
    let o = op_opts();
    Ok(merge(vec![
        gradcheck(|g, v| { let y = discrepancy_joints(g, v[0], v[1])?; weigh(g, y) }, &[j2d, ev], o)?,
        gradcheck(
            |g, v| {
                // only U/V of the prediction vary; the I plane is a constant
                let i = g.constant(pi.clone());
                let i = g.slice(i, 1, 0, 1)?;
                let uv = g.slice(v[0], 1, 1, 2)?;
                let p = g.concat(&[i, uv], 1)?;
                let t = g.constant(ti.clone());
                let y = discrepancy_iuv(g, p, t)?;
                weigh(g, y)
            },
            &[pred],
            o,
        )?,
    ]))
}

fn weighted_loss() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let m = rand_tensor(&mut rng, &[4], 0.01, 2.0);
    let s = rand_tensor(&mut rng, &[4], -1.0, 1.0);
    gradcheck(|g, v| weighted_sum(g, v[0], v[1]), &[m, s], op_opts())
}

/// Desk-scale configuration used by the composed-pipeline checks.
pub fn desk_config() -> RunConfig {
    RunConfig::parse("height = 32\nmodel_verts = 600\npose_bank_size = 64\nseed = 21").expect("valid desk config")
}

/// Composed loss through encoders, alignment, fusion, body model and
/// renderer, checked at random parameter entries.
fn pipeline(refine: bool) -> Result<GradcheckReport> {
    let cfg = desk_config();
    let syn = Synthesizer::from_config(&cfg)?;
    let samples = syn.materialize(0, 1)?;
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(if refine { 23 } else { 22 });
    let net = Network::<f64>::new(&cfg, &syn.model, &mut store, &mut rng)?;
    // zero biases behind dead ReLU inputs would sit exactly on a kink
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".bias") {
            for v in store.get_mut(id).data_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
        }
    }
    let log_sigma = if refine { None } else { Some(store.add(crate::train::LOG_SIGMA, rand_tensor(&mut rng, &[4], -0.5, 0.5))) };
    let refs: Vec<_> = samples.iter().collect();
    let x = inputs_from_samples::<f64>(&net.dims, &refs)?;
    let y = Targets::<f64>::from_samples(&refs)?;
    let inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let mut entries: Vec<(usize, usize)> = (0..24)
        .map(|_| {
            let i = rng.random_range(0..inputs.len());
            (i, rng.random_range(0..inputs[i].numel()))
        })
        .collect();
    if let Some(id) = log_sigma {
        entries.extend((0..4).map(|k| (id.0, k)));
    }
    let memo = RefCell::new(RasterMemo::recording());
    gradcheck_entries(
        |g, v| {
            let mut m = memo.borrow_mut();
            if !m.is_empty() {
                m.rewind();
            }
            let mut bind = Binding::from_vars(&store, v)?;
            let xv = x.to_graph(g);
            let out = net.forward(g, &mut bind, &store, &xv, Some(&mut m))?;
            let p = net.predict(g, out.theta)?;
            match log_sigma {
                Some(id) => {
                    let yv = y.to_graph(g);
                    let s = bind.var(g, &store, id);
                    Ok(loss_reg(g, &p, &yv, s)?.total)
                }
                None => {
                    let r = net.render(g, &p, Some(&mut m))?;
                    loss_refine(g, p.j2d, r, xv.j2d, xv.iuv_small)
                }
            }
        },
        &inputs,
        &entries,
        GradcheckOptions {
            eps: 1e-6,
            tol: PIPELINE_TOL,
            ..Default::default()
        },
    )
}

fn pipeline_reg() -> Result<GradcheckReport> {
    pipeline(false)
}

fn pipeline_refine() -> Result<GradcheckReport> {
    pipeline(true)
}

pub fn registry() -> Vec<Check> {
    vec![
        Check { scope: "ops", name: "elementwise", run: elementwise },
        Check { scope: "ops", name: "structural", run: structural },
        Check { scope: "ops", name: "matmul/linear", run: dense },
        Check { scope: "ops", name: "conv/pool", run: conv },
        Check { scope: "geometry", name: "rotations", run: rotations },
        Check { scope: "geometry", name: "kinematics/skinning/weak-perspective", run: kinematics },
        Check { scope: "geometry", name: "perspective", run: perspective },
        Check { scope: "geometry", name: "body-forward", run: body_forward },
        Check { scope: "geometry", name: "interp-uv", run: interp_uv },
        Check { scope: "loss", name: "discrepancies", run: discrepancies },
        Check { scope: "loss", name: "uncertainty-weighting", run: weighted_loss },
        Check { scope: "network", name: "regression-loss-pipeline", run: pipeline_reg },
        Check { scope: "network", name: "refinement-loss-pipeline", run: pipeline_refine },
    ]
}

/// Runs every registered check in `scope` (or all for `"all"`).
pub fn run_scope(scope: &str) -> Result<Vec<CheckResult>> {
    if scope != "all" && !SCOPES.contains(&scope) {
        return Err(Error::InvalidArgument(format!(
            "unknown gradcheck scope `{}` (expected all, {})",
            scope,
            SCOPES.join(", ")
        )));
    }
    registry()
        .into_iter()
        .filter(|c| scope == "all" || c.scope == scope)
        .map(|c| {
            Ok(CheckResult {
                scope: c.scope,
                name: c.name,
                report: (c.run)()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_scopes_pass() {
        for scope in ["ops", "geometry", "loss"] {
            for r in run_scope(scope).unwrap() {
                assert!(r.report.passed, "{} {}: {}", r.scope, r.name, r.report);
                assert_eq!(r.report.tol, OP_TOL);
            }
        }
    }

    #[test]
    fn network_scope_passes() {
        let rs = run_scope("network").unwrap();
        assert_eq!(rs.len(), 2);
        for r in rs {
            assert!(r.report.passed, "{}: {}", r.name, r.report);
            assert!(r.report.checked >= 24);
        }
    }

    #[test]
    fn unknown_scope_is_rejected() {
        assert!(run_scope("everything").is_err());
    }

    #[test]
    fn merge_keeps_worst() {
        let mk = |rel: f64, passed| GradcheckReport {
            checked: 2,
            max_rel_error: rel,
            max_abs_error: rel,
            worst: Some((0, rel as usize)),
            tol: OP_TOL,
            passed,
        };
        let m = merge(vec![mk(1e-7, true), mk(3.0, false), mk(1e-6, true)]);
        assert_eq!((m.checked, m.passed, m.max_rel_error, m.worst), (6, false, 3.0, Some((0, 3))));
    }
}
