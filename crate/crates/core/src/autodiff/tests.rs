use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::tensor::Tensor;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Contracts `y` with fixed pseudo-random weights so every output element
/// contributes a distinct amount to the scalar.
fn weigh(g: &mut Graph<f64>, y: Var) -> Var {
    let n = g.value(y).numel();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 5.0 + 0.1).collect();
    let wt = g.constant(Tensor::new(g.shape(y).to_vec(), w).unwrap());
    let p = g.mul(y, wt).unwrap();
    g.sum(p)
}

fn check<F>(f: F, inputs: &[Tensor<f64>])
where
    F: Fn(&mut Graph<f64>, &[Var]) -> crate::Result<Var>,
{
    let report = gradcheck(f, inputs, GradcheckOptions::default()).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn elementwise_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4], 0.2, 2.0);
    let b = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let s = rand_tensor(&mut rng, &[1], 0.5, 1.5);
    check(|g, v| { let y = g.add(v[0], v[1])?; Ok(weigh(g, y)) }, &[a.clone(), b.clone()]);
    check(|g, v| { let y = g.sub(v[0], v[1])?; Ok(weigh(g, y)) }, &[a.clone(), b.clone()]);
    check(|g, v| { let y = g.mul(v[0], v[1])?; Ok(weigh(g, y)) }, &[a.clone(), b.clone()]);
    check(|g, v| { let y = g.mul(v[0], v[1])?; Ok(weigh(g, y)) }, &[a.clone(), s.clone()]);
    check(|g, v| { let y = g.sub(v[1], v[0])?; Ok(weigh(g, y)) }, &[a.clone(), s.clone()]);
    check(|g, v| { let y = g.log(v[0]); Ok(weigh(g, y)) }, &[a.clone()]);
    check(|g, v| { let y = g.exp(v[0]); Ok(weigh(g, y)) }, &[b.clone()]);
    check(|g, v| { let y = g.reciprocal(v[0]); Ok(weigh(g, y)) }, &[a.clone()]);
    check(|g, v| { let y = g.sqrt(v[0]); Ok(weigh(g, y)) }, &[a.clone()]);
    check(|g, v| { let y = g.square(v[0]); Ok(weigh(g, y)) }, &[b.clone()]);
    check(|g, v| { let y = g.neg(v[0]); Ok(weigh(g, y)) }, &[b.clone()]);
    check(|g, v| { let y = g.add_scalar(v[0], 0.3); let y = g.mul_scalar(y, -2.5); Ok(weigh(g, y)) }, &[b.clone()]);
    // away from the kinks
    let away = b.map(|x| if x.abs() < 0.05 { x + 0.2 } else { x });
    check(|g, v| { let y = g.relu(v[0]); Ok(weigh(g, y)) }, &[away.clone()]);
    check(|g, v| { let y = g.abs(v[0]); Ok(weigh(g, y)) }, &[away]);
    check(|g, v| g.mse(v[0], v[1]), &[a.clone(), b.clone()]);
    check(|g, v| Ok(g.mean(v[0])), &[a]);
}

#[test]
fn structural_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2, 2, 4], -1.0, 1.0);
    check(|g, v| { let y = g.concat(&[v[0], v[1]], 1)?; Ok(weigh(g, y)) }, &[a.clone(), b.clone()]);
    check(|g, v| { let y = g.slice(v[0], 2, 1, 2)?; Ok(weigh(g, y)) }, &[a.clone()]);
    check(|g, v| { let y = g.gather(v[0], 1, &[2, 0, 2])?; Ok(weigh(g, y)) }, &[a.clone()]);
    check(|g, v| { let y = g.reshape(v[0], &[6, 4])?; Ok(weigh(g, y)) }, &[a]);
}

#[test]
fn matmul_and_linear_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[5, 4], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[4], -1.0, 1.0);
    check(|g, v| { let y = g.matmul(v[0], v[1])?; Ok(weigh(g, y)) }, &[x.clone(), w.clone()]);
    check(|g, v| { let y = g.linear(v[0], v[1], Some(v[2]))?; Ok(weigh(g, y)) }, &[x, w, b]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, k, n) = (7, 9, 5);
    let a = rand_tensor(&mut rng, &[m, k], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[k, n], -1.0, 1.0);
    let mut g = Graph::new();
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.matmul(va, vb).unwrap();
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.data()[i * k + t] * b.data()[t * n + j];
            }
            assert!((g.value(c).data()[i * n + j] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_and_pool_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[2, 2, 5, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[3], -1.0, 1.0);
    check(
        |g, v| { let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?; Ok(weigh(g, y)) },
        &[x.clone(), w.clone(), b.clone()],
    );
    check(|g, v| { let y = g.conv2d(v[0], v[1], None, 1, 0)?; Ok(weigh(g, y)) }, &[x, w]);
    let p = rand_tensor(&mut rng, &[1, 2, 4, 6], -1.0, 1.0);
    check(|g, v| { let y = g.avg_pool2d(v[0], 2, 3)?; Ok(weigh(g, y)) }, &[p.clone()]);
    check(|g, v| { let y = g.global_avg_pool(v[0])?; Ok(weigh(g, y)) }, &[p]);
}

#[test]
fn conv_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[1, 2, 6, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0);
    let mut g = Graph::new();
    let (vx, vw) = (g.constant(x.clone()), g.constant(w.clone()));
    let y = g.conv2d(vx, vw, None, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 2, 3, 3]);
    let at = |c: usize, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= 6 || j >= 5 {
            0.0
        } else {
            x.data()[(c * 6 + i as usize) * 5 + j as usize]
        }
    };
    for o in 0..2 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut acc = 0.0;
                for c in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            acc += w.data()[((o * 2 + c) * 3 + ky) * 3 + kx] * at(c, iy, ix);
                        }
                    }
                }
                assert!((g.value(y).data()[(o * 3 + oy) * 3 + ox] - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relu_and_detach_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);

    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![2], vec![1.5, -2.0]).unwrap());
    let d = g.detach(x);
    let y = g.mul(x, d).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    // d/dx (x * stop(x)) = stop(x)
    assert_eq!(g.grad(x).unwrap().data(), &[1.5, -2.0]);
}

#[test]
fn backward_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let y = g.square(x);
    assert!(matches!(g.backward(y), Err(Error::Backward(_))));
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(matches!(g.backward(s), Err(Error::Backward(_))));

    let mut g = Graph::<f64>::new();
    let a = g.param(Tensor::zeros(&[2, 3]));
    let b = g.param(Tensor::zeros(&[3, 2]));
    assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
    assert!(matches!(g.matmul(a, a), Err(Error::Shape { .. })));
}

#[test]
fn unused_param_gets_zero_grad() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::scalar(3.0));
    let unused = g.param(Tensor::zeros(&[4]));
    let y = g.square(x);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 6.0);
    assert_eq!(g.grad(unused).unwrap().data(), &[0.0; 4]);
}

#[test]
fn rotation_ops_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r6 = rand_tensor(&mut rng, &[2, 3, 6], -1.0, 1.0);
    check(|g, v| { let y = g.rot6d_to_matrix(v[0])?; Ok(weigh(g, y)) }, &[r6]);
    let aa = rand_tensor(&mut rng, &[4, 3], -1.5, 1.5);
    check(|g, v| { let y = g.axis_angle_to_matrix(v[0])?; Ok(weigh(g, y)) }, &[aa]);
    // Taylor branch near zero angle
    let tiny = Tensor::new(vec![1, 3], vec![1e-8, -2e-8, 5e-9]).unwrap();
    let report = gradcheck(
        |g, v| { let y = g.axis_angle_to_matrix(v[0])?; Ok(weigh(g, y)) },
        &[tiny],
        GradcheckOptions { eps: 1e-9, tol: 1e-4, floor: 1e-3 },
    )
    .unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn rot6d_columns_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r6 = rand_tensor(&mut rng, &[50, 6], -2.0, 2.0);
    let mut g = Graph::new();
    let v = g.constant(r6);
    let m = g.rot6d_to_matrix(v).unwrap();
    for r in g.value(m).data().chunks(9) {
        let col = |c: usize| [r[c], r[3 + c], r[6 + c]];
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| col(i)[k] * col(j)[k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
            + r[2] * (r[3] * r[7] - r[4] * r[6]);
        assert!((det - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rot6d_rejects_zero_column() {
    let mut g = Graph::<f64>::new();
    let v = g.constant(Tensor::new(vec![1, 6], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
    assert!(matches!(g.rot6d_to_matrix(v), Err(Error::Degenerate(_))));
}

#[test]
fn kinematics_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let parents = [-1, 0, 1, 1, 3];
    let nj = parents.len();
    let r6 = rand_tensor(&mut rng, &[2, nj, 6], -1.0, 1.0);
    let rest = rand_tensor(&mut rng, &[2, nj, 3], -1.0, 1.0);
    check(
        |g, v| {
            let r = g.rot6d_to_matrix(v[0])?;
            let y = g.kinematic_chain(r, v[1], &parents)?;
            Ok(weigh(g, y))
        },
        &[r6.clone(), rest.clone()],
    );

    let nv = 6;
    let dense: Vec<f64> = (0..nv * nj)
        .map(|i| if i % 3 == 0 { 0.0 } else { ((i * 37) % 11) as f64 / 10.0 })
        .collect();
    let weights = Arc::new(SparseRows::from_dense(&dense, nv, nj));
    let verts = rand_tensor(&mut rng, &[2, nv, 3], -1.0, 1.0);
    check(
        |g, v| {
            let r = g.rot6d_to_matrix(v[0])?;
            let t = g.kinematic_chain(r, v[1], &parents)?;
            let y = g.blend_skin(t, v[2], &weights)?;
            Ok(weigh(g, y))
        },
        &[r6, rest, verts.clone()],
    );

    let reg = Arc::new(SparseRows::from_dense(&dense[..3 * nv], 3, nv));
    check(|g, v| { let y = g.sparse_left_matmul(&reg, v[0])?; Ok(weigh(g, y)) }, &[verts.clone()]);
    let cam = rand_tensor(&mut rng, &[2, 3], 0.5, 1.0);
    check(|g, v| { let y = g.weak_perspective(v[0], v[1])?; Ok(weigh(g, y)) }, &[verts, cam]);
}

#[test]
fn interp_uv_gradcheck() {
    // two triangles covering part of a 4x4 grid
    let xy = Tensor::new(
        vec![1, 4, 2],
        vec![-0.9, -0.8, 0.85, -0.9, -0.8, 0.9, 0.8, 0.7],
    )
    .unwrap();
    let (h, w) = (4, 4);
    let mut pixels = vec![None; h * w];
    let fa = PixelFace { verts: [0, 1, 2], u: [0.1, 0.9, 0.2], v: [0.3, 0.2, 0.8] };
    let fb = PixelFace { verts: [1, 3, 2], u: [0.9, 0.6, 0.2], v: [0.2, 0.95, 0.8] };
    let px = |x: f64, y: f64| [(x + 1.0) * w as f64 / 2.0, (y + 1.0) * h as f64 / 2.0];
    let d = xy.data();
    let p: Vec<[f64; 2]> = (0..4).map(|i| px(d[2 * i], d[2 * i + 1])).collect();
    let mut covered = 0;
    for y in 0..h {
        for x in 0..w {
            let pt = [x as f64 + 0.5, y as f64 + 0.5];
            for f in [fa, fb] {
                let [a, b, c] = f.verts;
                let bc = barycentric(p[a], p[b], p[c], pt);
                if bc.iter().all(|&t| t >= 0.0) {
                    pixels[y * w + x] = Some(f);
                    covered += 1;
                    break;
                }
            }
        }
    }
    assert!(covered > 8);
    let assign = Arc::new(UvAssignment { batch: 1, height: h, width: w, pixels });
    check(|g, v| { let y = g.interp_uv(v[0], &assign)?; Ok(weigh(g, y)) }, &[xy]);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    let mut adam = AdamState::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
    let grads = vec![Tensor::new(vec![3], vec![4.0, -0.01, 0.0]).unwrap()];
    adam.step(&mut store, &grads).unwrap();
    let x = store.get(id).data();
    // bias-corrected first step is lr * g / (|g| + eps')
    assert!((x[0] - 0.9).abs() < 1e-7);
    assert!((x[1] - -1.9).abs() < 1e-5);
    assert_eq!(x[2], 0.5);
    assert_eq!(adam.step, 1);
}

#[test]
fn adam_minimizes_quadratic() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::new(vec![2], vec![3.0, -4.0]).unwrap());
    let target = [1.0, 2.0];
    let mut adam = AdamState::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
    for _ in 0..200 {
        let mut g = Graph::new();
        let mut bind = Binding::new(&store);
        let x = bind.var(&mut g, &store, id);
        let t = g.constant(Tensor::new(vec![2], target.to_vec()).unwrap());
        let loss = g.mse(x, t).unwrap();
        g.backward(loss).unwrap();
        let grads = bind.grads(&g, &store);
        adam.step(&mut store, &grads).unwrap();
    }
    let x = store.get(id).data();
    assert!((x[0] - 1.0).abs() < 0.05 && (x[1] - 2.0).abs() < 0.05, "{x:?}");
}

#[test]
fn adam_rejects_nan_gradient() {
    let mut store = ParamStore::<f32>::new();
    store.add("layer.weight", Tensor::zeros(&[2]));
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let grads = vec![Tensor::new(vec![2], vec![0.0, f32::NAN]).unwrap()];
    match adam.step(&mut store, &grads) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("layer.weight")),
        other => panic!("{other:?}"),
    }
    assert_eq!(adam.step, 0);
}

#[test]
fn linear_layer_trains_through_binding() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::<f64>::new();
    let layer = nn::LinearLayer::new(&mut store, "fc", 3, 2, 1.0, &mut rng);
    let mut g = Graph::new();
    let mut bind = Binding::new(&store);
    let x = g.constant(rand_tensor(&mut rng, &[4, 3], -1.0, 1.0));
    let y = layer.forward(&mut g, &mut bind, &store, x).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    let grads = bind.grads(&g, &store);
    assert_eq!(grads[layer.b.0].data(), &[4.0, 4.0]);
    assert_eq!(grads[layer.w.0].shape(), &[3, 2]);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sum_grad_is_ones(vals in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let n = vals.len();
            let mut g = Graph::new();
            let x = g.param(Tensor::new(vec![n], vals).unwrap());
            let s = g.sum(x);
            g.backward(s).unwrap();
            prop_assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
        }

        #[test]
        fn concat_then_slice_is_identity(a in prop::collection::vec(-1.0f64..1.0, 6), b in prop::collection::vec(-1.0f64..1.0, 4)) {
            let mut g = Graph::new();
            let va = g.constant(Tensor::new(vec![2, 3], a.clone()).unwrap());
            let vb = g.constant(Tensor::new(vec![2, 2], b).unwrap());
            let c = g.concat(&[va, vb], 1).unwrap();
            let s = g.slice(c, 1, 0, 3).unwrap();
            prop_assert_eq!(g.value(s).data(), &a[..]);
        }
    }
}
