use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rotation::*;
use super::*;
use crate::autodiff::{gradcheck_entries, Graph, GradcheckOptions};
use crate::tensor::Tensor;

fn toy() -> BodyModel {
    generate_toy_model(3, 600).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> SmplParams {
    let mut p = SmplParams::zero();
    for aa in p.pose.iter_mut() {
        *aa = [0, 1, 2].map(|_| rng.random_range(-scale..scale));
    }
    for b in p.beta.iter_mut() {
        *b = rng.random_range(-2.0..2.0);
    }
    p
}

fn max_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn toy_model_is_valid_and_deterministic() {
    let m = toy();
    m.validate().unwrap();
    let nv = m.num_vertices();
    assert!((500..=700).contains(&nv), "{nv} vertices");
    assert_eq!(m.num_output_joints(), NUM_COCO_JOINTS);
    assert_eq!(m, generate_toy_model(3, 600).unwrap());
    assert_ne!(m.template, generate_toy_model(4, 600).unwrap().template);
    assert!(generate_toy_model(0, 199).is_err());
}

#[test]
fn toy_faces_are_part_pure_and_cover_all_parts() {
    let m = toy();
    let mut seen = [false; NUM_PARTS + 1];
    for f in &m.faces {
        let p = m.part_of_vertex(f[0]);
        assert!(f.iter().all(|&v| m.part_of_vertex(v) == p));
        seen[p] = true;
    }
    assert!(seen[1..].iter().all(|&s| s));
}

#[test]
fn toy_regressor_rows_are_affine() {
    let m = toy();
    let nv = m.num_vertices();
    for row in m.rest_regressor.chunks(nv).chain(m.joint_regressor.chunks(nv)) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn toy_is_upright_facing_the_camera() {
    let m = toy();
    let out = smpl_forward(&m, &SmplParams::zero()).unwrap();
    let j = &out.joints;
    // camera frame: y grows downward, the nose points toward -z
    assert!(j[0][1] < j[5][1] && j[5][1] < j[11][1] && j[11][1] < j[15][1]);
    assert!(j[0][2] < 0.0);
    // the person's left side is on +x
    assert!(j[5][0] > 0.0 && j[6][0] < 0.0);
}

#[test]
fn zero_params_reproduce_template() {
    let m = toy();
    let out = smpl_forward(&m, &SmplParams::zero()).unwrap();
    assert!(max_diff(&out.vertices, &m.template) <= 1e-6);
    let j = BodyModel::regress(&m.joint_regressor, &m.template);
    assert!(max_diff(&out.joints, &j) <= 1e-6);
}

#[test]
fn unit_beta_adds_one_direction() {
    let m = toy();
    for k in [0, 4, 9] {
        let mut p = SmplParams::zero();
        p.beta[k] = 1.0;
        let out = smpl_forward(&m, &p).unwrap();
        let expect: Vec<[f64; 3]> = (0..m.num_vertices())
            .map(|v| [0, 1, 2].map(|a| m.template[v][a] + m.shape_dirs[(v * 3 + a) * NUM_BETAS + k]))
            .collect();
        assert!(max_diff(&out.vertices, &expect) <= 1e-6);
    }
}

#[test]
fn shape_blend_is_linear() {
    let m = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b1 = random_params(&mut rng, 0.1).beta;
    let b2 = random_params(&mut rng, 0.1).beta;
    let sum: [f64; NUM_BETAS] = std::array::from_fn(|i| b1[i] + b2[i]);
    let (s12, s1, s2, s0) = (
        m.shaped_template(&sum),
        m.shaped_template(&b1),
        m.shaped_template(&b2),
        m.shaped_template(&[0.0; NUM_BETAS]),
    );
    for v in 0..m.num_vertices() {
        for a in 0..3 {
            assert!(((s12[v][a] - s1[v][a]) - (s2[v][a] - s0[v][a])).abs() <= 1e-5);
        }
    }
}

/// 4x4 homogeneous transforms composed along the tree.
fn oracle_world_transforms(m: &BodyModel, p: &SmplParams) -> (Vec<[[f64; 4]; 4]>, Vec<[f64; 3]>) {
    let rest = BodyModel::regress(&m.rest_regressor, &m.shaped_template(&p.beta));
    let mut world: Vec<[[f64; 4]; 4]> = Vec::new();
    for j in 0..NUM_JOINTS {
        let r = axis_angle_to_matrix(p.pose[j]);
        let t = if j == 0 {
            rest[0]
        } else {
            let par = m.parents[j] as usize;
            [0, 1, 2].map(|a| rest[j][a] - rest[par][a])
        };
        let mut local = [[0.0; 4]; 4];
        for row in 0..3 {
            local[row][..3].copy_from_slice(&r[row]);
            local[row][3] = t[row];
        }
        local[3][3] = 1.0;
        let g = if j == 0 {
            local
        } else {
            let pw = world[m.parents[j] as usize];
            let mut o = [[0.0; 4]; 4];
            for r in 0..4 {
                for c in 0..4 {
                    o[r][c] = (0..4).map(|k| pw[r][k] * local[k][c]).sum();
                }
            }
            o
        };
        world.push(g);
    }
    (world, rest)
}

#[test]
fn skinning_matches_homogeneous_oracle() {
    let m = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let p = random_params(&mut rng, 0.6);
        let (world, rest) = oracle_world_transforms(&m, &p);
        let shaped = m.shaped_template(&p.beta);
        let expect: Vec<[f64; 3]> = (0..m.num_vertices())
            .map(|v| {
                let mut acc = [0.0; 3];
                for k in 0..NUM_JOINTS {
                    let w = m.skin_weights[v * NUM_JOINTS + k];
                    if w == 0.0 {
                        continue;
                    }
                    let rel = [0, 1, 2].map(|a| shaped[v][a] - rest[k][a]);
                    for r in 0..3 {
                        acc[r] += w
                            * (world[k][r][0] * rel[0] + world[k][r][1] * rel[1] + world[k][r][2] * rel[2]
                                + world[k][r][3]);
                    }
                }
                acc
            })
            .collect();
        let out = smpl_forward(&m, &p).unwrap();
        assert!(max_diff(&out.vertices, &expect) < 1e-9);

        // each child joint is its parent's transform applied to the rest offset
        for j in 1..NUM_JOINTS {
            let par = m.parents[j] as usize;
            let off = [0, 1, 2].map(|a| rest[j][a] - rest[par][a]);
            for r in 0..3 {
                let from_parent = (0..3).map(|c| world[par][r][c] * off[c]).sum::<f64>() + world[par][r][3];
                assert!((from_parent - world[j][r][3]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn root_rotation_equivariance() {
    let m = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let p = random_params(&mut rng, 0.5);
        let base = smpl_forward(&m, &p).unwrap();
        let rot = axis_angle_to_matrix([0, 1, 2].map(|_| rng.random_range(-1.0..1.0)));
        let mut q = p.clone();
        q.pose[0] = matrix_to_axis_angle(&mat_mul(&rot, &axis_angle_to_matrix(p.pose[0])));
        let turned = smpl_forward(&m, &q).unwrap();
        let root = BodyModel::regress(&m.rest_regressor, &m.shaped_template(&p.beta))[0];
        let expect: Vec<[f64; 3]> = base
            .vertices
            .iter()
            .map(|v| {
                let r = mat_vec(&rot, [0, 1, 2].map(|a| v[a] - root[a]));
                [0, 1, 2].map(|a| r[a] + root[a])
            })
            .collect();
        assert!(max_diff(&turned.vertices, &expect) <= 1e-5);
    }
}

#[test]
fn non_finite_params_rejected() {
    let m = toy();
    let mut p = SmplParams::zero();
    p.beta[2] = f64::NAN;
    assert!(smpl_forward(&m, &p).is_err());
}

#[test]
fn vertices_gradcheck() {
    let m = generate_toy_model(1, 200).unwrap();
    let prep = PreparedModel::<f64>::new(&m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r6: Vec<f64> = (0..NUM_JOINTS)
        .flat_map(|_| {
            let aa = [0, 1, 2].map(|_| rng.random_range(-0.5..0.5));
            matrix_to_rot6d(&axis_angle_to_matrix(aa))
        })
        .collect();
    let beta: Vec<f64> = (0..NUM_BETAS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..m.num_vertices() * 3).map(|i| ((i * 31 % 17) as f64 - 8.0) / 8.0).collect();
    let f = |g: &mut Graph<f64>, v: &[crate::autodiff::Var]| {
        let rots = g.rot6d_to_matrix(v[0])?;
        let out = prep.forward(g, rots, v[1])?;
        let w = g.constant(Tensor::new(vec![1, m.num_vertices(), 3], weights.clone())?);
        let p = g.mul(out.vertices, w)?;
        Ok(g.sum(p))
    };
    let inputs = [
        Tensor::new(vec![1, NUM_JOINTS, 6], r6).unwrap(),
        Tensor::new(vec![1, NUM_BETAS], beta).unwrap(),
    ];
    let entries: Vec<(usize, usize)> = (0..NUM_JOINTS * 6).map(|e| (0, e)).chain((0..NUM_BETAS).map(|e| (1, e))).collect();
    let report = gradcheck_entries(f, &inputs, &entries, GradcheckOptions { tol: 1e-4, ..Default::default() }).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn container_roundtrip() {
    let m = toy();
    let c = m.to_container().unwrap();
    let back = BodyModel::from_container(&Container::from_bytes(&c.to_bytes()).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn pose_dirs_are_applied_when_present() {
    let mut m = generate_toy_model(2, 200).unwrap();
    let nv = m.num_vertices();
    let mut pd = vec![0.0; nv * 3 * POSE_FEATURES];
    // vertex 0, x coordinate, feature of joint 1's R[0][0]
    pd[0] = 0.5;
    m.pose_dirs = Some(pd);
    let mut p = SmplParams::zero();
    let zero = smpl_forward(&m, &p).unwrap();
    assert!(max_diff(&zero.vertices, &m.template) <= 1e-6);
    p.pose[1] = [0.0, 0.0, 0.3];
    let without = {
        let mut m2 = m.clone();
        m2.pose_dirs = None;
        smpl_forward(&m2, &p).unwrap()
    };
    let with = smpl_forward(&m, &p).unwrap();
    let diff = max_diff(&with.vertices, &without.vertices);
    assert!(diff > 1e-3, "{diff}");
}
