//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Runs without the libtest harness so the lines always reach the terminal.
//! `ACCEPTANCE=1,4` restricts the run to the listed criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cra_core::autodiff::{AdamConfig, AdamState, Binding, Graph, ParamStore};
use cra_core::body::rotation::{
    axis_angle_to_matrix, mat_mul, mat_vec, matrix_to_axis_angle, matrix_to_rot6d, rot6d_to_matrix, Mat3,
};
use cra_core::body::{generate_toy_model, smpl_forward, BodyModel, SmplParams};
use cra_core::checks::run_scope;
use cra_core::io::{Container, RunConfig};
use cra_core::iuv::{part_value, rasterize, RasterBuffers};
use cra_core::metrics::{mpjpe, mpjpe_sc, pck_auc, pmpjpe, P3};
use cra_core::network::{discrepancy_iuv, discrepancy_iuv_terms, discrepancy_joints, IUV_EPS};
use cra_core::synth::{dataset_container, dataset_from_container, Synthesizer};
use cra_core::train::{baseline_report, evaluate, weighted_sum, Trainer, EVAL_OFFSET};
use cra_core::Tensor;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Duration, limit_s: u64) -> Result<(), String> {
    if t.as_secs_f64() <= limit_s as f64 {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {}s", t.as_secs_f64(), limit_s))
    }
}

// --- 1 -----------------------------------------------------------------

fn gradcheck_suite() -> Outcome {
    let t0 = Instant::now();
    let results = run_scope("all").map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.report.passed)
        .map(|r| format!("{} ({})", r.name, r.report))
        .collect();
    let worst = |scope_is_pipeline: bool| {
        results
            .iter()
            .filter(|r| r.name.ends_with("pipeline") == scope_is_pipeline)
            .map(|r| r.report.max_rel_error)
            .fold(0.0, f64::max)
    };
    let pipeline_tol = results.iter().filter(|r| r.name.ends_with("pipeline")).all(|r| r.report.tol <= 1e-3);
    let op_tol = results.iter().filter(|r| !r.name.ends_with("pipeline")).all(|r| r.report.tol <= 1e-5);
    if !failed.is_empty() {
        return Err(format!("failed: {}", failed.join("; ")));
    }
    within(elapsed, 120)?;
    ensure(
        pipeline_tol && op_tol && results.iter().any(|r| r.name.ends_with("pipeline")),
        format!(
            "{} checks, worst op rel err {:.2e}, worst pipeline rel err {:.2e}, {:.1}s",
            results.len(),
            worst(false),
            worst(true),
            elapsed.as_secs_f64()
        ),
    )
}

// --- 2 -----------------------------------------------------------------

/// Every pixel center against every face in index order, top-left fill rule,
/// nearest depth wins with ties kept by the earlier face.
fn raster_oracle(screen: &[[f64; 2]], depth: &[f64], faces: &[[usize; 3]], h: usize, w: usize) -> RasterBuffers {
    let signed = |a: usize, b: usize, q: [f64; 2]| {
        let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let (p, r) = (screen[lo], screen[hi]);
        s * ((r[0] - p[0]) * (q[1] - p[1]) - (r[1] - p[1]) * (q[0] - p[0]))
    };
    let area = |f: &[usize; 3]| {
        let (a, b, c) = (screen[f[0]], screen[f[1]], screen[f[2]]);
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let mut out = RasterBuffers::empty(h, w);
    out.degenerate_faces = faces.iter().filter(|f| area(f) == 0.0).count();
    for y in 0..h {
        for x in 0..w {
            let q = [x as f64 + 0.5, y as f64 + 0.5];
            for (fi, f) in faces.iter().enumerate() {
                let ar = area(f);
                if ar == 0.0 {
                    continue;
                }
                let o = if ar > 0.0 { *f } else { [f[0], f[2], f[1]] };
                let mut wts = [0.0; 3];
                let mut inside = true;
                for (k, &(s, t)) in [(o[1], o[2]), (o[2], o[0]), (o[0], o[1])].iter().enumerate() {
                    wts[k] = signed(s, t, q);
                    let (dx, dy) = (screen[t][0] - screen[s][0], screen[t][1] - screen[s][1]);
                    let owns = dy < 0.0 || (dy == 0.0 && dx > 0.0);
                    inside &= wts[k] > 0.0 || (wts[k] == 0.0 && owns);
                }
                if !inside {
                    continue;
                }
                let sum = wts[0] + wts[1] + wts[2];
                let bc = wts.map(|v| v / sum);
                let z = bc[0] * depth[o[0]] + bc[1] * depth[o[1]] + bc[2] * depth[o[2]];
                let k = y * w + x;
                if z < out.depth[k] {
                    out.depth[k] = z;
                    out.face_id[k] = fi as i32;
                    out.bary[k] = if o == *f { bc } else { [bc[0], bc[2], bc[1]] };
                }
            }
        }
    }
    out
}

fn random_mesh(rng: &mut ChaCha8Rng, size: usize, snap: bool) -> (Vec<[f64; 2]>, Vec<f64>, Vec<[usize; 3]>) {
    let s = size as f64;
    let nv = rng.random_range(3..30);
    let screen: Vec<[f64; 2]> = (0..nv)
        .map(|_| {
            if snap {
                // half-pixel lattice: pixel centers land exactly on edges and vertices
                let hi = (2.0 * s * 1.125) as i64;
                let lo = -(s / 4.0).ceil() as i64;
                [0, 1].map(|_| rng.random_range(lo..hi) as f64 * 0.5)
            } else {
                [0, 1].map(|_| rng.random_range(-0.125 * s..1.125 * s))
            }
        })
        .collect();
    let depth: Vec<f64> = (0..nv).map(|_| rng.random_range(1.0..4.0)).collect();
    let faces = (0..rng.random_range(1..25)).map(|_| [0, 1, 2].map(|_| rng.random_range(0..nv))).collect();
    (screen, depth, faces)
}

fn raster_oracle_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut covered = 0;
    for size in [64, 4] {
        for trial in 0..20 {
            let (screen, depth, faces) = random_mesh(&mut rng, size, trial % 2 == 1);
            let got = rasterize(&screen, &depth, &faces, size, size).map_err(|e| e.to_string())?;
            let want = raster_oracle(&screen, &depth, &faces, size, size);
            let same_depth = got.depth.iter().zip(&want.depth).all(|(a, b)| a.to_bits() == b.to_bits());
            let same_bary = got
                .bary
                .iter()
                .zip(&want.bary)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            if got.face_id != want.face_id || !same_depth || !same_bary || got.degenerate_faces != want.degenerate_faces {
                return Err(format!("mismatch at {size}x{size}, mesh {trial}"));
            }
            covered += want.covered();
        }
    }
    within(t0.elapsed(), 60)?;
    Ok(format!("40 meshes bit-exact ({covered} covered pixels), {:.2}s", t0.elapsed().as_secs_f64()))
}

// --- 3 -----------------------------------------------------------------

fn dm_oracle(pred: [f64; 3], ev: [f64; 3]) -> [f64; 3] {
    let d = (pred[0] - ev[0]).abs();
    let ind = |i: f64, p: usize| if i == part_value(p) as f64 { 1.0 } else { 0.0 };
    let (mut t2, mut t3) = (0.0, 0.0);
    for p in 1..=24 {
        t2 += ind(pred[0], p) * pred[1] - ind(ev[0], p) * ev[1];
        t3 += ind(pred[0], p) * pred[2] - ind(ev[0], p) * ev[2];
    }
    [d / (d + IUV_EPS), t2, t3]
}

fn random_iuv(rng: &mut ChaCha8Rng, b: usize, hw: usize) -> Vec<f64> {
    let mut d = vec![0.0; b * 3 * hw];
    for bi in 0..b {
        for k in 0..hw {
            if rng.random_bool(0.7) {
                d[bi * 3 * hw + k] = part_value(rng.random_range(1..=24)) as f64;
                d[bi * 3 * hw + hw + k] = rng.random_range(0.0..1.0);
                d[bi * 3 * hw + 2 * hw + k] = rng.random_range(0.0..1.0);
            }
        }
    }
    d
}

fn discrepancy_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (b, h, w, nj) = (2, 4, 4, 17);
    let hw = h * w;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut g = Graph::<f64>::new();
        let pd = random_iuv(&mut rng, b, hw);
        let ed = random_iuv(&mut rng, b, hw);
        let p = g.constant(Tensor::from_f64(&[b, 3, h, w], &pd).map_err(|e| e.to_string())?);
        let e = g.constant(Tensor::from_f64(&[b, 3, h, w], &ed).map_err(|e| e.to_string())?);
        let terms = discrepancy_iuv_terms(&mut g, p, e).map_err(|e| e.to_string())?;
        let map = discrepancy_iuv(&mut g, p, e).map_err(|e| e.to_string())?;
        let (t, m) = (g.value(terms).data().to_vec(), g.value(map).data().to_vec());
        for bi in 0..b {
            for k in 0..hw {
                let at = |d: &[f64]| [0, 1, 2].map(|c| d[bi * 3 * hw + c * hw + k]);
                let o = dm_oracle(at(&pd), at(&ed));
                for c in 0..3 {
                    worst = worst.max((t[bi * 3 * hw + c * hw + k] - o[c]).abs());
                }
                worst = worst.max((m[bi * hw + k] - o.iter().sum::<f64>()).abs());
            }
        }

        let jp: Vec<f64> = (0..b * nj * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let je: Vec<f64> = (0..b * nj * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = g.constant(Tensor::from_f64(&[b, nj, 2], &jp).map_err(|e| e.to_string())?);
        let c = g.constant(Tensor::from_f64(&[b, nj, 2], &je).map_err(|e| e.to_string())?);
        let dj = discrepancy_joints(&mut g, a, c).map_err(|e| e.to_string())?;
        for (i, v) in g.value(dj).data().iter().enumerate() {
            worst = worst.max((v - (jp[i] - je[i])).abs());
        }
    }

    // single pixel: part 1 (u .5, v .4) against part 2 (u .3, v .1)
    let mut g = Graph::<f64>::new();
    let (pv1, pv2) = (part_value(1) as f64, part_value(2) as f64);
    let p = g.constant(Tensor::from_f64(&[1, 3, 1, 1], &[pv1, 0.5, 0.4]).unwrap());
    let e = g.constant(Tensor::from_f64(&[1, 3, 1, 1], &[pv2, 0.3, 0.1]).unwrap());
    let d = discrepancy_iuv(&mut g, p, e).map_err(|e| e.to_string())?;
    let total = g.value(d).item();
    ensure(
        worst <= 1e-6 && (total - 1.49976).abs() <= 1e-5,
        format!("100 inputs, max deviation {worst:.2e}; worked pixel total {total:.6}"),
    )
}

// --- 4 -----------------------------------------------------------------

fn max_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mat_diff(a: &Mat3, b: &Mat3) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn body_identities() -> Outcome {
    let m = generate_toy_model(3, 600).map_err(|e| e.to_string())?;
    let zero = smpl_forward(&m, &SmplParams::zero()).map_err(|e| e.to_string())?;
    let e_zero = max_diff(&zero.vertices, &m.template);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut e_eq: f64 = 0.0;
    for _ in 0..10 {
        let mut p = SmplParams::zero();
        for aa in p.pose.iter_mut() {
            *aa = [0, 1, 2].map(|_| rng.random_range(-0.5..0.5));
        }
        for b in p.beta.iter_mut() {
            *b = rng.random_range(-2.0..2.0);
        }
        let base = smpl_forward(&m, &p).map_err(|e| e.to_string())?;
        let rot = axis_angle_to_matrix([0, 1, 2].map(|_| rng.random_range(-1.0..1.0)));
        let mut q = p.clone();
        q.pose[0] = matrix_to_axis_angle(&mat_mul(&rot, &axis_angle_to_matrix(p.pose[0])));
        let turned = smpl_forward(&m, &q).map_err(|e| e.to_string())?;
        // the root joint is the pivot of a global rotation
        let root = BodyModel::regress(&m.rest_regressor, &m.shaped_template(&p.beta))[0];
        let expect: Vec<[f64; 3]> = base
            .vertices
            .iter()
            .map(|v| {
                let r = mat_vec(&rot, [0, 1, 2].map(|a| v[a] - root[a]));
                [0, 1, 2].map(|a| r[a] + root[a])
            })
            .collect();
        e_eq = e_eq.max(max_diff(&turned.vertices, &expect));
    }

    let mut e_r6: f64 = 0.0;
    for _ in 0..1000 {
        let aa = [0, 1, 2].map(|_| rng.random_range(-3.0..3.0));
        let r = axis_angle_to_matrix(aa);
        let back = rot6d_to_matrix(&matrix_to_rot6d(&r)).map_err(|e| e.to_string())?;
        e_r6 = e_r6.max(mat_diff(&r, &back));
    }
    ensure(
        e_zero <= 1e-6 && e_eq <= 1e-5 && e_r6 <= 1e-6,
        format!("template {e_zero:.1e}, root-rotation equivariance {e_eq:.1e}, rot6d roundtrip {e_r6:.1e}"),
    )
}

// --- 5 -----------------------------------------------------------------

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<P3> {
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-0.5..0.5))).collect()
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Mat3 {
    let axis = [0; 3].map(|_| rng.random_range(-1.0..1.0f64));
    let n = (axis[0].powi(2) + axis[1].powi(2) + axis[2].powi(2)).sqrt();
    let ang = rng.random_range(0.0..max_angle);
    axis_angle_to_matrix(axis.map(|a| a / n * ang))
}

fn similarity(rng: &mut ChaCha8Rng, pts: &[P3], r: &Mat3, noise: f64) -> Vec<P3> {
    let s = rng.random_range(0.8..1.2);
    let t = [0; 3].map(|_| rng.random_range(-0.2..0.2));
    pts.iter()
        .map(|&p| {
            let q = mat_vec(r, p);
            [0, 1, 2].map(|k| s * q[k] + t[k] + if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 })
        })
        .collect()
}

fn metrics_check() -> Outcome {
    let err = |e: cra_core::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_pa: f64 = 0.0;
    for _ in 0..100 {
        let gt = cloud(&mut rng, 17);
        let r = random_rotation(&mut rng, std::f64::consts::PI);
        let pred = similarity(&mut rng, &gt, &r, 0.0);
        worst_pa = worst_pa.max(pmpjpe(&pred, &gt).map_err(err)?);
    }
    let mut violations = 0;
    for _ in 0..1000 {
        let gt = cloud(&mut rng, 17);
        let r = random_rotation(&mut rng, 0.5);
        let pred = similarity(&mut rng, &gt, &r, 0.03);
        let m = mpjpe(&pred, &gt).map_err(err)?;
        if pmpjpe(&pred, &gt).map_err(err)? > m + 1e-9 || mpjpe_sc(&pred, &gt).map_err(err)? > m + 1e-9 {
            violations += 1;
        }
    }
    let trivial = pck_auc(&[0.0; 17], 150.0) == (100.0, 100.0)
        && pck_auc(&[1000.0; 17], 150.0) == (0.0, 0.0)
        && pck_auc(&[150.0, 151.0], 150.0).0 == 50.0;
    ensure(
        worst_pa <= 1e-6 && violations == 0 && trivial,
        format!("PMPJPE under similarity {worst_pa:.1e} mm, {violations}/1000 ordering violations, PCK/AUC trivial cases {}", if trivial { "exact" } else { "wrong" }),
    )
}

// --- 6 -----------------------------------------------------------------

const OVERFIT_STEPS: u64 = 1000;

fn overfit() -> Outcome {
    let t0 = Instant::now();
    let cfg = RunConfig::parse("height = 32\nmodel_verts = 600\npose_bank_size = 200\ntrain_samples = 64\nbatch_size = 16\nlr = 1e-3\nseed = 1")
        .map_err(|e| e.to_string())?;
    let mut t = Trainer::new(&cfg).map_err(|e| e.to_string())?;
    let set = t.training_set().ok_or("no fixed training set")?.to_vec();
    let base = baseline_report(&t.net, &set).map_err(|e| e.to_string())?.mean.pve;
    for _ in 0..OVERFIT_STEPS {
        t.train_step().map_err(|e| e.to_string())?;
    }
    let fin = evaluate(&t.net, &t.store, &set, 16).map_err(|e| e.to_string())?.mean.pve;
    within(t0.elapsed(), 600)?;
    ensure(
        fin <= base / 5.0,
        format!(
            "PVE {base:.1} -> {fin:.1} mm after {OVERFIT_STEPS} steps (ratio {:.3}), {:.0}s",
            fin / base,
            t0.elapsed().as_secs_f64()
        ),
    )
}

// --- 7 -----------------------------------------------------------------

const ABLATION_STEPS: u64 = 1500;

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

fn ablation() -> Outcome {
    let t0 = Instant::now();
    let mut ecfg = RunConfig::parse("height = 32\nmodel_verts = 600\npose_bank_size = 200\nseed = 1000").map_err(|e| e.to_string())?;
    ecfg.augment.p_part_drop = 0.5;
    // held out: another seed's bank and samplers
    let held_out = Synthesizer::from_config(&ecfg)
        .and_then(|s| s.materialize(EVAL_OFFSET, 256))
        .map_err(|e| e.to_string())?;
    let score = |arch: &str, seed: u64| -> Result<f64, String> {
        let cfg = RunConfig::parse(&format!(
            "height = 32\nmodel_verts = 600\npose_bank_size = 200\nlr = 1e-3\nseed = {seed}\narch = {arch}"
        ))
        .map_err(|e| e.to_string())?;
        let mut t = Trainer::new(&cfg).map_err(|e| e.to_string())?;
        for _ in 0..ABLATION_STEPS {
            t.train_step().map_err(|e| e.to_string())?;
        }
        Ok(evaluate(&t.net, &t.store, &held_out, 16).map_err(|e| e.to_string())?.mean.pmpjpe)
    };
    let mut cra = [0.0; 3];
    let mut concat = [0.0; 3];
    for seed in 0..3 {
        cra[seed] = score("cra", seed as u64)?;
        concat[seed] = score("concat", seed as u64)?;
    }
    let (mc, mb) = (median3(cra), median3(concat));
    let fmt = |v: [f64; 3]| v.map(|x| format!("{x:.1}")).join("/");
    let detail = format!(
        "median PMPJPE cra {mc:.2} vs concat {mb:.2} mm (seeds {} vs {}), {ABLATION_STEPS} steps, {:.0}s",
        fmt(cra),
        fmt(concat),
        t0.elapsed().as_secs_f64()
    );
    within(t0.elapsed(), 1800).map_err(|e| format!("{detail}; {e}"))?;
    ensure(mc < mb, detail)
}

// --- 8 -----------------------------------------------------------------

fn determinism() -> Outcome {
    let err = |e: cra_core::Error| e.to_string();
    let cfg = RunConfig::parse("height = 32\nmodel_verts = 600\npose_bank_size = 64\nseed = 8").map_err(err)?;
    let run = || -> Result<Vec<u8>, String> {
        let mut t = Trainer::new(&cfg).map_err(err)?;
        for _ in 0..4 {
            t.train_step().map_err(err)?;
        }
        Ok(t.checkpoint().map_err(err)?.to_bytes())
    };
    let (a, b) = (run()?, run()?);
    let same_training = a == b;

    // container bytes survive decode/encode and a trip through the file system
    let c = Container::from_bytes(&a).map_err(err)?;
    let mut extra = Container::new();
    extra.insert_f32("f32", &[2, 2], vec![f32::NAN, -0.0, f32::INFINITY, 1e-40]).map_err(err)?;
    extra.insert_f64("f64", &[3], &[f64::MIN_POSITIVE, -1.5, 1e300]).map_err(err)?;
    extra.insert_i32("i32", &[2], vec![i32::MIN, -1]).map_err(err)?;
    extra.insert_u8("u8", &[0], vec![]).map_err(err)?;
    extra.insert_text("text", "ü\n").map_err(err)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut roundtrips = c.to_bytes() == a;
    for (i, k) in [&c, &extra].into_iter().enumerate() {
        let p = dir.path().join(format!("{i}.crat"));
        k.write(&p).map_err(err)?;
        roundtrips &= Container::read(&p).map_err(err)?.to_bytes() == k.to_bytes();
        roundtrips &= std::fs::read(&p).map_err(|e| e.to_string())? == k.to_bytes();
    }

    // with augmentation off, stored targets re-render to the stored maps
    let mut scfg = cfg.clone();
    scfg.augment_enabled = false;
    let syn = Synthesizer::from_config(&scfg).map_err(err)?;
    let samples = syn.materialize(0, 8).map_err(err)?;
    let mut regenerates = true;
    for (i, s) in samples.iter().enumerate() {
        regenerates &= syn.regenerate_iuv(&s.theta, &s.beta, &s.camera).map_err(err)? == s.iuv;
        regenerates &= syn.sample(i as u64).map_err(err)? == *s;
    }
    let ds = dataset_container(&samples, &scfg.to_text()).map_err(err)?;
    regenerates &= dataset_from_container(&Container::from_bytes(&ds.to_bytes()).map_err(err)?).map_err(err)?.samples == samples;

    ensure(
        same_training && roundtrips && regenerates,
        format!(
            "training bitwise {}, container roundtrip {}, dataset regeneration {}",
            same_training, roundtrips, regenerates
        ),
    )
}

// --- 9 -----------------------------------------------------------------

fn stationary_point() -> Outcome {
    let mse = [0.02, 0.5, 3.0, 0.004];
    let mut store = ParamStore::<f64>::new();
    let id = store.add("loss.log_sigma", Tensor::zeros(&[4]));
    let mut adam = AdamState::new(&store, AdamConfig { lr: 0.01, ..Default::default() });
    let rel = |s: &[f64]| (0..4).map(|k| ((2.0 * s[k]).exp() / (2.0 * mse[k]) - 1.0).abs()).fold(0.0, f64::max);
    for step in 0..=5000 {
        let r = rel(store.get(id).data());
        if r <= 0.01 {
            return Ok(format!("sigma^2 within {:.2}% of 2*MSE after {step} steps", 100.0 * r));
        }
        if step == 5000 {
            break;
        }
        let mut g = Graph::new();
        let mut bind = Binding::new(&store);
        let m = g.constant(Tensor::from_f64(&[4], &mse).unwrap());
        let s = bind.var(&mut g, &store, id);
        let l = weighted_sum(&mut g, m, s).map_err(|e| e.to_string())?;
        g.backward(l).map_err(|e| e.to_string())?;
        let grads = bind.grads(&g, &store);
        adam.step(&mut store, &grads).map_err(|e| e.to_string())?;
    }
    Err(format!("not within 1% after 5000 steps (max rel {:.3})", rel(store.get(id).data())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("autodiff gradcheck", gradcheck_suite),
        ("rasterizer oracle", raster_oracle_check),
        ("discrepancy oracles", discrepancy_oracles),
        ("body-model identities", body_identities),
        ("metrics correctness", metrics_check),
        ("overfit convergence", overfit),
        ("directional ablation", ablation),
        ("determinism and formats", determinism),
        ("uncertainty stationary point", stationary_point),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {n} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
