use std::path::Path;
use std::process::{Command, Output};

fn cra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cra")).args(args).output().expect("spawn cra")
}

fn ok(args: &[&str]) -> String {
    let out = cra(args);
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        out.status.success(),
        "cra {:?} failed: {}{}",
        args,
        stdout,
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn model_then_render_gives_an_image() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.crat");
    let s = ok(&["gen-model", "--seed", "7", "--verts", "600", "--out", p(&m)]);
    assert!(s.starts_with("gen-model:"), "{s}");
    let img = dir.path().join("m.png");
    let theta = vec!["0"; 72].join(",");
    let beta = vec!["0"; 10].join(",");
    let s = ok(&["render", "--model", p(&m), "--theta", &theta, "--beta", &beta, "--out", p(&img), "--size", "64"]);
    assert_eq!(s.lines().count(), 1);
    let decoded = image::open(&img).unwrap().to_rgb8();
    assert_eq!(decoded.dimensions(), (64, 64));
    assert!(decoded.pixels().any(|px| px.0[0] > 0));

    // byte-identical reruns
    let m2 = dir.path().join("m2.crat");
    ok(&["gen-model", "--seed", "7", "--verts", "600", "--out", p(&m2)]);
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(&m2).unwrap());
}

#[test]
fn synth_train_eval_refine_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "height = 16\nsensor = 64\nfeat_channels = 16\nmlp_channels = 8,4\nreg_hidden = 32\n\
         model_verts = 200\npose_bank_size = 16\nseed = 3\nbatch_size = 2\ntrain_samples = 4\n\
         steps = 3\ncheckpoint_every = 2\nlog_every = 1\nrefine_steps = 2\n",
    )
    .unwrap();
    let data = dir.path().join("data.crat");
    let s = ok(&["synth", "--config", p(&cfg), "--n", "3", "--out", p(&data), "--first", "1000"]);
    assert!(s.contains("3 samples"), "{s}");

    let run = dir.path().join("run");
    let s = ok(&["train", "--config", p(&cfg), "--out-dir", p(&run)]);
    assert!(s.starts_with("train: steps 0..3"), "{s}");
    let ckpt = run.join("final.crat");
    assert!(ckpt.exists() && run.join("checkpoint_000002.crat").exists());
    let effective = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(effective.contains("refine_lr") && effective.contains("heatmap_sigma"));

    // resuming from the mid checkpoint reproduces the final one
    let run2 = dir.path().join("run2");
    ok(&["train", "--config", p(&cfg), "--out-dir", p(&run2), "--resume", p(&run.join("checkpoint_000002.crat"))]);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(run2.join("final.crat")).unwrap());

    let report = dir.path().join("report.txt");
    let s = ok(&["eval", "--checkpoint", p(&ckpt), "--dataset", p(&data), "--report", p(&report)]);
    assert!(s.starts_with("eval: 3 samples"), "{s}");
    let text = std::fs::read_to_string(&report).unwrap();
    for k in ["mpjpe", "pmpjpe", "pve", "mpjpe_sc", "pck", "auc"] {
        assert!(text.contains(&format!("{k}=")), "missing {k}");
    }

    let out = dir.path().join("refined");
    let s = ok(&["refine", "--checkpoint", p(&ckpt), "--evidence", p(&data), "--out-dir", p(&out), "--lr", "1e-4"]);
    assert!(s.contains("2 steps"), "{s}");
    assert!(out.join("refined.crat").exists());
    assert_eq!(std::fs::read_to_string(out.join("refine.log")).unwrap().lines().count(), 2);
}

#[test]
fn gradcheck_scope_exit_codes() {
    let s = ok(&["gradcheck", "--scope", "ops"]);
    assert!(s.lines().last().unwrap().contains("passed"), "{s}");
    assert_eq!(cra(&["gradcheck", "--scope", "bogus"]).status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = cra(&["synth", "--config", "x", "--n", "1", "--out", "y", "--wat"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cra(&["eval", "--checkpoint", "/nonexistent/c.crat", "--dataset", "d", "--report", "r"]).status.code(), Some(1));
}
