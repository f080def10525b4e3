//! The `cra` command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::body::{generate_toy_model, smpl_forward, BodyModel, SmplParams};
use crate::camera::{default_focal, PerspectiveCamera};
use crate::checks::run_scope;
use crate::error::{Error, Result};
use crate::io::{Container, RunConfig};
use crate::iuv::{export_iuv_image, rasterize_iuv, Projection};
use crate::synth::{read_dataset, read_evidence, write_dataset, Synthesizer};
use crate::train::{evaluate, LoadedNetwork, Refiner, Trainer};

#[derive(Debug, Parser)]
#[command(name = "cra", version, about = "Human mesh recovery from joint heatmaps and IUV maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural body model.
    GenModel {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        verts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize a synthetic dataset from a run config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Index of the first sample.
        #[arg(long, default_value_t = 0)]
        first: u64,
    },
    /// Train a network; writes logs and checkpoints into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Self-supervised refinement on evidence (heatmaps, IUV maps, 2D joints).
    Refine {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config's refine_steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Overrides the config's refine_lr.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Render the IUV map of a posed body to a PNG.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// 72 axis-angle values, inline (comma separated) or a file.
        #[arg(long)]
        theta: String,
        /// 10 shape values, inline (comma separated) or a file.
        #[arg(long)]
        beta: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Camera distance in meters.
        #[arg(long, default_value_t = 2.5)]
        depth: f64,
    },
    /// Run the registered finite-difference gradient checks.
    Gradcheck {
        /// all, ops, geometry, loss or network.
        #[arg(long, default_value = "all")]
        scope: String,
    },
}

/// Reads numbers from `arg` itself or, if it names a file, from that file.
fn parse_values(arg: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?
    } else {
        arg.to_string()
    };
    let vals = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{what}: `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(Error::InvalidArgument(format!("{what}: expected {n} values, got {}", vals.len())));
    }
    Ok(vals)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Executes one command and returns its one-line summary.
pub fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::GenModel { seed, verts, out } => {
            let m = generate_toy_model(seed, verts)?;
            m.save(&out)?;
            Ok(format!(
                "gen-model: {} vertices, {} faces, {} joints -> {}",
                m.num_vertices(),
                m.num_faces(),
                m.num_output_joints(),
                out.display()
            ))
        }
        Command::Synth { config, n, out, first } => {
            let cfg = RunConfig::load(&config)?;
            let syn = Synthesizer::from_config(&cfg)?;
            let samples = syn.materialize(first, n)?;
            write_dataset(&out, &samples, &cfg.to_text())?;
            Ok(format!(
                "synth: {} samples at {}x{} (first index {}) -> {}",
                samples.len(),
                cfg.height,
                cfg.width,
                first,
                out.display()
            ))
        }
        Command::Train { config, out_dir, resume } => {
            let cfg = RunConfig::load(&config)?;
            let mut t = match resume {
                Some(p) => {
                    let t = Trainer::from_checkpoint(&Container::read(&p)?)?;
                    if t.cfg != cfg {
                        return Err(Error::Config(format!(
                            "{} was written with a different config",
                            p.display()
                        )));
                    }
                    t
                }
                None => Trainer::new(&cfg)?,
            };
            let start = t.step;
            t.run(Some(&out_dir))?;
            let last = t.history.last().map_or(f64::NAN, |r| r.loss);
            Ok(format!(
                "train: steps {}..{}, final loss {:.6e} -> {}",
                start,
                t.step,
                last,
                out_dir.join("final.crat").display()
            ))
        }
        Command::Refine { checkpoint, evidence, out_dir, steps, lr } => {
            let base = Container::read(&checkpoint)?;
            let mut l = LoadedNetwork::from_checkpoint(&base)?;
            let ev = read_evidence(&Container::read(&evidence)?)?;
            let n = ev.len();
            let (steps, lr) = (steps.unwrap_or(l.cfg.refine_steps), lr.unwrap_or(l.cfg.refine_lr));
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let mut cfg = l.cfg.clone();
            cfg.refine_steps = steps;
            cfg.refine_lr = lr;
            write_text(&out_dir.join("config.txt"), &cfg.to_text())?;
            let (before, after) = {
                let mut r = Refiner::new(&l.net, &mut l.store, &cfg, ev, lr)?;
                let before = r.full_loss()?;
                r.run(steps, Some(&out_dir))?;
                (before, r.full_loss()?)
            };
            let out = out_dir.join("refined.crat");
            l.updated_checkpoint(&base)?.write(&out)?;
            Ok(format!(
                "refine: {} evidence samples, {} steps at lr {:e}, loss {:.6e} -> {:.6e} -> {}",
                n,
                steps,
                lr,
                before,
                after,
                out.display()
            ))
        }
        Command::Eval { checkpoint, dataset, report } => {
            let l = LoadedNetwork::from_checkpoint(&Container::read(&checkpoint)?)?;
            let ds = read_dataset(&dataset)?;
            let rep = evaluate(&l.net, &l.store, &ds.samples, l.cfg.batch_size)?;
            write_text(&report, &format!("{}\n{}", rep.table(), rep.records()))?;
            let m = rep.mean;
            Ok(format!(
                "eval: {} samples, MPJPE {:.2} PMPJPE {:.2} PVE {:.2} MPJPE-SC {:.2} mm, PCK {:.1}% AUC {:.1}% -> {}",
                rep.count(),
                m.mpjpe,
                m.pmpjpe,
                m.pve,
                m.mpjpe_sc,
                m.pck,
                m.auc,
                report.display()
            ))
        }
        Command::Render { model, theta, beta, out, size, depth } => {
            if size == 0 || !(depth > 0.0) {
                return Err(Error::InvalidArgument("size must be positive and depth > 0".into()));
            }
            let m = BodyModel::load(&model)?;
            let params = SmplParams::from_flat(&parse_values(&theta, 72, "theta")?, &parse_values(&beta, 10, "beta")?)?;
            let mesh = smpl_forward(&m, &params)?;
            let cam = PerspectiveCamera::centered([0.0, 0.0, depth], default_focal(size), size, size);
            let (iuv, _) = rasterize_iuv(&mesh.vertices, &m.faces, &m.iuv_template, &Projection::Perspective(cam), size, size)?;
            export_iuv_image(&iuv, &out)?;
            Ok(format!(
                "render: {}x{} IUV image, {} foreground pixels -> {}",
                size,
                size,
                iuv.foreground_count(),
                out.display()
            ))
        }
        Command::Gradcheck { scope } => {
            let results = run_scope(&scope)?;
            for r in &results {
                println!("{:<9} {:<38} {}", r.scope, r.name, r.report);
            }
            let failed: Vec<_> = results.iter().filter(|r| !r.report.passed).map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(format!("gradcheck: {} checks in scope `{}` passed", results.len(), scope))
            } else {
                Err(Error::InvalidArgument(format!("gradcheck failed: {}", failed.join(", "))))
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on usage
/// errors.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_inline_and_from_file() {
        assert_eq!(parse_values("1, 2,3", 3, "x").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_values("1,2", 3, "x").is_err());
        assert!(parse_values("1,a,3", 3, "x").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "0.5\n-1 2\n").unwrap();
        assert_eq!(parse_values(p.to_str().unwrap(), 3, "x").unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["cra", "gen-model", "--bogus", "1"]), 2);
        assert_eq!(run(["cra", "frobnicate"]), 2);
        assert_eq!(run(["cra"]), 2);
    }

    #[test]
    fn failures_exit_1() {
        assert_eq!(run(["cra", "gradcheck", "--scope", "nope"]), 1);
        assert_eq!(run(["cra", "eval", "--checkpoint", "/nonexistent", "--dataset", "x", "--report", "y"]), 1);
    }
}
