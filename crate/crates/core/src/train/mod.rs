//! Training, refinement and evaluation of the network.
//!
//! Everything runs single-threaded in a fixed order, so a run is bitwise
//! reproducible from its config. Batch selection is derived from
//! `(seed, step)` alone; a checkpoint therefore resumes exactly.

mod loss;

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use loss::{loss_refine, loss_reg, point_mse, smpl_vector, term_mses, weighted_sum, RegLoss, TargetVars, NUM_TERMS, TERM_NAMES};

use crate::autodiff::{AdamConfig, AdamState, Binding, Graph, ParamId, ParamStore};
use crate::body::rotation::{axis_angle_to_matrix, flatten};
use crate::body::BodyModel;
use crate::error::{Error, Result};
use crate::io::{Container, RunConfig, TensorData};
use crate::metrics::{EvalReport, SampleMetrics};
use crate::network::{NetInputs, Network, NetworkDims};
use crate::synth::{load_bank, load_model, read_dataset, Evidence, SynthSample, Synthesizer};
use crate::tensor::{Real, Tensor};

/// Name of the learnable log standard deviations of the four loss terms.
pub const LOG_SIGMA: &str = "loss.log_sigma";
const NET_SALT: u64 = 0x6e65_7477;
const BATCH_SALT: u64 = 0x6261_7463;
/// First synthesis index of the held-out evaluation set.
pub const EVAL_OFFSET: u64 = 1 << 40;
pub const EVAL_SIZE: usize = 64;

/// Host-side regression targets for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets<T> {
    pub vertices: Tensor<T>,
    pub j2d: Tensor<T>,
    pub j3d: Tensor<T>,
    pub smpl: Tensor<T>,
}

impl<T: Real> Targets<T> {
    pub fn from_samples(samples: &[&SynthSample]) -> Result<Self> {
        let b = samples.len();
        let first = samples.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (nv, nj) = (first.vertices.len(), first.joints3d.len());
        let mut v = Vec::with_capacity(b * nv * 3);
        let mut j2 = Vec::with_capacity(b * nj * 2);
        let mut j3 = Vec::with_capacity(b * nj * 3);
        let mut sm = Vec::with_capacity(b * 226);
        for s in samples {
            if s.vertices.len() != nv || s.joints3d.len() != nj || s.j2d_gt.len() != nj {
                return Err(Error::shape("targets", "samples disagree on vertex or joint counts".to_string()));
            }
            v.extend(s.vertices.iter().flatten().copied());
            j2.extend(s.j2d_gt.iter().flatten().copied());
            j3.extend(s.joints3d.iter().flatten().copied());
            for aa in &s.theta {
                sm.extend(flatten(&axis_angle_to_matrix(*aa)));
            }
            sm.extend(s.beta);
        }
        let nr = sm.len() / b;
        Ok(Self {
            vertices: Tensor::from_f64(&[b, nv, 3], &v)?,
            j2d: Tensor::from_f64(&[b, nj, 2], &j2)?,
            j3d: Tensor::from_f64(&[b, nj, 3], &j3)?,
            smpl: Tensor::from_f64(&[b, nr], &sm)?,
        })
    }

    pub fn to_graph(&self, g: &mut Graph<T>) -> TargetVars {
        TargetVars {
            vertices: g.constant(self.vertices.clone()),
            j2d: g.constant(self.j2d.clone()),
            j3d: g.constant(self.j3d.clone()),
            smpl: g.constant(self.smpl.clone()),
        }
    }
}

pub fn inputs_from_samples<T: Real>(dims: &NetworkDims, samples: &[&SynthSample]) -> Result<NetInputs<T>> {
    let parts: Vec<_> = samples.iter().map(|s| (s.heatmaps.as_slice(), &s.iuv, s.j2d.as_slice())).collect();
    NetInputs::from_parts(dims, &parts)
}

pub fn inputs_from_evidence<T: Real>(dims: &NetworkDims, ev: &[&Evidence]) -> Result<NetInputs<T>> {
    let parts: Vec<_> = ev.iter().map(|e| (e.heatmaps.as_slice(), &e.iuv, e.j2d.as_slice())).collect();
    NetInputs::from_parts(dims, &parts)
}

/// Indices of the batch used at `step` from a pool of `n` items.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BATCH_SALT);
    rng.set_stream(step);
    index::sample(&mut rng, n, batch.min(n)).into_vec()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub mse: [f64; NUM_TERMS],
    pub sigma: [f64; NUM_TERMS],
}

impl StepRecord {
    pub fn line(&self) -> String {
        let mut s = format!("step={} loss={:.6e}", self.step, self.loss);
        for (k, name) in TERM_NAMES.iter().enumerate() {
            let _ = write!(s, " mse_{name}={:.6e} sigma_{name}={:.6e}", self.mse[k], self.sigma[k]);
        }
        s
    }
}

enum Data {
    Fixed(Vec<SynthSample>),
    Online,
}

/// Network, optimizer and data source of one training run.
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: BodyModel,
    pub net: Network<f32>,
    pub store: ParamStore<f32>,
    pub adam: AdamState<f32>,
    pub step: u64,
    pub log_sigma: ParamId,
    pub history: Vec<StepRecord>,
    synth: Synthesizer,
    data: Data,
}

fn u64_bytes(v: u64) -> TensorData {
    TensorData::U8(v.to_le_bytes().to_vec())
}

fn read_u64(c: &Container, name: &str) -> Result<u64> {
    let (_, b) = c.u8(name)?;
    let arr: [u8; 8] = b
        .try_into()
        .map_err(|_| Error::Container(format!("`{}` must hold 8 bytes", name)))?;
    Ok(u64::from_le_bytes(arr))
}

impl Trainer {
    /// Fresh run: model and pose bank as named by the config.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let model = load_model(cfg)?;
        let bank = load_bank(cfg)?;
        let synth = Synthesizer::new(cfg, model.clone(), bank)?;
        Self::with_synthesizer(cfg, model, synth)
    }

    fn with_synthesizer(cfg: &RunConfig, model: BodyModel, synth: Synthesizer) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NET_SALT);
        let net = Network::new(cfg, &model, &mut store, &mut rng)?;
        let log_sigma = store.add(LOG_SIGMA, Tensor::zeros(&[NUM_TERMS]));
        let data = if !cfg.train_dataset.is_empty() {
            let ds = read_dataset(Path::new(&cfg.train_dataset))?;
            Data::Fixed(ds.samples)
        } else if cfg.train_samples > 0 {
            Data::Fixed(synth.materialize(0, cfg.train_samples)?)
        } else {
            Data::Online
        };
        if let Data::Fixed(s) = &data {
            if s.is_empty() {
                return Err(Error::Config("training set is empty".into()));
            }
            for (i, x) in s.iter().enumerate() {
                if (x.iuv.height, x.iuv.width, x.j2d.len()) != (cfg.height, cfg.width, cfg.num_joints) {
                    return Err(Error::Config(format!("training sample {} does not match the configured resolution", i)));
                }
            }
        }
        let adam = AdamState::new(
            &store,
            AdamConfig {
                lr: cfg.lr,
                ..Default::default()
            },
        );
        Ok(Self {
            cfg: cfg.clone(),
            model,
            net,
            store,
            adam,
            step: 0,
            log_sigma,
            history: Vec::new(),
            synth,
            data,
        })
    }

    /// The fixed training set, if the run uses one.
    pub fn training_set(&self) -> Option<&[SynthSample]> {
        match &self.data {
            Data::Fixed(s) => Some(s),
            Data::Online => None,
        }
    }

    pub fn synthesizer(&self) -> &Synthesizer {
        &self.synth
    }

    fn batch_at(&self, step: u64) -> Result<Vec<SynthSample>> {
        let bs = self.cfg.batch_size;
        match &self.data {
            Data::Fixed(s) => Ok(batch_indices(self.cfg.seed, step, s.len(), bs)
                .into_iter()
                .map(|i| s[i].clone())
                .collect()),
            Data::Online => self.synth.materialize(step * bs as u64, bs),
        }
    }

    /// One optimizer step. On a non-finite loss or gradient nothing is
    /// updated and `Error::Diverged` is returned.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let batch = self.batch_at(self.step)?;
        let refs: Vec<&SynthSample> = batch.iter().collect();
        let x = inputs_from_samples::<f32>(&self.net.dims, &refs)?;
        let y = Targets::<f32>::from_samples(&refs)?;
        let step = self.step;
        let diverged = |reason: String| Error::Diverged { step, reason };

        let mut g = Graph::new();
        let mut bind = Binding::new(&self.store);
        let xv = x.to_graph(&mut g);
        let out = match self.net.forward(&mut g, &mut bind, &self.store, &xv, None) {
            Err(Error::NonFinite(w)) => return Err(diverged(format!("non-finite {w}"))),
            Err(Error::Degenerate(w)) => return Err(diverged(w)),
            r => r?,
        };
        let pred = match self.net.predict(&mut g, out.theta) {
            Err(Error::Degenerate(w)) => return Err(diverged(w)),
            r => r?,
        };
        let yv = y.to_graph(&mut g);
        let ls = bind.var(&mut g, &self.store, self.log_sigma);
        let loss = match loss_reg(&mut g, &pred, &yv, ls) {
            Err(Error::NonFinite(w)) => return Err(diverged(format!("non-finite {w}"))),
            r => r?,
        };
        let record = StepRecord {
            step: self.step,
            loss: g.value(loss.total).item().as_f64(),
            mse: std::array::from_fn(|k| g.value(loss.mse).data()[k].as_f64()),
            sigma: std::array::from_fn(|k| g.value(ls).data()[k].as_f64().exp()),
        };
        g.backward(loss.total)?;
        let grads = bind.grads(&g, &self.store);
        if let Some(i) = grads.iter().position(|t| !t.is_finite()) {
            return Err(diverged(format!("non-finite gradient for `{}`", self.store.name(ParamId(i)))));
        }
        self.adam.step(&mut self.store, &grads)?;
        self.step += 1;
        self.history.push(record.clone());
        Ok(record)
    }

    /// Trains until `cfg.steps`, writing logs and checkpoints under `out`.
    pub fn run(&mut self, out: Option<&Path>) -> Result<()> {
        let mut log = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let cfg_path = dir.join("config.txt");
                std::fs::write(&cfg_path, self.cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
                Some(MetricLog::open(&dir.join("metrics.log"))?)
            }
            None => None,
        };
        let eval_set = if self.cfg.eval_every > 0 { Some(self.eval_samples()?) } else { None };
        while self.step < self.cfg.steps {
            let rec = match self.train_step() {
                Ok(r) => r,
                Err(e @ Error::Diverged { .. }) => {
                    if let Some(dir) = out {
                        self.checkpoint()?.write(dir.join("last_good.crat"))?;
                    }
                    if let Some(l) = log.as_mut() {
                        l.line(&format!("step={} diverged: {}", self.step, e))?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            let s = self.step;
            if let Some(l) = log.as_mut() {
                if self.cfg.log_every > 0 && (s % self.cfg.log_every == 0 || s == self.cfg.steps) {
                    l.line(&rec.line())?;
                }
            }
            if let (Some(set), true) = (&eval_set, self.cfg.eval_every > 0 && s % self.cfg.eval_every == 0) {
                let rep = evaluate(&self.net, &self.store, set, self.cfg.batch_size)?;
                if let Some(l) = log.as_mut() {
                    let m = rep.mean;
                    l.line(&format!(
                        "step={} eval count={} mpjpe={:.6} pmpjpe={:.6} pve={:.6} mpjpe_sc={:.6} pck={:.6} auc={:.6}",
                        s,
                        rep.count(),
                        m.mpjpe,
                        m.pmpjpe,
                        m.pve,
                        m.mpjpe_sc,
                        m.pck,
                        m.auc
                    ))?;
                }
            }
            if let Some(dir) = out {
                if self.cfg.checkpoint_every > 0 && s % self.cfg.checkpoint_every == 0 {
                    self.checkpoint()?.write(dir.join(format!("checkpoint_{s:06}.crat")))?;
                }
            }
        }
        if let Some(dir) = out {
            self.checkpoint()?.write(dir.join("final.crat"))?;
        }
        Ok(())
    }

    /// Held-out samples for periodic evaluation.
    pub fn eval_samples(&self) -> Result<Vec<SynthSample>> {
        if !self.cfg.eval_dataset.is_empty() {
            Ok(read_dataset(Path::new(&self.cfg.eval_dataset))?.samples)
        } else {
            self.synth.materialize(EVAL_OFFSET, EVAL_SIZE)
        }
    }

    pub fn checkpoint(&self) -> Result<Container> {
        let mut c = Container::new();
        for id in self.store.ids() {
            let name = self.store.name(id);
            let t = self.store.get(id);
            c.insert_f32(format!("param/{name}"), t.shape(), t.data().to_vec())?;
            c.insert_f32(format!("adam/m/{name}"), t.shape(), self.adam.m[id.0].data().to_vec())?;
            c.insert_f32(format!("adam/v/{name}"), t.shape(), self.adam.v[id.0].data().to_vec())?;
        }
        c.insert("adam/step", &[8], u64_bytes(self.adam.step))?;
        c.insert("step", &[8], u64_bytes(self.step))?;
        // batches derive from (seed, step); this is the whole RNG state
        c.insert("rng", &[8], u64_bytes(self.cfg.seed ^ BATCH_SALT))?;
        c.insert_text("meta/config", &self.cfg.to_text())?;
        c.insert_prefixed("model", &self.model.to_container()?)?;
        Ok(c)
    }

    /// Restores a run; the config and body model come from the checkpoint.
    pub fn from_checkpoint(c: &Container) -> Result<Self> {
        let cfg = RunConfig::parse(&c.text("meta/config")?)?;
        let model = BodyModel::from_container(&c.sub_container("model")?)?;
        let synth = Synthesizer::new(&cfg, model.clone(), load_bank(&cfg)?)?;
        let mut t = Self::with_synthesizer(&cfg, model, synth)?;
        if read_u64(c, "rng")? != cfg.seed ^ BATCH_SALT {
            return Err(Error::Container("checkpoint RNG state does not match its config seed".into()));
        }
        t.load_params(c)?;
        for id in t.store.ids().collect::<Vec<_>>() {
            let name = t.store.name(id).to_string();
            let shape = t.store.get(id).shape().to_vec();
            for (key, dst) in [("m", &mut t.adam.m[id.0]), ("v", &mut t.adam.v[id.0])] {
                let (s, d) = c.f32(&format!("adam/{key}/{name}"))?;
                if s != shape.as_slice() {
                    return Err(Error::Container(format!("adam/{key}/{name}: shape {:?}, expected {:?}", s, shape)));
                }
                *dst = Tensor::new(shape.clone(), d.to_vec())?;
            }
        }
        t.adam.step = read_u64(c, "adam/step")?;
        t.step = read_u64(c, "step")?;
        Ok(t)
    }

    /// Copies `param/<name>` tensors into the store.
    pub fn load_params(&mut self, c: &Container) -> Result<()> {
        for id in self.store.ids().collect::<Vec<_>>() {
            let name = self.store.name(id).to_string();
            let (s, d) = c.f32(&format!("param/{name}"))?;
            self.store.set(&name, Tensor::new(s.to_vec(), d.to_vec())?)?;
        }
        Ok(())
    }
}

/// Appends lines to the metric history file.
struct MetricLog {
    path: PathBuf,
    file: std::fs::File,
}

impl MetricLog {
    fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.file, "{s}").map_err(|e| Error::io(&self.path, e))
    }
}

/// Predicted meshes and joints in `f64`, one entry per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshPrediction {
    pub vertices: Vec<[f64; 3]>,
    pub joints3d: Vec<[f64; 3]>,
    pub j2d: Vec<[f64; 2]>,
    pub theta: Vec<f64>,
}

fn rows<const N: usize>(data: &[f64]) -> Vec<[f64; N]> {
    data.chunks(N).map(|r| std::array::from_fn(|k| r[k])).collect()
}

/// Runs the network on a batch of inputs without building gradients.
pub fn predict<T: Real>(net: &Network<T>, store: &ParamStore<T>, x: &NetInputs<T>) -> Result<Vec<MeshPrediction>> {
    let mut g = Graph::new();
    let mut bind = Binding::new(store);
    let xv = x.to_graph(&mut g);
    let out = net.forward(&mut g, &mut bind, store, &xv, None)?;
    let p = net.predict(&mut g, out.theta)?;
    let b = x.batch();
    let split = |v: crate::autodiff::Var, g: &Graph<T>| {
        let d = g.value(v).to_f64_vec();
        let n = d.len() / b;
        (0..b).map(|i| d[i * n..(i + 1) * n].to_vec()).collect::<Vec<_>>()
    };
    let (vs, js, j2, th) = (split(p.vertices, &g), split(p.joints3d, &g), split(p.j2d, &g), split(out.theta, &g));
    Ok((0..b)
        .map(|i| MeshPrediction {
            vertices: rows(&vs[i]),
            joints3d: rows(&js[i]),
            j2d: rows(&j2[i]),
            theta: th[i].clone(),
        })
        .collect())
}

/// Metrics of the network on labelled samples, in batches of `batch`.
pub fn evaluate<T: Real>(net: &Network<T>, store: &ParamStore<T>, samples: &[SynthSample], batch: usize) -> Result<EvalReport> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&SynthSample> = chunk.iter().collect();
        let x = inputs_from_samples::<T>(&net.dims, &refs)?;
        for (p, s) in predict(net, store, &x)?.iter().zip(chunk) {
            out.push(SampleMetrics::compute(&p.joints3d, &s.joints3d, &p.vertices, &s.vertices)?);
        }
    }
    Ok(EvalReport::new(out))
}

/// Metrics of the untrained initial parameters (identity pose, mean shape).
pub fn baseline_report<T: Real>(net: &Network<T>, samples: &[SynthSample]) -> Result<EvalReport> {
    let mut g = Graph::new();
    let t0 = g.constant(crate::network::theta0(1));
    let p = net.predict(&mut g, t0)?;
    let v = rows::<3>(&g.value(p.vertices).to_f64_vec());
    let j = rows::<3>(&g.value(p.joints3d).to_f64_vec());
    samples
        .iter()
        .map(|s| SampleMetrics::compute(&j, &s.joints3d, &v, &s.vertices))
        .collect::<Result<Vec<_>>>()
        .map(EvalReport::new)
}

/// A trained network restored from a checkpoint without its optimizer or
/// training data.
pub struct LoadedNetwork {
    pub cfg: RunConfig,
    pub model: BodyModel,
    pub net: Network<f32>,
    pub store: ParamStore<f32>,
}

impl LoadedNetwork {
    pub fn from_checkpoint(c: &Container) -> Result<Self> {
        let cfg = RunConfig::parse(&c.text("meta/config")?)?;
        let model = BodyModel::from_container(&c.sub_container("model")?)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NET_SALT);
        let net = Network::new(&cfg, &model, &mut store, &mut rng)?;
        store.add(LOG_SIGMA, Tensor::zeros(&[NUM_TERMS]));
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let (s, d) = c.f32(&format!("param/{name}"))?;
            store.set(&name, Tensor::new(s.to_vec(), d.to_vec())?)?;
        }
        Ok(Self { cfg, model, net, store })
    }

    /// `base` with every `param/*` tensor replaced by the current values.
    pub fn updated_checkpoint(&self, base: &Container) -> Result<Container> {
        let mut c = Container::new();
        for t in base.tensors() {
            match t.name.strip_prefix("param/").and_then(|n| self.store.id(n)) {
                Some(id) => {
                    let v = self.store.get(id);
                    c.insert_f32(t.name.clone(), v.shape(), v.data().to_vec())?
                }
                None => c.insert(t.name.clone(), &t.shape, t.data.clone())?,
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineRecord {
    pub step: u64,
    pub loss: f64,
}

/// Self-supervised refinement against evidence only (heatmaps, IUV maps
/// and 2D joints), with a fresh optimizer. All network parameters move.
pub struct Refiner<'a> {
    pub net: &'a Network<f32>,
    pub store: &'a mut ParamStore<f32>,
    pub adam: AdamState<f32>,
    pub evidence: Vec<Evidence>,
    pub step: u64,
    seed: u64,
    batch: usize,
}

impl<'a> Refiner<'a> {
    pub fn new(
        net: &'a Network<f32>,
        store: &'a mut ParamStore<f32>,
        cfg: &RunConfig,
        evidence: Vec<Evidence>,
        lr: f64,
    ) -> Result<Self> {
        if evidence.is_empty() {
            return Err(Error::InvalidArgument("no evidence samples".into()));
        }
        let adam = AdamState::new(
            store,
            AdamConfig {
                lr,
                ..Default::default()
            },
        );
        Ok(Self {
            net,
            store,
            adam,
            evidence,
            step: 0,
            seed: cfg.seed,
            batch: cfg.batch_size,
        })
    }

    /// Refinement loss of the current parameters on a batch, and its
    /// gradients.
    fn loss_and_grads(&self, idx: &[usize]) -> Result<(f64, Vec<Tensor<f32>>)> {
        let refs: Vec<&Evidence> = idx.iter().map(|&i| &self.evidence[i]).collect();
        let x = inputs_from_evidence::<f32>(&self.net.dims, &refs)?;
        let mut g = Graph::new();
        let mut bind = Binding::new(self.store);
        let xv = x.to_graph(&mut g);
        let out = self.net.forward(&mut g, &mut bind, self.store, &xv, None)?;
        let p = self.net.predict(&mut g, out.theta)?;
        let m = self.net.render(&mut g, &p, None)?;
        let loss = loss_refine(&mut g, p.j2d, m, xv.j2d, xv.iuv_small)?;
        let value = g.value(loss).item().as_f64();
        g.backward(loss)?;
        Ok((value, bind.grads(&g, self.store)))
    }

    pub fn batch(&self) -> Vec<usize> {
        batch_indices(self.seed, self.step, self.evidence.len(), self.batch)
    }

    /// Loss of the current parameters averaged over the whole evidence set.
    pub fn full_loss(&self) -> Result<f64> {
        let all: Vec<usize> = (0..self.evidence.len()).collect();
        let mut total = 0.0;
        for c in all.chunks(self.batch.max(1)) {
            total += self.loss_and_grads(c)?.0 * c.len() as f64;
        }
        Ok(total / self.evidence.len() as f64)
    }

    pub fn step(&mut self) -> Result<RefineRecord> {
        let idx = self.batch();
        let (loss, grads) = self.loss_and_grads(&idx)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step: self.step,
                reason: "non-finite refinement loss".into(),
            });
        }
        self.adam.step(self.store, &grads)?;
        let rec = RefineRecord { step: self.step, loss };
        self.step += 1;
        Ok(rec)
    }

    /// Runs `steps` updates, appending to `refine.log` under `out` if given.
    pub fn run(&mut self, steps: u64, out: Option<&Path>) -> Result<Vec<RefineRecord>> {
        let mut log = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Some(MetricLog::open(&dir.join("refine.log"))?)
            }
            None => None,
        };
        let mut recs = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let r = self.step()?;
            if let Some(l) = log.as_mut() {
                l.line(&format!("step={} refine_loss={:.6e}", r.step, r.loss))?;
            }
            recs.push(r);
        }
        Ok(recs)
    }
}
