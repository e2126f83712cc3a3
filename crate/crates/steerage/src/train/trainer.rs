//! Joint manager/worker training over contiguous subsequences, plus
//! evaluation and the k-sweep harness.
//!
//! Every batch element replays rollout semantics on the training tape: the
//! first 2m samples are context only, predictions feed back as the next
//! step's previous angle, and the learned manager sees ground truth only
//! for the warm-up prefix.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::loss::{mae, rmse, tape_loss, LossKind};
use super::metrics::{EpochMetrics, MetricsHistory};
use crate::autodiff::{Adam, Gradients, Tape, Tensor, ValueId, DEFAULT_EPS};
use crate::data::{flip_width, sequence_ending_at, DrivingRecord};
use crate::embed::{kmeans, kmeans_coords, EmbeddedPoint, Embedding};
use crate::error::{Error, Result};
use crate::nn::{
    rollout, CentroidLookup, Checkpoint, Manager, Mode, ParamSet, PredictionRecord,
    SubroutineIdNet, TsneManagerNet, WorkerNet,
};

pub const GRAD_CLIP_NORM: f64 = 5.0;

/// Everything train_joint reads; frames are index-aligned with records.
pub struct TrainInputs<'a> {
    pub records: &'a [DrivingRecord],
    pub frames: &'a [Tensor],
    /// First test index; records[..n_train] is the training split.
    pub n_train: usize,
    /// Window → centroid table, required by the centroid-target modes.
    pub lookup: Option<&'a CentroidLookup>,
}

/// A trained worker with its manager and the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub worker: WorkerNet,
    pub manager: Manager,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rmse: f64,
    pub mae: f64,
    pub records: Vec<PredictionRecord>,
}

fn manager_params_mut(manager: &mut Manager) -> Option<&mut ParamSet> {
    match manager {
        Manager::PredTsne(net) => Some(&mut net.params),
        Manager::Learned(net) => Some(&mut net.params),
        _ => None,
    }
}

fn frame_geometry(frames: &[Tensor]) -> Result<(usize, usize, usize)> {
    let shape = frames
        .first()
        .ok_or_else(|| Error::contract("no frames to train on"))?
        .shape();
    if shape.len() != 3 {
        return Err(Error::shape(format!(
            "frames must be [C×H×W] tensors, got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2]))
}

/// Trains per the config's mode and returns the model plus per-epoch
/// metrics (evaluated on the test split after every epoch).
pub fn train_joint(inputs: &TrainInputs, config: &TrainConfig) -> Result<(Model, MetricsHistory)> {
    config.validate()?;
    if inputs.frames.len() != inputs.records.len() {
        return Err(Error::contract(format!(
            "{} frames for {} records",
            inputs.frames.len(),
            inputs.records.len()
        )));
    }
    if inputs.n_train > inputs.records.len() {
        return Err(Error::contract(format!(
            "split boundary {} beyond {} records",
            inputs.n_train,
            inputs.records.len()
        )));
    }
    let m = config.m;
    let seq_len = 2 * m + config.steps_per_sequence;
    if inputs.n_train < seq_len {
        return Err(Error::contract(format!(
            "training split has {} samples, one subsequence needs {seq_len} \
             (insufficient history)",
            inputs.n_train
        )));
    }
    let (c, h, w) = frame_geometry(inputs.frames)?;

    let mut worker = WorkerNet::seeded(config.worker_config(c, h, w), config.seed)?;
    let lookup = |role: &str| {
        inputs
            .lookup
            .ok_or_else(|| Error::contract(format!("mode {role} needs a centroid lookup")))
            .and_then(|l| {
                if l.m != m {
                    Err(Error::contract(format!(
                        "lookup was built with m={}, config has m={m}",
                        l.m
                    )))
                } else {
                    Ok(l)
                }
            })
    };
    let mut manager = match config.mode {
        Mode::None => Manager::None,
        Mode::GtTsne => Manager::GtTsne(lookup("gt-tsne")?.clone()),
        Mode::PredTsne => {
            lookup("pred-tsne")?;
            Manager::PredTsne(TsneManagerNet::seeded(
                config.tsne_manager_config(c, h, w),
                config.seed.wrapping_add(1),
            )?)
        }
        Mode::Learned => Manager::Learned(SubroutineIdNet::seeded(
            config.learned_manager_config(),
            config.seed.wrapping_add(1),
        )?),
    };

    let mut adam = Adam::new(config.lr, config.betas, DEFAULT_EPS);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut history = MetricsHistory::new(config.mode);

    // Subsequence starts tile the split so every index past the first 2m
    // becomes a target exactly once per epoch.
    let starts_base: Vec<usize> = (0..=inputs.n_train - seq_len)
        .step_by(config.steps_per_sequence)
        .collect();
    let flips_allowed = config.augment && matches!(config.mode, Mode::None | Mode::Learned);

    for epoch in 1..=config.epochs {
        let mut starts = starts_base.clone();
        starts.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut target_count = 0usize;

        for (step, chunk) in starts.chunks(config.batch_size).enumerate() {
            let loss_val = train_batch(
                &mut worker,
                &mut manager,
                inputs,
                config,
                chunk,
                flips_allowed,
                &mut adam,
                &mut rng,
            )?;
            if !loss_val.is_finite() {
                return Err(Error::Training(format!(
                    "epoch {epoch}, step {}: loss {loss_val}",
                    step + 1
                )));
            }
            loss_sum += loss_val * (chunk.len() * config.steps_per_sequence) as f64;
            target_count += chunk.len() * config.steps_per_sequence;
        }

        let eval = evaluate(
            &worker,
            &manager,
            inputs.frames,
            inputs.records,
            inputs.n_train,
        )?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / target_count as f64,
            test_rmse: eval.rmse,
            test_mae: eval.mae,
        };
        log::info!(
            "epoch {epoch}/{}: train_loss {:.6} test_rmse {:.6} test_mae {:.6}",
            config.epochs,
            metrics.train_loss,
            metrics.test_rmse,
            metrics.test_mae
        );
        history.epochs.push(metrics);
    }

    Ok((
        Model {
            config: config.clone(),
            worker,
            manager,
        },
        history,
    ))
}

/// One optimizer step over a batch of subsequence starts; returns the
/// batch loss before the step.
#[allow(clippy::too_many_arguments)]
fn train_batch(
    worker: &mut WorkerNet,
    manager: &mut Manager,
    inputs: &TrainInputs,
    config: &TrainConfig,
    starts: &[usize],
    flips_allowed: bool,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let m = config.m;
    let s = config.steps_per_sequence;
    let seq_len = 2 * m + s;

    let mut tape = Tape::new();
    let worker_bound = worker.bind(&mut tape);
    let manager_bound = match &*manager {
        Manager::PredTsne(net) => net.bind(&mut tape),
        Manager::Learned(net) => net.bind(&mut tape),
        _ => Vec::new(),
    };

    let mut angle_preds: Vec<ValueId> = Vec::with_capacity(starts.len() * s);
    let mut angle_truths: Vec<f64> = Vec::with_capacity(starts.len() * s);
    let mut centroid_preds: Vec<ValueId> = Vec::new();
    let mut centroid_truths: Vec<f64> = Vec::new();

    for &b in starts {
        let flip = flips_allowed && rng.gen_bool(0.5);
        let elem_frames: Vec<Tensor> = inputs.frames[b..b + seq_len]
            .iter()
            .map(|f| if flip { flip_width(f) } else { f.clone() })
            .collect();
        let truth = |p: usize| {
            let a = inputs.records[p].angle;
            if flip {
                -a
            } else {
                a
            }
        };

        let mut state = worker.zero_state(&mut tape);
        let mut manager_state = match &*manager {
            Manager::Learned(net) => Some(net.zero_state(&mut tape)),
            _ => None,
        };
        let mut prev = tape.constant(Tensor::scalar(0.0));
        let mut step_preds: Vec<ValueId> = Vec::with_capacity(s);

        for n in b + 2 * m..b + 2 * m + s {
            let g = match manager {
                Manager::None => None,
                Manager::GtTsne(lk) => {
                    let c = lk.lookup(inputs.records[n].t)?;
                    Some(tape.constant(Tensor::vector(c.to_vec())))
                }
                Manager::PredTsne(net) => {
                    let lk = inputs.lookup.expect("checked in train_joint");
                    let target = lk.lookup(inputs.records[n].t)?;
                    let frame = tape.constant(elem_frames[n - b].clone());
                    let g = net.forward(&mut tape, &manager_bound, frame)?;
                    centroid_preds.push(g);
                    centroid_truths.extend_from_slice(&target);
                    Some(g)
                }
                Manager::Learned(net) => {
                    let mm = net.config.m;
                    let window: Vec<ValueId> = (n - mm..n)
                        .map(|p| {
                            assert!(p < n, "manager window index {p} >= {n}");
                            if p >= b + 2 * m {
                                step_preds[p - (b + 2 * m)]
                            } else {
                                tape.constant(Tensor::scalar(truth(p)))
                            }
                        })
                        .collect();
                    let window = tape.concat(&window)?;
                    let mstate = manager_state.take().expect("learned state initialized");
                    let mstep =
                        net.forward(&mut tape, &manager_bound, window, mstate, true, rng)?;
                    manager_state = Some((mstep.h, mstep.c));
                    Some(mstep.g)
                }
            };

            let seq = sequence_ending_at(&elem_frames, n - b, m)?;
            let frames_id = tape.constant(seq.into_tensor());
            let step = worker.forward(
                &mut tape,
                &worker_bound,
                frames_id,
                g,
                prev,
                state,
                true,
                rng,
            )?;
            prev = step.angle;
            state = (step.h, step.c);
            step_preds.push(step.angle);
            angle_preds.push(step.angle);
            angle_truths.push(truth(n));
        }
    }

    let preds = tape.concat(&angle_preds)?;
    let truths = tape.constant(Tensor::vector(angle_truths));
    let angle_loss = tape_loss(&mut tape, config.loss, preds, truths)?;
    let total = if centroid_preds.is_empty() {
        angle_loss
    } else {
        let g_all = tape.concat(&centroid_preds)?;
        let g_targets = tape.constant(Tensor::vector(centroid_truths));
        let centroid_loss = tape_loss(&mut tape, LossKind::Mse, g_all, g_targets)?;
        tape.add(angle_loss, centroid_loss)?
    };

    let loss_val = tape.value(total).item()?;
    let grads = tape.backward(total)?;
    apply_step(&grads, &worker_bound, &manager_bound, worker, manager, adam)?;
    Ok(loss_val)
}

/// Clips the global gradient norm and takes one Adam step across the
/// worker's and manager's parameters together.
fn apply_step(
    grads: &Gradients,
    worker_bound: &[ValueId],
    manager_bound: &[ValueId],
    worker: &mut WorkerNet,
    manager: &mut Manager,
    adam: &mut Adam,
) -> Result<()> {
    let mut flat: Vec<Vec<f64>> = worker_bound
        .iter()
        .chain(manager_bound)
        .map(|&id| grads.wrt(id).to_vec())
        .collect();
    let norm: f64 = flat
        .iter()
        .flat_map(|g| g.iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt();
    if norm > GRAD_CLIP_NORM {
        let scale = GRAD_CLIP_NORM / norm;
        for g in &mut flat {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }

    // The worker's params were bound first, so tensor order matches.
    let mut params: Vec<&mut Tensor> = worker.params.tensors_mut();
    if let Some(mp) = manager_params_mut(manager) {
        params.extend(mp.tensors_mut());
    }
    let grad_refs: Vec<&[f64]> = flat.iter().map(|g| g.as_slice()).collect();
    adam.step(&mut params, &grad_refs)
}

/// Autoregressive evaluation over `records[start..]`.
pub fn evaluate(
    worker: &WorkerNet,
    manager: &Manager,
    frames: &[Tensor],
    records: &[DrivingRecord],
    start: usize,
) -> Result<Evaluation> {
    if start >= records.len() {
        return Err(Error::contract(format!(
            "test split is empty (start {start}, {} records)",
            records.len()
        )));
    }
    let preds = rollout(worker, manager, frames, records, start, records.len())?;
    let p: Vec<f64> = preds.iter().map(|r| r.predicted).collect();
    let t: Vec<f64> = preds.iter().map(|r| r.truth).collect();
    Ok(Evaluation {
        rmse: rmse(&p, &t)?,
        mae: mae(&p, &t)?,
        records: preds,
    })
}

impl Model {
    pub fn evaluate(
        &self,
        frames: &[Tensor],
        records: &[DrivingRecord],
        start: usize,
    ) -> Result<Evaluation> {
        evaluate(&self.worker, &self.manager, frames, records, start)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (key, value) in self.config.to_pairs() {
            ck.set_config(key, value);
        }
        ck.set_config("frame_channels", self.worker.config.in_channels);
        ck.set_config("frame_height", self.worker.config.height);
        ck.set_config("frame_width", self.worker.config.width);
        for (name, tensor) in self.worker.params.iter() {
            ck.add_tensor(name, tensor.clone());
        }
        match &self.manager {
            Manager::None => {}
            Manager::GtTsne(lk) => {
                let k = lk.centroids.len();
                let flat: Vec<f64> = lk.centroids.iter().flatten().copied().collect();
                ck.add_tensor(
                    "lookup.centroids",
                    Tensor::new(vec![k, 2], flat).expect("k×2 table"),
                );
                ck.add_tensor(
                    "lookup.assignment",
                    Tensor::vector(lk.assignment.iter().map(|&a| a as f64).collect()),
                );
            }
            Manager::PredTsne(net) => {
                for (name, tensor) in net.params.iter() {
                    ck.add_tensor(name, tensor.clone());
                }
            }
            Manager::Learned(net) => {
                for (name, tensor) in net.params.iter() {
                    ck.add_tensor(name, tensor.clone());
                }
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (key, value) in &ck.config {
            if !key.starts_with("frame_") {
                config.apply(key, value)?;
            }
        }
        let c: usize = ck.parse_config("frame_channels")?;
        let h: usize = ck.parse_config("frame_height")?;
        let w: usize = ck.parse_config("frame_width")?;

        let mut worker = WorkerNet::zeros(config.worker_config(c, h, w))?;
        let mut manager = match config.mode {
            Mode::None => Manager::None,
            Mode::GtTsne => {
                let centroids = ck.tensor("lookup.centroids").ok_or_else(|| Error::Header {
                    path: "<checkpoint>".into(),
                    msg: "gt-tsne checkpoint is missing lookup.centroids".into(),
                })?;
                let assignment = ck.tensor("lookup.assignment").ok_or_else(|| Error::Header {
                    path: "<checkpoint>".into(),
                    msg: "gt-tsne checkpoint is missing lookup.assignment".into(),
                })?;
                let table: Vec<[f64; 2]> = centroids
                    .data()
                    .chunks(2)
                    .map(|c| [c[0], c[1]])
                    .collect();
                let assignment: Vec<usize> =
                    assignment.data().iter().map(|&a| a as usize).collect();
                Manager::GtTsne(CentroidLookup::new(config.m, table, assignment)?)
            }
            Mode::PredTsne => Manager::PredTsne(TsneManagerNet::zeros(
                config.tsne_manager_config(c, h, w),
            )?),
            Mode::Learned => {
                Manager::Learned(SubroutineIdNet::zeros(config.learned_manager_config())?)
            }
        };

        for (name, tensor) in &ck.tensors {
            if name.starts_with("worker.") {
                worker.params.set(name, tensor.clone())?;
            } else if name.starts_with("lookup.") {
                continue;
            } else if let Some(mp) = manager_params_mut(&mut manager) {
                mp.set(name, tensor.clone())?;
            } else {
                return Err(Error::contract(format!(
                    "checkpoint tensor `{name}` does not belong to mode {}",
                    config.mode
                )));
            }
        }
        Ok(Self {
            config,
            worker,
            manager,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Centroid table for a config, re-clustering the artifact's coordinates
/// when its k disagrees with the config's.
pub fn lookup_for_config(emb: &Embedding, config: &TrainConfig) -> Result<CentroidLookup> {
    if emb.m != config.m {
        return Err(Error::config(format!(
            "embedding artifact was built with m = {} but training uses m = {}",
            emb.m, config.m
        )));
    }
    if emb.k() == config.k {
        return CentroidLookup::from_embedding(emb);
    }
    log::info!("embedding artifact has k = {}, re-clustering at k = {}", emb.k(), config.k);
    let coords: Vec<[f64; 2]> = emb.windows.iter().map(|w| w.coords).collect();
    let set = kmeans_coords(&coords, config.k, config.seed)?;
    CentroidLookup::from_centroid_set(emb.m, &set)
}

/// Trains and evaluates pred-tsne once per k, clustering the embedding
/// anew each time; returns (k, test RMSE) rows.
pub fn compare_k(
    inputs_records: &[DrivingRecord],
    frames: &[Tensor],
    n_train: usize,
    points: &[EmbeddedPoint],
    base: &TrainConfig,
    ks: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if base.mode != Mode::PredTsne {
        return Err(Error::contract(format!(
            "compare_k runs in mode pred-tsne, config says {}",
            base.mode
        )));
    }
    if ks.is_empty() {
        return Err(Error::contract("compare_k needs at least one k"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.tau != i + 1 {
            return Err(Error::contract(format!(
                "embedded points must be in window order, slot {i} holds τ={}",
                p.tau
            )));
        }
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let set = kmeans(points, k, base.seed)?;
        let lookup = CentroidLookup::from_centroid_set(base.m, &set)?;
        let mut config = base.clone();
        config.k = k;
        let inputs = TrainInputs {
            records: inputs_records,
            frames,
            n_train,
            lookup: Some(&lookup),
        };
        let (model, _) = train_joint(&inputs, &config)?;
        let eval = model.evaluate(frames, inputs_records, n_train)?;
        log::info!("compare_k: k={k} test_rmse {:.6}", eval.rmse);
        rows.push((k, eval.rmse));
    }
    Ok(rows)
}

pub fn compare_k_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("k,test_rmse\n");
    for (k, rmse) in rows {
        out.push_str(&format!("{k},{rmse}\n"));
    }
    out
}
