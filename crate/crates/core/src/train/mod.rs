//! Training loops: single-task, round-robin multi-task, transfer
//! protocols, evaluation and run records.

mod checkpoint;
mod optimizer;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_json, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use optimizer::{adam_step, AdamConfig, OptimizerState};

use crate::dataset::Dataset;
use crate::decode::{decode, DEFAULT_SEEDS};
use crate::encoder::{backward, forward_with, Architecture, FreezeScope, Params, WalkOperator};
use crate::energy::{energy, energy_gradient, PenaltyWeights, SoftAssignment};
use crate::error::{Error, Result};
use crate::features::{node_features, FeatureMatrix};
use crate::graph::Graph;
use crate::task::TaskKind;

// keeps the shuffling stream apart from parameter initialization
const SHUFFLE_SALT: u64 = 0x05ee_d0f5_u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// One task per optimizer step, cycling through the task list.
    #[default]
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Used for every task without an entry in `task_penalties`.
    pub penalties: PenaltyWeights,
    #[serde(default)]
    pub task_penalties: BTreeMap<TaskKind, PenaltyWeights>,
    /// Decoder seeds for validation and final metrics.
    pub decode_seeds: usize,
    pub seed: u64,
    pub tasks: Vec<TaskKind>,
    pub schedule: Schedule,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            adam: AdamConfig::default(),
            batch_size: 8,
            penalties: PenaltyWeights::default(),
            task_penalties: BTreeMap::new(),
            decode_seeds: DEFAULT_SEEDS,
            seed: 0,
            tasks: vec![TaskKind::Mis],
            schedule: Schedule::RoundRobin,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn penalty(&self, task: TaskKind) -> PenaltyWeights {
        self.task_penalties.get(&task).copied().unwrap_or(self.penalties)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        // lr = 0 is allowed: it is how frozen-weight sanity runs are expressed
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {}", self.adam.lr)));
        }
        if self.batch_size == 0 || self.decode_seeds == 0 {
            return Err(Error::InvalidArgument("batch_size and decode_seeds must be >= 1".into()));
        }
        self.arch.validate()
    }
}

/// Head surgery and freeze scope applied before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    ResetHeadFrozen,
    ResetHeadFt,
    InvertHeadFrozen,
    InvertHeadFt,
    FullFt,
    ComplementReductionFt,
}

impl ProtocolKind {
    pub fn freezes_backbone(self) -> bool {
        matches!(self, ProtocolKind::ResetHeadFrozen | ProtocolKind::InvertHeadFrozen)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtocolKind::ResetHeadFrozen => "reset-head-frozen",
            ProtocolKind::ResetHeadFt => "reset-head-ft",
            ProtocolKind::InvertHeadFrozen => "invert-head-frozen",
            ProtocolKind::InvertHeadFt => "invert-head-ft",
            ProtocolKind::FullFt => "full-ft",
            ProtocolKind::ComplementReductionFt => "complement-reduction-ft",
        };
        f.write_str(s)
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reset-head-frozen" => ProtocolKind::ResetHeadFrozen,
            "reset-head-ft" => ProtocolKind::ResetHeadFt,
            "invert-head-frozen" => ProtocolKind::InvertHeadFrozen,
            "invert-head-ft" => ProtocolKind::InvertHeadFt,
            "full-ft" => ProtocolKind::FullFt,
            "complement-reduction-ft" => ProtocolKind::ComplementReductionFt,
            other => return Err(Error::InvalidArgument(format!("unknown protocol {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferProtocol {
    pub kind: ProtocolKind,
    pub target: TaskKind,
    /// Head taken from the source checkpoint. Defaults to its only head
    /// (or its MIS head for the complement reduction).
    pub source: Option<TaskKind>,
}

/// Aggregate decoding quality over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_objective: f64,
    pub std_objective: f64,
    pub mean_energy: f64,
    pub feasible_fraction: f64,
    pub graphs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: BTreeMap<TaskKind, f64>,
    pub val_objective: BTreeMap<TaskKind, f64>,
    pub val_std: BTreeMap<TaskKind, f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub protocol: Option<ProtocolKind>,
    pub source_task: Option<TaskKind>,
    pub config: TrainConfig,
    pub tasks: Vec<TaskKind>,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: BTreeMap<TaskKind, Metrics>,
    pub wall_clock_s: f64,
}

impl RunRecord {
    /// Validation curve of one task, one entry per epoch.
    pub fn val_curve(&self, task: TaskKind) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.val_objective.get(&task).copied()).collect()
    }

    pub fn loss_curve(&self, task: TaskKind) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.train_loss.get(&task).copied()).collect()
    }

    /// JSON with every wall-clock field zeroed, for reproducibility checks.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_clock_s = 0.0;
        r.epochs.iter_mut().for_each(|e| e.wall_clock_s = 0.0);
        Ok(serde_json::to_string(&r)?)
    }
}

/// A graph ready for the encoder: the graph the energy is evaluated on,
/// its walk operator and its standardized features.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: Graph,
    pub op: Arc<WalkOperator>,
    pub features: Arc<FeatureMatrix>,
}

impl PreparedGraph {
    /// `complement` routes message passing and energy through the
    /// complement graph.
    pub fn new(g: &Graph, complement: bool, complement_features: bool) -> Self {
        let graph = if complement { g.complement() } else { g.clone() };
        let features = node_features(&graph, complement_features);
        PreparedGraph { op: Arc::new(WalkOperator::new(&graph)), features: Arc::new(features), graph }
    }
}

pub fn prepare(d: &Dataset, complement: bool, arch: &Architecture) -> Vec<PreparedGraph> {
    d.graphs
        .par_iter()
        .map(|g| PreparedGraph::new(g, complement, arch.uses_complement_features()))
        .collect()
}

/// What one optimization job computes: which head produces probabilities,
/// which energy they are scored with, and whether the graphs are
/// complemented first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Job {
    head: TaskKind,
    energy: TaskKind,
    complement: bool,
}

impl Job {
    fn direct(task: TaskKind) -> Self {
        Job { head: task, energy: task, complement: false }
    }
}

fn soft_output(params: &Params, pg: &PreparedGraph, task: TaskKind) -> Result<SoftAssignment> {
    Ok(forward_with(params, pg.op.clone(), &pg.features, task)?.0)
}

fn metrics_for(params: &Params, graphs: &[PreparedGraph], job: Job, cfg_k: usize, w: PenaltyWeights) -> Result<Metrics> {
    let rows: Vec<(f64, f64, bool)> = graphs
        .par_iter()
        .map(|pg| {
            let p = soft_output(params, pg, job.head)?;
            let e = energy(job.energy, &pg.graph, &p, w)?;
            let out = decode(job.energy, &pg.graph, &p, cfg_k)?;
            Ok((out.objective as f64, e, out.feasible))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / n;
    Ok(Metrics {
        mean_objective: mean,
        std_objective: var.sqrt(),
        mean_energy: rows.iter().map(|r| r.1).sum::<f64>() / n,
        feasible_fraction: rows.iter().filter(|r| r.2).count() as f64 / n,
        graphs: rows.len(),
    })
}

/// Mean and standard deviation of the decoded objective, plus mean energy,
/// with default penalties.
pub fn evaluate(params: &Params, dataset: &Dataset, task: TaskKind, k: usize) -> Result<Metrics> {
    evaluate_with(params, dataset, task, k, PenaltyWeights::default())
}

pub fn evaluate_with(params: &Params, dataset: &Dataset, task: TaskKind, k: usize, w: PenaltyWeights) -> Result<Metrics> {
    if !params.heads.contains_key(&task) {
        return Err(Error::MissingHead(task.to_string()));
    }
    let graphs = prepare(dataset, false, &params.arch);
    metrics_for(params, &graphs, Job::direct(task), k, w)
}

/// Evaluates a head trained through the complement reduction: the encoder
/// runs on each complement graph and `solved_as` is decoded there.
pub fn evaluate_complement(params: &Params, dataset: &Dataset, head: TaskKind, solved_as: TaskKind, k: usize) -> Result<Metrics> {
    if !params.heads.contains_key(&head) {
        return Err(Error::MissingHead(head.to_string()));
    }
    let graphs = prepare(dataset, true, &params.arch);
    let job = Job { head, energy: solved_as, complement: true };
    metrics_for(params, &graphs, job, k, PenaltyWeights::default())
}

/// Energy and parameter gradient of one graph.
fn graph_loss(params: &Params, pg: &PreparedGraph, job: Job, w: PenaltyWeights) -> Result<(f64, Params)> {
    let (p, cache) = forward_with(params, pg.op.clone(), &pg.features, job.head)?;
    let e = energy(job.energy, &pg.graph, &p, w)?;
    let up = energy_gradient(job.energy, &pg.graph, &p, w)?;
    let grads = backward(params, &cache, &up)?;
    Ok((e, grads))
}

fn add_into(acc: &mut Params, g: &Params, scale: f64) {
    for ((_, mut a), (_, b)) in acc.tensors_mut().into_iter().zip(g.tensors()) {
        a.scaled_add(scale, &b);
    }
}

/// Mean energy over a batch and its gradient, reduced in batch order.
pub fn batch_loss(params: &Params, batch: &[&PreparedGraph], task: TaskKind, w: PenaltyWeights) -> Result<(f64, Params)> {
    batch_loss_job(params, batch, Job::direct(task), w)
}

fn batch_loss_job(params: &Params, batch: &[&PreparedGraph], job: Job, w: PenaltyWeights) -> Result<(f64, Params)> {
    let parts: Vec<(f64, Params)> = batch
        .par_iter()
        .map(|pg| graph_loss(params, pg, job, w))
        .collect::<Result<_>>()?;
    let scale = 1.0 / parts.len() as f64;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (e, g) in &parts {
        loss += e;
        add_into(&mut total, g, scale);
    }
    Ok((loss * scale, total))
}

struct Prepared {
    direct: Option<Vec<PreparedGraph>>,
    complement: Option<Vec<PreparedGraph>>,
}

impl Prepared {
    fn build(d: &Dataset, jobs: &[Job], arch: &Architecture) -> Self {
        let need_direct = jobs.iter().any(|j| !j.complement);
        let need_comp = jobs.iter().any(|j| j.complement);
        Prepared {
            direct: need_direct.then(|| prepare(d, false, arch)),
            complement: need_comp.then(|| prepare(d, true, arch)),
        }
    }

    fn for_job(&self, job: Job) -> &[PreparedGraph] {
        if job.complement {
            self.complement.as_deref().unwrap()
        } else {
            self.direct.as_deref().unwrap()
        }
    }
}

/// Shared optimization loop. `jobs` are visited round-robin, one per step.
fn optimize(
    cfg: &TrainConfig,
    params: &mut Params,
    train: &Dataset,
    val: Option<&Dataset>,
    jobs: &[Job],
) -> Result<(Vec<EpochRecord>, BTreeMap<TaskKind, Metrics>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for job in jobs {
        if !params.heads.contains_key(&job.head) {
            return Err(Error::MissingHead(job.head.to_string()));
        }
    }
    let train_graphs = Prepared::build(train, jobs, &params.arch);
    let val_graphs = val.map(|v| Prepared::build(v, jobs, &params.arch));
    let val_graphs = val_graphs.as_ref().unwrap_or(&train_graphs);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut state = OptimizerState::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sums: BTreeMap<TaskKind, (f64, usize)> = BTreeMap::new();
        for chunk in order.chunks(cfg.batch_size) {
            let job = jobs[step % jobs.len()];
            step += 1;
            let graphs = train_graphs.for_job(job);
            let batch: Vec<&PreparedGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let (loss, grads) = batch_loss_job(params, &batch, job, cfg.penalty(job.energy))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam_step(params, &grads, &mut state, &cfg.adam)?;
            let entry = sums.entry(job.head).or_insert((0.0, 0));
            entry.0 += loss * chunk.len() as f64;
            entry.1 += chunk.len();
        }
        let mut val_objective = BTreeMap::new();
        let mut val_std = BTreeMap::new();
        for &job in jobs {
            let m = metrics_for(params, val_graphs.for_job(job), job, cfg.decode_seeds, cfg.penalty(job.energy))?;
            val_objective.insert(job.head, m.mean_objective);
            val_std.insert(job.head, m.std_objective);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: sums.into_iter().map(|(t, (s, c))| (t, s / c as f64)).collect(),
            val_objective,
            val_std,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
    }
    let mut final_metrics = BTreeMap::new();
    for &job in jobs {
        let m = metrics_for(params, val_graphs.for_job(job), job, cfg.decode_seeds, cfg.penalty(job.energy))?;
        final_metrics.insert(job.head, m);
    }
    Ok((epochs, final_metrics))
}

fn record(cfg: &TrainConfig, params: &Params, tasks: Vec<TaskKind>, run: (Vec<EpochRecord>, BTreeMap<TaskKind, Metrics>), started: Instant) -> RunRecord {
    let mut config = cfg.clone();
    config.arch = params.arch;
    config.tasks = tasks.clone();
    RunRecord {
        protocol: None,
        source_task: None,
        config,
        tasks,
        epochs: run.0,
        final_metrics: run.1,
        wall_clock_s: started.elapsed().as_secs_f64(),
    }
}

/// Trains a fresh encoder on one task. Validation metrics use `val`, or
/// the training set when absent.
pub fn train_single(cfg: &TrainConfig, train: &Dataset, val: Option<&Dataset>, task: TaskKind) -> Result<(Params, RunRecord)> {
    let started = Instant::now();
    cfg.validate()?;
    let mut params = Params::init(cfg.arch, &[task], cfg.seed)?;
    let run = optimize(cfg, &mut params, train, val, &[Job::direct(task)])?;
    let rec = record(cfg, &params, vec![task], run, started);
    Ok((params, rec))
}

/// Continues training existing parameters on one task without any head
/// surgery.
pub fn train_from(cfg: &TrainConfig, mut params: Params, train: &Dataset, val: Option<&Dataset>, task: TaskKind) -> Result<(Params, RunRecord)> {
    let started = Instant::now();
    let run = optimize(cfg, &mut params, train, val, &[Job::direct(task)])?;
    let rec = record(cfg, &params, vec![task], run, started);
    Ok((params, rec))
}

/// Shared backbone with one head per task; each optimizer step trains one
/// task, cycling through `tasks`.
pub fn train_multi(cfg: &TrainConfig, train: &Dataset, val: Option<&Dataset>, tasks: &[TaskKind]) -> Result<(Params, RunRecord)> {
    let started = Instant::now();
    let mut unique = tasks.to_vec();
    unique.dedup();
    if unique.len() < 2 {
        return Err(Error::InvalidArgument("multi-task training needs at least two tasks".into()));
    }
    cfg.validate()?;
    let mut params = Params::init(cfg.arch, &unique, cfg.seed)?;
    let jobs: Vec<Job> = unique.iter().map(|&t| Job::direct(t)).collect();
    let run = optimize(cfg, &mut params, train, val, &jobs)?;
    let rec = record(cfg, &params, unique, run, started);
    Ok((params, rec))
}

fn resolve_source(source: &Params, protocol: &TransferProtocol) -> Result<TaskKind> {
    if let Some(s) = protocol.source {
        if !source.heads.contains_key(&s) {
            return Err(Error::MissingHead(s.to_string()));
        }
        return Ok(s);
    }
    let tasks = source.tasks();
    if protocol.kind == ProtocolKind::ComplementReductionFt && source.heads.contains_key(&TaskKind::Mis) {
        return Ok(TaskKind::Mis);
    }
    match tasks.as_slice() {
        [only] => Ok(*only),
        _ => Err(Error::HeadSurgery(format!(
            "source checkpoint has heads {tasks:?}; name the source head explicitly"
        ))),
    }
}

/// Applies the protocol's head surgery and freeze scope to a copy of
/// `source`, returning it together with the job to fine-tune.
pub fn apply_protocol(source: &Params, protocol: &TransferProtocol, seed: u64) -> Result<(Params, Option<TaskKind>)> {
    let mut params = source.clone();
    params.set_freeze(FreezeScope::None);
    let target = protocol.target;
    let mut used_source = None;
    match protocol.kind {
        ProtocolKind::ResetHeadFrozen | ProtocolKind::ResetHeadFt => params.reset_head(target, seed),
        ProtocolKind::InvertHeadFrozen | ProtocolKind::InvertHeadFt => {
            let from = resolve_source(source, protocol)?;
            if target.width() != 1 || from.width() != 1 {
                return Err(Error::HeadSurgery(format!("cannot invert between {from} and {target}: heads must have width 1")));
            }
            params.copy_head(from, target)?;
            params.invert_head(target)?;
            used_source = Some(from);
        }
        ProtocolKind::FullFt => {
            if !params.heads.contains_key(&target) {
                params.reset_head(target, seed);
            }
        }
        ProtocolKind::ComplementReductionFt => {
            let from = resolve_source(source, protocol)?;
            if from != target {
                params.copy_head(from, target)?;
            }
            used_source = Some(from);
        }
    }
    if protocol.kind.freezes_backbone() {
        params.set_freeze(FreezeScope::Backbone);
    }
    Ok((params, used_source))
}

/// Fine-tunes a pretrained encoder on `protocol.target`.
///
/// For the complement reduction the encoder sees `complement(g)` and is
/// trained on the source task's energy there; decoded sets are then
/// solutions of the target task on `g`.
pub fn transfer(cfg: &TrainConfig, source: &Params, protocol: &TransferProtocol, train: &Dataset, val: Option<&Dataset>) -> Result<(Params, RunRecord)> {
    let started = Instant::now();
    let (mut params, used_source) = apply_protocol(source, protocol, cfg.seed)?;
    let job = match protocol.kind {
        ProtocolKind::ComplementReductionFt => Job {
            head: protocol.target,
            energy: used_source.expect("resolved above"),
            complement: true,
        },
        _ => Job::direct(protocol.target),
    };
    let run = optimize(cfg, &mut params, train, val, &[job])?;
    let mut rec = record(cfg, &params, vec![protocol.target], run, started);
    rec.protocol = Some(protocol.kind);
    rec.source_task = used_source;
    Ok((params, rec))
}
