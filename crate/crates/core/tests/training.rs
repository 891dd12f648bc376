//! Behaviour of the training loops and transfer protocols.

use copt_core::dataset::{Dataset, Split};
use copt_core::decode::is_clique;
use copt_core::encoder::{forward, Architecture, Params};
use copt_core::train::{
    apply_protocol, batch_loss, evaluate, evaluate_complement, load_checkpoint, prepare, save_checkpoint, train_multi,
    train_single, transfer, AdamConfig, ProtocolKind, TrainConfig, TransferProtocol,
};
use copt_core::{decode, node_features, PenaltyWeights, Solution, TaskKind};

fn small_arch() -> Architecture {
    Architecture { hidden_dim: 8, num_layers: 2, wavelet_scales: 2, ..Architecture::default() }
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, arch: small_arch(), seed: 4, ..TrainConfig::default() }
}

fn data() -> Dataset {
    Dataset::barabasi_albert(12, 24, 2, 21, Split::Train).unwrap()
}

fn backbone_of(p: &Params) -> Vec<(String, Vec<f64>)> {
    p.tensors()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("heads."))
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect()
}

#[test]
fn small_step_lowers_batch_energy() {
    let d = data();
    let graphs = prepare(&d, false, &small_arch());
    let batch: Vec<_> = graphs.iter().collect();
    for task in [TaskKind::Mis, TaskKind::Mvc, TaskKind::MaxCut, TaskKind::Mds, TaskKind::Coloring(3)] {
        let p = Params::init(small_arch(), &[task], 1).unwrap();
        let (before, grads) = batch_loss(&p, &batch, task, PenaltyWeights::default()).unwrap();
        let mut q = p.clone();
        for ((_, mut t), (_, g)) in q.tensors_mut().into_iter().zip(grads.tensors()) {
            t.scaled_add(-1e-4, &g);
        }
        let (after, _) = batch_loss(&q, &batch, task, PenaltyWeights::default()).unwrap();
        assert!(after < before, "{task}: {after} >= {before}");
    }
}

#[test]
fn training_lowers_loss() {
    let (_, rec) = train_single(&cfg(15), &data(), None, TaskKind::Mis).unwrap();
    let loss = rec.loss_curve(TaskKind::Mis);
    assert!(loss.last().unwrap() < &loss[0], "{loss:?}");
}

#[test]
fn frozen_protocols_keep_the_backbone() {
    let d = data();
    let (source, _) = train_single(&cfg(2), &d, None, TaskKind::Mvc).unwrap();
    for kind in [ProtocolKind::ResetHeadFrozen, ProtocolKind::InvertHeadFrozen] {
        let proto = TransferProtocol { kind, target: TaskKind::Mis, source: None };
        let (tuned, rec) = transfer(&cfg(3), &source, &proto, &d, None).unwrap();
        assert_eq!(backbone_of(&tuned), backbone_of(&source), "{kind}");
        assert_ne!(tuned.heads[&TaskKind::Mis], apply_protocol(&source, &proto, 4).unwrap().0.heads[&TaskKind::Mis]);
        assert_eq!(rec.protocol, Some(kind));
    }
    let proto = TransferProtocol { kind: ProtocolKind::FullFt, target: TaskKind::Mvc, source: None };
    let (tuned, _) = transfer(&cfg(1), &source, &proto, &d, None).unwrap();
    assert_ne!(backbone_of(&tuned), backbone_of(&source));
}

#[test]
fn inverted_head_complements_probabilities() {
    let d = data();
    let (source, _) = train_single(&cfg(2), &d, None, TaskKind::Mvc).unwrap();
    let proto = TransferProtocol { kind: ProtocolKind::InvertHeadFrozen, target: TaskKind::Mis, source: None };
    let (inverted, _) = apply_protocol(&source, &proto, 0).unwrap();
    for g in &d.graphs {
        let f = node_features(g, false);
        let p = forward(&source, g, &f, TaskKind::Mvc).unwrap().0;
        let q = forward(&inverted, g, &f, TaskKind::Mis).unwrap().0;
        for (a, b) in p.as_nodes().unwrap().iter().zip(q.as_nodes().unwrap()) {
            assert_eq!(*b, 1.0 - a);
        }
    }
}

#[test]
fn lr_zero_transfer_changes_nothing_but_the_surgery() {
    let d = data();
    let (source, _) = train_single(&cfg(1), &d, None, TaskKind::Mis).unwrap();
    let frozen = TrainConfig { adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..cfg(2) };
    let proto = TransferProtocol { kind: ProtocolKind::InvertHeadFt, target: TaskKind::Mvc, source: None };
    let (tuned, _) = transfer(&frozen, &source, &proto, &d, None).unwrap();
    assert_eq!(tuned, apply_protocol(&source, &proto, frozen.seed).unwrap().0);
}

#[test]
fn multi_task_leaves_untrained_heads_alone_during_fine_tuning() {
    let d = data();
    let tasks = [TaskKind::Mds, TaskKind::Mis, TaskKind::Coloring(5)];
    let (multi, rec) = train_multi(&cfg(2), &d, None, &tasks).unwrap();
    assert_eq!(rec.final_metrics.len(), 3);
    let proto = TransferProtocol { kind: ProtocolKind::ResetHeadFt, target: TaskKind::Mvc, source: None };
    let (tuned, _) = transfer(&cfg(1), &multi, &proto, &d, None).unwrap();
    for t in tasks {
        assert_eq!(tuned.heads[&t], multi.heads[&t]);
    }
    assert!(tuned.heads.contains_key(&TaskKind::Mvc));
}

#[test]
fn complement_reduction_yields_cliques() {
    let d = Dataset::erdos_renyi(6, 14, 0.6, 3, Split::Train).unwrap();
    let (mis, _) = train_single(&cfg(1), &d, None, TaskKind::Mis).unwrap();
    let proto = TransferProtocol { kind: ProtocolKind::ComplementReductionFt, target: TaskKind::MaxClique, source: None };
    let (tuned, rec) = transfer(&cfg(2), &mis, &proto, &d, None).unwrap();
    assert_eq!(rec.source_task, Some(TaskKind::Mis));
    let m = evaluate_complement(&tuned, &d, TaskKind::MaxClique, TaskKind::Mis, 4).unwrap();
    assert_eq!(m.feasible_fraction, 1.0);
    let mut total = 0.0;
    for g in &d.graphs {
        let gc = g.complement();
        let p = forward(&tuned, &gc, &node_features(&gc, false), TaskKind::MaxClique).unwrap().0;
        let out = decode(TaskKind::Mis, &gc, &p, 4).unwrap();
        let Solution::Subset(nodes) = out.solution else { unreachable!() };
        let mut mask = vec![false; g.num_nodes()];
        nodes.iter().for_each(|&v| mask[v] = true);
        assert!(is_clique(g, &mask));
        total += nodes.len() as f64;
    }
    assert_eq!(m.mean_objective, total / d.len() as f64);
}

#[test]
fn checkpoint_reload_evaluates_identically() {
    let d = data();
    let (p, _) = train_single(&cfg(2), &d, None, TaskKind::MaxCut).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&p, &path).unwrap();
    let q = load_checkpoint(&path).unwrap();
    assert_eq!(evaluate(&p, &d, TaskKind::MaxCut, 8).unwrap(), evaluate(&q, &d, TaskKind::MaxCut, 8).unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    let d = data();
    let bad_lr = TrainConfig { adam: AdamConfig { lr: -1.0, ..AdamConfig::default() }, ..cfg(1) };
    assert!(train_single(&bad_lr, &d, None, TaskKind::Mis).is_err());
    assert!(train_single(&cfg(0), &d, None, TaskKind::Mis).is_err());
    let p = Params::init(small_arch(), &[TaskKind::Mis], 0).unwrap();
    assert!(evaluate(&p, &d, TaskKind::Mvc, 8).is_err());
}
