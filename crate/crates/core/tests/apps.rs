use std::cell::RefCell;
use std::collections::{BTreeSet, VecDeque};
use std::net::Ipv4Addr;
use std::num::NonZeroUsize;
use std::rc::Rc;

use edgesim_core::apps::kinds as app_kinds;
use edgesim_core::apps::payload::{encode_request, Control, ModelResult, ResultSummary, Sample};
use edgesim_core::apps::{
    DataGeneratorApp, DataSource, EnsembleAggregatorApp, TrainingApp, TrainingConfig,
};
use edgesim_core::des::{SimTime, Trace, TraceRecord};
use edgesim_core::dl::{
    self, Activation, Dense, Layer, LossIndex, NetworkSpec, NeuralNetwork, OutputKind, Predictor,
    Sgd, StopReason, TrainingStrategy,
};
use edgesim_core::net::{
    kinds, AppContext, AppError, AppId, Application, LinkConfig, NodeId, Packet, PacketKind,
    Simulator,
};
use edgesim_core::scenario::{default_config, simulate};
use proptest::prelude::*;

const MS: u64 = 1_000_000;

/// Sends scripted payloads and records everything it receives.
#[derive(Debug, Default)]
struct Script {
    plan: Vec<(SimTime, Ipv4Addr, PacketKind, Vec<u8>)>,
    received: Vec<Packet>,
}

impl Script {
    fn new(plan: Vec<(SimTime, Ipv4Addr, PacketKind, Vec<u8>)>) -> Box<Self> {
        Box::new(Script {
            plan,
            received: Vec::new(),
        })
    }
}

impl Application for Script {
    fn on_start(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        for (i, (at, ..)) in self.plan.iter().enumerate() {
            ctx.schedule(*at, i as u64);
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut AppContext<'_>, token: u64) -> Result<(), AppError> {
        let (_, dst, kind, payload) = self.plan[token as usize].clone();
        let _ = ctx.send(dst, kind, payload);
        Ok(())
    }

    fn on_receive(&mut self, _ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        self.received.push(packet.clone());
        Ok(())
    }
}

/// Nodes `0..n` joined by 1 Gbps / 2 ms links.
fn topology(n: usize, links: &[(u32, u32)]) -> (Simulator, Vec<Ipv4Addr>) {
    let mut sim = Simulator::new(42);
    let ids = sim.create_nodes(n).unwrap();
    for &(a, b) in links {
        sim.connect_p2p(
            NodeId(a),
            NodeId(b),
            LinkConfig::new(1_000_000_000, SimTime::from_millis(2), 1000),
        )
        .unwrap();
    }
    let addrs = sim.install_stack(&ids).unwrap();
    (sim, addrs)
}

fn training_config(threshold: usize, neighbors: Vec<Ipv4Addr>, center: Ipv4Addr) -> TrainingConfig {
    TrainingConfig {
        network: NetworkSpec::Mlp {
            inputs: 2,
            hidden: vec![(4, Activation::Tanh)],
            outputs: 2,
            output: OutputKind::Softmax,
            scaling: true,
        },
        strategy: TrainingStrategy {
            loss: LossIndex::CrossEntropy,
            optimizer: Sgd {
                learning_rate: 0.1,
                batch_size: 10,
            },
            max_epochs: 5,
            loss_goal: 0.0,
            seed: 0,
        },
        sufficiency_threshold: threshold,
        neighbors,
        center,
        compute_ns_per_sample_epoch: 1_000,
        collect_window: SimTime::from_secs(1),
        reply_timeout: SimTime::from_millis(100),
    }
}

fn install_edge(
    sim: &mut Simulator,
    node: u32,
    capacity: usize,
    config: TrainingConfig,
    stop: SimTime,
) -> AppId {
    sim.enable_cache(NodeId(node), NonZeroUsize::new(capacity).unwrap())
        .unwrap();
    sim.install_application(
        NodeId(node),
        Box::new(TrainingApp::new(config)),
        SimTime::ZERO,
        stop,
    )
    .unwrap()
}

fn sample(id: u64) -> Vec<u8> {
    let class = (id % 2) as usize;
    let x = class as f64 * 2.0 - 1.0;
    Sample {
        id,
        features: vec![x + 0.01 * (id % 7) as f64, -x],
        targets: if class == 0 {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        },
    }
    .encode()
}

/// `ids` as DATA_SAMPLE packets to `dst`, one per millisecond from `start`.
fn sample_plan(
    dst: Ipv4Addr,
    ids: impl IntoIterator<Item = u64>,
    start: SimTime,
) -> Vec<(SimTime, Ipv4Addr, PacketKind, Vec<u8>)> {
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| {
            (
                start + SimTime::from_millis(i as u64),
                dst,
                PacketKind::DataSample,
                sample(id),
            )
        })
        .collect()
}

fn at_node<'a>(trace: &'a Trace, node: u32, kind: &'a str) -> Vec<&'a TraceRecord> {
    trace
        .of_kind(kind)
        .filter(|r| r.node == Some(node))
        .collect()
}

fn sample_id(p: &Packet) -> u64 {
    Sample::decode(&p.payload).unwrap().id
}

#[test]
fn generator_sends_on_schedule() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let gen = DataGeneratorApp::new(
        addrs[1],
        3,
        SimTime::from_millis(1),
        DataSource::Xor { noise: 0.0 },
    );
    let g = sim
        .install_application(
            NodeId(0),
            Box::new(gen),
            SimTime::from_secs(1),
            SimTime::from_secs(2),
        )
        .unwrap();
    let sink = sim
        .install_application(
            NodeId(1),
            Script::new(vec![]),
            SimTime::ZERO,
            SimTime::from_secs(2),
        )
        .unwrap();
    sim.run_until(SimTime::from_secs(3)).unwrap();
    let times: Vec<u64> = sim
        .trace()
        .of_kind(kinds::PACKET_SEND)
        .map(|r| r.time.as_nanos())
        .collect();
    assert_eq!(times, [1_000_000_000, 1_001_000_000, 1_002_000_000]);
    assert_eq!(sim.app::<DataGeneratorApp>(g).unwrap().sent(), 3);
    let got = &sim.app::<Script>(sink).unwrap().received;
    let ids: Vec<u64> = got.iter().map(sample_id).collect();
    assert_eq!(ids, [1 << 32, (1 << 32) + 1, (1 << 32) + 2]);
    assert!(got.iter().all(|p| p.kind == PacketKind::DataSample));
}

#[test]
fn generator_with_zero_samples_is_silent() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let gen = DataGeneratorApp::new(
        addrs[1],
        0,
        SimTime::from_millis(1),
        DataSource::Xor { noise: 0.0 },
    );
    sim.install_application(
        NodeId(0),
        Box::new(gen),
        SimTime::ZERO,
        SimTime::from_secs(1),
    )
    .unwrap();
    sim.run_until(SimTime::from_secs(2)).unwrap();
    assert_eq!(sim.trace().count(kinds::PACKET_SEND), 0);
}

#[test]
fn default_scenario_carries_200_samples() {
    let run = simulate(&default_config()).unwrap();
    let samples = run
        .trace
        .of_kind(kinds::PACKET_SEND)
        .filter(|r| r.get_str("ptype") == Some("DATA_SAMPLE"))
        .count();
    assert_eq!(samples, 200);
    // distinct local data gives distinct models
    let digests: BTreeSet<_> = run
        .trace
        .of_kind(app_kinds::TRAINING_DONE)
        .map(|r| r.get_str("digest").unwrap().to_owned())
        .collect();
    assert_eq!(digests.len(), 2);
    // exactly two uploads cross the gateway
    assert_eq!(
        run.trace
            .of_kind(kinds::PACKET_DELIVER)
            .filter(|r| r.node == Some(0) && r.get_str("ptype") == Some("MODEL_RESULT"))
            .count(),
        2
    );
}

#[test]
fn cache_keeps_the_most_recent_samples() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(1);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(1000, vec![], addrs[0]),
        SimTime::from_secs(5),
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..120, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();

    // oracle: FIFO eviction, since nothing is read
    let mut model: VecDeque<u64> = VecDeque::new();
    let mut evicted = Vec::new();
    for id in 0..120u64 {
        if model.len() == 100 {
            evicted.push(model.pop_front().unwrap());
        }
        model.push_back(id);
    }
    let node = sim.network().node(NodeId(1)).unwrap();
    assert_eq!(node.cache_len(), Some(100));
    let traced: Vec<u64> = at_node(sim.trace(), 1, kinds::CACHE_EVICT)
        .iter()
        .map(|r| r.get_u64("key").unwrap())
        .collect();
    assert_eq!(traced, evicted);
    let mru_first: Vec<u64> = model.iter().rev().copied().collect();
    assert_eq!(node.cache_keys(), mru_first);
    assert_eq!(node.cache_stats().unwrap().evictions, 20);
}

#[test]
fn request_is_answered_with_what_is_cached() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    let mut plan = sample_plan(addrs[1], [10, 11, 12], SimTime::ZERO);
    plan.push((
        SimTime::from_millis(100),
        addrs[1],
        PacketKind::DataRequest,
        encode_request(5),
    ));
    let script = sim
        .install_application(NodeId(0), Script::new(plan), SimTime::ZERO, stop)
        .unwrap();
    sim.run_until(SimTime::from_millis(500)).unwrap();

    let got = &sim.app::<Script>(script).unwrap().received;
    let replies: Vec<u64> = got
        .iter()
        .filter(|p| p.kind == PacketKind::DataSample)
        .map(sample_id)
        .collect();
    assert_eq!(replies, [12, 11, 10], "most recent first");
    let last = got.last().unwrap();
    assert_eq!(
        Control::decode(&last.payload).unwrap(),
        Control::ReplyEnd { count: 3 }
    );
    // replies do not promote entries
    assert_eq!(sim.trace().count(kinds::CACHE_HIT), 0);
    assert_eq!(
        sim.network().node(NodeId(1)).unwrap().cache_keys(),
        [12, 11, 10]
    );
}

#[test]
fn duplicate_sample_updates_in_place() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(1);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    let plan = sample_plan(addrs[1], [7, 8, 7], SimTime::ZERO);
    sim.install_application(NodeId(0), Script::new(plan), SimTime::ZERO, stop)
        .unwrap();
    sim.run_until(SimTime::from_millis(500)).unwrap();
    let puts = at_node(sim.trace(), 1, kinds::CACHE_PUT);
    let results: Vec<&str> = puts.iter().map(|r| r.get_str("result").unwrap()).collect();
    assert_eq!(results, ["inserted", "inserted", "updated"]);
    assert_eq!(puts[2].get_u64("len"), Some(2));
    assert_eq!(sim.network().node(NodeId(1)).unwrap().cache_keys(), [7, 8]);
}

#[test]
fn malformed_samples_are_traced_and_ignored() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(1);
    let edge = install_edge(
        &mut sim,
        1,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    let wide = Sample {
        id: 1,
        features: vec![0.0; 3],
        targets: vec![1.0, 0.0],
    };
    let plan = vec![
        (
            SimTime::ZERO,
            addrs[1],
            PacketKind::DataSample,
            vec![1, 2, 3],
        ),
        (
            SimTime::from_millis(1),
            addrs[1],
            PacketKind::DataSample,
            wide.encode(),
        ),
        (
            SimTime::from_millis(2),
            addrs[1],
            PacketKind::DataRequest,
            vec![9],
        ),
    ];
    sim.install_application(NodeId(0), Script::new(plan), SimTime::ZERO, stop)
        .unwrap();
    sim.run_until(SimTime::from_millis(500)).unwrap();
    let bad = at_node(sim.trace(), 1, app_kinds::MALFORMED_PACKET);
    assert_eq!(bad.len(), 3);
    assert_eq!(bad[1].get_str("ptype"), Some("DATA_SAMPLE"));
    assert_eq!(sim.trace().count(kinds::CACHE_PUT), 0);
    assert_eq!(sim.app::<TrainingApp>(edge).unwrap().local_received(), 0);
}

#[test]
fn threshold_met_exactly_trains_without_requests() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (1, 2)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![addrs[2]], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        2,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..10, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let start = at_node(t, 1, app_kinds::TRAINING_START);
    assert_eq!(start.len(), 1);
    assert_eq!(start[0].get_u64("samples"), Some(10));
    assert_eq!(t.count(app_kinds::DATA_REQUEST), 0);
    // the 10th sample leaves at 9 ms and takes 2 ms plus serialization
    let last_put = at_node(t, 1, kinds::CACHE_PUT).last().unwrap().time;
    assert_eq!(start[0].time, last_put);
}

#[test]
fn one_short_sends_exactly_one_request() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (1, 2)]);
    let stop = SimTime::from_secs(5);
    let edge = install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![addrs[2]], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        2,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..9, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let req = at_node(t, 1, app_kinds::DATA_REQUEST);
    assert_eq!(req.len(), 1);
    assert_eq!(req[0].time, SimTime::from_secs(1));
    assert_eq!(req[0].get_u64("count"), Some(1));
    assert_eq!(req[0].get_str("neighbor"), Some("10.0.0.3"));
    // the neighbor holds nothing, so its end marker triggers the fallback
    let fallback = at_node(t, 1, app_kinds::INSUFFICIENT_FALLBACK);
    assert_eq!(fallback.len(), 1);
    assert!(fallback[0].time < SimTime::from_secs(1) + SimTime::from_millis(100));
    let start = at_node(t, 1, app_kinds::TRAINING_START);
    assert_eq!(start[0].get_u64("samples"), Some(9));
    assert_eq!(sim.app::<TrainingApp>(edge).unwrap().requests_sent(), 1);
}

#[test]
fn no_duplicate_requests_while_waiting() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (1, 2)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(20, vec![addrs[2]], addrs[0]),
        stop,
    );
    // node 2 runs nothing, so the request is dropped and the reply timer runs out
    let mut plan = sample_plan(addrs[1], 0..9, SimTime::ZERO);
    plan.extend(sample_plan(addrs[1], 100..102, SimTime::from_millis(1010)));
    sim.install_application(NodeId(0), Script::new(plan), SimTime::ZERO, stop)
        .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    assert_eq!(at_node(t, 1, app_kinds::DATA_REQUEST).len(), 1);
    assert_eq!(t.count(kinds::APP_STOPPED_DROP), 1);
    let fallback = at_node(t, 1, app_kinds::INSUFFICIENT_FALLBACK);
    assert_eq!(fallback[0].time, SimTime::from_millis(1100));
    assert_eq!(
        at_node(t, 1, app_kinds::TRAINING_START)[0].get_u64("samples"),
        Some(11)
    );
}

#[test]
fn neighbor_fills_the_deficit() {
    let (mut sim, addrs) = topology(4, &[(0, 1), (1, 2), (2, 3)]);
    let stop = SimTime::from_secs(5);
    let edge = install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![addrs[2]], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        2,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..5, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.install_application(
        NodeId(3),
        Script::new(sample_plan(addrs[2], 100..120, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let req = at_node(t, 1, app_kinds::DATA_REQUEST);
    assert_eq!(req.len(), 1);
    assert_eq!(req[0].get_u64("count"), Some(5));
    let start = at_node(t, 1, app_kinds::TRAINING_START);
    assert_eq!(start[0].get_u64("samples"), Some(10));
    assert_eq!(start[0].get_u64("local"), Some(5));
    assert_eq!(start[0].get_u64("from_neighbors"), Some(5));
    assert!(req[0].time < start[0].time);
    // the neighbor's five most recent rows
    let mut keys = sim.network().node(NodeId(1)).unwrap().cache_keys();
    keys.sort_unstable();
    assert_eq!(keys, [0, 1, 2, 3, 4, 115, 116, 117, 118, 119]);
    assert_eq!(sim.app::<TrainingApp>(edge).unwrap().neighbor_received(), 5);
    assert!(at_node(t, 1, app_kinds::INSUFFICIENT_FALLBACK).is_empty());
}

#[test]
fn second_neighbor_after_a_short_reply() {
    let (mut sim, addrs) = topology(6, &[(0, 1), (1, 2), (1, 3), (2, 4), (3, 5)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![addrs[2], addrs[3]], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        2,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        3,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..5, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.install_application(
        NodeId(4),
        Script::new(sample_plan(addrs[2], 100..102, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.install_application(
        NodeId(5),
        Script::new(sample_plan(addrs[3], 200..220, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let req = at_node(t, 1, app_kinds::DATA_REQUEST);
    let asked: Vec<(&str, u64)> = req
        .iter()
        .map(|r| (r.get_str("neighbor").unwrap(), r.get_u64("count").unwrap()))
        .collect();
    assert_eq!(asked, [("10.0.0.3", 5), ("10.0.0.4", 3)]);
    // moved on after the end marker, not the timeout
    assert!(req[1].time < SimTime::from_millis(1100));
    let start = at_node(t, 1, app_kinds::TRAINING_START);
    assert_eq!(start[0].get_u64("samples"), Some(10));
    assert_eq!(start[0].get_u64("from_neighbors"), Some(5));
}

#[test]
fn silent_neighbor_is_skipped_after_timeout() {
    let (mut sim, addrs) = topology(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![addrs[2], addrs[3]], addrs[0]),
        stop,
    );
    install_edge(
        &mut sim,
        3,
        100,
        training_config(1000, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..5, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.install_application(
        NodeId(4),
        Script::new(sample_plan(addrs[3], 200..220, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let req = at_node(sim.trace(), 1, app_kinds::DATA_REQUEST);
    assert_eq!(req.len(), 2);
    assert_eq!(req[1].time, SimTime::from_millis(1100));
    assert_eq!(
        at_node(sim.trace(), 1, app_kinds::TRAINING_START)[0].get_u64("samples"),
        Some(10)
    );
}

#[test]
fn no_neighbors_falls_back_at_the_deadline() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..4, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let fallback = at_node(t, 1, app_kinds::INSUFFICIENT_FALLBACK);
    assert_eq!(fallback.len(), 1);
    assert_eq!(fallback[0].time, SimTime::from_secs(1));
    assert_eq!(fallback[0].get_u64("cached"), Some(4));
    let start = at_node(t, 1, app_kinds::TRAINING_START);
    assert_eq!(start[0].time, SimTime::from_secs(1));
    assert_eq!(t.count(app_kinds::DATA_REQUEST), 0);
    // the training result goes to node 0, which runs nothing
    assert_eq!(at_node(t, 1, app_kinds::MODEL_RESULT_SENT).len(), 1);
}

#[test]
fn empty_cache_skips_training() {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(5);
    let edge = install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![], addrs[0]),
        stop,
    );
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    assert_eq!(t.count(app_kinds::TRAIN_SKIPPED_EMPTY), 1);
    assert_eq!(t.count(app_kinds::TRAINING_START), 0);
    assert_eq!(t.count(app_kinds::MODEL_RESULT_SENT), 0);
    assert!(!sim.app::<TrainingApp>(edge).unwrap().has_uploaded());
}

fn train_once(samples: u64, max_epochs: usize, loss_goal: f64) -> (Trace, Vec<f64>) {
    let (mut sim, addrs) = topology(2, &[(0, 1)]);
    let stop = SimTime::from_secs(5);
    let mut cfg = training_config(samples as usize, vec![], addrs[0]);
    cfg.strategy.max_epochs = max_epochs;
    cfg.strategy.loss_goal = loss_goal;
    let edge = install_edge(&mut sim, 1, 1000, cfg, stop);
    sim.install_application(
        NodeId(0),
        Script::new(sample_plan(addrs[1], 0..samples, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let losses = sim
        .app::<TrainingApp>(edge)
        .unwrap()
        .outcome()
        .unwrap()
        .report
        .epoch_losses
        .clone();
    (sim.take_trace(), losses)
}

#[test]
fn training_time_is_linear_in_epochs_run() {
    let (t, losses) = train_once(100, 50, 0.0);
    assert_eq!(losses.len(), 50);
    let start = t.of_kind(app_kinds::TRAINING_START).next().unwrap().time;
    let done = t.of_kind(app_kinds::TRAINING_DONE).next().unwrap();
    assert_eq!(done.time - start, SimTime::from_millis(5));
    assert_eq!(done.get_u64("duration_ns"), Some(5 * MS));
    assert_eq!(done.get_str("stop_reason"), Some("MAX_EPOCHS"));

    // a goal first met at epoch 12 charges for 12 epochs
    let goal = losses[11];
    let expected = losses.iter().position(|l| *l <= goal).unwrap() + 1;
    assert!(expected <= 12);
    let (t, _) = train_once(100, 50, goal);
    let done = t.of_kind(app_kinds::TRAINING_DONE).next().unwrap();
    assert_eq!(done.get_u64("epochs"), Some(expected as u64));
    assert_eq!(done.get_str("stop_reason"), Some("LOSS_GOAL_REACHED"));
    assert_eq!(
        done.get_u64("duration_ns"),
        Some(1_000 * 100 * expected as u64)
    );
}

#[test]
fn uploaded_model_round_trips_to_the_center() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (1, 2)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![], addrs[0]),
        stop,
    );
    let center = sim
        .install_application(
            NodeId(0),
            Box::new(EnsembleAggregatorApp::new(1, None)),
            SimTime::ZERO,
            stop,
        )
        .unwrap();
    sim.install_application(
        NodeId(2),
        Script::new(sample_plan(addrs[1], 0..10, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let done = t.of_kind(app_kinds::TRAINING_DONE).next().unwrap();
    let ready = t.of_kind(app_kinds::ENSEMBLE_READY).next().unwrap();
    assert_eq!(ready.get_str("digests"), done.get_str("digest"));
    let agg = sim.app::<EnsembleAggregatorApp>(center).unwrap();
    assert_eq!(agg.senders(), [addrs[1]]);
    let summary = agg.summaries()[0];
    assert_eq!(summary.samples, 10);
    assert_eq!(
        format!("{:016x}", summary.digest),
        done.get_str("digest").unwrap()
    );
}

#[test]
fn stopped_center_drops_the_upload() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (1, 2)]);
    let stop = SimTime::from_secs(5);
    install_edge(
        &mut sim,
        1,
        100,
        training_config(10, vec![], addrs[0]),
        stop,
    );
    sim.install_application(
        NodeId(0),
        Box::new(EnsembleAggregatorApp::new(1, None)),
        SimTime::ZERO,
        SimTime::from_millis(5),
    )
    .unwrap();
    sim.install_application(
        NodeId(2),
        Script::new(sample_plan(addrs[1], 0..10, SimTime::ZERO)),
        SimTime::ZERO,
        stop,
    )
    .unwrap();
    sim.run_until(stop).unwrap();
    let t = sim.trace();
    let dropped: Vec<_> = t.of_kind(kinds::APP_STOPPED_DROP).collect();
    assert_eq!(dropped.len(), 1);
    assert_eq!(dropped[0].get_str("ptype"), Some("MODEL_RESULT"));
    assert_eq!(t.count(app_kinds::ENSEMBLE_READY), 0);
}

/// A network whose output is `bias` for every input.
fn constant_net(bias: &[f64]) -> NeuralNetwork {
    let mut d = Dense::new(2, bias.len(), Activation::Linear);
    d.bias = bias.to_vec();
    NeuralNetwork::new(vec![Layer::Dense(d)]).unwrap()
}

fn result_payload(net: &NeuralNetwork) -> Vec<u8> {
    ModelResult {
        model: dl::to_bytes(net),
        summary: ResultSummary {
            samples: 1,
            epochs_run: 1,
            final_loss: 0.0,
            stop_reason: StopReason::MaxEpochs,
            digest: dl::digest(net),
        },
    }
    .encode()
}

/// Center on node 0; senders on nodes 1..=n, each with its own plan.
fn aggregate(expected: usize, plans: Vec<Vec<(u64, Vec<u8>)>>) -> (Simulator, AppId) {
    let n = plans.len();
    let links: Vec<(u32, u32)> = (1..=n as u32).map(|i| (0, i)).collect();
    let (mut sim, addrs) = topology(n + 1, &links);
    let stop = SimTime::from_secs(5);
    let center = sim
        .install_application(
            NodeId(0),
            Box::new(EnsembleAggregatorApp::new(expected, None)),
            SimTime::ZERO,
            stop,
        )
        .unwrap();
    for (i, plan) in plans.into_iter().enumerate() {
        let plan = plan
            .into_iter()
            .map(|(ms, payload)| {
                (
                    SimTime::from_millis(ms),
                    addrs[0],
                    PacketKind::ModelResult,
                    payload,
                )
            })
            .collect();
        sim.install_application(NodeId(i as u32 + 1), Script::new(plan), SimTime::ZERO, stop)
            .unwrap();
    }
    sim.run_until(stop).unwrap();
    (sim, center)
}

#[test]
fn soft_vote_of_two_constant_models() {
    let a = constant_net(&[0.8, 0.2]);
    let b = constant_net(&[0.4, 0.6]);
    let (sim, center) = aggregate(
        2,
        vec![vec![(0, result_payload(&a))], vec![(1, result_payload(&b))]],
    );
    let ens = sim
        .app::<EnsembleAggregatorApp>(center)
        .unwrap()
        .ensemble()
        .unwrap();
    let out = ens.predict(&[3.0, -1.0]).unwrap();
    assert!(
        (out[0] - 0.6).abs() < 1e-12 && (out[1] - 0.4).abs() < 1e-12,
        "{out:?}"
    );
    assert_eq!(sim.trace().count(app_kinds::ENSEMBLE_READY), 1);
}

#[test]
fn identical_submodels_pass_through() {
    let mut net = NetworkSpec::Mlp {
        inputs: 2,
        hidden: vec![(3, Activation::Tanh)],
        outputs: 2,
        output: OutputKind::Softmax,
        scaling: false,
    }
    .build(9)
    .unwrap();
    net.initialize(9);
    let p = result_payload(&net);
    let (sim, center) = aggregate(2, vec![vec![(0, p.clone())], vec![(0, p)]]);
    let ens = sim
        .app::<EnsembleAggregatorApp>(center)
        .unwrap()
        .ensemble()
        .unwrap();
    for x in [[0.0, 0.0], [1.5, -2.0], [-0.3, 0.7]] {
        assert_eq!(ens.predict(&x).unwrap(), net.predict(&x).unwrap());
    }
}

#[test]
fn duplicate_sender_replaces_and_late_results_are_ignored() {
    let first = constant_net(&[1.0, 0.0]);
    let second = constant_net(&[0.0, 1.0]);
    let other = constant_net(&[0.5, 0.5]);
    let (sim, center) = aggregate(
        2,
        vec![
            vec![(0, result_payload(&first)), (10, result_payload(&second))],
            vec![(20, result_payload(&other)), (30, result_payload(&other))],
        ],
    );
    let t = sim.trace();
    assert_eq!(t.count(app_kinds::DUPLICATE_RESULT), 1);
    assert_eq!(t.count(app_kinds::ENSEMBLE_READY), 1);
    let agg = sim.app::<EnsembleAggregatorApp>(center).unwrap();
    assert_eq!(agg.duplicates(), 1);
    let members = agg.ensemble().unwrap().members();
    assert_eq!(dl::digest(&members[0]), dl::digest(&second));
    let ready = t.of_kind(app_kinds::ENSEMBLE_READY).next().unwrap();
    assert!(ready.time < SimTime::from_millis(30));
}

#[test]
fn aggregation_waits_for_distinct_senders() {
    let net = constant_net(&[1.0, 0.0]);
    let (sim, center) = aggregate(
        2,
        vec![vec![(0, result_payload(&net)), (5, result_payload(&net))]],
    );
    assert_eq!(sim.trace().count(app_kinds::ENSEMBLE_READY), 0);
    assert!(sim
        .app::<EnsembleAggregatorApp>(center)
        .unwrap()
        .ensemble()
        .is_none());
}

#[test]
fn malformed_result_is_ignored() {
    let (sim, center) = aggregate(1, vec![vec![(0, vec![0, 0, 0, 9])]]);
    assert_eq!(sim.trace().count(app_kinds::MALFORMED_PACKET), 1);
    assert_eq!(
        sim.app::<EnsembleAggregatorApp>(center).unwrap().received(),
        0
    );
}

#[test]
fn evaluation_is_reported_with_the_ensemble() {
    let (mut sim, addrs) = topology(3, &[(0, 1), (0, 2)]);
    let stop = SimTime::from_secs(5);
    let src = DataSource::gaussians(3, 2, 2, 0.5);
    let mut rng = edgesim_core::des::RandomStream::new(3, "evaluation");
    let data = src.test_set(&mut rng, 40).unwrap();
    let a = constant_net(&[0.9, 0.1]);
    let pa = NeuralNetwork::new(
        a.layers()
            .iter()
            .cloned()
            .chain([Layer::Probabilistic(2)])
            .collect(),
    )
    .unwrap();
    let pb = NeuralNetwork::new(vec![
        Layer::Dense({
            let mut d = Dense::new(2, 2, Activation::Linear);
            d.weights = vec![1.0, 0.0, 0.0, 1.0];
            d
        }),
        Layer::Probabilistic(2),
    ])
    .unwrap();
    let center = sim
        .install_application(
            NodeId(0),
            Box::new(EnsembleAggregatorApp::new(2, Some(data.clone()))),
            SimTime::ZERO,
            stop,
        )
        .unwrap();
    for (node, net) in [(1, &pa), (2, &pb)] {
        let plan = vec![(
            SimTime::ZERO,
            addrs[0],
            PacketKind::ModelResult,
            result_payload(net),
        )];
        sim.install_application(NodeId(node), Script::new(plan), SimTime::ZERO, stop)
            .unwrap();
    }
    sim.run_until(stop).unwrap();
    let ready = sim
        .trace()
        .of_kind(app_kinds::ENSEMBLE_READY)
        .next()
        .unwrap();
    let eval = sim
        .app::<EnsembleAggregatorApp>(center)
        .unwrap()
        .evaluation()
        .unwrap()
        .clone();

    // independent accuracy: count argmax hits by hand
    let (x, y) = data.xy(dl::Split::Test);
    let acc = |f: &dyn Fn(&[f64]) -> Vec<f64>| {
        let n = x.len();
        let hits = (0..n)
            .filter(|&i| {
                let p = f(&x[i]);
                let t = &y[i];
                let best = |v: &[f64]| if v[1] > v[0] { 1 } else { 0 };
                best(&p) == best(t)
            })
            .count();
        hits as f64 / n as f64
    };
    let acc_a = acc(&|r| pa.predict(r).unwrap());
    let acc_b = acc(&|r| pb.predict(r).unwrap());
    let acc_e = acc(&|r| {
        let (p, q) = (pa.predict(r).unwrap(), pb.predict(r).unwrap());
        vec![p[0] + q[0], p[1] + q[1]]
    });
    assert_eq!(eval.submodels[0].accuracy, Some(acc_a));
    assert_eq!(eval.submodels[1].accuracy, Some(acc_b));
    assert_eq!(eval.ensemble.accuracy, Some(acc_e));
    assert_eq!(ready.get_f64("accuracy_0"), Some(acc_a));
    assert_eq!(ready.get_f64("ensemble_accuracy"), Some(acc_e));
    assert!(ready.get_f64("ensemble_loss").is_some());
}

#[derive(Debug)]
struct Edges {
    samples: [u64; 4],
    capacity: [usize; 2],
    threshold: [usize; 2],
}

fn edges_strategy() -> impl Strategy<Value = Edges> {
    (
        prop::array::uniform4(0u64..30),
        prop::array::uniform2(5usize..60),
        prop::array::uniform2(1usize..60),
    )
        .prop_map(|(samples, capacity, threshold)| Edges {
            samples,
            capacity,
            threshold,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Center 0, gateway 1, edges 2 and 3 (mutual neighbors), terminals 4..8.
    #[test]
    fn edge_flow_invariants(p in edges_strategy()) {
        let (mut sim, addrs) = topology(8, &[(0, 1), (1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7)]);
        let stop = SimTime::from_secs(4);
        sim.install_application(NodeId(0), Box::new(EnsembleAggregatorApp::new(2, None)), SimTime::ZERO, stop)
            .unwrap();
        let mut delivered = Vec::new();
        for (k, node) in [2u32, 3].into_iter().enumerate() {
            let other = addrs[(5 - node) as usize];
            let app = install_edge(&mut sim, node, p.capacity[k], training_config(p.threshold[k], vec![other], addrs[0]), stop);
            let seen: Rc<RefCell<BTreeSet<u64>>> = Rc::default();
            let sink = Rc::clone(&seen);
            sim.on_receive(app, move |packet, _| {
                if packet.kind == PacketKind::DataSample {
                    if let Ok(s) = Sample::decode(&packet.payload) {
                        sink.borrow_mut().insert(s.id);
                    }
                }
            })
            .unwrap();
            delivered.push(seen);
        }
        for (i, &n) in p.samples.iter().enumerate() {
            let node = 4 + i as u32;
            let target = addrs[2 + i / 2];
            let gen = DataGeneratorApp::new(target, n as u32, SimTime::from_millis(1), DataSource::gaussians(5, 2, 2, 0.5));
            sim.install_application(NodeId(node), Box::new(gen), SimTime::from_millis(500), stop).unwrap();
        }
        sim.run_until(stop).unwrap();
        let t = sim.trace();

        let mut uploads = 0;
        for (k, node) in [2u32, 3].into_iter().enumerate() {
            let seq: Vec<&TraceRecord> = t.records().iter().filter(|r| r.node == Some(node)).collect();
            let first = |kind: &str| seq.iter().position(|r| r.kind == kind);
            prop_assert_eq!(seq[0].kind.as_ref(), kinds::APP_START);
            let starts = seq.iter().filter(|r| r.kind == app_kinds::TRAINING_START).count();
            prop_assert!(starts <= 1);
            if let Some(ts) = first(app_kinds::TRAINING_START) {
                let put = first(kinds::CACHE_PUT).unwrap();
                let done = first(app_kinds::TRAINING_DONE).unwrap();
                let sent = first(app_kinds::MODEL_RESULT_SENT).unwrap();
                prop_assert!(put < ts && ts < done && done < sent);
                // trained only when sufficient or after the fallback
                let samples = seq[ts].get_u64("samples").unwrap() as usize;
                let fell_back = first(app_kinds::INSUFFICIENT_FALLBACK).is_some_and(|f| f < ts);
                prop_assert!(samples >= p.threshold[k] || fell_back);
                if let Some(r) = first(app_kinds::DATA_REQUEST) {
                    prop_assert!(r < ts);
                }
                // every row trained on arrived in a delivered sample packet
                let seen = delivered[k].borrow();
                let read: Vec<u64> = seq[ts..]
                    .iter()
                    .take_while(|r| r.kind != app_kinds::TRAINING_DONE)
                    .filter(|r| r.kind == kinds::CACHE_HIT)
                    .map(|r| r.get_u64("key").unwrap())
                    .collect();
                prop_assert_eq!(read.len(), samples);
                prop_assert!(read.iter().all(|id| seen.contains(id)));
                prop_assert_eq!(seq.iter().filter(|r| r.kind == app_kinds::MODEL_RESULT_SENT).count(), 1);
                uploads += 1;
            } else {
                prop_assert_eq!(at_node(t, node, app_kinds::TRAIN_SKIPPED_EMPTY).len(), 1);
            }
        }
        let ready = t.count(app_kinds::ENSEMBLE_READY);
        prop_assert_eq!(ready, usize::from(uploads == 2));
        let stats = sim.network().stats();
        prop_assert_eq!(stats.sent, stats.delivered + stats.dropped() + sim.network().in_flight());
    }
}
