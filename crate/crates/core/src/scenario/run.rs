use std::fs::File;
use std::io::{BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use super::config::{ConfigErrors, DatasetKind, Role, ScenarioConfig};
use super::metrics::{
    EdgeMetrics, EnsembleMetrics, MetricsSummary, PacketMetrics, TrainingMetrics,
};
use crate::apps::{
    DataGeneratorApp, DataSource, EnsembleAggregatorApp, TrainingApp, TrainingConfig,
};
use crate::des::{RandomStream, RunError, SimTime, Trace};
use crate::net::{kinds, AppError, AppId, LinkConfig, NetError, NodeId, PacketKind, Simulator};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario setup failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Run(#[from] RunError<AppError>),
}

impl From<NetError> for ScenarioError {
    fn from(e: NetError) -> Self {
        ScenarioError::Setup(e.to_string())
    }
}

/// Output of one run, held in memory.
#[derive(Debug)]
pub struct ScenarioRun {
    pub trace: Trace,
    pub metrics: MetricsSummary,
}

struct Installed {
    edges: Vec<(NodeId, AppId)>,
    center: (NodeId, AppId),
}

/// Builds the topology, installs stacks, caches and applications in that
/// order, then runs the engine up to `stop_at_ns`.
pub fn simulate(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    let errors = config.validate();
    if !errors.is_empty() {
        return Err(ConfigErrors(errors).into());
    }
    let started = Instant::now();
    let mut sim = Simulator::new(config.seed);
    let installed = install(&mut sim, config)?;
    let stats = sim.run_until(SimTime::from_nanos(config.stop_at_ns))?;
    let trace = sim.take_trace();
    let mut metrics = collect(&sim, config, &installed, &trace);
    metrics.final_time_ns = stats.final_time.as_nanos();
    metrics.events_executed = sim.scheduler().counters().executed;
    metrics.wall_clock = started.elapsed();
    Ok(ScenarioRun { trace, metrics })
}

/// Runs the scenario and writes the trace and metrics files.
pub fn run_scenario(
    config: &ScenarioConfig,
    trace_path: &Path,
    metrics_path: &Path,
) -> Result<MetricsSummary, ScenarioError> {
    let run = simulate(config)?;
    write_file(trace_path, |w| run.trace.write_to(w))?;
    write_file(metrics_path, |w| {
        w.write_all(run.metrics.render().as_bytes())
    })?;
    Ok(run.metrics)
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), ScenarioError> {
    let io = |source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn data_source(config: &ScenarioConfig) -> Result<DataSource, ScenarioError> {
    let d = &config.dataset;
    Ok(match &d.kind {
        DatasetKind::TwoGaussians => {
            DataSource::gaussians(config.seed, d.features, d.classes, d.spread)
        }
        DatasetKind::Xor => DataSource::Xor { noise: d.spread },
        DatasetKind::File(path) => {
            DataSource::from_csv_file(path, d.features, d.classes).map_err(ScenarioError::Setup)?
        }
    })
}

fn install(sim: &mut Simulator, config: &ScenarioConfig) -> Result<Installed, ScenarioError> {
    let source = data_source(config)?;
    let ids = sim.create_nodes(config.nodes.len())?;
    for l in &config.links {
        let link = LinkConfig::new(
            l.rate_bps,
            SimTime::from_nanos(l.delay_ns),
            l.queue_capacity,
        );
        sim.connect_p2p(NodeId(l.a), NodeId(l.b), link)?;
    }
    let addrs = sim.install_stack(&ids)?;
    let edges: Vec<_> = config.nodes_with_role(Role::Edge).collect();
    for e in &edges {
        let cap = NonZeroUsize::new(config.cache_capacity(e)).expect("validated capacity");
        sim.enable_cache(NodeId(e.id), cap)?;
    }

    let stop = SimTime::from_nanos(config.stop_at_ns);
    let center = config
        .nodes_with_role(Role::DataCenter)
        .next()
        .expect("validated")
        .id;
    let evaluation = match config.center.evaluation_samples {
        0 => None,
        n => {
            let mut rng = RandomStream::new(config.seed, "evaluation");
            Some(
                source
                    .test_set(&mut rng, n)
                    .map_err(|e| ScenarioError::Setup(e.to_string()))?,
            )
        }
    };
    let aggregator = EnsembleAggregatorApp::new(edges.len(), evaluation);
    let center_app =
        sim.install_application(NodeId(center), Box::new(aggregator), SimTime::ZERO, stop)?;

    let spec = config
        .edge
        .network_spec(config.dataset.features, config.dataset.classes);
    let mut edge_apps = Vec::new();
    for e in &edges {
        let app = TrainingApp::new(TrainingConfig {
            network: spec.clone(),
            strategy: config.edge.strategy(),
            sufficiency_threshold: config.sufficiency_threshold(e),
            neighbors: e
                .neighbors
                .iter()
                .flatten()
                .map(|n| addrs[*n as usize])
                .collect(),
            center: addrs[center as usize],
            compute_ns_per_sample_epoch: config.edge.compute_ns_per_sample_epoch,
            collect_window: SimTime::from_nanos(config.edge.collect_window_ns),
            reply_timeout: SimTime::from_nanos(config.edge.reply_timeout_ns),
        });
        let id = sim.install_application(NodeId(e.id), Box::new(app), SimTime::ZERO, stop)?;
        edge_apps.push((NodeId(e.id), id));
    }

    let start = SimTime::from_nanos(config.terminal.start_ns);
    if start < stop {
        for t in config.nodes_with_role(Role::Terminal) {
            let target = addrs[t.target.expect("validated target") as usize];
            let app = DataGeneratorApp::new(
                target,
                config.samples_to_send(t),
                SimTime::from_nanos(config.terminal.inter_send_gap_ns),
                source.clone(),
            );
            sim.install_application(NodeId(t.id), Box::new(app), start, stop)?;
        }
    }
    Ok(Installed {
        edges: edge_apps,
        center: (NodeId(center), center_app),
    })
}

fn collect(
    sim: &Simulator,
    config: &ScenarioConfig,
    installed: &Installed,
    trace: &Trace,
) -> MetricsSummary {
    let net = sim.network();
    let stats = net.stats();
    let (center_node, center_app) = installed.center;
    let model_results_delivered = trace
        .of_kind(kinds::PACKET_DELIVER)
        .filter(|r| {
            r.node == Some(center_node.0)
                && r.get_str("ptype") == Some(PacketKind::ModelResult.as_str())
        })
        .count() as u64;
    let packets = PacketMetrics {
        sent: stats.sent,
        delivered: stats.delivered,
        dropped_queue: stats.dropped_queue,
        dropped_no_route: stats.dropped_no_route,
        dropped_app_stopped: stats.dropped_app_stopped,
        in_flight: net.in_flight(),
        model_results_delivered,
    };

    let edges = installed
        .edges
        .iter()
        .map(|&(node, app)| {
            let cache = net
                .node(node)
                .ok()
                .and_then(|n| n.cache_stats())
                .unwrap_or_default();
            let t = sim
                .app::<TrainingApp>(app)
                .expect("edge runs a training app");
            EdgeMetrics {
                node: node.0,
                cache,
                local_samples: t.local_received(),
                neighbor_samples: t.neighbor_received(),
                data_requests: t.requests_sent(),
                uploaded: t.has_uploaded(),
                training: t.outcome().map(|o| TrainingMetrics {
                    samples: o.samples,
                    epochs: o.report.epochs_run(),
                    final_loss: o.report.final_loss(),
                    duration_ns: o.duration.as_nanos(),
                    stop_reason: o.report.stop_reason.as_str(),
                    digest: o.report.final_parameters_digest,
                }),
            }
        })
        .collect();

    let agg = sim
        .app::<EnsembleAggregatorApp>(center_app)
        .expect("data center runs the aggregator");
    let evaluation = agg.evaluation();
    let ensemble = EnsembleMetrics {
        ready: agg.ensemble().is_some(),
        submodels: agg.received(),
        duplicates: agg.duplicates(),
        submodel_accuracy: evaluation
            .map(|e| e.submodels.iter().filter_map(|r| r.accuracy).collect())
            .unwrap_or_default(),
        ensemble_accuracy: evaluation.and_then(|e| e.ensemble.accuracy),
        ensemble_loss: evaluation.map(|e| e.ensemble.loss),
    };

    MetricsSummary {
        seed: config.seed,
        stop_at_ns: config.stop_at_ns,
        final_time_ns: 0,
        events_executed: 0,
        packets,
        edges,
        ensemble,
        wall_clock: Default::default(),
    }
}
