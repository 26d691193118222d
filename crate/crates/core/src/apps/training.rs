use std::net::Ipv4Addr;

use super::payload::{decode_request, encode_request, Control, ModelResult, ResultSummary, Sample};
use super::{ignore_no_route, kinds, malformed};
use crate::des::{linear_cost, EventId, SimTime};
use crate::dl::{self, DataSet, NetworkSpec, Split, TrainingReport, TrainingStrategy};
use crate::net::{AppContext, AppError, Application, Packet, PacketKind};

const TIMER_COLLECT_DEADLINE: u64 = 0;
const TIMER_REPLY_TIMEOUT: u64 = 1;
const TIMER_TRAINING_DONE: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub network: NetworkSpec,
    pub strategy: TrainingStrategy,
    pub sufficiency_threshold: usize,
    /// Queried in order when local data stays short.
    pub neighbors: Vec<Ipv4Addr>,
    pub center: Ipv4Addr,
    pub compute_ns_per_sample_epoch: u64,
    /// Time after start at which a short cache triggers neighbor requests.
    pub collect_window: SimTime,
    pub reply_timeout: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Collecting,
    /// Waiting on `neighbors[index]`.
    Requesting {
        index: usize,
        timeout: EventId,
    },
    Training,
    Done,
}

/// What a finished training produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub samples: usize,
    pub report: TrainingReport,
    pub started_at: SimTime,
    pub duration: SimTime,
}

/// Edge node application: caches incoming samples, checks sufficiency,
/// borrows data from neighbors when short, trains one sub-model and uploads
/// it to the data center.
#[derive(Debug)]
pub struct TrainingApp {
    config: TrainingConfig,
    phase: Phase,
    local_received: u64,
    neighbor_received: u64,
    requests_sent: u32,
    outcome: Option<TrainingOutcome>,
    pending: Option<ModelResult>,
}

impl TrainingApp {
    pub fn new(config: TrainingConfig) -> Self {
        TrainingApp {
            config,
            phase: Phase::Collecting,
            local_received: 0,
            neighbor_received: 0,
            requests_sent: 0,
            outcome: None,
            pending: None,
        }
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    /// Samples received from anyone but a configured neighbor.
    pub fn local_received(&self) -> u64 {
        self.local_received
    }

    /// Samples received in reply to data requests.
    pub fn neighbor_received(&self) -> u64 {
        self.neighbor_received
    }

    pub fn requests_sent(&self) -> u32 {
        self.requests_sent
    }

    pub fn outcome(&self) -> Option<&TrainingOutcome> {
        self.outcome.as_ref()
    }

    pub fn has_uploaded(&self) -> bool {
        self.phase == Phase::Done && self.outcome.is_some()
    }

    fn cache_len(ctx: &mut AppContext<'_>) -> usize {
        ctx.cache().map_or(0, |c| c.len())
    }

    fn sufficient(&self, ctx: &mut AppContext<'_>) -> bool {
        Self::cache_len(ctx) >= self.config.sufficiency_threshold
    }

    fn on_sample(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        let sample = match Sample::decode(&packet.payload) {
            Ok(s) => s,
            Err(e) => return {
                malformed(ctx, packet, &e.to_string());
                Ok(())
            },
        };
        if let Err(msg) = self.check_widths(&sample) {
            return {
                malformed(ctx, packet, &msg);
                Ok(())
            };
        }
        if self.config.neighbors.contains(&packet.src) {
            self.neighbor_received += 1;
        } else {
            self.local_received += 1;
        }
        if let Some(mut cache) = ctx.cache() {
            cache.put(sample.id, packet.payload.clone());
        }
        if matches!(self.phase, Phase::Collecting | Phase::Requesting { .. })
            && self.sufficient(ctx)
        {
            if let Phase::Requesting { timeout, .. } = self.phase {
                ctx.cancel(timeout);
            }
            self.train(ctx)?;
        }
        Ok(())
    }

    fn check_widths(&self, sample: &Sample) -> Result<(), String> {
        let inputs = self.config.network.input_len();
        let outputs = self.config.network.output_len();
        if sample.features.len() != inputs || sample.targets.len() != outputs {
            return Err(format!(
                "sample has {}/{} features/targets, model expects {inputs}/{outputs}",
                sample.features.len(),
                sample.targets.len()
            ));
        }
        Ok(())
    }

    fn on_request(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        let count = match decode_request(&packet.payload) {
            Ok(c) => c,
            Err(e) => return {
                malformed(ctx, packet, &e.to_string());
                Ok(())
            },
        };
        let replies = ctx
            .cache()
            .map(|c| c.peek_recent(count as usize))
            .unwrap_or_default();
        for (_, payload) in &replies {
            ignore_no_route(ctx.send(packet.src, PacketKind::DataSample, payload.clone()))?;
        }
        let end = Control::ReplyEnd {
            count: replies.len() as u32,
        };
        ignore_no_route(ctx.send(packet.src, PacketKind::Control, end.encode()))?;
        Ok(())
    }

    fn on_control(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        let Control::ReplyEnd { .. } = match Control::decode(&packet.payload) {
            Ok(c) => c,
            Err(e) => return {
                malformed(ctx, packet, &e.to_string());
                Ok(())
            },
        };
        if let Phase::Requesting { index, timeout } = self.phase {
            if self.config.neighbors[index] == packet.src {
                ctx.cancel(timeout);
                self.request_from(ctx, index + 1)?;
            }
        }
        Ok(())
    }

    /// Asks `neighbors[index]` for the deficit, or falls back to training on
    /// what is cached once the list is exhausted.
    fn request_from(&mut self, ctx: &mut AppContext<'_>, index: usize) -> Result<(), AppError> {
        let len = Self::cache_len(ctx);
        if len >= self.config.sufficiency_threshold {
            return self.train(ctx);
        }
        let Some(&neighbor) = self.config.neighbors.get(index) else {
            ctx.trace(
                kinds::INSUFFICIENT_FALLBACK,
                vec![
                    ("cached".into(), len.into()),
                    ("threshold".into(), self.config.sufficiency_threshold.into()),
                ],
            );
            return self.train(ctx);
        };
        let deficit = (self.config.sufficiency_threshold - len) as u32;
        ctx.trace(
            kinds::DATA_REQUEST,
            vec![
                ("neighbor".into(), neighbor.into()),
                ("count".into(), deficit.into()),
            ],
        );
        self.requests_sent += 1;
        ignore_no_route(ctx.send(neighbor, PacketKind::DataRequest, encode_request(deficit)))?;
        let timeout = ctx.schedule(self.config.reply_timeout, TIMER_REPLY_TIMEOUT);
        self.phase = Phase::Requesting { index, timeout };
        Ok(())
    }

    fn train(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        let Some(cache) = ctx.cache() else {
            return Err(AppError::other(dl::DlError::InvalidArgument(
                "training app installed on a node without a cache".into(),
            )));
        };
        let mut keys = cache.keys();
        keys.sort_unstable();
        if keys.is_empty() {
            self.phase = Phase::Done;
            ctx.trace(kinds::TRAIN_SKIPPED_EMPTY, Vec::new());
            return Ok(());
        }
        self.phase = Phase::Training;
        ctx.trace(
            kinds::TRAINING_START,
            vec![
                ("samples".into(), keys.len().into()),
                ("local".into(), self.local_received.into()),
                ("from_neighbors".into(), self.neighbor_received.into()),
            ],
        );
        let mut cache = ctx.cache().expect("checked above");
        let rows: Vec<_> = keys
            .iter()
            .filter_map(|&k| cache.get(k))
            .map(|bytes| {
                let s = Sample::decode(&bytes).expect("cache holds validated samples");
                (s.features, s.targets)
            })
            .collect();
        let seed = ctx
            .rng_stream(&format!("train/{}", ctx.node().0))
            .next_u64();
        let data = DataSet::from_samples(&rows, Split::Train).map_err(AppError::other)?;
        let mut net = self.config.network.build(seed).map_err(AppError::other)?;
        net.fit_scaling(&data.xy(Split::Train).0)
            .map_err(AppError::other)?;
        let strategy = TrainingStrategy {
            seed,
            ..self.config.strategy.clone()
        };
        let report = dl::train(&mut net, &data, &strategy).map_err(AppError::other)?;
        let units = (rows.len() * report.epochs_run()) as u64;
        let duration = linear_cost(self.config.compute_ns_per_sample_epoch, units);
        self.pending = Some(ModelResult {
            model: dl::to_bytes(&net),
            summary: ResultSummary {
                samples: rows.len() as u64,
                epochs_run: report.epochs_run() as u64,
                final_loss: report.final_loss(),
                stop_reason: report.stop_reason,
                digest: report.final_parameters_digest,
            },
        });
        self.outcome = Some(TrainingOutcome {
            samples: rows.len(),
            report,
            started_at: ctx.now(),
            duration,
        });
        ctx.schedule(duration, TIMER_TRAINING_DONE);
        Ok(())
    }

    fn finish(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        let result = self.pending.take().expect("training produced a result");
        let outcome = self.outcome.as_ref().expect("training recorded an outcome");
        ctx.trace(
            kinds::TRAINING_DONE,
            vec![
                ("epochs".into(), outcome.report.epochs_run().into()),
                ("final_loss".into(), outcome.report.final_loss().into()),
                (
                    "stop_reason".into(),
                    outcome.report.stop_reason.as_str().into(),
                ),
                (
                    "digest".into(),
                    format!("{:016x}", result.summary.digest).into(),
                ),
                ("duration_ns".into(), outcome.duration.into()),
            ],
        );
        self.phase = Phase::Done;
        let digest = result.summary.digest;
        let payload = result.encode();
        let bytes = payload.len();
        if let Some(id) =
            ignore_no_route(ctx.send(self.config.center, PacketKind::ModelResult, payload))?
        {
            ctx.trace(
                kinds::MODEL_RESULT_SENT,
                vec![
                    ("packet".into(), id.0.into()),
                    ("digest".into(), format!("{digest:016x}").into()),
                    ("bytes".into(), bytes.into()),
                ],
            );
        }
        Ok(())
    }
}

impl Application for TrainingApp {
    fn on_start(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        ctx.schedule(self.config.collect_window, TIMER_COLLECT_DEADLINE);
        Ok(())
    }

    fn on_receive(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        match packet.kind {
            PacketKind::DataSample => self.on_sample(ctx, packet),
            PacketKind::DataRequest => self.on_request(ctx, packet),
            PacketKind::Control => self.on_control(ctx, packet),
            PacketKind::ModelResult => Ok(()),
        }
    }

    fn on_timer(&mut self, ctx: &mut AppContext<'_>, token: u64) -> Result<(), AppError> {
        match (token, self.phase) {
            (TIMER_COLLECT_DEADLINE, Phase::Collecting) => self.request_from(ctx, 0),
            (TIMER_REPLY_TIMEOUT, Phase::Requesting { index, .. }) => {
                self.request_from(ctx, index + 1)
            }
            (TIMER_TRAINING_DONE, Phase::Training) => self.finish(ctx),
            _ => Ok(()),
        }
    }
}
