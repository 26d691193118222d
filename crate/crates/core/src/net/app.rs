//! Applications and the context they run in.

use std::any::Any;
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{kinds, NetError, NetEvent, Network, NodeCache, NodeId, Packet, PacketId, PacketKind};
use crate::des::{Detail, EventId, RandomStream, Scheduler, SimTime};
use crate::lru::PutOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppState {
    Installed,
    Running,
    Stopped,
}

/// Failure raised by an application callback. Aborts the run.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Other(Box<dyn std::error::Error + Send + Sync>),
}

impl AppError {
    pub fn other(err: impl std::error::Error + Send + Sync + 'static) -> Self {
        AppError::Other(Box::new(err))
    }
}

/// A user program installed on a node.
///
/// Callbacks only run between the application's start and stop times.
pub trait Application: Any {
    fn on_start(&mut self, _ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        Ok(())
    }

    fn on_stop(&mut self, _ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        Ok(())
    }

    fn on_receive(&mut self, _ctx: &mut AppContext<'_>, _packet: &Packet) -> Result<(), AppError> {
        Ok(())
    }

    /// A timer set with [`AppContext::schedule`] fired.
    fn on_timer(&mut self, _ctx: &mut AppContext<'_>, _token: u64) -> Result<(), AppError> {
        Ok(())
    }
}

/// Handle given to application callbacks.
pub struct AppContext<'a> {
    pub(super) sched: &'a mut Scheduler<NetEvent>,
    pub(super) net: &'a mut Network,
    pub(super) app: AppId,
    pub(super) node: NodeId,
}

impl<'a> AppContext<'a> {
    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn app_id(&self) -> AppId {
        self.app
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn address(&self) -> Option<Ipv4Addr> {
        self.net.node(self.node).ok().and_then(|n| n.address())
    }

    /// Sends `payload` to `dst`. A missing route is traced and returned as
    /// [`NetError::NoRoute`]; the packet counts as sent and dropped.
    pub fn send(
        &mut self,
        dst: Ipv4Addr,
        kind: PacketKind,
        payload: Vec<u8>,
    ) -> Result<PacketId, NetError> {
        self.net.send(self.sched, self.node, dst, kind, payload)
    }

    /// Arms a timer that calls [`Application::on_timer`] with `token`.
    pub fn schedule(&mut self, delay: SimTime, token: u64) -> EventId {
        self.sched.schedule(
            delay,
            NetEvent::AppTimer {
                app: self.app,
                token,
            },
        )
    }

    pub fn cancel(&mut self, timer: EventId) -> bool {
        self.sched.cancel(timer)
    }

    pub fn rng_stream(&self, name: &str) -> RandomStream {
        self.sched.rng_stream(name)
    }

    /// Emits a trace record attributed to this node.
    pub fn trace(&mut self, kind: &'static str, detail: Detail) {
        self.sched.emit(Some(self.node.0), kind, detail);
    }

    /// The node's cache, if caching is enabled there.
    pub fn cache(&mut self) -> Option<CacheHandle<'_>> {
        let node = self.node;
        let cache = self.net.nodes.get_mut(node.0 as usize)?.cache.as_mut()?;
        Some(CacheHandle {
            cache,
            sched: self.sched,
            node,
        })
    }
}

/// Traced access to a node's LRU cache.
pub struct CacheHandle<'a> {
    cache: &'a mut NodeCache,
    sched: &'a mut Scheduler<NetEvent>,
    node: NodeId,
}

impl CacheHandle<'_> {
    pub fn len(&self) -> usize {
        self.cache.lru.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.lru.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cache.lru.capacity()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.cache.lru.contains(key)
    }

    pub fn put(&mut self, key: u64, value: Vec<u8>) -> PutOutcome<Vec<u8>> {
        let outcome = self.cache.lru.put(key, value);
        let node = Some(self.node.0);
        let result = match &outcome {
            PutOutcome::Inserted => "inserted",
            PutOutcome::Updated => "updated",
            PutOutcome::InsertedWithEviction { .. } => "evicted",
        };
        self.cache.stats.puts += 1;
        if let PutOutcome::InsertedWithEviction { evicted_key, .. } = outcome {
            self.cache.stats.evictions += 1;
            self.sched.emit(
                node,
                kinds::CACHE_EVICT,
                vec![("key".into(), evicted_key.into())],
            );
        }
        let len = self.cache.lru.len();
        self.sched.emit(
            node,
            kinds::CACHE_PUT,
            vec![
                ("key".into(), key.into()),
                ("result".into(), result.into()),
                ("len".into(), len.into()),
            ],
        );
        outcome
    }

    /// Promoting lookup. Misses are traced with `value=-1`.
    pub fn get(&mut self, key: u64) -> Option<Vec<u8>> {
        let node = Some(self.node.0);
        match self.cache.lru.get(key) {
            Some(v) => {
                let v = v.clone();
                self.cache.stats.hits += 1;
                self.sched
                    .emit(node, kinds::CACHE_HIT, vec![("key".into(), key.into())]);
                Some(v)
            }
            None => {
                self.cache.stats.misses += 1;
                self.sched.emit(
                    node,
                    kinds::CACHE_MISS,
                    vec![("key".into(), key.into()), ("value".into(), (-1i64).into())],
                );
                None
            }
        }
    }

    /// Up to `n` entries, most recent first, without touching recency.
    pub fn peek_recent(&self, n: usize) -> Vec<(u64, Vec<u8>)> {
        self.cache
            .lru
            .iter()
            .take(n)
            .map(|(k, v)| (k, v.clone()))
            .collect()
    }

    /// Keys from most to least recently used.
    pub fn keys(&self) -> Vec<u64> {
        self.cache.lru.keys().collect()
    }
}

/// Sends a fixed list of packets at offsets from its start time.
#[derive(Debug, Default)]
pub struct ScheduledSender {
    plan: Vec<(SimTime, Ipv4Addr, PacketKind, usize)>,
    results: Vec<Result<PacketId, NetError>>,
}

impl ScheduledSender {
    /// Each entry is `(offset from start, destination, kind, payload bytes)`.
    pub fn new(plan: Vec<(SimTime, Ipv4Addr, PacketKind, usize)>) -> Self {
        ScheduledSender {
            plan,
            results: Vec::new(),
        }
    }

    pub fn results(&self) -> &[Result<PacketId, NetError>] {
        &self.results
    }
}

impl Application for ScheduledSender {
    fn on_start(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        for (i, (offset, ..)) in self.plan.iter().enumerate() {
            ctx.schedule(*offset, i as u64);
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut AppContext<'_>, token: u64) -> Result<(), AppError> {
        let (_, dst, kind, len) = self.plan[token as usize];
        let result = ctx.send(dst, kind, vec![0; len]);
        self.results.push(result);
        Ok(())
    }
}

/// Records every packet it receives with its arrival time.
#[derive(Debug, Default)]
pub struct PacketSink {
    received: Vec<(Packet, SimTime)>,
}

impl PacketSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn received(&self) -> &[(Packet, SimTime)] {
        &self.received
    }
}

impl Application for PacketSink {
    fn on_receive(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        self.received.push((packet.clone(), ctx.now()));
        Ok(())
    }
}
