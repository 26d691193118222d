//! Network model on top of the event engine.
//!
//! Nodes are joined by full-duplex point-to-point links. Each link direction
//! has its own drop-tail queue (capacity counted in packets waiting behind the
//! one being serialized) and a transmitter that clocks one packet at a time.
//! A packet leaves a hop `size * 8 / rate` after it reaches the head of the
//! transmitter and arrives `delay` later. Routing is global static
//! shortest-path, computed when stacks are installed.

mod app;
mod packet;
mod routing;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::num::NonZeroUsize;

use thiserror::Error;

pub use app::{
    AppContext, AppError, AppId, AppState, Application, CacheHandle, PacketSink, ScheduledSender,
};
pub use packet::{Packet, PacketId, PacketKind, HEADER_BYTES};
pub use routing::{Hop, Routes};

use crate::des::{transmission_time, Detail, RunError, RunStats, Scheduler, SimTime, Trace};
use crate::lru::LruCache;

/// Trace kinds emitted by the network layer.
pub mod kinds {
    pub const PACKET_SEND: &str = "PACKET_SEND";
    pub const PACKET_DELIVER: &str = "PACKET_DELIVER";
    pub const PACKET_DROP: &str = "PACKET_DROP";
    pub const NO_ROUTE: &str = "NO_ROUTE";
    pub const APP_START: &str = "APP_START";
    pub const APP_STOP: &str = "APP_STOP";
    pub const APP_STOPPED_DROP: &str = "APP_STOPPED_DROP";
    pub const CACHE_PUT: &str = "CACHE_PUT";
    pub const CACHE_HIT: &str = "CACHE_HIT";
    pub const CACHE_MISS: &str = "CACHE_MISS";
    pub const CACHE_EVICT: &str = "CACHE_EVICT";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} not found")]
    NodeNotFound(NodeId),
    #[error("application {0:?} not found")]
    AppNotFound(AppId),
    #[error("{0} has no address; install a stack first")]
    NoAddress(NodeId),
    #[error("no route for packet {packet} to {dst}")]
    NoRoute { packet: PacketId, dst: Ipv4Addr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkConfig {
    pub rate_bps: u64,
    pub delay: SimTime,
    pub queue_capacity: usize,
}

impl LinkConfig {
    pub fn new(rate_bps: u64, delay: SimTime, queue_capacity: usize) -> Self {
        LinkConfig {
            rate_bps,
            delay,
            queue_capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub puts: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

#[derive(Debug)]
pub(crate) struct NodeCache {
    lru: LruCache<Vec<u8>>,
    stats: CacheStats,
}

#[derive(Debug)]
pub struct Node {
    id: NodeId,
    address: Option<Ipv4Addr>,
    devices: Vec<LinkId>,
    cache: Option<NodeCache>,
    apps: Vec<AppId>,
}

impl Node {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn address(&self) -> Option<Ipv4Addr> {
        self.address
    }

    pub fn devices(&self) -> &[LinkId] {
        &self.devices
    }

    pub fn applications(&self) -> &[AppId] {
        &self.apps
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn cache_len(&self) -> Option<usize> {
        self.cache.as_ref().map(|c| c.lru.len())
    }

    pub fn cache_stats(&self) -> Option<CacheStats> {
        self.cache.as_ref().map(|c| c.stats)
    }

    /// Cached keys, most recent first.
    pub fn cache_keys(&self) -> Vec<u64> {
        self.cache
            .as_ref()
            .map(|c| c.lru.keys().collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Default)]
struct Direction {
    queue: VecDeque<Packet>,
    on_wire: Option<Packet>,
    propagating: usize,
}

#[derive(Debug)]
pub struct Link {
    id: LinkId,
    endpoints: (NodeId, NodeId),
    config: LinkConfig,
    dirs: [Direction; 2],
}

impl Link {
    pub fn id(&self) -> LinkId {
        self.id
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        self.endpoints
    }

    pub fn config(&self) -> LinkConfig {
        self.config
    }

    fn direction_from(&self, from: NodeId) -> usize {
        if self.endpoints.0 == from {
            0
        } else {
            1
        }
    }

    fn far_end(&self, dir: usize) -> NodeId {
        if dir == 0 {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    fn packets_in_flight(&self) -> usize {
        self.dirs
            .iter()
            .map(|d| d.queue.len() + usize::from(d.on_wire.is_some()) + d.propagating)
            .sum()
    }
}

/// Packet counters; `sent = delivered + drops + in_flight` at all times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_queue: u64,
    pub dropped_no_route: u64,
    pub dropped_app_stopped: u64,
}

impl PacketStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_queue + self.dropped_no_route + self.dropped_app_stopped
    }
}

/// Engine actions for the network layer.
#[derive(Debug)]
pub enum NetEvent {
    TxDone {
        link: LinkId,
        dir: u8,
    },
    Arrive {
        node: NodeId,
        packet: Packet,
        via: Option<(LinkId, u8)>,
    },
    AppStart(AppId),
    AppStop(AppId),
    AppTimer {
        app: AppId,
        token: u64,
    },
}

fn packet_detail(p: &Packet) -> Detail {
    vec![
        ("packet".into(), p.id.0.into()),
        ("src".into(), p.src.into()),
        ("dst".into(), p.dst.into()),
        ("size".into(), p.size_bytes().into()),
        ("ptype".into(), p.kind.as_str().into()),
    ]
}

/// Topology, addressing, link state and counters.
#[derive(Debug, Default)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    routes: Routes,
    by_address: BTreeMap<Ipv4Addr, NodeId>,
    next_packet: u64,
    stats: PacketStats,
    local_pending: usize,
    forwarded: BTreeMap<(NodeId, PacketKind), u64>,
}

impl Network {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, NetError> {
        self.nodes
            .get(id.0 as usize)
            .ok_or(NetError::NodeNotFound(id))
    }

    pub fn node_by_address(&self, addr: Ipv4Addr) -> Option<NodeId> {
        self.by_address.get(&addr).copied()
    }

    pub fn address_of(&self, id: NodeId) -> Option<Ipv4Addr> {
        self.nodes.get(id.0 as usize).and_then(|n| n.address)
    }

    pub fn routes(&self) -> &Routes {
        &self.routes
    }

    pub fn stats(&self) -> PacketStats {
        self.stats
    }

    /// Packets queued, being serialized, or propagating right now.
    pub fn in_flight(&self) -> u64 {
        let on_links: usize = self.links.iter().map(Link::packets_in_flight).sum();
        (on_links + self.local_pending) as u64
    }

    /// Packets of `kind` that `node` forwarded on behalf of others.
    pub fn forwarded(&self, node: NodeId, kind: PacketKind) -> u64 {
        self.forwarded.get(&(node, kind)).copied().unwrap_or(0)
    }

    fn send(
        &mut self,
        sched: &mut Scheduler<NetEvent>,
        from: NodeId,
        dst: Ipv4Addr,
        kind: PacketKind,
        payload: Vec<u8>,
    ) -> Result<PacketId, NetError> {
        let src = self.node(from)?.address.ok_or(NetError::NoAddress(from))?;
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        self.stats.sent += 1;
        let packet = Packet {
            id,
            src,
            dst,
            kind,
            payload,
            sent_at: sched.now(),
        };
        sched.emit(Some(from.0), kinds::PACKET_SEND, packet_detail(&packet));

        match self.by_address.get(&dst).copied() {
            Some(to) if to == from => {
                self.local_pending += 1;
                sched.schedule(
                    SimTime::ZERO,
                    NetEvent::Arrive {
                        node: to,
                        packet,
                        via: None,
                    },
                );
                Ok(id)
            }
            Some(to) => match self.routes.next_hop(from, to) {
                Some(hop) => {
                    self.transmit(sched, from, hop, packet);
                    Ok(id)
                }
                None => Err(self.no_route(sched, from, packet)),
            },
            None => Err(self.no_route(sched, from, packet)),
        }
    }

    fn no_route(
        &mut self,
        sched: &mut Scheduler<NetEvent>,
        at: NodeId,
        packet: Packet,
    ) -> NetError {
        self.stats.dropped_no_route += 1;
        sched.emit(Some(at.0), kinds::NO_ROUTE, packet_detail(&packet));
        NetError::NoRoute {
            packet: packet.id,
            dst: packet.dst,
        }
    }

    fn transmit(
        &mut self,
        sched: &mut Scheduler<NetEvent>,
        from: NodeId,
        hop: Hop,
        packet: Packet,
    ) {
        let link = &mut self.links[hop.link.0 as usize];
        let dir = link.direction_from(from);
        let config = link.config;
        let direction = &mut link.dirs[dir];
        if direction.on_wire.is_none() {
            let tx = transmission_time(packet.size_bytes() as u64, config.rate_bps);
            direction.on_wire = Some(packet);
            sched.schedule(
                tx,
                NetEvent::TxDone {
                    link: hop.link,
                    dir: dir as u8,
                },
            );
        } else if direction.queue.len() < config.queue_capacity {
            direction.queue.push_back(packet);
        } else {
            self.stats.dropped_queue += 1;
            let mut detail = packet_detail(&packet);
            detail.push(("cause".into(), "queue".into()));
            detail.push(("link".into(), hop.link.0.into()));
            sched.emit(Some(from.0), kinds::PACKET_DROP, detail);
        }
    }

    fn on_tx_done(&mut self, sched: &mut Scheduler<NetEvent>, link_id: LinkId, dir: usize) {
        let link = &mut self.links[link_id.0 as usize];
        let to = link.far_end(dir);
        let config = link.config;
        let direction = &mut link.dirs[dir];
        let packet = direction
            .on_wire
            .take()
            .expect("transmitter idle at TxDone");
        direction.propagating += 1;
        sched.schedule(
            config.delay,
            NetEvent::Arrive {
                node: to,
                packet,
                via: Some((link_id, dir as u8)),
            },
        );
        if let Some(next) = direction.queue.pop_front() {
            let tx = transmission_time(next.size_bytes() as u64, config.rate_bps);
            direction.on_wire = Some(next);
            sched.schedule(
                tx,
                NetEvent::TxDone {
                    link: link_id,
                    dir: dir as u8,
                },
            );
        }
    }

    /// Handles a packet reaching `node`; returns it if `node` is its destination.
    fn on_arrive(
        &mut self,
        sched: &mut Scheduler<NetEvent>,
        node: NodeId,
        packet: Packet,
        via: Option<(LinkId, u8)>,
    ) -> Option<Packet> {
        match via {
            Some((link, dir)) => self.links[link.0 as usize].dirs[dir as usize].propagating -= 1,
            None => self.local_pending -= 1,
        }
        if self.nodes[node.0 as usize].address == Some(packet.dst) {
            return Some(packet);
        }
        let hop = self
            .by_address
            .get(&packet.dst)
            .and_then(|&to| self.routes.next_hop(node, to));
        match hop {
            Some(hop) => {
                *self.forwarded.entry((node, packet.kind)).or_default() += 1;
                self.transmit(sched, node, hop, packet);
            }
            None => {
                self.no_route(sched, node, packet);
            }
        }
        None
    }
}

type ReceiveHandler = Box<dyn FnMut(&Packet, SimTime)>;

struct AppSlot {
    node: NodeId,
    start: SimTime,
    stop: SimTime,
    state: AppState,
    app: Box<dyn Application>,
    handlers: Vec<ReceiveHandler>,
}

/// A network simulation: engine plus network plus installed applications.
pub struct Simulator {
    sched: Scheduler<NetEvent>,
    net: Network,
    apps: Vec<AppSlot>,
}

impl Simulator {
    pub fn new(seed: u64) -> Self {
        Simulator {
            sched: Scheduler::new(seed),
            net: Network::default(),
            apps: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn seed(&self) -> u64 {
        self.sched.seed()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn scheduler(&self) -> &Scheduler<NetEvent> {
        &self.sched
    }

    pub fn trace(&self) -> &Trace {
        self.sched.trace()
    }

    pub fn take_trace(&mut self) -> Trace {
        self.sched.take_trace()
    }

    pub fn create_nodes(&mut self, n: usize) -> Result<Vec<NodeId>, NetError> {
        if n == 0 {
            return Err(NetError::InvalidArgument(
                "node count must be at least 1".into(),
            ));
        }
        let first = self.net.nodes.len() as u32;
        let ids: Vec<NodeId> = (first..first + n as u32).map(NodeId).collect();
        self.net.nodes.extend(ids.iter().map(|&id| Node {
            id,
            address: None,
            devices: Vec::new(),
            cache: None,
            apps: Vec::new(),
        }));
        Ok(ids)
    }

    pub fn connect_p2p(
        &mut self,
        a: NodeId,
        b: NodeId,
        config: LinkConfig,
    ) -> Result<LinkId, NetError> {
        if a == b {
            return Err(NetError::InvalidArgument(format!(
                "link endpoints must differ ({a})"
            )));
        }
        self.net.node(a)?;
        self.net.node(b)?;
        if config.rate_bps == 0 {
            return Err(NetError::InvalidArgument(
                "link rate must be positive".into(),
            ));
        }
        let id = LinkId(self.net.links.len() as u32);
        self.net.links.push(Link {
            id,
            endpoints: (a, b),
            config,
            dirs: Default::default(),
        });
        self.net.nodes[a.0 as usize].devices.push(id);
        self.net.nodes[b.0 as usize].devices.push(id);
        Ok(id)
    }

    /// Assigns `10.0.0.(id + 1)` to each node and recomputes routes.
    pub fn install_stack(&mut self, nodes: &[NodeId]) -> Result<Vec<Ipv4Addr>, NetError> {
        for &id in nodes {
            self.net.node(id)?;
        }
        let mut out = Vec::with_capacity(nodes.len());
        for &id in nodes {
            let host = id.0 + 1;
            if host > 0x00ff_fffe {
                return Err(NetError::InvalidArgument("address space exhausted".into()));
            }
            let addr = Ipv4Addr::from(0x0a00_0000 | host);
            self.net.nodes[id.0 as usize].address = Some(addr);
            self.net.by_address.insert(addr, id);
            out.push(addr);
        }
        let mut adjacency = vec![Vec::new(); self.net.nodes.len()];
        for link in &self.net.links {
            let (a, b) = link.endpoints;
            adjacency[a.0 as usize].push((b, link.id));
            adjacency[b.0 as usize].push((a, link.id));
        }
        self.net.routes = Routes::compute(&adjacency);
        Ok(out)
    }

    pub fn enable_cache(&mut self, node: NodeId, capacity: NonZeroUsize) -> Result<(), NetError> {
        self.net.node(node)?;
        self.net.nodes[node.0 as usize].cache = Some(NodeCache {
            lru: LruCache::new(capacity),
            stats: CacheStats::default(),
        });
        Ok(())
    }

    pub fn install_application(
        &mut self,
        node: NodeId,
        app: Box<dyn Application>,
        start: SimTime,
        stop: SimTime,
    ) -> Result<AppId, NetError> {
        self.net.node(node)?;
        if start >= stop {
            return Err(NetError::InvalidArgument(format!(
                "application start {start} must precede stop {stop}"
            )));
        }
        if start < self.now() {
            return Err(NetError::InvalidArgument(format!(
                "application start {start} is in the past"
            )));
        }
        let id = AppId(self.apps.len() as u32);
        self.apps.push(AppSlot {
            node,
            start,
            stop,
            state: AppState::Installed,
            app,
            handlers: Vec::new(),
        });
        self.net.nodes[node.0 as usize].apps.push(id);
        self.sched.schedule_at(start, NetEvent::AppStart(id));
        self.sched.schedule_at(stop, NetEvent::AppStop(id));
        Ok(id)
    }

    /// Registers a handler called for every packet the application receives.
    pub fn on_receive(
        &mut self,
        app: AppId,
        handler: impl FnMut(&Packet, SimTime) + 'static,
    ) -> Result<(), NetError> {
        let slot = self
            .apps
            .get_mut(app.0 as usize)
            .ok_or(NetError::AppNotFound(app))?;
        slot.handlers.push(Box::new(handler));
        Ok(())
    }

    pub fn app_state(&self, app: AppId) -> Option<AppState> {
        self.apps.get(app.0 as usize).map(|s| s.state)
    }

    pub fn app_window(&self, app: AppId) -> Option<(SimTime, SimTime)> {
        self.apps.get(app.0 as usize).map(|s| (s.start, s.stop))
    }

    pub fn app_node(&self, app: AppId) -> Option<NodeId> {
        self.apps.get(app.0 as usize).map(|s| s.node)
    }

    /// Downcasts an installed application for inspection.
    pub fn app<T: Application>(&self, app: AppId) -> Option<&T> {
        let slot = self.apps.get(app.0 as usize)?;
        (slot.app.as_ref() as &dyn std::any::Any).downcast_ref::<T>()
    }

    pub fn run_until(&mut self, limit: SimTime) -> Result<RunStats, RunError<AppError>> {
        let Simulator { sched, net, apps } = self;
        sched.run_until(limit, |sched, event| dispatch(sched, net, apps, event))
    }
}

fn dispatch(
    sched: &mut Scheduler<NetEvent>,
    net: &mut Network,
    apps: &mut [AppSlot],
    event: NetEvent,
) -> Result<(), AppError> {
    match event {
        NetEvent::TxDone { link, dir } => {
            net.on_tx_done(sched, link, dir as usize);
            Ok(())
        }
        NetEvent::Arrive { node, packet, via } => match net.on_arrive(sched, node, packet, via) {
            Some(packet) => deliver(sched, net, apps, node, packet),
            None => Ok(()),
        },
        NetEvent::AppStart(id) => {
            let slot = &mut apps[id.0 as usize];
            slot.state = AppState::Running;
            sched.emit(
                Some(slot.node.0),
                kinds::APP_START,
                vec![("app".into(), id.0.into())],
            );
            let mut ctx = AppContext {
                sched,
                net,
                app: id,
                node: slot.node,
            };
            slot.app.on_start(&mut ctx)
        }
        NetEvent::AppStop(id) => {
            let slot = &mut apps[id.0 as usize];
            let was_running = slot.state == AppState::Running;
            let result = if was_running {
                let mut ctx = AppContext {
                    sched: &mut *sched,
                    net,
                    app: id,
                    node: slot.node,
                };
                slot.app.on_stop(&mut ctx)
            } else {
                Ok(())
            };
            slot.state = AppState::Stopped;
            if was_running {
                sched.emit(
                    Some(slot.node.0),
                    kinds::APP_STOP,
                    vec![("app".into(), id.0.into())],
                );
            }
            result
        }
        NetEvent::AppTimer { app, token } => {
            let slot = &mut apps[app.0 as usize];
            if slot.state != AppState::Running {
                return Ok(());
            }
            let mut ctx = AppContext {
                sched,
                net,
                app,
                node: slot.node,
            };
            slot.app.on_timer(&mut ctx, token)
        }
    }
}

fn deliver(
    sched: &mut Scheduler<NetEvent>,
    net: &mut Network,
    apps: &mut [AppSlot],
    node: NodeId,
    packet: Packet,
) -> Result<(), AppError> {
    let receivers: Vec<AppId> = net.nodes[node.0 as usize]
        .apps
        .iter()
        .copied()
        .filter(|a| apps[a.0 as usize].state == AppState::Running)
        .collect();
    if receivers.is_empty() {
        net.stats.dropped_app_stopped += 1;
        sched.emit(
            Some(node.0),
            kinds::APP_STOPPED_DROP,
            packet_detail(&packet),
        );
        return Ok(());
    }
    net.stats.delivered += 1;
    let mut detail = packet_detail(&packet);
    detail.push(("latency_ns".into(), (sched.now() - packet.sent_at).into()));
    sched.emit(Some(node.0), kinds::PACKET_DELIVER, detail);
    for id in receivers {
        let slot = &mut apps[id.0 as usize];
        let now = sched.now();
        for handler in &mut slot.handlers {
            handler(&packet, now);
        }
        let mut ctx = AppContext {
            sched: &mut *sched,
            net: &mut *net,
            app: id,
            node,
        };
        slot.app.on_receive(&mut ctx, &packet)?;
    }
    Ok(())
}
