//! The event queue and simulated clock.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use thiserror::Error;

use super::rng::RandomStream;
use super::time::SimTime;
use super::trace::{Detail, Trace, TraceRecord};

/// Identifier of a scheduled event. Ids increase strictly in scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(u64);

impl EventId {
    pub const fn as_u64(self) -> u64 {
        self.0
    }

    pub const fn from_u64(id: u64) -> Self {
        EventId(id)
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

struct Pending<A> {
    at: SimTime,
    id: EventId,
    action: A,
}

// BinaryHeap is a max-heap: reverse so the earliest (at, id) pops first.
impl<A> Ord for Pending<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.id).cmp(&(self.at, self.id))
    }
}

impl<A> PartialOrd for Pending<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> PartialEq for Pending<A> {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl<A> Eq for Pending<A> {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub events_executed: u64,
    pub final_time: SimTime,
}

/// Lifetime counters. `scheduled = executed + cancelled + pending` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounters {
    pub scheduled: u64,
    pub executed: u64,
    pub cancelled: u64,
}

#[derive(Debug, Error)]
pub enum RunError<E> {
    #[error("engine is already running")]
    AlreadyRunning,
    #[error("event {event} at {time} failed: {source}")]
    Callback {
        event: EventId,
        time: SimTime,
        #[source]
        source: E,
    },
}

/// Single-threaded discrete-event engine over actions of type `A`.
///
/// Events fire in `(fire_at, id)` order, so equal-time events run in the order
/// they were scheduled. The engine also owns the run's trace and the global
/// seed from which named random streams are derived.
pub struct Scheduler<A> {
    now: SimTime,
    next_id: u64,
    queue: BinaryHeap<Pending<A>>,
    live: HashSet<EventId>,
    seed: u64,
    trace: Trace,
    current: Option<EventId>,
    running: bool,
    counters: EventCounters,
}

impl<A> Scheduler<A> {
    pub fn new(seed: u64) -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_id: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            seed,
            trace: Trace::new(),
            current: None,
            running: false,
            counters: EventCounters::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The event whose callback is executing, if any.
    pub fn current_event(&self) -> Option<EventId> {
        self.current
    }

    /// Schedules `action` to fire `delay` after now.
    pub fn schedule(&mut self, delay: SimTime, action: A) -> EventId {
        let at = self.now + delay;
        let id = EventId(self.next_id);
        self.next_id += 1;
        self.counters.scheduled += 1;
        self.live.insert(id);
        self.queue.push(Pending { at, id, action });
        id
    }

    /// Schedules at an absolute time, which must not be in the past.
    pub fn schedule_at(&mut self, at: SimTime, action: A) -> EventId {
        assert!(
            at >= self.now,
            "cannot schedule into the past ({at} < {})",
            self.now
        );
        self.schedule(at - self.now, action)
    }

    /// Returns true if the event was pending and is now suppressed.
    pub fn cancel(&mut self, id: EventId) -> bool {
        let was_live = self.live.remove(&id);
        if was_live {
            self.counters.cancelled += 1;
        }
        was_live
    }

    pub fn is_pending(&self, id: EventId) -> bool {
        self.live.contains(&id)
    }

    /// Number of scheduled, not yet fired or cancelled events.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn counters(&self) -> EventCounters {
        self.counters
    }

    /// Executes every pending event with `fire_at <= limit`.
    ///
    /// The clock stops at the last executed event's time; it is not advanced to
    /// `limit`. A callback error aborts the run and is returned with the id of
    /// the failing event.
    pub fn run_until<E, F>(
        &mut self,
        limit: SimTime,
        mut handler: F,
    ) -> Result<RunStats, RunError<E>>
    where
        F: FnMut(&mut Scheduler<A>, A) -> Result<(), E>,
    {
        if self.running {
            return Err(RunError::AlreadyRunning);
        }
        self.running = true;
        let mut executed = 0;
        let result = loop {
            match self.queue.peek() {
                Some(top) if top.at <= limit => {}
                _ => break Ok(()),
            }
            let Pending { at, id, action } = self.queue.pop().expect("peeked");
            if !self.live.remove(&id) {
                continue;
            }
            self.now = at;
            self.current = Some(id);
            self.counters.executed += 1;
            executed += 1;
            let outcome = handler(self, action);
            self.current = None;
            if let Err(source) = outcome {
                break Err(RunError::Callback {
                    event: id,
                    time: at,
                    source,
                });
            }
        };
        self.running = false;
        // drop cancelled entries sitting at the head so they do not pin memory
        while self
            .queue
            .peek()
            .is_some_and(|p| !self.live.contains(&p.id))
        {
            self.queue.pop();
        }
        result.map(|()| RunStats {
            events_executed: executed,
            final_time: self.now,
        })
    }

    /// A named stream derived from the global seed.
    pub fn rng_stream(&self, name: &str) -> RandomStream {
        RandomStream::new(self.seed, name)
    }

    /// Appends a record stamped with the current time and event.
    pub fn emit(&mut self, node: Option<u32>, kind: impl Into<Cow<'static, str>>, detail: Detail) {
        let record = TraceRecord {
            time: self.now,
            event: self.current,
            node,
            kind: kind.into(),
            detail,
        };
        self.trace.push(record);
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Trace {
        std::mem::take(&mut self.trace)
    }
}
