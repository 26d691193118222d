//! Deterministic discrete-event core: clock, event queue, random streams and
//! structured tracing.

pub mod rng;
pub mod scheduler;
pub mod time;
pub mod trace;

pub use rng::{derive_seed, fnv1a64, RandomStream};
pub use scheduler::{EventCounters, EventId, RunError, RunStats, Scheduler};
pub use time::{linear_cost, transmission_time, SimTime};
pub use trace::{Detail, Trace, TraceParseError, TraceRecord, Value, TRACE_FORMAT_HEADER};
