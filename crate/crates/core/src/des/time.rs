//! Simulated time.
//!
//! Time is kept as an integer number of nanoseconds. Every derived duration
//! (serialization delay, compute cost) is rounded to a whole nanosecond with
//! round-half-up so traces never depend on platform float rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// A point on (or span of) the simulated clock, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Converts fractional seconds, rounding half up. Returns `None` for
    /// negative, non-finite or out-of-range input.
    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return None;
        }
        let ns = (secs * 1e9 + 0.5).floor();
        if ns >= u64::MAX as f64 {
            return None;
        }
        Some(SimTime(ns as u64))
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulated time overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("negative simulated duration"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Time to clock `bytes` onto a wire running at `rate_bps`, rounded half up
/// to the nanosecond.
pub fn transmission_time(bytes: u64, rate_bps: u64) -> SimTime {
    assert!(rate_bps > 0, "link rate must be positive");
    let scaled = (bytes as u128) * 8 * 1_000_000_000;
    let rate = rate_bps as u128;
    let ns = (2 * scaled + rate) / (2 * rate);
    SimTime(u64::try_from(ns).unwrap_or(u64::MAX))
}

/// `coefficient * units`, saturating. Used for the linear compute-cost model.
pub fn linear_cost(ns_per_unit: u64, units: u64) -> SimTime {
    SimTime(ns_per_unit.saturating_mul(units))
}
