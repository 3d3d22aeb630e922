//! Integer tick clock.
//!
//! All simulated time is counted in whole ticks. Durations given in
//! seconds are rounded to ticks once, when a configuration is loaded, so
//! long runs accumulate no floating-point drift.

use serde::{Deserialize, Serialize};

/// Default simulation step in seconds.
pub const DEFAULT_TICK_SECONDS: f64 = 0.01;

/// A point in simulated time, counted in ticks since the start of a run.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    #[inline]
    pub fn next(self) -> Tick {
        Tick(self.0 + 1)
    }

    #[inline]
    pub fn plus(self, ticks: u64) -> Tick {
        Tick(self.0 + ticks)
    }

    /// Ticks elapsed since `earlier`, saturating at zero.
    #[inline]
    pub fn since(self, earlier: Tick) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl std::fmt::Display for Tick {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("tick length must be a positive finite number of seconds, got {0}")]
pub struct InvalidTick(pub f64);

/// Converts between seconds and ticks for a fixed step length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    dt: f64,
}

impl Default for Clock {
    fn default() -> Self {
        Clock { dt: DEFAULT_TICK_SECONDS }
    }
}

impl Clock {
    pub fn new(tick_seconds: f64) -> Result<Self, InvalidTick> {
        if tick_seconds.is_finite() && tick_seconds > 0.0 {
            Ok(Clock { dt: tick_seconds })
        } else {
            Err(InvalidTick(tick_seconds))
        }
    }

    /// Step length in seconds.
    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rounds a duration to the nearest whole number of ticks.
    pub fn ticks(&self, seconds: f64) -> u64 {
        if seconds <= 0.0 || !seconds.is_finite() {
            return 0;
        }
        (seconds / self.dt).round() as u64
    }

    /// Like [`Clock::ticks`] but never rounds a positive duration down to zero.
    pub fn ticks_at_least_one(&self, seconds: f64) -> u64 {
        self.ticks(seconds).max(u64::from(seconds > 0.0))
    }

    #[inline]
    pub fn seconds(&self, ticks: u64) -> f64 {
        ticks as f64 * self.dt
    }

    #[inline]
    pub fn time_of(&self, tick: Tick) -> f64 {
        self.seconds(tick.0)
    }
}
