//! Fixed-time traffic lights with temporary overrides.
//!
//! A light owns a cyclic schedule of phases and a cycle clock measured in
//! ticks. An override masks the schedule for a number of ticks; the cycle
//! clock keeps running underneath, so once the override expires the light
//! shows whatever the schedule says at that moment.

use serde::{Deserialize, Serialize};

use super::{LightId, NetworkError};
use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalColor {
    Red,
    Green,
    Amber,
}

impl SignalColor {
    /// AMBER is handled like RED for stopping decisions.
    #[inline]
    pub fn requires_stop(self) -> bool {
        !matches!(self, SignalColor::Green)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalColor::Red => "RED",
            SignalColor::Green => "GREEN",
            SignalColor::Amber => "AMBER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase {
    pub color: SignalColor,
    pub ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Override {
    pub color: SignalColor,
    pub remaining: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficLight {
    id: LightId,
    schedule: Vec<Phase>,
    cycle: u64,
    cycle_pos: u64,
    override_state: Option<Override>,
}

/// Default cycle used when a light is declared without phases.
pub const DEFAULT_CYCLE: [(SignalColor, f64); 3] =
    [(SignalColor::Green, 30.0), (SignalColor::Amber, 3.0), (SignalColor::Red, 20.0)];

impl TrafficLight {
    /// Builds a light from phase durations in seconds. `offset` shifts the
    /// cycle clock at t = 0.
    pub fn new(id: LightId, phases: &[(SignalColor, f64)], offset: f64, clock: &Clock) -> Result<Self, NetworkError> {
        if phases.is_empty() {
            return Err(NetworkError::InvalidLight { id, reason: "schedule is empty".into() });
        }
        let mut schedule = Vec::with_capacity(phases.len());
        for &(color, seconds) in phases {
            if !(seconds.is_finite() && seconds > 0.0) {
                return Err(NetworkError::InvalidLight {
                    id,
                    reason: format!("phase duration must be > 0 s, got {seconds}"),
                });
            }
            schedule.push(Phase { color, ticks: clock.ticks_at_least_one(seconds) });
        }
        let cycle: u64 = schedule.iter().map(|p| p.ticks).sum();
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(NetworkError::InvalidLight { id, reason: format!("offset must be >= 0 s, got {offset}") });
        }
        let cycle_pos = clock.ticks(offset) % cycle;
        Ok(TrafficLight { id, schedule, cycle, cycle_pos, override_state: None })
    }

    pub fn id(&self) -> &LightId {
        &self.id
    }

    pub fn schedule(&self) -> &[Phase] {
        &self.schedule
    }

    pub fn cycle_ticks(&self) -> u64 {
        self.cycle
    }

    pub fn cycle_position(&self) -> u64 {
        self.cycle_pos
    }

    pub fn override_state(&self) -> Option<Override> {
        self.override_state
    }

    fn phase_at(&self, pos: u64) -> (usize, u64) {
        let mut start = 0;
        for (i, p) in self.schedule.iter().enumerate() {
            if pos < start + p.ticks {
                return (i, start + p.ticks - pos);
            }
            start += p.ticks;
        }
        unreachable!("cycle position within cycle length")
    }

    /// Color the schedule shows, ignoring any override.
    pub fn scheduled_color(&self) -> SignalColor {
        self.schedule[self.phase_at(self.cycle_pos).0].color
    }

    /// Ticks left in the current scheduled phase.
    pub fn remaining_in_phase(&self) -> u64 {
        self.phase_at(self.cycle_pos).1
    }

    /// Color seen by drivers.
    pub fn effective_color(&self) -> SignalColor {
        match self.override_state {
            Some(o) => o.color,
            None => self.scheduled_color(),
        }
    }

    /// Scheduled color `ahead` ticks from now, ignoring overrides.
    pub fn scheduled_color_in(&self, ahead: u64) -> SignalColor {
        let pos = (self.cycle_pos + ahead % self.cycle) % self.cycle;
        self.schedule[self.phase_at(pos).0].color
    }

    /// Advances the cycle clock and any override by `ticks`.
    pub fn advance(&mut self, ticks: u64) {
        self.cycle_pos = (self.cycle_pos + ticks % self.cycle) % self.cycle;
        if let Some(o) = &mut self.override_state {
            o.remaining = o.remaining.saturating_sub(ticks);
            if o.remaining == 0 {
                self.override_state = None;
            }
        }
    }

    /// Forces RED for `ticks`, replacing any active override.
    pub fn force_red(&mut self, ticks: u64) {
        if ticks > 0 {
            self.override_state = Some(Override { color: SignalColor::Red, remaining: ticks });
        }
    }

    /// Holds GREEN for `ticks` unless a RED override is active. Returns
    /// whether the request was honoured.
    pub fn hold_green(&mut self, ticks: u64) -> bool {
        match self.override_state {
            Some(Override { color: SignalColor::Red | SignalColor::Amber, .. }) => false,
            Some(ref mut o) => {
                o.remaining = o.remaining.max(ticks);
                true
            }
            None if ticks > 0 => {
                self.override_state = Some(Override { color: SignalColor::Green, remaining: ticks });
                true
            }
            None => false,
        }
    }
}

/// Runtime state of every light in a network, indexed like the network's
/// light list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LightBank {
    lights: Vec<TrafficLight>,
}

impl LightBank {
    pub fn new(lights: Vec<TrafficLight>) -> Self {
        LightBank { lights }
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn get(&self, idx: usize) -> &TrafficLight {
        &self.lights[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut TrafficLight {
        &mut self.lights[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrafficLight> {
        self.lights.iter()
    }

    pub fn index_of(&self, id: &LightId) -> Option<usize> {
        self.lights.iter().position(|l| l.id() == id)
    }

    pub fn by_id(&self, id: &LightId) -> Option<&TrafficLight> {
        self.lights.iter().find(|l| l.id() == id)
    }

    /// Advances every light by `ticks`.
    pub fn advance_lights(&mut self, ticks: u64) {
        for l in &mut self.lights {
            l.advance(ticks);
        }
    }

    /// Forces light `id` RED for `ticks`.
    pub fn force_red(&mut self, id: &LightId, ticks: u64) -> Result<(), NetworkError> {
        if ticks == 0 {
            return Err(NetworkError::InvalidLight {
                id: id.clone(),
                reason: "forced RED duration must be > 0".into(),
            });
        }
        let idx = self.index_of(id).ok_or_else(|| NetworkError::UnknownLight(id.clone()))?;
        self.lights[idx].force_red(ticks);
        Ok(())
    }
}
