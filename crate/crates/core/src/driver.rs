//! Acceleration command sources: the autonomous gap-tracking controller and
//! a stochastic human model with perception noise and reaction-time hold.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::dynamics::{
    free_road_accel, safe_following_accel, DriveMode, FollowingGains, Role, VehicleSpec, VehicleState,
};

/// Vehicle directly ahead on the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lead {
    /// bumper to bumper, m
    pub gap: f64,
    pub speed: f64,
}

/// Everything a controller needs besides its own state, for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surroundings {
    pub lead: Option<Lead>,
    /// Stop-line constraint from `signal_approach_accel`; infinite if none.
    pub signal: f64,
    /// Unobstructed cruise target, m/s.
    pub cruise_target: f64,
}

impl Surroundings {
    pub fn open_road(cruise_target: f64) -> Self {
        Surroundings { lead: None, signal: f64::INFINITY, cruise_target }
    }
}

/// Min-of-constraints composition on the true state: cruise target, stop
/// line and safe following speed, then saturation.
#[inline]
pub fn constrain(command: f64, state: &VehicleState, s: &Surroundings, spec: &VehicleSpec, dt: f64) -> f64 {
    let mut a = command.min(free_road_accel(state.speed, s.cruise_target, spec, dt)).min(s.signal);
    if let Some(l) = s.lead {
        a = a.min(safe_following_accel(state.speed, l.gap, l.speed, spec, dt));
    }
    a.clamp(-spec.max_decel, spec.max_accel)
}

#[inline]
fn pd(gains: &FollowingGains, speed: f64, gap: f64, leader_speed: f64, desired_gap: f64) -> f64 {
    gains.gap * (gap - desired_gap) + gains.speed * (leader_speed - speed)
}

/// PD law on the gap error and speed difference, composed with the safety,
/// signal and cruise constraints.
pub fn autonomous_control(
    state: &VehicleState,
    s: &Surroundings,
    desired_gap: f64,
    gains: &FollowingGains,
    spec: &VehicleSpec,
    dt: f64,
) -> f64 {
    let cmd = s.lead.map_or(f64::INFINITY, |l| pd(gains, state.speed, l.gap, l.speed, desired_gap));
    constrain(cmd, state, s, spec, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionTime {
    /// s
    pub mean: f64,
    /// half-width of the uniform spread, s
    pub jitter: f64,
}

impl Default for ReactionTime {
    fn default() -> Self {
        ReactionTime { mean: 1.0, jitter: 0.3 }
    }
}

/// Human model parameters. Defaults are engineering choices, not fitted to
/// measured drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverParams {
    pub reaction_time: ReactionTime,
    /// m
    pub gap_noise_sigma: f64,
    /// m/s
    pub speed_noise_sigma: f64,
    /// 1/s²
    pub control_gain_gap: f64,
    /// 1/s
    pub control_gain_speed: f64,
    /// s
    pub takeover_delay: f64,
    /// Cruise speed the driver settles at, as a fraction of the posted
    /// target.
    pub speed_factor: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        DriverParams {
            reaction_time: ReactionTime::default(),
            gap_noise_sigma: 0.5,
            speed_noise_sigma: 0.3,
            control_gain_gap: 0.3,
            control_gain_speed: 0.8,
            takeover_delay: 0.5,
            speed_factor: 0.9,
        }
    }
}

impl DriverParams {
    pub fn gains(&self) -> FollowingGains {
        FollowingGains { gap: self.control_gain_gap, speed: self.control_gain_speed }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("reaction_time.mean", self.reaction_time.mean),
            ("reaction_time.jitter", self.reaction_time.jitter),
            ("gap_noise_sigma", self.gap_noise_sigma),
            ("speed_noise_sigma", self.speed_noise_sigma),
            ("control_gain_gap", self.control_gain_gap),
            ("control_gain_speed", self.control_gain_speed),
            ("takeover_delay", self.takeover_delay),
            ("speed_factor", self.speed_factor),
        ];
        for (k, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{k} must be finite and >= 0, got {v}"));
            }
        }
        if self.speed_factor == 0.0 || self.speed_factor > 1.0 {
            return Err(format!("speed_factor must be in (0, 1], got {}", self.speed_factor));
        }
        if self.reaction_time.mean > 2.5 {
            return Err(format!("reaction_time.mean must be <= 2.5 s, got {}", self.reaction_time.mean));
        }
        if self.reaction_time.jitter > self.reaction_time.mean {
            return Err(format!(
                "reaction_time.jitter ({}) must not exceed the mean ({})",
                self.reaction_time.jitter, self.reaction_time.mean
            ));
        }
        Ok(())
    }

    /// Noise-free, one-tick-reaction parameters: the human model then
    /// reproduces [`autonomous_control`] exactly.
    pub fn degenerate(clock: &Clock) -> Self {
        DriverParams {
            reaction_time: ReactionTime { mean: clock.dt(), jitter: 0.0 },
            gap_noise_sigma: 0.0,
            speed_noise_sigma: 0.0,
            takeover_delay: 0.0,
            speed_factor: 1.0,
            ..DriverParams::default()
        }
    }

    /// Draws one reaction time in seconds.
    pub fn sample_reaction<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let ReactionTime { mean, jitter } = self.reaction_time;
        if jitter == 0.0 {
            mean
        } else {
            rng.random_range(mean - jitter..=mean + jitter)
        }
    }
}

/// Stochastic driver: noisy perception, zero-order hold of the PD command
/// between reaction updates, safety applied every tick on the true state.
#[derive(Debug, Clone)]
pub struct HumanDriver<R> {
    params: DriverParams,
    rng: R,
    gap_noise: Normal<f64>,
    speed_noise: Normal<f64>,
    held: f64,
    next_update: Tick,
}

impl<R: RngCore> HumanDriver<R> {
    pub fn new(params: DriverParams, rng: R) -> Self {
        HumanDriver {
            gap_noise: Normal::new(0.0, params.gap_noise_sigma).expect("sigma validated"),
            speed_noise: Normal::new(0.0, params.speed_noise_sigma).expect("sigma validated"),
            params,
            rng,
            held: f64::INFINITY,
            next_update: Tick::ZERO,
        }
    }

    pub fn params(&self) -> &DriverParams {
        &self.params
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    /// Command for tick `now`.
    pub fn control(
        &mut self,
        now: Tick,
        state: &VehicleState,
        s: &Surroundings,
        desired_gap: f64,
        spec: &VehicleSpec,
        clock: &Clock,
    ) -> f64 {
        if now >= self.next_update {
            self.held = match s.lead {
                Some(l) => {
                    let gap = l.gap + self.gap_noise.sample(&mut self.rng);
                    let lead_speed = l.speed + self.speed_noise.sample(&mut self.rng);
                    pd(&self.params.gains(), state.speed, gap, lead_speed, desired_gap)
                }
                None => f64::INFINITY,
            };
            let hold = clock.ticks_at_least_one(self.params.sample_reaction(&mut self.rng));
            self.next_update = now.plus(hold);
        }
        let s = Surroundings { cruise_target: s.cruise_target * self.params.speed_factor, ..*s };
        constrain(self.held, state, &s, spec, clock.dt())
    }

    /// Clears the hold so the next call perceives afresh.
    pub fn reset(&mut self) {
        self.held = f64::INFINITY;
        self.next_update = Tick::ZERO;
    }
}

/// Alarm issued to the semi-autonomous driver and the tick at which the
/// takeover completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmSignal {
    pub issued: Tick,
    pub acknowledged: Tick,
}

impl AlarmSignal {
    pub fn new(issued: Tick, reaction_seconds: f64, params: &DriverParams, clock: &Clock) -> Self {
        AlarmSignal { issued, acknowledged: issued.plus(clock.ticks(params.takeover_delay + reaction_seconds)) }
    }

    pub fn due(&self, now: Tick) -> bool {
        now >= self.acknowledged
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriverError {
    #[error("alarm sent to {role:?} vehicle {id}; only the semi-autonomous follower takes over")]
    NotSemiAutonomous { id: crate::dynamics::VehicleId, role: Role },
}

/// Schedules the takeover for an alarm. `None` if the vehicle is already
/// driven manually.
pub fn handle_alarm<R: RngCore + ?Sized>(
    state: &VehicleState,
    issued: Tick,
    params: &DriverParams,
    rng: &mut R,
    clock: &Clock,
) -> Result<Option<AlarmSignal>, DriverError> {
    if state.role != Role::FollowerSemi {
        return Err(DriverError::NotSemiAutonomous { id: state.id, role: state.role });
    }
    if state.mode == DriveMode::Manual {
        return Ok(None);
    }
    let reaction = params.sample_reaction(rng);
    Ok(Some(AlarmSignal::new(issued, reaction, params, clock)))
}
