//! Longitudinal vehicle kinematics.
//!
//! Speeds are bounded by a Krauss-style safe speed: with reaction time one
//! tick `τ` and braking capability `b`, a follower whose next speed `v'`
//! satisfies `v'τ + v'²/2b ≤ gap + v_l²/2b` can always stop behind a leader
//! that starts braking at `b` now. Integration is semi-implicit Euler.

use serde::{Deserialize, Serialize};

use crate::road_net::{RoutePath, SignalColor};

/// Standstill distance kept to a leader or a stop line, meters.
pub const SAFETY_MARGIN_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSpec {
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s², positive magnitude
    pub max_decel: f64,
    /// m/s, lowest cruise target on open road
    pub v_min_cruise: f64,
    /// m/s
    pub v_max: f64,
    /// Wh
    pub battery_capacity: f64,
    /// W
    pub max_drive_power: f64,
}

impl Default for VehicleSpec {
    /// Electric delivery van.
    fn default() -> Self {
        VehicleSpec {
            mass: 3500.0,
            length: 5.94,
            max_accel: 2.5,
            max_decel: 4.5,
            v_min_cruise: 5.0,
            v_max: 20.0,
            battery_capacity: 41000.0,
            max_drive_power: 7200.0,
        }
    }
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("mass", self.mass),
            ("length", self.length),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("v_min_cruise", self.v_min_cruise),
            ("v_max", self.v_max),
            ("battery_capacity", self.battery_capacity),
            ("max_drive_power", self.max_drive_power),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.v_min_cruise >= self.v_max {
            return Err(format!("v_min_cruise ({}) must be below v_max ({})", self.v_min_cruise, self.v_max));
        }
        Ok(())
    }

    /// Largest acceleration magnitude the vehicle can record.
    pub fn accel_bound(&self) -> f64 {
        self.max_accel.max(self.max_decel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Leader,
    FollowerSemi,
    FollowerAuto,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DriveMode {
    Connected,
    Manual,
    Catchup,
}

impl DriveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DriveMode::Connected => "CONNECTED",
            DriveMode::Manual => "MANUAL",
            DriveMode::Catchup => "CATCHUP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Active,
    /// Route exhausted. Terminal.
    Arrived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub role: Role,
    /// Index into the route's edge list.
    pub edge: usize,
    /// Meters along the current edge (front bumper).
    pub position: f64,
    pub speed: f64,
    /// Last applied acceleration, m/s².
    pub accel: f64,
    pub mode: DriveMode,
    /// Wh
    pub soc: f64,
    /// Final route edge this vehicle drives; it arrives at its end.
    pub last_edge: usize,
    pub status: Status,
    pub depleted: bool,
}

impl VehicleState {
    pub fn new(id: VehicleId, role: Role, route: &RoutePath, arc: f64, speed: f64, soc: f64) -> Self {
        let (edge, position) = route.locate(arc);
        VehicleState {
            id,
            role,
            edge,
            position,
            speed,
            accel: 0.0,
            mode: DriveMode::Connected,
            soc,
            last_edge: route.edge_count() - 1,
            status: Status::Active,
            depleted: false,
        }
    }

    /// Arc length of the front bumper along `route`.
    #[inline]
    pub fn arc(&self, route: &RoutePath) -> f64 {
        route.arc(self.edge, self.position)
    }

    #[inline]
    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }
}

/// Largest speed for the next tick that keeps the Krauss stopping condition
/// behind a leader (or a stop line, with `leader_speed = 0`).
#[inline]
pub fn safe_speed(gap: f64, leader_speed: f64, max_decel: f64, tau: f64) -> f64 {
    let g = (gap - SAFETY_MARGIN_M).max(0.0);
    let tb = tau * max_decel;
    (-tb + (tb * tb + leader_speed * leader_speed + 2.0 * max_decel * g).sqrt()).max(0.0)
}

/// Acceleration cap implied by [`safe_speed`]; unsaturated.
#[inline]
pub fn safe_following_accel(speed: f64, gap: f64, leader_speed: f64, spec: &VehicleSpec, dt: f64) -> f64 {
    (safe_speed(gap, leader_speed, spec.max_decel, dt) - speed) / dt
}

/// Gains of the gap-tracking term used by ordinary traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowingGains {
    /// 1/s²
    pub gap: f64,
    /// 1/s
    pub speed: f64,
}

impl Default for FollowingGains {
    fn default() -> Self {
        FollowingGains { gap: 0.3, speed: 0.8 }
    }
}

/// Car-following acceleration: desired-gap tracking capped by the safe
/// speed, saturated to `[-max_decel, max_accel]`.
pub fn car_following_accel(
    state: &VehicleState,
    gap: f64,
    leader_speed: f64,
    desired_gap: f64,
    spec: &VehicleSpec,
    gains: &FollowingGains,
    dt: f64,
) -> f64 {
    let track = gains.gap * (gap - desired_gap) + gains.speed * (leader_speed - state.speed);
    let safe = safe_following_accel(state.speed, gap, leader_speed, spec, dt);
    track.min(safe).clamp(-spec.max_decel, spec.max_accel)
}

/// Acceleration toward a cruise target speed, saturated.
#[inline]
pub fn free_road_accel(speed: f64, target: f64, spec: &VehicleSpec, dt: f64) -> f64 {
    ((target - speed) / dt).clamp(-spec.max_decel, spec.max_accel)
}

/// Constraint from the next stop line. `f64::INFINITY` means unconstrained:
/// the light is GREEN, or it requires a stop that is no longer feasible at
/// `max_decel` and the vehicle carries on.
pub fn signal_approach_accel(speed: f64, dist_to_line: f64, color: SignalColor, spec: &VehicleSpec, dt: f64) -> f64 {
    if !color.requires_stop() {
        return f64::INFINITY;
    }
    let v_stop = safe_speed(dist_to_line.max(0.0), 0.0, spec.max_decel, dt);
    if v_stop < speed - spec.max_decel * dt - 1e-12 {
        return f64::INFINITY;
    }
    (v_stop - speed) / dt
}

/// Whether a vehicle can still stop before a line `dist_to_line` ahead.
#[inline]
pub fn can_stop_before(speed: f64, dist_to_line: f64, spec: &VehicleSpec, dt: f64) -> bool {
    signal_approach_accel(speed, dist_to_line, SignalColor::Red, spec, dt).is_finite()
}

/// One semi-implicit Euler step along `route`: speed first, then position.
/// Passing the end of `state.last_edge` marks the vehicle arrived.
pub fn step_vehicle(state: &VehicleState, accel: f64, dt: f64, spec: &VehicleSpec, route: &RoutePath) -> VehicleState {
    let mut next = state.clone();
    if !state.is_active() {
        next.accel = 0.0;
        return next;
    }
    let v = (state.speed + accel * dt).clamp(0.0, spec.v_max);
    next.speed = v;
    next.accel = (v - state.speed) / dt;
    next.position = state.position + v * dt;
    while next.position > route.edge_length(next.edge) {
        if next.edge >= next.last_edge {
            next.position = route.edge_length(next.edge);
            next.status = Status::Arrived;
            break;
        }
        next.position -= route.edge_length(next.edge);
        next.edge += 1;
    }
    next
}

/// Longitudinal power-balance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryModel {
    pub rolling_resistance: f64,
    /// C_d·A, m²
    pub drag_area: f64,
    /// kg/m³
    pub air_density: f64,
    pub drivetrain_efficiency: f64,
    /// m/s²
    pub gravity: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel {
            rolling_resistance: 0.01,
            drag_area: 3.0,
            air_density: 1.2,
            drivetrain_efficiency: 0.85,
            gravity: 9.81,
        }
    }
}

impl BatteryModel {
    /// Electrical power drawn at speed `v` and acceleration `a`, W, clipped
    /// to the drive limit. No regeneration.
    pub fn power(&self, v: f64, a: f64, spec: &VehicleSpec) -> f64 {
        let traction = spec.mass * a
            + self.rolling_resistance * spec.mass * self.gravity
            + 0.5 * self.air_density * self.drag_area * v * v;
        ((traction * v).max(0.0) / self.drivetrain_efficiency).min(spec.max_drive_power)
    }
}

/// Energy used over one step, Wh.
pub fn battery_drain(state: &VehicleState, accel: f64, dt: f64, spec: &VehicleSpec, model: &BatteryModel) -> f64 {
    model.power(state.speed, accel, spec) * dt / 3600.0
}

/// Debits `consumed` Wh; flags the vehicle once the battery is empty.
pub fn apply_drain(state: &mut VehicleState, consumed: f64) {
    state.soc = (state.soc - consumed).max(0.0);
    if state.soc <= 0.0 {
        state.depleted = true;
    }
}
