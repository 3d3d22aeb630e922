//! Single-stream simulation of the convoy and background traffic.
//!
//! Vehicles are kept sorted by route arc, most downstream first, so the
//! vehicle ahead of entry `i` is entry `i - 1`. Each tick every command is
//! computed from the states at the start of the tick before any vehicle
//! moves.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::driver::{autonomous_control, handle_alarm, AlarmSignal, DriverError, HumanDriver, Lead, Surroundings};
use crate::dynamics::{
    apply_drain, battery_drain, safe_speed, signal_approach_accel, step_vehicle, DriveMode, Role, VehicleId,
    VehicleSpec, VehicleState, SAFETY_MARGIN_M,
};
use crate::platoon::{
    gap_between_arcs, EventKind, LinkObservation, LinkState, PlatoonError, PlatoonEvent, PlatoonState, TriggerPhase,
    TriggerRuntime,
};
use crate::road_net::LightBank;
use crate::scenario::Scenario;
use crate::telemetry::{travel_time, TelemetryError, TelemetrySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UseCase {
    Manual,
    DynamicFlexible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Dataset {
    Sim,
    Exp,
}

impl UseCase {
    pub const ALL: [UseCase; 2] = [UseCase::Manual, UseCase::DynamicFlexible];

    pub fn as_str(self) -> &'static str {
        match self {
            UseCase::Manual => "manual",
            UseCase::DynamicFlexible => "dynamic",
        }
    }
}

impl Dataset {
    pub const ALL: [Dataset; 2] = [Dataset::Sim, Dataset::Exp];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Sim => "sim",
            Dataset::Exp => "exp",
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UseCase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "manual" | "a" => Ok(UseCase::Manual),
            "dynamic" | "dynamic_flexible" | "b" => Ok(UseCase::DynamicFlexible),
            _ => Err(format!("unknown use case {s:?} (manual | dynamic)")),
        }
    }
}

impl FromStr for Dataset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sim" => Ok(Dataset::Sim),
            "exp" => Ok(Dataset::Exp),
            _ => Err(format!("unknown dataset {s:?} (sim | exp)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("tick budget of {ticks} ticks exhausted; convoy at {positions:?}")]
    Budget { ticks: u64, positions: Vec<(VehicleId, f64)> },
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("platoon bookkeeping: {0}")]
    Platoon(#[from] PlatoonError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Poisson arrival process on one entry edge.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    next: f64,
}

impl ArrivalProcess {
    pub fn new(rate_per_hour: f64, mut rng: ChaCha8Rng) -> Self {
        let gap = (rate_per_hour > 0.0).then(|| Exp::new(rate_per_hour / 3600.0).expect("positive rate"));
        let next = gap.as_ref().map_or(f64::INFINITY, |g| g.sample(&mut rng));
        ArrivalProcess { rng, gap, next }
    }

    /// Number of arrivals up to simulated time `t` seconds since the last call.
    pub fn poll(&mut self, t: f64) -> usize {
        let mut n = 0;
        while self.next <= t {
            n += 1;
            self.next += self.gap.as_ref().expect("finite next implies a rate").sample(&mut self.rng);
        }
        n
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Background arrivals on one entry edge for `duration` seconds, one count per tick.
pub fn spawn_background(rate_per_hour: f64, rng: ChaCha8Rng, clock: &Clock, duration: f64) -> Vec<(Tick, usize)> {
    let mut p = ArrivalProcess::new(rate_per_hour, rng);
    (0..clock.ticks(duration))
        .filter_map(|t| {
            let n = p.poll(clock.seconds(t + 1));
            (n > 0).then_some((Tick(t), n))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Convoy(usize),
    Background { factor: f64 },
}

#[derive(Debug, Clone)]
struct Entity {
    st: VehicleState,
    kind: Kind,
    length: f64,
    arc: f64,
}

#[derive(Debug, Clone)]
struct PendingCar {
    factor: f64,
    edges: usize,
}

/// Counters filled during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub ticks: u64,
    pub vehicle_ticks: u64,
    pub collisions: u64,
    pub bound_violations: u64,
    pub min_gap: f64,
    pub background_spawned: usize,
    pub deferred_insertions: u64,
    pub intruders_inserted: usize,
    pub triggers_fired: Vec<Option<Tick>>,
    pub depleted: Vec<VehicleId>,
    pub energy_wh: [f64; 3],
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub use_case: UseCase,
    pub dataset: Dataset,
    pub seed: u64,
    pub convoy: [VehicleId; 3],
    pub telemetry: Vec<TelemetrySample>,
    pub events: Vec<PlatoonEvent>,
    /// s, semi-autonomous van between route origin and destination
    pub travel_time: f64,
    pub departure: Tick,
    pub diagnostics: RunDiagnostics,
}

impl RunOutput {
    pub fn semi(&self) -> VehicleId {
        self.convoy[1]
    }

    /// Telemetry of the semi-autonomous van from the origin to the destination.
    pub fn semi_samples<'a>(&'a self, scenario: &'a Scenario) -> impl Iterator<Item = &'a TelemetrySample> + 'a {
        let (o, d) = (scenario.route.origin_arc(), scenario.route.destination_arc());
        let semi = self.semi();
        self.telemetry.iter().filter(move |s| {
            let a = s.arc(&scenario.route);
            s.vehicle == semi && a >= o && a <= d
        })
    }
}

const ROLES: [Role; 3] = [Role::Leader, Role::FollowerSemi, Role::FollowerAuto];
const STREAM_JITTER: u64 = 1;
const STREAM_HUMAN: u64 = 2;
const STREAM_DEMAND: u64 = 100;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

struct Sim<'a> {
    sc: &'a Scenario,
    use_case: UseCase,
    dataset: Dataset,
    dt: f64,
    lights: LightBank,
    stream: Vec<Entity>,
    next_id: u32,
    convoy_ids: [VehicleId; 3],
    convoy_arc: [f64; 3],
    convoy_state: [Option<VehicleState>; 3],
    departed: bool,
    arrived: [bool; 3],
    arrived_at: [Option<Tick>; 3],
    platoon: Option<PlatoonState>,
    triggers: Vec<TriggerRuntime>,
    intruder_done: Vec<bool>,
    human: Option<HumanDriver<ChaCha8Rng>>,
    alarm: Option<AlarmSignal>,
    telemetry: Vec<TelemetrySample>,
    diag: RunDiagnostics,
}

impl<'a> Sim<'a> {
    fn spec(&self, kind: Kind) -> &'a VehicleSpec {
        match kind {
            Kind::Convoy(_) => &self.sc.van,
            Kind::Background { .. } => &self.sc.background,
        }
    }

    fn fresh_id(&mut self) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Index at which a vehicle with front at `arc` would sit.
    fn slot(&self, arc: f64) -> usize {
        self.stream.partition_point(|e| e.arc >= arc)
    }

    /// Gap acceptance for a vehicle entering with its front at `arc`.
    fn fits(&self, pos: usize, arc: f64, length: f64, speed: f64, min_gap: f64) -> bool {
        let spec = self.spec(Kind::Background { factor: 1.0 });
        if let Some(a) = pos.checked_sub(1).map(|i| &self.stream[i]) {
            let gap = a.arc - a.length - arc;
            if gap < min_gap || speed > safe_speed(gap, a.st.speed, spec.max_decel, self.dt) {
                return false;
            }
        }
        if let Some(b) = self.stream.get(pos) {
            let gap = arc - length - b.arc;
            let b_spec = self.spec(b.kind);
            if gap < min_gap || b.st.speed > safe_speed(gap, speed, b_spec.max_decel, self.dt) {
                return false;
            }
        }
        true
    }

    fn insert_background(
        &mut self,
        edge: usize,
        position: f64,
        speed: f64,
        length: f64,
        factor: f64,
        last_edge: usize,
    ) -> VehicleId {
        let id = self.fresh_id();
        let mut st =
            VehicleState::new(id, Role::Background, &self.sc.route, self.sc.route.arc(edge, position), speed, 0.0);
        st.mode = DriveMode::Manual;
        st.last_edge = last_edge;
        let arc = st.arc(&self.sc.route);
        let pos = self.slot(arc);
        self.stream.insert(pos, Entity { st, kind: Kind::Background { factor }, length, arc });
        id
    }

    fn try_entry(&mut self, edge: usize, car: &PendingCar) -> bool {
        let route = &self.sc.route;
        let arc = route.edge_start(edge);
        let target = route.speed_limit(edge) * car.factor;
        let pos = self.slot(arc);
        let speed = match pos.checked_sub(1).map(|i| &self.stream[i]) {
            Some(a) => {
                target.min(safe_speed(a.arc - a.length - arc, a.st.speed, self.sc.background.max_decel, self.dt))
            }
            None => target,
        };
        if !self.fits(pos, arc, self.sc.background.length, speed, self.sc.background_desired_gap) {
            return false;
        }
        let last = (edge + car.edges - 1).min(route.edge_count() - 1);
        self.insert_background(edge, 0.0, speed, self.sc.background.length, car.factor, last);
        self.diag.background_spawned += 1;
        true
    }

    fn depart_convoy(&mut self) -> bool {
        let route = &self.sc.route;
        let spacing = self.sc.van.length + self.sc.platoon.desired_gap;
        let lead_arc = route.origin_arc();
        let tail_arc = lead_arc - 2.0 * spacing;
        let pos = self.slot(lead_arc);
        if let Some(a) = pos.checked_sub(1).map(|i| &self.stream[i]) {
            if a.arc - a.length - lead_arc < self.sc.platoon.desired_gap {
                return false;
            }
        }
        if self.stream.get(pos).is_some_and(|b| b.arc > tail_arc - self.sc.platoon.desired_gap) {
            return false;
        }
        let mode = match self.use_case {
            UseCase::Manual => DriveMode::Manual,
            UseCase::DynamicFlexible => DriveMode::Connected,
        };
        for (k, role) in ROLES.into_iter().enumerate() {
            let arc = lead_arc - k as f64 * spacing;
            let mut st = VehicleState::new(self.convoy_ids[k], role, route, arc, 0.0, self.sc.van.battery_capacity);
            st.mode = mode;
            self.convoy_arc[k] = arc;
            self.stream.insert(pos + k, Entity { st, kind: Kind::Convoy(k), length: self.sc.van.length, arc });
        }
        self.departed = true;
        true
    }

    fn convoy_index(&self, k: usize) -> Option<usize> {
        if !self.departed || self.arrived[k] {
            return None;
        }
        self.stream.iter().position(|e| e.kind == Kind::Convoy(k))
    }

    fn equipped_requester(&self, k: usize) -> bool {
        let Some(p) = &self.platoon else { return false };
        if self.convoy_index(k).is_none() {
            return false;
        }
        k == 0 || p.connected_to_leader(k - 1) || p.link_state(k - 1) == LinkState::CatchingUp
    }

    fn signal_priority(&mut self) {
        let pr = self.sc.priority;
        if !pr.enabled || self.platoon.is_none() {
            return;
        }
        for k in 0..3 {
            if !self.equipped_requester(k) {
                continue;
            }
            let i = self.convoy_index(k).expect("requester is active");
            let e = &self.stream[i];
            let Some((_, light, line)) = self.sc.route.next_stop_line(e.st.edge, e.st.last_edge) else { continue };
            let dist = line - e.arc;
            if !(0.0..=pr.range).contains(&dist) {
                continue;
            }
            // the connected group behind the requester passes on the same green
            let p = self.platoon.as_ref().expect("dynamic mode");
            let mut tail_arc = e.arc - e.length;
            for j in k + 1..3 {
                if p.link_state(j - 1) != LinkState::Connected || self.arrived[j] {
                    break;
                }
                tail_arc = self.convoy_arc[j] - self.sc.van.length;
            }
            let clear = dist + (e.arc - tail_arc) + 2.0 * SAFETY_MARGIN_M;
            let seconds = (clear / e.st.speed.max(3.0)).min(pr.max_hold);
            let ticks = self.sc.clock.ticks_at_least_one(seconds);
            self.lights.get_mut(light).hold_green(ticks);
        }
    }

    fn poll_triggers(&mut self) {
        let (Some(li), Some(fi)) = (self.convoy_index(0), self.convoy_index(1)) else { return };
        let (leader, follower) = (self.stream[li].st.clone(), self.stream[fi].st.clone());
        for (n, trig) in self.triggers.iter_mut().enumerate() {
            if trig.poll(&leader, &self.sc.van, &follower, &self.sc.van, &self.sc.route, &mut self.lights, self.dt) {
                let now = Tick(self.diag.ticks);
                trig.phase = TriggerPhase::Fired(now);
                self.diag.triggers_fired[n] = Some(now);
                if let Some(p) = self.platoon.as_mut() {
                    p.set_pending_cause(0, crate::platoon::Cause::TrafficLight);
                }
            }
        }
    }

    fn try_intruders(&mut self) {
        let Some(li) = self.convoy_index(0) else { return };
        for n in 0..self.sc.intruders.len() {
            if self.intruder_done[n] {
                continue;
            }
            let plan = self.sc.intruders[n].clone();
            let leader = &self.stream[li];
            if leader.st.edge > plan.edge {
                self.intruder_done[n] = true;
                continue;
            }
            if leader.st.edge < plan.edge || leader.st.position < plan.offset {
                continue;
            }
            let arc = leader.arc - leader.length - plan.gap_ahead;
            let speed = leader.st.speed;
            let (edge, position) = self.sc.route.locate(arc);
            let pos = self.slot(arc);
            if !self.fits(pos, arc, plan.length, speed, SAFETY_MARGIN_M) {
                continue;
            }
            let last = plan.last_edge.max(edge);
            self.insert_background(edge, position, speed, plan.length, 1.0, last);
            self.diag.intruders_inserted += 1;
            self.intruder_done[n] = true;
        }
    }

    fn surroundings(&self, i: usize) -> Surroundings {
        let e = &self.stream[i];
        let spec = self.spec(e.kind);
        let route = &self.sc.route;
        let lead = i.checked_sub(1).map(|j| {
            let a = &self.stream[j];
            Lead { gap: a.arc - a.length - e.arc, speed: a.st.speed }
        });
        let signal = match route.next_stop_line(e.st.edge, e.st.last_edge) {
            Some((_, light, line)) => {
                let dist = line - e.arc;
                if dist > 250.0 {
                    f64::INFINITY
                } else {
                    signal_approach_accel(
                        e.st.speed,
                        dist.max(0.0),
                        self.lights.get(light).effective_color(),
                        spec,
                        self.dt,
                    )
                }
            }
            None => f64::INFINITY,
        };
        let limit = route.speed_limit(e.st.edge);
        let cruise_target = match e.kind {
            Kind::Background { factor } => limit * factor,
            Kind::Convoy(0) => match &self.platoon {
                // a connected human member sets the pace
                Some(p) if p.link_state(0) == LinkState::Connected && self.human_driven(1) => {
                    limit * self.sc.driver.speed_factor
                }
                _ => limit,
            },
            Kind::Convoy(_) => match self.use_case {
                UseCase::Manual => limit,
                UseCase::DynamicFlexible => spec.v_max * self.sc.platoon.catchup_boost,
            },
        };
        Surroundings { lead, signal, cruise_target }
    }

    fn human_driven(&self, k: usize) -> bool {
        k == 1
            && self.dataset == Dataset::Exp
            && match self.use_case {
                UseCase::Manual => true,
                UseCase::DynamicFlexible => {
                    self.convoy_index(1).is_some_and(|i| self.stream[i].st.mode == DriveMode::Manual)
                }
            }
    }

    fn command(&mut self, i: usize, now: Tick) -> f64 {
        let s = self.surroundings(i);
        let e = &self.stream[i];
        match e.kind {
            Kind::Background { .. } => autonomous_control(
                &e.st,
                &s,
                self.sc.background_desired_gap,
                &self.sc.background_gains,
                &self.sc.background,
                self.dt,
            ),
            Kind::Convoy(k) => {
                if self.human_driven(k) {
                    let st = e.st.clone();
                    let h = self.human.as_mut().expect("exp runs carry a human model");
                    h.control(now, &st, &s, self.sc.platoon.desired_gap, &self.sc.van, &self.sc.clock)
                } else {
                    let a = autonomous_control(
                        &e.st,
                        &s,
                        self.sc.platoon.desired_gap,
                        &self.sc.driver.gains(),
                        &self.sc.van,
                        self.dt,
                    );
                    // heads a connected group
                    let paced = k < 2
                        && self.platoon.as_ref().is_some_and(|p| {
                            p.link_state(k) == LinkState::Connected
                                && (k == 0 || p.link_state(k - 1) != LinkState::Connected)
                        });
                    if paced {
                        a.min(self.sc.platoon.leader_accel_limit)
                    } else {
                        a
                    }
                }
            }
        }
    }

    fn step(&mut self, now: Tick) {
        let cmds: Vec<f64> = (0..self.stream.len()).map(|i| self.command(i, now)).collect();
        let sc = self.sc;
        for (e, &a) in self.stream.iter_mut().zip(&cmds) {
            let spec = match e.kind {
                Kind::Convoy(_) => &sc.van,
                Kind::Background { .. } => &sc.background,
            };
            let bound = spec.accel_bound() + 1e-9;
            if !a.is_finite() || a.abs() > bound {
                self.diag.bound_violations += 1;
            }
            let mut next = step_vehicle(&e.st, a, self.dt, spec, &sc.route);
            if let Kind::Convoy(k) = e.kind {
                let used = battery_drain(&e.st, a, self.dt, spec, &sc.battery);
                self.diag.energy_wh[k] += used;
                apply_drain(&mut next, used);
            }
            if !(0.0..=spec.v_max + 1e-9).contains(&next.speed) || next.accel.abs() > bound {
                self.diag.bound_violations += 1;
            }
            e.arc = next.arc(&sc.route);
            e.st = next;
        }
        self.diag.vehicle_ticks += self.stream.len() as u64;
        for w in self.stream.windows(2) {
            let gap = w[0].arc - w[0].length - w[1].arc;
            self.diag.min_gap = self.diag.min_gap.min(gap);
            if gap <= 0.0 {
                self.diag.collisions += 1;
            }
        }
        for e in &self.stream {
            if let Kind::Convoy(k) = e.kind {
                self.convoy_arc[k] = e.arc;
                self.convoy_state[k] = Some(e.st.clone());
            }
        }
        let (mut arrived, mut at) = (self.arrived, self.arrived_at);
        self.stream.retain(|e| {
            if e.st.is_active() {
                return true;
            }
            if let Kind::Convoy(k) = e.kind {
                arrived[k] = true;
                at[k] = Some(now);
            }
            false
        });
        self.arrived = arrived;
        self.arrived_at = at;
    }

    fn set_mode(&mut self, k: usize, mode: DriveMode) {
        if let Some(i) = self.convoy_index(k) {
            self.stream[i].st.mode = mode;
        }
    }

    fn on_events(&mut self, events: &[PlatoonEvent], now: Tick) -> Result<(), SimError> {
        for ev in events {
            let Some(k) = self.convoy_ids.iter().position(|&id| id == ev.vehicle) else { continue };
            match ev.kind {
                EventKind::Fragmented => {
                    let link = k - 1;
                    if k == 1 && self.dataset == Dataset::Exp && !self.human_driven(1) {
                        let i = self.convoy_index(1).expect("member active");
                        let st = self.stream[i].st.clone();
                        self.platoon.as_mut().expect("dynamic").record(link, EventKind::AlarmSent, now)?;
                        let human = self.human.as_mut().expect("exp human");
                        let params = *human.params();
                        self.alarm = handle_alarm(&st, now, &params, human.rng_mut(), &self.sc.clock)?;
                    } else {
                        self.platoon.as_mut().expect("dynamic").begin_catchup(link)?;
                        if !self.human_driven(k) {
                            self.set_mode(k, DriveMode::Catchup);
                        }
                    }
                }
                // a driver who took over keeps the wheel
                EventKind::Reconnected if !self.human_driven(k) => self.set_mode(k, DriveMode::Connected),
                _ => {}
            }
        }
        Ok(())
    }

    fn update_platoon(&mut self, now: Tick) -> Result<(), SimError> {
        if self.platoon.is_none() || !self.departed {
            return Ok(());
        }
        if let Some(alarm) = self.alarm {
            if alarm.due(now) {
                self.alarm = None;
                let p = self.platoon.as_mut().expect("dynamic");
                p.record(0, EventKind::Takeover, now)?;
                p.begin_catchup(0)?;
                self.set_mode(1, DriveMode::Manual);
                if let Some(h) = self.human.as_mut() {
                    h.reset();
                }
            }
        }
        if self.arrived.iter().any(|&a| a) {
            return Ok(());
        }
        // intruders between members
        let arcs = self.convoy_arc;
        let mut events = Vec::new();
        for e in &self.stream {
            if let Kind::Background { .. } = e.kind {
                if e.arc < arcs[0] && e.arc > arcs[2] {
                    let p = self.platoon.as_mut().expect("dynamic");
                    if let Some(ev) = p.proximity_intruder_event(&arcs, &e.st, e.arc, now)? {
                        events.push(ev);
                    }
                }
            }
        }
        let mut obs = [LinkObservation { gap: 0.0, rel_speed: 0.0, rear_held_at_light: false, obstructed: false }; 2];
        for (link, o) in obs.iter_mut().enumerate() {
            let front = self.convoy_state[link].as_ref().expect("departed");
            let rear = self.convoy_state[link + 1].as_ref().expect("departed");
            let gap = gap_between_arcs(arcs[link], self.sc.van.length, arcs[link + 1])?;
            let held = rear.speed < 0.1
                && self.sc.route.next_stop_line(rear.edge, rear.last_edge).is_some_and(|(_, light, line)| {
                    line - arcs[link + 1] < 30.0 && self.lights.get(light).effective_color().requires_stop()
                });
            let obstructed = self
                .stream
                .iter()
                .any(|e| matches!(e.kind, Kind::Background { .. }) && e.arc < arcs[link] && e.arc > arcs[link + 1]);
            *o = LinkObservation { gap, rel_speed: front.speed - rear.speed, rear_held_at_light: held, obstructed };
        }
        let p = self.platoon.as_mut().expect("dynamic");
        events.extend(p.update_links(&obs, &self.sc.platoon, &self.sc.clock, now));
        self.on_events(&events, now)
    }

    fn record(&mut self, now: Tick) {
        if !self.departed {
            return;
        }
        for k in 0..3 {
            let Some(st) = &self.convoy_state[k] else { continue };
            if self.arrived_at[k].is_some_and(|t| t < now) {
                continue;
            }
            let gap = (k > 0).then(|| self.convoy_arc[k - 1] - self.sc.van.length - self.convoy_arc[k]);
            self.telemetry.push(TelemetrySample {
                tick: now,
                vehicle: st.id,
                edge: st.edge,
                position: st.position,
                speed: st.speed,
                accel: st.accel,
                gap,
                mode: st.mode,
                soc: st.soc,
            });
        }
    }
}

/// Simulates one (use case, dataset) cell for one seed.
pub fn run_cell(sc: &Scenario, use_case: UseCase, dataset: Dataset, seed: u64) -> Result<RunOutput, SimError> {
    let clock = sc.clock;
    let dt = clock.dt();
    let mut jitter_rng = stream(seed, STREAM_JITTER);
    let jitter =
        if sc.run.departure_jitter > 0.0 { jitter_rng.random_range(0.0..sc.run.departure_jitter) } else { 0.0 };
    let depart_at = clock.ticks(sc.run.warmup) + clock.ticks(jitter);
    let convoy_ids = [VehicleId(0), VehicleId(1), VehicleId(2)];
    let mut sim = Sim {
        sc,
        use_case,
        dataset,
        dt,
        lights: sc.network.light_bank(),
        stream: Vec::with_capacity(64),
        next_id: 3,
        convoy_ids,
        convoy_arc: [0.0; 3],
        convoy_state: [None, None, None],
        departed: false,
        arrived: [false; 3],
        arrived_at: [None; 3],
        platoon: None,
        triggers: match use_case {
            UseCase::DynamicFlexible => sc.triggers.clone(),
            UseCase::Manual => Vec::new(),
        },
        intruder_done: vec![false; sc.intruders.len()],
        human: (dataset == Dataset::Exp).then(|| HumanDriver::new(sc.driver, stream(seed, STREAM_HUMAN))),
        alarm: None,
        telemetry: Vec::with_capacity(3 * 60_000),
        diag: RunDiagnostics { min_gap: f64::INFINITY, ..RunDiagnostics::default() },
    };
    sim.diag.triggers_fired = vec![None; sim.triggers.len()];

    let mut arrivals: Vec<(usize, ArrivalProcess, VecDeque<PendingCar>)> = sc
        .entries
        .iter()
        .enumerate()
        .map(|(n, e)| {
            (e.edge, ArrivalProcess::new(e.rate_per_hour, stream(seed, STREAM_DEMAND + n as u64)), VecDeque::new())
        })
        .collect();
    let budget = clock.ticks(sc.run.max_duration) + depart_at;

    let mut t: u64 = 0;
    loop {
        let now = Tick(t);
        sim.diag.ticks = t;
        for (edge, proc_, queue) in arrivals.iter_mut() {
            let n = proc_.poll(clock.seconds(t));
            for _ in 0..n {
                let [lo, hi] = sc.speed_factor;
                let factor = if hi > lo { proc_.rng_mut().random_range(lo..=hi) } else { lo };
                let [elo, ehi] = sc.edges_driven;
                let edges = proc_.rng_mut().random_range(elo..=ehi);
                queue.push_back(PendingCar { factor, edges });
            }
            if let Some(car) = queue.front().cloned() {
                if sim.try_entry(*edge, &car) {
                    queue.pop_front();
                } else {
                    sim.diag.deferred_insertions += 1;
                }
            }
        }
        if !sim.departed && t >= depart_at && sim.depart_convoy() {
            if use_case == UseCase::DynamicFlexible {
                sim.platoon = Some(PlatoonState::form(convoy_ids.to_vec(), now));
            }
            for k in 0..3 {
                let i = sim.convoy_index(k).expect("just inserted");
                sim.convoy_state[k] = Some(sim.stream[i].st.clone());
            }
        }
        if sim.departed {
            sim.try_intruders();
            if use_case == UseCase::DynamicFlexible {
                sim.poll_triggers();
                sim.signal_priority();
            }
        }
        sim.step(now);
        sim.update_platoon(now)?;
        sim.record(now);
        sim.lights.advance_lights(1);
        if sim.departed && sim.arrived.iter().all(|&a| a) {
            break;
        }
        if t >= budget {
            let positions = (0..3).map(|k| (convoy_ids[k], sim.convoy_arc[k])).collect();
            return Err(SimError::Budget { ticks: t, positions });
        }
        t += 1;
    }

    let mut diag = sim.diag;
    for st in sim.convoy_state.iter().flatten() {
        if st.depleted {
            diag.depleted.push(st.id);
        }
    }
    let telemetry = sim.telemetry;
    let tt =
        travel_time(&telemetry, convoy_ids[1], sc.route.origin_arc(), sc.route.destination_arc(), &sc.route, &clock)?;
    Ok(RunOutput {
        use_case,
        dataset,
        seed,
        convoy: convoy_ids,
        telemetry,
        events: sim.platoon.map(PlatoonState::into_events).unwrap_or_default(),
        travel_time: tt,
        departure: Tick(depart_at),
        diagnostics: diag,
    })
}
