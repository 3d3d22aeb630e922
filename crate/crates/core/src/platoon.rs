//! Dynamic-flexible platoon coordination.
//!
//! The convoy is an ordered member list, leader first. Each consecutive
//! pair forms a link that is CONNECTED, SPLIT or CATCHING_UP. A link splits
//! once its gap stays above `max_platoon_gap` for `split_time`; it
//! reconnects when the catching-up rear closes within `reconnect_gap` at a
//! matched speed. A traffic-light trigger forces RED at a chosen light so
//! that the leader escapes and the first follower is held.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::dynamics::{can_stop_before, Role, VehicleId, VehicleSpec, VehicleState};
use crate::road_net::{EdgeId, LightBank, LightId, RoutePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatoonConfig {
    /// m, bumper to bumper
    pub desired_gap: f64,
    pub max_gap: f64,
    /// Disconnect threshold, m.
    pub max_platoon_gap: f64,
    /// s the gap must stay above the threshold before the link splits.
    pub split_time: f64,
    pub reconnect_gap: f64,
    /// m/s
    pub reconnect_rel_speed: f64,
    /// Fraction of v_max a catching-up vehicle may target.
    pub catchup_boost: f64,
    /// m/s², acceleration cap of a leader with connected followers
    pub leader_accel_limit: f64,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        PlatoonConfig {
            desired_gap: 7.0,
            max_gap: 10.0,
            max_platoon_gap: 15.0,
            split_time: 2.0,
            reconnect_gap: 10.0,
            reconnect_rel_speed: 0.5,
            catchup_boost: 1.0,
            leader_accel_limit: 1.5,
        }
    }
}

impl PlatoonConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("desired_gap", self.desired_gap),
            ("max_gap", self.max_gap),
            ("max_platoon_gap", self.max_platoon_gap),
            ("split_time", self.split_time),
            ("reconnect_gap", self.reconnect_gap),
            ("reconnect_rel_speed", self.reconnect_rel_speed),
            ("catchup_boost", self.catchup_boost),
            ("leader_accel_limit", self.leader_accel_limit),
        ];
        for (k, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{k} must be > 0, got {v}"));
            }
        }
        if !(self.desired_gap < self.max_gap && self.max_gap < self.max_platoon_gap) {
            return Err(format!(
                "need desired_gap < max_gap < max_platoon_gap, got {} / {} / {}",
                self.desired_gap, self.max_gap, self.max_platoon_gap
            ));
        }
        if self.reconnect_gap > self.max_gap {
            return Err(format!("reconnect_gap ({}) must not exceed max_gap ({})", self.reconnect_gap, self.max_gap));
        }
        if self.catchup_boost > 1.0 {
            return Err(format!("catchup_boost must be <= 1, got {}", self.catchup_boost));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkState {
    Connected,
    Split,
    CatchingUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Formed,
    Fragmented,
    AlarmSent,
    Takeover,
    Reconnected,
    Reformed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Formed => "FORMED",
            EventKind::Fragmented => "FRAGMENTED",
            EventKind::AlarmSent => "ALARM_SENT",
            EventKind::Takeover => "TAKEOVER",
            EventKind::Reconnected => "RECONNECTED",
            EventKind::Reformed => "REFORMED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Cause {
    TrafficLight,
    ProximityIntruder,
    Manual,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::TrafficLight => "TRAFFIC_LIGHT",
            Cause::ProximityIntruder => "PROXIMITY_INTRUDER",
            Cause::Manual => "MANUAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonEvent {
    pub tick: Tick,
    pub kind: EventKind,
    pub vehicle: VehicleId,
    /// Cause of the fragmentation episode the event belongs to; `None` for FORMED.
    pub cause: Option<Cause>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlatoonError {
    #[error("rear vehicle at arc {rear} m is ahead of front vehicle at {front} m")]
    Ordering { front: f64, rear: f64 },
    #[error("vehicles overlap by {0} m")]
    Overlap(f64),
    #[error("link {0} does not exist")]
    NoSuchLink(usize),
    #[error("link {link} is {state:?}; catch-up needs a SPLIT link")]
    NotSplit { link: usize, state: LinkState },
    #[error("event at tick {event} precedes logged tick {last}")]
    NonMonotone { event: Tick, last: Tick },
    #[error("intruder {0} is not a background vehicle")]
    NotBackground(VehicleId),
}

/// Bumper-to-bumper gap from the rear vehicle's front to the front vehicle's
/// rear, along the route.
pub fn platoon_gap(
    front: &VehicleState,
    front_length: f64,
    rear: &VehicleState,
    route: &RoutePath,
) -> Result<f64, PlatoonError> {
    gap_between_arcs(front.arc(route), front_length, rear.arc(route))
}

pub fn gap_between_arcs(front_arc: f64, front_length: f64, rear_arc: f64) -> Result<f64, PlatoonError> {
    if rear_arc > front_arc {
        return Err(PlatoonError::Ordering { front: front_arc, rear: rear_arc });
    }
    let gap = front_arc - front_length - rear_arc;
    if gap < -1e-9 {
        return Err(PlatoonError::Overlap(-gap));
    }
    Ok(gap.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
struct Link {
    state: LinkState,
    violation_since: Option<Tick>,
    pending_cause: Option<Cause>,
    episode_cause: Option<Cause>,
}

/// What the coordinator observes about one link in a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkObservation {
    pub gap: f64,
    /// front speed minus rear speed, m/s
    pub rel_speed: f64,
    /// The rear member is waiting at a stop line its front already passed.
    pub rear_held_at_light: bool,
    /// Another vehicle sits between the two members.
    pub obstructed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonState {
    members: Vec<VehicleId>,
    links: Vec<Link>,
    log: Vec<PlatoonEvent>,
    fragmented: bool,
}

impl PlatoonState {
    /// Forms the platoon at `now`, emitting FORMED for every follower.
    pub fn form(members: Vec<VehicleId>, now: Tick) -> Self {
        let links = (1..members.len())
            .map(|_| Link {
                state: LinkState::Connected,
                violation_since: None,
                pending_cause: None,
                episode_cause: None,
            })
            .collect();
        let log = members[1..]
            .iter()
            .map(|&vehicle| PlatoonEvent { tick: now, kind: EventKind::Formed, vehicle, cause: None })
            .collect();
        PlatoonState { members, links, log, fragmented: false }
    }

    pub fn members(&self) -> &[VehicleId] {
        &self.members
    }

    pub fn leader(&self) -> VehicleId {
        self.members[0]
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_state(&self, link: usize) -> LinkState {
        self.links[link].state
    }

    pub fn all_connected(&self) -> bool {
        self.links.iter().all(|l| l.state == LinkState::Connected)
    }

    pub fn events(&self) -> &[PlatoonEvent] {
        &self.log
    }

    pub fn into_events(self) -> Vec<PlatoonEvent> {
        self.log
    }

    /// Whether `link` is CONNECTED and every link ahead of it is too.
    pub fn connected_to_leader(&self, link: usize) -> bool {
        self.links[..=link].iter().all(|l| l.state == LinkState::Connected)
    }

    /// Attributes the next fragmentation of `link` to `cause`.
    pub fn set_pending_cause(&mut self, link: usize, cause: Cause) {
        self.links[link].pending_cause = Some(cause);
    }

    fn push(&mut self, ev: PlatoonEvent) -> Result<(), PlatoonError> {
        if let Some(last) = self.log.last() {
            if ev.tick < last.tick {
                return Err(PlatoonError::NonMonotone { event: ev.tick, last: last.tick });
            }
        }
        self.log.push(ev);
        Ok(())
    }

    /// Logs an alarm or takeover for the rear member of `link`.
    pub fn record(&mut self, link: usize, kind: EventKind, now: Tick) -> Result<PlatoonEvent, PlatoonError> {
        let l = self.links.get(link).ok_or(PlatoonError::NoSuchLink(link))?;
        let ev = PlatoonEvent { tick: now, kind, vehicle: self.members[link + 1], cause: l.episode_cause };
        self.push(ev)?;
        Ok(ev)
    }

    /// Moves a SPLIT link to CATCHING_UP.
    pub fn begin_catchup(&mut self, link: usize) -> Result<(), PlatoonError> {
        let l = self.links.get_mut(link).ok_or(PlatoonError::NoSuchLink(link))?;
        match l.state {
            LinkState::Split => {
                l.state = LinkState::CatchingUp;
                Ok(())
            }
            LinkState::CatchingUp => Ok(()),
            state => Err(PlatoonError::NotSplit { link, state }),
        }
    }

    fn split(&mut self, link: usize, cause: Cause, now: Tick) -> PlatoonEvent {
        let l = &mut self.links[link];
        l.state = LinkState::Split;
        l.violation_since = None;
        l.pending_cause = None;
        l.episode_cause = Some(cause);
        self.fragmented = true;
        let ev = PlatoonEvent {
            tick: now,
            kind: EventKind::Fragmented,
            vehicle: self.members[link + 1],
            cause: Some(cause),
        };
        self.push(ev).expect("tick-monotone caller");
        ev
    }

    /// Applies the gap rules to every link for one tick.
    pub fn update_links(
        &mut self,
        obs: &[LinkObservation],
        config: &PlatoonConfig,
        clock: &Clock,
        now: Tick,
    ) -> Vec<PlatoonEvent> {
        assert_eq!(obs.len(), self.links.len(), "one observation per link");
        let split_ticks = clock.ticks(config.split_time);
        let mut out = Vec::new();
        let mut reconnected = false;
        for (i, o) in obs.iter().enumerate() {
            match self.links[i].state {
                LinkState::Connected => {
                    if o.gap > config.max_platoon_gap {
                        let since = *self.links[i].violation_since.get_or_insert(now);
                        if now.since(since) >= split_ticks {
                            let cause = self.links[i].pending_cause.unwrap_or(if o.rear_held_at_light {
                                Cause::TrafficLight
                            } else {
                                Cause::Manual
                            });
                            out.push(self.split(i, cause, now));
                        }
                    } else {
                        self.links[i].violation_since = None;
                    }
                }
                LinkState::CatchingUp => {
                    if !o.obstructed && o.gap <= config.reconnect_gap && o.rel_speed.abs() <= config.reconnect_rel_speed
                    {
                        let l = &mut self.links[i];
                        l.state = LinkState::Connected;
                        l.violation_since = None;
                        let ev = PlatoonEvent {
                            tick: now,
                            kind: EventKind::Reconnected,
                            vehicle: self.members[i + 1],
                            cause: l.episode_cause,
                        };
                        self.push(ev).expect("tick-monotone caller");
                        out.push(ev);
                        reconnected = true;
                    }
                }
                LinkState::Split => {}
            }
        }
        if reconnected && self.fragmented && self.all_connected() {
            self.fragmented = false;
            let cause = out.iter().rev().find(|e| e.kind == EventKind::Reconnected).and_then(|e| e.cause);
            let ev = PlatoonEvent { tick: now, kind: EventKind::Reformed, vehicle: self.leader(), cause };
            self.push(ev).expect("tick-monotone caller");
            out.push(ev);
        }
        out
    }

    /// Splits the link whose members bracket the intruder. `member_arcs` are
    /// front-bumper arcs in member order.
    pub fn proximity_intruder_event(
        &mut self,
        member_arcs: &[f64],
        intruder: &VehicleState,
        intruder_arc: f64,
        now: Tick,
    ) -> Result<Option<PlatoonEvent>, PlatoonError> {
        if intruder.role != Role::Background {
            return Err(PlatoonError::NotBackground(intruder.id));
        }
        for i in 0..self.links.len() {
            let (front, rear) = (member_arcs[i], member_arcs[i + 1]);
            if rear < intruder_arc && intruder_arc < front {
                if self.links[i].state == LinkState::Connected {
                    return Ok(Some(self.split(i, Cause::ProximityIntruder, now)));
                }
                return Ok(None);
            }
        }
        Ok(None)
    }
}

/// Fragmentation trigger: when the leader is on `edge`, light `light` turns
/// RED for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentationTrigger {
    pub light: LightId,
    pub edge: EdgeId,
    /// seconds
    #[serde(default = "default_trigger_time")]
    pub time: f64,
}

fn default_trigger_time() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerPhase {
    Armed,
    Fired(Tick),
    Alarmed(Tick),
    /// The leader left the trigger edge without a firing opportunity.
    Lapsed,
}

/// Trigger resolved against a route.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRuntime {
    pub light: LightId,
    pub light_idx: usize,
    /// Route index of the trigger edge.
    pub edge: usize,
    /// Route index of the edge whose end carries the light.
    pub line_edge: usize,
    pub line_arc: f64,
    pub duration_ticks: u64,
    pub phase: TriggerPhase,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TriggerError {
    #[error("trigger edge {0} is not on the route")]
    EdgeNotOnRoute(EdgeId),
    #[error("trigger light {0} is unknown")]
    UnknownLight(LightId),
    #[error("trigger light {light} is not on the route at or after edge {edge}")]
    LightNotAhead { light: LightId, edge: EdgeId },
    #[error("trigger time must be > 0 s, got {0}")]
    BadTime(f64),
}

impl TriggerRuntime {
    pub fn resolve(
        trig: &FragmentationTrigger,
        route: &RoutePath,
        lights: &LightBank,
        clock: &Clock,
    ) -> Result<Self, TriggerError> {
        if !(trig.time.is_finite() && trig.time > 0.0) {
            return Err(TriggerError::BadTime(trig.time));
        }
        let edge = route.position_of(&trig.edge).ok_or_else(|| TriggerError::EdgeNotOnRoute(trig.edge.clone()))?;
        let light_idx = lights.index_of(&trig.light).ok_or_else(|| TriggerError::UnknownLight(trig.light.clone()))?;
        let line_edge = (edge..route.edge_count())
            .find(|&i| route.light_at_end(i) == Some(light_idx))
            .ok_or_else(|| TriggerError::LightNotAhead { light: trig.light.clone(), edge: trig.edge.clone() })?;
        Ok(TriggerRuntime {
            light: trig.light.clone(),
            light_idx,
            edge,
            line_edge,
            line_arc: route.edge_start(line_edge) + route.edge_length(line_edge),
            duration_ticks: clock.ticks_at_least_one(trig.time),
            phase: TriggerPhase::Armed,
        })
    }

    /// Fires the override once the leader, on the trigger edge, will clear the
    /// stop line whatever it does while the follower can still stop. Returns
    /// `true` on the tick it fires.
    #[allow(clippy::too_many_arguments)]
    pub fn poll(
        &mut self,
        leader: &VehicleState,
        leader_spec: &VehicleSpec,
        follower: &VehicleState,
        follower_spec: &VehicleSpec,
        route: &RoutePath,
        lights: &mut LightBank,
        dt: f64,
    ) -> bool {
        if self.phase != TriggerPhase::Armed {
            return false;
        }
        if leader.edge < self.edge {
            return false;
        }
        let leader_dist = self.line_arc - leader.arc(route);
        if leader.edge > self.line_edge || leader_dist < 0.0 || !leader.is_active() {
            self.phase = TriggerPhase::Lapsed;
            return false;
        }
        let follower_dist = self.line_arc - follower.arc(route);
        let leader_commits =
            !can_stop_before(leader.speed, leader_dist, leader_spec, dt) || leader_dist < leader.speed * dt;
        let follower_holds =
            follower_dist > follower.speed * dt && can_stop_before(follower.speed, follower_dist, follower_spec, dt);
        if leader_commits && follower_holds {
            lights.get_mut(self.light_idx).force_red(self.duration_ticks);
            return true;
        }
        false
    }
}

/// Writes `tick,event,vehicle,cause`.
pub fn write_events_csv<W: Write>(events: &[PlatoonEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "event", "vehicle", "cause"])?;
    for e in events {
        w.write_record([
            e.tick.0.to_string(),
            e.kind.as_str().to_string(),
            e.vehicle.to_string(),
            e.cause.map(|c| c.as_str()).unwrap_or("").to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Checks an event log against the link grammar
/// `FORMED (FRAGMENTED ALARM_SENT? TAKEOVER? RECONNECTED)* (FRAGMENTED ALARM_SENT? TAKEOVER?)?`,
/// tick monotonicity, that alarms go only to the semi-autonomous member and
/// that each REFORMED follows a fragmentation and completes every link.
pub fn check_event_log(events: &[PlatoonEvent], members: &[(VehicleId, Role)]) -> Result<(), String> {
    #[derive(Clone, Copy, PartialEq)]
    enum S {
        Start,
        Connected,
        Fragmented,
        Alarmed,
        TookOver,
    }
    let leader = members.first().ok_or("empty member list")?.0;
    let mut states = vec![S::Start; members.len()];
    let mut any_fragment = false;
    let mut last_tick = Tick::ZERO;
    for e in events {
        if e.tick < last_tick {
            return Err(format!("tick {} after {}", e.tick, last_tick));
        }
        last_tick = e.tick;
        if e.kind == EventKind::Reformed {
            if e.vehicle != leader {
                return Err(format!("REFORMED subject {} is not the leader", e.vehicle));
            }
            if !any_fragment {
                return Err(format!("REFORMED at tick {} without a prior FRAGMENTED", e.tick));
            }
            if states[1..].iter().any(|s| *s != S::Connected) {
                return Err(format!("REFORMED at tick {} while a link is open", e.tick));
            }
            any_fragment = false;
            continue;
        }
        let idx = members
            .iter()
            .position(|(id, _)| *id == e.vehicle)
            .filter(|&i| i > 0)
            .ok_or_else(|| format!("event {:?} for non-follower {}", e.kind, e.vehicle))?;
        let role = members[idx].1;
        let s = states[idx];
        let next = match (s, e.kind) {
            (S::Start, EventKind::Formed) => S::Connected,
            (S::Connected, EventKind::Fragmented) => {
                any_fragment = true;
                S::Fragmented
            }
            (S::Fragmented, EventKind::AlarmSent) if role == Role::FollowerSemi => S::Alarmed,
            (S::Fragmented | S::Alarmed, EventKind::Takeover) if role == Role::FollowerSemi => S::TookOver,
            (S::Fragmented | S::Alarmed | S::TookOver, EventKind::Reconnected) => S::Connected,
            _ => return Err(format!("illegal {:?} for {} at tick {}", e.kind, e.vehicle, e.tick)),
        };
        states[idx] = next;
    }
    if states[1..].contains(&S::Start) {
        return Err("link never FORMED".into());
    }
    Ok(())
}
