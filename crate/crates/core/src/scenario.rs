//! Scenario configuration: a strict TOML file with documented sections.
//! Every key is optional; an empty file yields the desk-scale default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, DEFAULT_TICK_SECONDS};
use crate::driver::DriverParams;
use crate::dynamics::{BatteryModel, FollowingGains, VehicleSpec};
use crate::platoon::{FragmentationTrigger, PlatoonConfig, TriggerRuntime};
use crate::road_net::{
    network_from_file, EdgeId, LightDef, LightId, Network, NetworkFile, PhaseDef, RoadEdge, Route, RoutePath,
    SignalColor,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { key: key.into(), msg: msg.to_string() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Separate network file, relative to the scenario file.
    pub file: Option<PathBuf>,
    pub edges: Vec<RoadEdge>,
    pub lights: Vec<LightDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehiclesSection {
    pub van: VehicleSpec,
    pub background: VehicleSpec,
    pub battery: BatteryModel,
    /// car-following gains of background traffic
    pub background_gains: FollowingGains,
    /// m
    pub background_desired_gap: f64,
}

impl Default for VehiclesSection {
    fn default() -> Self {
        VehiclesSection {
            van: VehicleSpec::default(),
            background: background_spec(),
            battery: BatteryModel::default(),
            background_gains: FollowingGains::default(),
            background_desired_gap: 8.0,
        }
    }
}

/// A passenger car.
pub fn background_spec() -> VehicleSpec {
    VehicleSpec {
        mass: 1300.0,
        length: 4.5,
        max_accel: 2.6,
        max_decel: 4.5,
        v_min_cruise: 5.0,
        v_max: 16.7,
        ..VehicleSpec::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalPrioritySettings {
    /// Equipped convoy vans request green at approached lights.
    pub enabled: bool,
    /// m before the stop line at which requests start
    pub range: f64,
    /// s, longest single green hold
    pub max_hold: f64,
}

impl Default for SignalPrioritySettings {
    fn default() -> Self {
        SignalPrioritySettings { enabled: true, range: 150.0, max_hold: 20.0 }
    }
}

/// A background car cutting in behind the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntruderDef {
    /// Edge on which the cut-in happens once the leader is `offset` m into it.
    pub edge: EdgeId,
    #[serde(default = "default_intruder_offset")]
    pub offset: f64,
    /// m between the leader's rear bumper and the intruder's front
    #[serde(default = "default_intruder_gap")]
    pub gap_ahead: f64,
    /// m
    #[serde(default = "default_intruder_length")]
    pub length: f64,
    /// Edges driven, counting the cut-in edge, before turning off.
    #[serde(default = "default_intruder_edges")]
    pub edges: usize,
}

fn default_intruder_offset() -> f64 {
    60.0
}
fn default_intruder_gap() -> f64 {
    2.0
}
fn default_intruder_length() -> f64 {
    4.0
}
fn default_intruder_edges() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDemand {
    pub edge: EdgeId,
    /// vehicles per hour
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandSection {
    /// Entry edges with Poisson arrival rates; `None` selects the default
    /// entries of the desk-scale network (or none for a custom network).
    pub entries: Option<Vec<EntryDemand>>,
    /// Cruise factor range relative to the speed limit.
    pub speed_factor: [f64; 2],
    /// Edges driven before turning off, inclusive range.
    pub edges_driven: [usize; 2],
}

impl Default for DemandSection {
    fn default() -> Self {
        DemandSection { entries: None, speed_factor: [0.85, 1.0], edges_driven: [1, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// s
    pub tick: f64,
    pub replications: usize,
    pub seed: u64,
    /// s of background traffic before the convoy departs
    pub warmup: f64,
    /// s, upper bound of the uniform extra departure delay
    pub departure_jitter: f64,
    /// simulated seconds after which a run is aborted
    pub max_duration: f64,
    pub outlier_fraction: f64,
    pub lof_k: usize,
    pub alpha: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            tick: DEFAULT_TICK_SECONDS,
            replications: 20,
            seed: 1,
            warmup: 90.0,
            departure_jitter: 60.0,
            max_duration: 3600.0,
            outlier_fraction: 0.0005,
            lof_k: 20,
            alpha: 0.05,
        }
    }
}

/// Raw file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub network: NetworkSection,
    pub route: Option<Route>,
    pub vehicles: VehiclesSection,
    pub platoon: PlatoonConfig,
    pub signal_priority: SignalPrioritySettings,
    pub driver: DriverParams,
    pub triggers: Option<Vec<FragmentationTrigger>>,
    pub intruders: Option<Vec<IntruderDef>>,
    pub demand: DemandSection,
    pub run: RunSection,
}

/// Desk-scale road: 12 edges, about 5 km, 7 signalised stop lines.
pub fn desk_network_file() -> NetworkFile {
    const LENGTHS: [f64; 12] = [420.0, 380.0, 450.0, 400.0, 360.0, 470.0, 440.0, 390.0, 430.0, 410.0, 460.0, 390.0];
    const LIGHT_AFTER: [usize; 7] = [1, 3, 4, 6, 7, 9, 10];
    const OFFSETS: [f64; 7] = [0.0, 17.0, 41.0, 8.0, 29.0, 52.0, 36.0];
    let edges = LENGTHS
        .iter()
        .enumerate()
        .map(|(i, &length)| RoadEdge {
            id: format!("e{i}").into(),
            length,
            speed_limit: 13.89,
            successors: if i + 1 < LENGTHS.len() { vec![format!("e{}", i + 1).into()] } else { vec![] },
            light_at_end: LIGHT_AFTER.iter().position(|&e| e == i).map(|k| format!("t{}", k + 1).into()),
        })
        .collect();
    let phases = vec![
        PhaseDef { color: SignalColor::Green, duration: 27.0 },
        PhaseDef { color: SignalColor::Amber, duration: 3.0 },
        PhaseDef { color: SignalColor::Red, duration: 30.0 },
    ];
    let lights = OFFSETS
        .iter()
        .enumerate()
        .map(|(k, &offset)| LightDef { id: format!("t{}", k + 1).into(), offset, phases: phases.clone() })
        .collect();
    NetworkFile { edges, lights, routes: vec![] }
}

pub fn desk_route() -> Route {
    Route { edges: (0..12).map(|i| format!("e{i}").into()).collect(), origin_offset: 30.0, destination_offset: 350.0 }
}

pub fn desk_triggers() -> Vec<FragmentationTrigger> {
    vec![FragmentationTrigger { light: LightId::from("t3"), edge: EdgeId::from("e4"), time: 10.0 }]
}

pub fn desk_intruders() -> Vec<IntruderDef> {
    vec![IntruderDef {
        edge: "e7".into(),
        offset: default_intruder_offset(),
        gap_ahead: default_intruder_gap(),
        length: default_intruder_length(),
        edges: default_intruder_edges(),
    }]
}

pub fn desk_entries() -> Vec<EntryDemand> {
    ["e2", "e5", "e8", "e10"].iter().map(|e| EntryDemand { edge: (*e).into(), rate: 120.0 }).collect()
}

/// Intruder resolved against the route.
#[derive(Debug, Clone, PartialEq)]
pub struct IntruderPlan {
    pub edge: usize,
    pub offset: f64,
    pub gap_ahead: f64,
    pub length: f64,
    pub last_edge: usize,
}

/// Entry demand resolved against the route.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryPlan {
    pub edge: usize,
    pub rate_per_hour: f64,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub clock: Clock,
    pub network: Network,
    pub route: RoutePath,
    pub van: VehicleSpec,
    pub background: VehicleSpec,
    pub battery: BatteryModel,
    pub background_gains: FollowingGains,
    pub background_desired_gap: f64,
    pub platoon: PlatoonConfig,
    pub priority: SignalPrioritySettings,
    pub driver: DriverParams,
    pub triggers: Vec<TriggerRuntime>,
    pub intruders: Vec<IntruderPlan>,
    pub entries: Vec<EntryPlan>,
    pub speed_factor: [f64; 2],
    pub edges_driven: [usize; 2],
    pub run: RunSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::from_file(ScenarioFile::default(), None).expect("desk-scale scenario is valid")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|source| ScenarioError::Parse { path: path.into(), source })?;
    Scenario::from_file(file, path.parent())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|source| ScenarioError::Parse { path: "<inline>".into(), source })?;
        Scenario::from_file(file, None)
    }

    pub fn from_file(f: ScenarioFile, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let clock = Clock::new(f.run.tick).map_err(|e| invalid("run.tick", e))?;
        let run = f.run;
        if run.replications < 1 {
            return Err(invalid("run.replications", "must be >= 1"));
        }
        for (k, v) in [("run.warmup", run.warmup), ("run.departure_jitter", run.departure_jitter)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(k, format!("must be >= 0, got {v}")));
            }
        }
        if !(run.max_duration.is_finite() && run.max_duration > 0.0) {
            return Err(invalid("run.max_duration", "must be > 0"));
        }
        if !(0.0..1.0).contains(&run.outlier_fraction) {
            return Err(invalid("run.outlier_fraction", "must be in [0, 1)"));
        }
        if run.lof_k == 0 {
            return Err(invalid("run.lof_k", "must be >= 1"));
        }
        if !(run.alpha > 0.0 && run.alpha < 1.0) {
            return Err(invalid("run.alpha", "must be in (0, 1)"));
        }

        let custom_net = f.network.file.is_some() || !f.network.edges.is_empty() || !f.network.lights.is_empty();
        let net_file = if let Some(rel) = &f.network.file {
            if !f.network.edges.is_empty() || !f.network.lights.is_empty() {
                return Err(invalid("network", "give either network.file or inline edges/lights, not both"));
            }
            let path = base.map(|b| b.join(rel)).unwrap_or_else(|| rel.clone());
            let text =
                std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
            toml::from_str::<NetworkFile>(&text).map_err(|source| ScenarioError::Parse { path, source })?
        } else if custom_net {
            NetworkFile { edges: f.network.edges.clone(), lights: f.network.lights.clone(), routes: vec![] }
        } else {
            desk_network_file()
        };
        let network = network_from_file(&net_file, &clock).map_err(|e| invalid("network", e))?;
        let route_def = match (&f.route, custom_net) {
            (Some(r), _) => r.clone(),
            (None, false) => desk_route(),
            (None, true) => net_file
                .routes
                .first()
                .map(|r| r.route())
                .ok_or_else(|| invalid("route", "missing; the network defines no routes"))?,
        };
        let route = network.resolve_route(&route_def).map_err(|e| invalid("route", e))?;

        f.vehicles.van.validate().map_err(|m| invalid("vehicles.van", m))?;
        f.vehicles.background.validate().map_err(|m| invalid("vehicles.background", m))?;
        if !(f.vehicles.background_desired_gap > 0.0) {
            return Err(invalid("vehicles.background_desired_gap", "must be > 0"));
        }
        f.platoon.validate().map_err(|m| invalid("platoon", m))?;
        f.driver.validate().map_err(|m| invalid("driver", m))?;
        let p = f.signal_priority;
        if p.enabled && !(p.range > 0.0 && p.max_hold > 0.0) {
            return Err(invalid("signal_priority", "range and max_hold must be > 0"));
        }

        let bank = network.light_bank();
        let trigger_defs = f.triggers.clone().unwrap_or_else(|| if custom_net { vec![] } else { desk_triggers() });
        let mut triggers = Vec::with_capacity(trigger_defs.len());
        for (i, t) in trigger_defs.iter().enumerate() {
            let rt =
                TriggerRuntime::resolve(t, &route, &bank, &clock).map_err(|e| invalid(format!("triggers[{i}]"), e))?;
            if triggers.iter().any(|o: &TriggerRuntime| o.light_idx == rt.light_idx && o.edge == rt.edge) {
                return Err(invalid(format!("triggers[{i}]"), "duplicate (light, edge) pair"));
            }
            triggers.push(rt);
        }
        triggers.sort_by_key(|t| t.edge);

        let intruder_defs = f.intruders.clone().unwrap_or_else(|| if custom_net { vec![] } else { desk_intruders() });
        let mut intruders = Vec::with_capacity(intruder_defs.len());
        for (i, d) in intruder_defs.iter().enumerate() {
            let key = format!("intruders[{i}]");
            let edge = route
                .position_of(&d.edge)
                .ok_or_else(|| invalid(&key, format!("edge {} is not on the route", d.edge)))?;
            if !(0.0..=route.edge_length(edge)).contains(&d.offset) {
                return Err(invalid(format!("{key}.offset"), "outside the edge"));
            }
            if !(d.gap_ahead > 0.0 && d.length > 0.0) || d.edges == 0 {
                return Err(invalid(&key, "gap_ahead and length must be > 0, edges >= 1"));
            }
            intruders.push(IntruderPlan {
                edge,
                offset: d.offset,
                gap_ahead: d.gap_ahead,
                length: d.length,
                last_edge: (edge + d.edges - 1).min(route.edge_count() - 1),
            });
        }

        let d = &f.demand;
        let entry_defs = d.entries.clone().unwrap_or_else(|| if custom_net { vec![] } else { desk_entries() });
        let mut entries = Vec::with_capacity(entry_defs.len());
        for (i, e) in entry_defs.iter().enumerate() {
            let key = format!("demand.entries[{i}]");
            let edge = route
                .position_of(&e.edge)
                .ok_or_else(|| invalid(&key, format!("edge {} is not on the route", e.edge)))?;
            if edge == 0 {
                return Err(invalid(&key, "the convoy's origin edge takes no background demand"));
            }
            if !(e.rate.is_finite() && e.rate >= 0.0) {
                return Err(invalid(format!("{key}.rate"), "must be >= 0"));
            }
            entries.push(EntryPlan { edge, rate_per_hour: e.rate });
        }
        let [lo, hi] = d.speed_factor;
        if !(lo > 0.0 && lo <= hi && hi <= 1.5) {
            return Err(invalid("demand.speed_factor", "need 0 < lo <= hi <= 1.5"));
        }
        if d.edges_driven[0] == 0 || d.edges_driven[0] > d.edges_driven[1] {
            return Err(invalid("demand.edges_driven", "need 1 <= lo <= hi"));
        }
        let convoy_len = 3.0 * f.vehicles.van.length + 2.0 * f.platoon.desired_gap;
        if route.origin_arc() < convoy_len - f.vehicles.van.length {
            return Err(invalid(
                "route.origin_offset",
                format!("must leave {:.2} m behind the origin for the followers", convoy_len - f.vehicles.van.length),
            ));
        }

        Ok(Scenario {
            clock,
            network,
            route,
            van: f.vehicles.van,
            background: f.vehicles.background,
            battery: f.vehicles.battery,
            background_gains: f.vehicles.background_gains,
            background_desired_gap: f.vehicles.background_desired_gap,
            platoon: f.platoon,
            priority: p,
            driver: f.driver,
            triggers,
            intruders,
            entries,
            speed_factor: d.speed_factor,
            edges_driven: d.edges_driven,
            run,
        })
    }
}
