//! Single-stream road network: directed edges, routes along them and the
//! traffic lights at edge ends.

mod gps;
mod lights;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;

pub use gps::{haversine_m, import_gps_trace, read_gps_csv, GpsError, GpsTracePoint, ImportedRoute};
pub use lights::{LightBank, Override, Phase, SignalColor, TrafficLight, DEFAULT_CYCLE};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(EdgeId);
string_id!(LightId);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("edge {edge} lists unknown successor {successor}")]
    DanglingSuccessor { edge: EdgeId, successor: EdgeId },
    #[error("edge {edge} references unknown traffic light {light}")]
    DanglingLight { edge: EdgeId, light: LightId },
    #[error("duplicate edge id {0}")]
    DuplicateEdge(EdgeId),
    #[error("duplicate traffic light id {0}")]
    DuplicateLight(LightId),
    #[error("edge {id}: {reason}")]
    InvalidEdge { id: EdgeId, reason: String },
    #[error("traffic light {id}: {reason}")]
    InvalidLight { id: LightId, reason: String },
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown traffic light {0}")]
    UnknownLight(LightId),
    #[error("route is empty")]
    EmptyRoute,
    #[error("route edge {from} is not connected to {to}")]
    Disconnected { from: EdgeId, to: EdgeId },
    #[error("route {which} offset {offset} m outside edge {edge} (length {length} m)")]
    OffsetOutOfRange { which: &'static str, edge: EdgeId, offset: f64, length: f64 },
    #[error("route destination lies before its origin")]
    ReversedRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadEdge {
    pub id: EdgeId,
    /// meters
    pub length: f64,
    /// m/s
    pub speed_limit: f64,
    #[serde(default)]
    pub successors: Vec<EdgeId>,
    #[serde(default)]
    pub light_at_end: Option<LightId>,
}

/// Immutable road network with O(1) edge and light lookup.
#[derive(Debug, Clone)]
pub struct Network {
    edges: Vec<RoadEdge>,
    edge_index: HashMap<EdgeId, usize>,
    successors: Vec<Vec<usize>>,
    edge_light: Vec<Option<usize>>,
    lights: Vec<TrafficLight>,
    light_index: HashMap<LightId, usize>,
}

/// Validates edge and light references and resolves adjacency.
pub fn build_network(edges: Vec<RoadEdge>, lights: Vec<TrafficLight>) -> Result<Network, NetworkError> {
    let mut light_index = HashMap::with_capacity(lights.len());
    for (i, l) in lights.iter().enumerate() {
        if light_index.insert(l.id().clone(), i).is_some() {
            return Err(NetworkError::DuplicateLight(l.id().clone()));
        }
    }
    let mut edge_index = HashMap::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        if !(e.length.is_finite() && e.length > 0.0) {
            return Err(NetworkError::InvalidEdge {
                id: e.id.clone(),
                reason: format!("length must be > 0 m, got {}", e.length),
            });
        }
        if !(e.speed_limit.is_finite() && e.speed_limit > 0.0) {
            return Err(NetworkError::InvalidEdge {
                id: e.id.clone(),
                reason: format!("speed limit must be > 0 m/s, got {}", e.speed_limit),
            });
        }
        if edge_index.insert(e.id.clone(), i).is_some() {
            return Err(NetworkError::DuplicateEdge(e.id.clone()));
        }
    }
    let mut successors = Vec::with_capacity(edges.len());
    let mut edge_light = Vec::with_capacity(edges.len());
    for e in &edges {
        let mut succ = Vec::with_capacity(e.successors.len());
        for s in &e.successors {
            let idx = *edge_index
                .get(s)
                .ok_or_else(|| NetworkError::DanglingSuccessor { edge: e.id.clone(), successor: s.clone() })?;
            succ.push(idx);
        }
        successors.push(succ);
        edge_light.push(match &e.light_at_end {
            Some(l) => Some(
                *light_index
                    .get(l)
                    .ok_or_else(|| NetworkError::DanglingLight { edge: e.id.clone(), light: l.clone() })?,
            ),
            None => None,
        });
    }
    Ok(Network { edges, edge_index, successors, edge_light, lights, light_index })
}

impl Network {
    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&RoadEdge> {
        self.edge_index.get(id).map(|&i| &self.edges[i])
    }

    pub fn edge_idx(&self, id: &EdgeId) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn light_idx(&self, id: &LightId) -> Option<usize> {
        self.light_index.get(id).copied()
    }

    pub fn lights(&self) -> &[TrafficLight] {
        &self.lights
    }

    /// Fresh runtime copy of all lights in their initial state.
    pub fn light_bank(&self) -> LightBank {
        LightBank::new(self.lights.clone())
    }

    pub fn is_successor(&self, from: usize, to: usize) -> bool {
        self.successors[from].contains(&to)
    }

    /// Resolves a route against this network, checking connectivity and offsets.
    pub fn resolve_route(&self, route: &Route) -> Result<RoutePath, NetworkError> {
        if route.edges.is_empty() {
            return Err(NetworkError::EmptyRoute);
        }
        let mut idx = Vec::with_capacity(route.edges.len());
        for e in &route.edges {
            idx.push(self.edge_idx(e).ok_or_else(|| NetworkError::UnknownEdge(e.clone()))?);
        }
        for w in idx.windows(2) {
            if !self.is_successor(w[0], w[1]) {
                return Err(NetworkError::Disconnected {
                    from: self.edges[w[0]].id.clone(),
                    to: self.edges[w[1]].id.clone(),
                });
            }
        }
        let first = &self.edges[idx[0]];
        let last = &self.edges[*idx.last().unwrap()];
        check_offset("origin", first, route.origin_offset)?;
        check_offset("destination", last, route.destination_offset)?;
        if idx.len() == 1 && route.destination_offset < route.origin_offset {
            return Err(NetworkError::ReversedRoute);
        }
        let mut start = Vec::with_capacity(idx.len());
        let mut acc = 0.0;
        for &i in &idx {
            start.push(acc);
            acc += self.edges[i].length;
        }
        let origin_arc = route.origin_offset;
        let destination_arc = start[idx.len() - 1] + route.destination_offset;
        Ok(RoutePath {
            edge_ids: route.edges.clone(),
            length: idx.iter().map(|&i| self.edges[i].length).collect(),
            speed_limit: idx.iter().map(|&i| self.edges[i].speed_limit).collect(),
            light: idx.iter().map(|&i| self.edge_light[i]).collect(),
            start,
            total: acc,
            origin_arc,
            destination_arc,
        })
    }
}

fn check_offset(which: &'static str, edge: &RoadEdge, offset: f64) -> Result<(), NetworkError> {
    if offset.is_finite() && (0.0..=edge.length).contains(&offset) {
        Ok(())
    } else {
        Err(NetworkError::OffsetOutOfRange { which, edge: edge.id.clone(), offset, length: edge.length })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    #[serde(default)]
    pub origin_offset: f64,
    pub destination_offset: f64,
}

/// A route resolved against a network, addressed by arc length.
///
/// Arc length runs from 0 at the start of the first edge to `total` at the
/// end of the last one. Edge `i` covers `[start[i], start[i] + length[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    edge_ids: Vec<EdgeId>,
    start: Vec<f64>,
    length: Vec<f64>,
    speed_limit: Vec<f64>,
    light: Vec<Option<usize>>,
    total: f64,
    origin_arc: f64,
    destination_arc: f64,
}

impl RoutePath {
    pub fn edge_count(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn edge_id(&self, i: usize) -> &EdgeId {
        &self.edge_ids[i]
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    pub fn position_of(&self, id: &EdgeId) -> Option<usize> {
        self.edge_ids.iter().position(|e| e == id)
    }

    pub fn edge_start(&self, i: usize) -> f64 {
        self.start[i]
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        self.length[i]
    }

    pub fn speed_limit(&self, i: usize) -> f64 {
        self.speed_limit[i]
    }

    /// Network light index at the end of route edge `i`.
    pub fn light_at_end(&self, i: usize) -> Option<usize> {
        self.light[i]
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    pub fn origin_arc(&self) -> f64 {
        self.origin_arc
    }

    pub fn destination_arc(&self) -> f64 {
        self.destination_arc
    }

    #[inline]
    pub fn arc(&self, edge: usize, pos: f64) -> f64 {
        self.start[edge] + pos
    }

    /// Edge index and in-edge position of an arc length, clamped to the route.
    pub fn locate(&self, arc: f64) -> (usize, f64) {
        if arc <= 0.0 {
            return (0, 0.0);
        }
        let i = match self.start.binary_search_by(|s| s.partial_cmp(&arc).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let last = self.edge_count() - 1;
        if i >= last && arc >= self.total {
            return (last, self.length[last]);
        }
        (i, arc - self.start[i])
    }

    /// First stop line at or after the end of edge `from`, within `[from, last]`:
    /// `(route edge index, light index, arc of the stop line)`.
    pub fn next_stop_line(&self, from: usize, last: usize) -> Option<(usize, usize, f64)> {
        (from..=last.min(self.edge_count() - 1))
            .find_map(|i| self.light[i].map(|l| (i, l, self.start[i] + self.length[i])))
    }
}

/// Builds a network from a route-file description, converting light
/// durations with `clock`.
pub fn network_from_file(file: &NetworkFile, clock: &Clock) -> Result<Network, NetworkError> {
    let lights = file
        .lights
        .iter()
        .map(|l| {
            let phases: Vec<(SignalColor, f64)> = if l.phases.is_empty() {
                DEFAULT_CYCLE.to_vec()
            } else {
                l.phases.iter().map(|p| (p.color, p.duration)).collect()
            };
            TrafficLight::new(l.id.clone(), &phases, l.offset, clock)
        })
        .collect::<Result<Vec<_>, _>>()?;
    build_network(file.edges.clone(), lights)
}

/// On-disk network definition: `edges[]`, `lights[]`, `routes[]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub edges: Vec<RoadEdge>,
    #[serde(default)]
    pub lights: Vec<LightDef>,
    #[serde(default)]
    pub routes: Vec<NamedRoute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightDef {
    pub id: LightId,
    /// Cycle clock at t = 0, seconds.
    #[serde(default)]
    pub offset: f64,
    /// Empty means the default 30 s GREEN / 3 s AMBER / 20 s RED cycle.
    #[serde(default)]
    pub phases: Vec<PhaseDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDef {
    pub color: SignalColor,
    /// seconds
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRoute {
    pub id: String,
    pub edges: Vec<EdgeId>,
    #[serde(default)]
    pub origin_offset: f64,
    pub destination_offset: f64,
}

impl NamedRoute {
    pub fn new(id: impl Into<String>, route: Route) -> Self {
        NamedRoute {
            id: id.into(),
            edges: route.edges,
            origin_offset: route.origin_offset,
            destination_offset: route.destination_offset,
        }
    }

    pub fn route(&self) -> Route {
        Route {
            edges: self.edges.clone(),
            origin_offset: self.origin_offset,
            destination_offset: self.destination_offset,
        }
    }
}
