//! GPS trace ingestion: a sampled polyline becomes a chain of synthetic
//! edges, one per consecutive pair of retained points.

use std::io::Read;

use serde::Deserialize;

use super::{EdgeId, NamedRoute, NetworkFile, RoadEdge, Route};

/// Mean Earth radius in meters (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const DEFAULT_SPEED_LIMIT: f64 = 20.0;
const MIN_SPEED_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct GpsTracePoint {
    /// seconds
    pub timestamp: f64,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    /// m/s
    #[serde(default)]
    pub speed: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum GpsError {
    #[error("trace needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("timestamps must be strictly increasing (row {row}: {prev} then {next})")]
    NonMonotone { row: usize, prev: f64, next: f64 },
    #[error("row {row}: latitude {lat} or longitude {lon} out of range")]
    OutOfRange { row: usize, lat: f64, lon: f64 },
    #[error("fewer than 2 distinct points remain after merging within {0} m")]
    Degenerate(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Great-circle distance between two WGS84 coordinates, meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Reads a `timestamp,lat,lon[,speed]` CSV.
pub fn read_gps_csv<R: Read>(reader: R) -> Result<Vec<GpsTracePoint>, GpsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Synthetic edges plus the route that traverses them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedRoute {
    pub edges: Vec<RoadEdge>,
    pub route: Route,
}

impl ImportedRoute {
    pub fn to_network_file(&self, route_id: &str) -> NetworkFile {
        NetworkFile {
            edges: self.edges.clone(),
            lights: Vec::new(),
            routes: vec![NamedRoute::new(route_id, self.route.clone())],
        }
    }
}

fn p95(samples: &mut [f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    // nearest-rank
    let rank = (0.95 * samples.len() as f64).ceil() as usize;
    Some(samples[rank.clamp(1, samples.len()) - 1])
}

/// Converts a trace into a chain of edges. Points closer than
/// `snap_tolerance` meters to the last retained point are merged into it.
///
/// Each edge gets the van speed ceiling of 20 m/s unless the trace
/// carries speeds, in which case the 95th percentile of the speeds sampled
/// along that segment is used, clamped to [5, 20] m/s.
pub fn import_gps_trace(trace: &[GpsTracePoint], snap_tolerance: f64) -> Result<ImportedRoute, GpsError> {
    if trace.len() < 2 {
        return Err(GpsError::TooShort(trace.len()));
    }
    for (row, p) in trace.iter().enumerate() {
        if !(-90.0..=90.0).contains(&p.latitude) || !(-180.0..=180.0).contains(&p.longitude) {
            return Err(GpsError::OutOfRange { row, lat: p.latitude, lon: p.longitude });
        }
        if row > 0 && !(p.timestamp > trace[row - 1].timestamp) {
            return Err(GpsError::NonMonotone { row, prev: trace[row - 1].timestamp, next: p.timestamp });
        }
    }
    let mut kept = vec![0usize];
    for (i, p) in trace.iter().enumerate().skip(1) {
        let last = &trace[*kept.last().unwrap()];
        if haversine_m(last.latitude, last.longitude, p.latitude, p.longitude) >= snap_tolerance {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(GpsError::Degenerate(snap_tolerance));
    }
    let n_edges = kept.len() - 1;
    let mut edges = Vec::with_capacity(n_edges);
    for (k, w) in kept.windows(2).enumerate() {
        let (a, b) = (&trace[w[0]], &trace[w[1]]);
        let length = haversine_m(a.latitude, a.longitude, b.latitude, b.longitude);
        let mut speeds: Vec<f64> = trace[w[0]..=w[1]].iter().filter_map(|p| p.speed).collect();
        let speed_limit =
            p95(&mut speeds).map(|s| s.clamp(MIN_SPEED_LIMIT, DEFAULT_SPEED_LIMIT)).unwrap_or(DEFAULT_SPEED_LIMIT);
        let successors = if k + 1 < n_edges { vec![EdgeId(format!("g{}", k + 1))] } else { Vec::new() };
        edges.push(RoadEdge { id: EdgeId(format!("g{k}")), length, speed_limit, successors, light_at_end: None });
    }
    let destination_offset = edges.last().unwrap().length;
    let route = Route { edges: edges.iter().map(|e| e.id.clone()).collect(), origin_offset: 0.0, destination_offset };
    Ok(ImportedRoute { edges, route })
}
