//! Per-tick convoy telemetry and the quantities derived from it.

use std::io::Write;

use serde::Serialize;

use crate::clock::{Clock, Tick};
use crate::dynamics::{DriveMode, VehicleId};
use crate::road_net::RoutePath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TelemetrySample {
    pub tick: Tick,
    pub vehicle: VehicleId,
    /// route edge index
    pub edge: usize,
    /// m along the edge
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    /// bumper gap to the convoy predecessor; `None` for the leader
    pub gap: Option<f64>,
    pub mode: DriveMode,
    pub soc: f64,
}

impl TelemetrySample {
    pub fn arc(&self, route: &RoutePath) -> f64 {
        route.arc(self.edge, self.position)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("no samples for vehicle {0}")]
    NoSamples(VehicleId),
    #[error("vehicle {vehicle} never reached {target:.2} m; last position {last:.2} m")]
    NotReached { vehicle: VehicleId, target: f64, last: f64 },
}

/// Seconds between the first ticks at which `vehicle` is at or past
/// `origin` and `destination` (route arc positions).
pub fn travel_time(
    samples: &[TelemetrySample],
    vehicle: VehicleId,
    origin: f64,
    destination: f64,
    route: &RoutePath,
    clock: &Clock,
) -> Result<f64, TelemetryError> {
    let mut depart = None;
    let mut last = None;
    for s in samples.iter().filter(|s| s.vehicle == vehicle) {
        let arc = s.arc(route);
        last = Some(arc);
        if depart.is_none() && arc >= origin {
            depart = Some(s.tick);
        }
        if let Some(d) = depart {
            if arc >= destination - 1e-9 {
                return Ok(clock.seconds(s.tick.since(d)));
            }
        }
    }
    match last {
        None => Err(TelemetryError::NoSamples(vehicle)),
        Some(last) => Err(TelemetryError::NotReached {
            vehicle,
            target: if depart.is_some() { destination } else { origin },
            last,
        }),
    }
}

/// Run means of the regressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMeans {
    pub speed: f64,
    pub abs_accel: f64,
    pub gap: f64,
}

/// Means over the given samples of speed, |accel| and gap (samples without
/// a gap are skipped for the gap mean).
pub fn run_means<'a>(samples: impl IntoIterator<Item = &'a TelemetrySample>) -> Option<RunMeans> {
    let (mut n, mut ng) = (0usize, 0usize);
    let (mut v, mut a, mut g) = (0.0, 0.0, 0.0);
    for s in samples {
        n += 1;
        v += s.speed;
        a += s.accel.abs();
        if let Some(gap) = s.gap {
            ng += 1;
            g += gap;
        }
    }
    (n > 0).then(|| RunMeans {
        speed: v / n as f64,
        abs_accel: a / n as f64,
        gap: if ng > 0 { g / ng as f64 } else { f64::NAN },
    })
}

/// `(speed, accel, gap)` rows for outlier screening.
pub fn feature_rows<'a>(samples: impl IntoIterator<Item = &'a TelemetrySample>) -> Vec<Vec<f64>> {
    samples.into_iter().map(|s| vec![s.speed, s.accel, s.gap.unwrap_or(0.0)]).collect()
}

/// Writes `tick,vehicle_id,edge_id,pos_m,speed_mps,accel_mps2,gap_m,mode,soc_wh`.
pub fn write_telemetry_csv<W: Write>(samples: &[TelemetrySample], route: &RoutePath, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "vehicle_id", "edge_id", "pos_m", "speed_mps", "accel_mps2", "gap_m", "mode", "soc_wh"])?;
    for s in samples {
        w.write_record([
            s.tick.0.to_string(),
            s.vehicle.to_string(),
            route.edge_id(s.edge).to_string(),
            format!("{:.4}", s.position),
            format!("{:.6}", s.speed),
            format!("{:.6}", s.accel),
            s.gap.map(|g| format!("{g:.4}")).unwrap_or_default(),
            s.mode.as_str().to_string(),
            format!("{:.4}", s.soc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_net::{build_network, RoadEdge, Route};

    fn straight(len: f64) -> RoutePath {
        let net = build_network(
            vec![RoadEdge { id: "a".into(), length: len, speed_limit: 20.0, successors: vec![], light_at_end: None }],
            vec![],
        )
        .unwrap();
        net.resolve_route(&Route { edges: vec!["a".into()], origin_offset: 0.0, destination_offset: len }).unwrap()
    }

    fn sample(t: u64, pos: f64, speed: f64) -> TelemetrySample {
        TelemetrySample {
            tick: Tick(t),
            vehicle: VehicleId(1),
            edge: 0,
            position: pos,
            speed,
            accel: 0.0,
            gap: Some(7.0),
            mode: DriveMode::Manual,
            soc: 100.0,
        }
    }

    #[test]
    fn constant_speed_travel() {
        let route = straight(1200.0);
        let clock = Clock::default();
        let s: Vec<_> = (0..=11_000).map(|t| sample(t, t as f64 * 0.1, 10.0)).collect();
        let tt = travel_time(&s, VehicleId(1), 0.0, 1000.0, &route, &clock).unwrap();
        assert!((tt - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unreached_reports_last() {
        let route = straight(1200.0);
        let s: Vec<_> = (0..10).map(|t| sample(t, t as f64, 1.0)).collect();
        match travel_time(&s, VehicleId(1), 0.0, 1000.0, &route, &Clock::default()) {
            Err(TelemetryError::NotReached { last, .. }) => assert_eq!(last, 9.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_header_and_row() {
        let route = straight(100.0);
        let mut buf = Vec::new();
        write_telemetry_csv(&[sample(2, 1.5, 3.0)], &route, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "tick,vehicle_id,edge_id,pos_m,speed_mps,accel_mps2,gap_m,mode,soc_wh");
        assert_eq!(lines.next().unwrap(), "2,v1,a,1.5000,3.000000,0.000000,7.0000,MANUAL,100.0000");
    }
}
