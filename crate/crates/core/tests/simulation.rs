use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use convoy_core::clock::Clock;
use convoy_core::driver::{autonomous_control, Surroundings};
use convoy_core::dynamics::{
    signal_approach_accel, step_vehicle, FollowingGains, Role, VehicleId, VehicleSpec, VehicleState,
};
use convoy_core::platoon::{Cause, EventKind};
use convoy_core::road_net::{build_network, RoadEdge, Route, SignalColor, TrafficLight};
use convoy_core::scenario::Scenario;
use convoy_core::sim::{run_cell, spawn_background, Dataset, RunOutput, UseCase};

const QUIET: &str = "triggers = []\nintruders = []\n[demand]\nentries = []\n";

fn scenario(toml: &str) -> Scenario {
    Scenario::from_toml_str(toml).expect("valid scenario")
}

fn count(run: &RunOutput, kind: EventKind, cause: Option<Cause>) -> usize {
    run.events.iter().filter(|e| e.kind == kind && (cause.is_none() || e.cause == cause)).count()
}

fn arrived(sc: &Scenario, run: &RunOutput) -> usize {
    let end = sc.route.total_length() - 1e-9;
    run.convoy
        .iter()
        .filter(|&&v| run.telemetry.iter().rev().find(|s| s.vehicle == v).is_some_and(|s| s.arc(&sc.route) >= end))
        .count()
}

#[test]
fn manual_without_demand_has_no_platoon_events() {
    let sc = scenario(QUIET);
    let run = run_cell(&sc, UseCase::Manual, Dataset::Sim, 3).unwrap();
    assert!(run.events.is_empty(), "{:?}", run.events);
    assert_eq!(arrived(&sc, &run), 3);
    assert_eq!(run.diagnostics.background_spawned, 0);
    assert!(run.travel_time > 0.0);
}

#[test]
fn single_trigger_fragments_once_and_reforms() {
    let sc = scenario("intruders = []\n[demand]\nentries = []\n");
    let run = run_cell(&sc, UseCase::DynamicFlexible, Dataset::Sim, 4).unwrap();
    assert_eq!(count(&run, EventKind::Fragmented, Some(Cause::TrafficLight)), 1, "{:?}", run.events);
    assert_eq!(count(&run, EventKind::Fragmented, None), 1, "{:?}", run.events);
    assert_eq!(count(&run, EventKind::Reformed, None), 1, "{:?}", run.events);
    let frag = run.events.iter().find(|e| e.kind == EventKind::Fragmented).unwrap();
    let reform = run.events.iter().find(|e| e.kind == EventKind::Reformed).unwrap();
    assert!(reform.tick > frag.tick);
    assert_eq!(frag.vehicle, run.semi());
    assert_eq!(run.diagnostics.triggers_fired.len(), 1);
    assert!(run.diagnostics.triggers_fired[0].is_some());
    assert_eq!(arrived(&sc, &run), 3);

    // a human semi may also stretch the rear link, but the episode still closes
    let run = run_cell(&sc, UseCase::DynamicFlexible, Dataset::Exp, 4).unwrap();
    assert_eq!(count(&run, EventKind::Fragmented, Some(Cause::TrafficLight)), 1, "{:?}", run.events);
    assert_eq!(run.events.last().map(|e| e.kind), Some(EventKind::Reformed));
}

#[test]
fn exp_trigger_hands_over_to_the_human() {
    let sc = scenario("intruders = []\n[demand]\nentries = []\n");
    let run = run_cell(&sc, UseCase::DynamicFlexible, Dataset::Exp, 4).unwrap();
    let alarm = run.events.iter().find(|e| e.kind == EventKind::AlarmSent).expect("alarm");
    let takeover = run.events.iter().find(|e| e.kind == EventKind::Takeover).expect("takeover");
    assert_eq!(alarm.vehicle, run.semi());
    // notification latency plus a reaction time of at least 0.5 s
    assert!(takeover.tick.since(alarm.tick) >= sc.clock.ticks(1.0), "{alarm:?} {takeover:?}");
}

#[test]
fn proximity_intruder_fragments_the_platoon() {
    let sc = scenario("triggers = []\n[demand]\nentries = []\n");
    let run = run_cell(&sc, UseCase::DynamicFlexible, Dataset::Sim, 8).unwrap();
    assert_eq!(run.diagnostics.intruders_inserted, 1);
    assert_eq!(count(&run, EventKind::Fragmented, Some(Cause::ProximityIntruder)), 1, "{:?}", run.events);
    assert_eq!(count(&run, EventKind::Reformed, Some(Cause::ProximityIntruder)), 1, "{:?}", run.events);
    assert_eq!(run.diagnostics.collisions, 0);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let sc = Scenario::default();
    for uc in UseCase::ALL {
        let a = run_cell(&sc, uc, Dataset::Exp, 21).unwrap();
        let b = run_cell(&sc, uc, Dataset::Exp, 21).unwrap();
        let c = run_cell(&sc, uc, Dataset::Exp, 22).unwrap();
        assert_eq!(a.telemetry, b.telemetry);
        assert_eq!(a.events, b.events);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.travel_time.to_bits(), b.travel_time.to_bits());
        assert_ne!(a.telemetry, c.telemetry);
    }
}

#[test]
fn default_runs_are_collision_free() {
    let sc = Scenario::default();
    for uc in UseCase::ALL {
        for ds in Dataset::ALL {
            let r = run_cell(&sc, uc, ds, 30).unwrap();
            assert_eq!(r.diagnostics.collisions, 0, "{uc}/{ds}");
            assert_eq!(r.diagnostics.bound_violations, 0, "{uc}/{ds}");
            assert!(r.diagnostics.min_gap > 0.0);
            assert!(r.diagnostics.background_spawned > 0);
        }
    }
}

#[test]
fn tight_budget_aborts_the_run() {
    let sc = scenario("[run]\nmax_duration = 5.0\n");
    let err = run_cell(&sc, UseCase::Manual, Dataset::Sim, 1).unwrap_err();
    assert!(err.to_string().contains("budget"), "{err}");
}

#[test]
fn poisson_arrivals_match_rate_and_dispersion() {
    let clock = Clock::default();
    let counts: Vec<f64> = (0..400)
        .map(|s| {
            spawn_background(240.0, ChaCha8Rng::seed_from_u64(s), &clock, 900.0).iter().map(|(_, n)| n).sum::<usize>()
                as f64
        })
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // 60 expected per run; the dispersion index of a Poisson count is 1
    assert!((mean - 60.0).abs() < 3.0 * (60.0 / n).sqrt() * 1.5, "mean {mean}");
    assert!((0.8..1.2).contains(&(var / mean)), "dispersion {}", var / mean);
}

/// Seconds for one autonomous vehicle to cover a 600 m edge whose end light
/// is green throughout, optionally forced red for `red` s at `at` s.
fn drive_to_end(red: Option<(f64, f64)>) -> f64 {
    let clock = Clock::default();
    let dt = clock.dt();
    let spec = VehicleSpec::default();
    let gains = FollowingGains::default();
    let edges = vec![
        RoadEdge {
            id: "a".into(),
            length: 600.0,
            speed_limit: 15.0,
            successors: vec!["b".into()],
            light_at_end: Some("L".into()),
        },
        RoadEdge { id: "b".into(), length: 200.0, speed_limit: 15.0, successors: vec![], light_at_end: None },
    ];
    let mut light = TrafficLight::new("L".into(), &[(SignalColor::Green, 3600.0)], 0.0, &clock).unwrap();
    let net = build_network(edges, vec![light.clone()]).unwrap();
    let route = net
        .resolve_route(&Route { edges: vec!["a".into(), "b".into()], origin_offset: 0.0, destination_offset: 200.0 })
        .unwrap();
    let mut v = VehicleState::new(VehicleId(0), Role::Leader, &route, 0.0, 15.0, spec.battery_capacity);
    let mut t = 0u64;
    while v.is_active() {
        if let Some((at, secs)) = red {
            if t == clock.ticks(at) {
                light.force_red(clock.ticks(secs));
            }
        }
        let signal = if v.edge == 0 {
            signal_approach_accel(v.speed, 600.0 - v.position, light.effective_color(), &spec, dt)
        } else {
            f64::INFINITY
        };
        let s = Surroundings { signal, ..Surroundings::open_road(15.0) };
        let a = autonomous_control(&v, &s, 7.0, &gains, &spec, dt);
        v = step_vehicle(&v, a, dt, &spec, &route);
        light.advance(1);
        t += 1;
        assert!(t < 1_000_000);
    }
    clock.seconds(t)
}

#[test]
fn forced_red_delays_a_stopped_vehicle_by_at_least_its_duration() {
    let free = drive_to_end(None);
    // red from 38 s, 30 m out, just past the distance needed to stop from 15 m/s
    let held = drive_to_end(Some((38.0, 10.0)));
    assert!(held - free >= 10.0, "free {free} s, held {held} s");
    // a red that ends before the vehicle gets there costs nothing
    let early = drive_to_end(Some((1.0, 10.0)));
    assert_eq!(early, free);
}
