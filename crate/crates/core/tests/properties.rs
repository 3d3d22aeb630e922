use proptest::prelude::*;

use convoy_core::clock::Clock;
use convoy_core::dynamics::{
    car_following_accel, step_vehicle, FollowingGains, Role, VehicleId, VehicleSpec, VehicleState,
};
use convoy_core::road_net::{build_network, RoadEdge, Route, RoutePath, SignalColor, TrafficLight};
use convoy_core::stats::special::f_sf;
use convoy_core::stats::{chow_f_test, fit_ols, lof_scores, lof_scores_brute_force};

fn straight(length: f64) -> RoutePath {
    let edges = vec![RoadEdge { id: "s".into(), length, speed_limit: 20.0, successors: vec![], light_at_end: None }];
    build_network(edges, vec![])
        .and_then(|n| {
            n.resolve_route(&Route { edges: vec!["s".into()], origin_offset: 0.0, destination_offset: length })
        })
        .unwrap()
}

fn light(g: f64, a: f64, r: f64, offset: f64) -> TrafficLight {
    let phases = [(SignalColor::Green, g), (SignalColor::Amber, a), (SignalColor::Red, r)];
    TrafficLight::new("L".into(), &phases, offset, &Clock::default()).unwrap()
}

fn dataset(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-50.0..50.0f64, n), prop::collection::vec(-50.0..50.0f64, n)))
}

proptest! {
    #[test]
    fn light_advance_is_additive(g in 1.0..60.0f64, a in 1.0..5.0f64, r in 1.0..60.0f64, off in 0.0..100.0f64,
                                 t1 in 0u64..50_000, t2 in 0u64..50_000) {
        let mut split = light(g, a, r, off);
        split.advance(t1);
        split.advance(t2);
        let mut once = light(g, a, r, off);
        once.advance(t1 + t2);
        prop_assert_eq!(split.cycle_position(), once.cycle_position());
        prop_assert_eq!(split.effective_color(), once.effective_color());
    }

    #[test]
    fn forced_red_lasts_its_duration(g in 1.0..60.0f64, r in 1.0..60.0f64, off in 0.0..100.0f64, hold in 1u64..5_000) {
        let mut l = light(g, 3.0, r, off);
        l.force_red(hold);
        for _ in 0..hold {
            prop_assert_eq!(l.effective_color(), SignalColor::Red);
            l.advance(1);
        }
        prop_assert!(l.override_state().is_none());
    }

    #[test]
    fn step_keeps_speed_in_bounds(v0 in 0.0..20.0f64, cmd in -100.0..100.0f64) {
        let spec = VehicleSpec::default();
        let route = straight(1000.0);
        let s = VehicleState::new(VehicleId(0), Role::Leader, &route, 10.0, v0, spec.battery_capacity);
        let next = step_vehicle(&s, cmd, Clock::default().dt(), &spec, &route);
        prop_assert!((0.0..=spec.v_max).contains(&next.speed));
        prop_assert!(next.position >= s.position);
    }

    #[test]
    fn follower_never_collides(cmds in prop::collection::vec(-4.5..2.5f64, 50..400),
                               v in 0.0..20.0f64, gap in 2.0..40.0f64) {
        let spec = VehicleSpec::default();
        let gains = FollowingGains::default();
        let route = straight(20_000.0);
        let dt = Clock::default().dt();
        let mut lead = VehicleState::new(VehicleId(0), Role::Leader, &route, 200.0, v, spec.battery_capacity);
        // start from a state the safe-speed rule admits
        let start = convoy_core::dynamics::safe_speed(gap, v, spec.max_decel, dt).min(v);
        let mut rear = VehicleState::new(VehicleId(1), Role::FollowerAuto, &route, 200.0 - spec.length - gap, start, spec.battery_capacity);
        for (i, &c) in cmds.iter().cycle().take(cmds.len() * 10).enumerate() {
            let g = lead.arc(&route) - spec.length - rear.arc(&route);
            prop_assert!(g > 0.0, "collision at tick {i}: gap {g}");
            let a = car_following_accel(&rear, g, lead.speed, 7.0, &spec, &gains, dt);
            prop_assert!(a.is_finite() && a.abs() <= spec.accel_bound() + 1e-12);
            lead = step_vehicle(&lead, c, dt, &spec, &route);
            rear = step_vehicle(&rear, a, dt, &spec, &route);
            prop_assert!(rear.accel.abs() <= spec.accel_bound() + 1e-9);
        }
    }

    #[test]
    fn restricted_ess_dominates((xe, ye) in dataset(3..30), (xs, ys) in dataset(3..30)) {
        if let Ok(r) = chow_f_test(&xe, &ye, &xs, &ys, 0.05) {
            prop_assert!(r.ess_r >= r.ess_ur);
            prop_assert!(r.f >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn chow_is_affine_invariant((xe, ye) in dataset(4..25), (xs, ys) in dataset(4..25),
                                a in 0.1..10.0f64, b in -100.0..100.0f64, c in 0.1..10.0f64, d in -100.0..100.0f64) {
        let Ok(base) = chow_f_test(&xe, &ye, &xs, &ys, 0.05) else { return Ok(()) };
        let tx = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| c * v + d).collect() };
        let ty = |y: &[f64]| -> Vec<f64> { y.iter().map(|v| a * v + b).collect() };
        let moved = chow_f_test(&tx(&xe), &ty(&ye), &tx(&xs), &ty(&ys), 0.05).unwrap();
        prop_assert!((moved.f - base.f).abs() <= 1e-6 * base.f.max(1.0), "{} vs {}", moved.f, base.f);
    }

    #[test]
    fn ols_residuals_are_orthogonal((x, y) in dataset(3..40)) {
        let Ok(m) = fit_ols(&x, &y) else { return Ok(()) };
        let r: Vec<f64> = x.iter().zip(&y).map(|(x, y)| y - m.beta0 - m.beta1 * x).collect();
        let scale = y.iter().map(|v| v.abs()).sum::<f64>().max(1.0) * 50.0;
        prop_assert!(r.iter().sum::<f64>().abs() <= 1e-9 * scale);
        prop_assert!(r.iter().zip(&x).map(|(r, x)| r * x).sum::<f64>().abs() <= 1e-9 * scale * 50.0);
        prop_assert_eq!(m.f_stat, m.r_squared * (m.n as f64 - 2.0) / (1.0 - m.r_squared));
    }

    #[test]
    fn lof_tree_matches_reference(pts in prop::collection::vec(prop::collection::vec(-3i32..3, 2), 25..120), k in 1usize..12) {
        // integer grid: many exact ties and duplicates
        let pts: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&c| c as f64 * 0.5).collect()).collect();
        let fast = lof_scores(&pts, k).unwrap();
        let slow = lof_scores_brute_force(&pts, k).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn f_survival_is_monotone(f1 in 0.0..50.0f64, df in 0.0..5.0f64, d1 in 1.0..30.0f64, d2 in 1.0..200.0f64) {
        let (hi, lo) = (f_sf(f1, d1, d2), f_sf(f1 + df, d1, d2));
        prop_assert!(lo <= hi + 1e-15);
        prop_assert!((0.0..=1.0).contains(&hi));
    }

    #[test]
    fn f32_and_f64_kernels_agree((x, y) in dataset(5..30)) {
        let Ok(m64) = fit_ols(&x, &y) else { return Ok(()) };
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
        let Ok(m32) = fit_ols(&x32, &y32) else { return Ok(()) };
        let tol = 1e-3 * (m64.beta1.abs() + 1.0);
        prop_assert!((m32.beta1 as f64 - m64.beta1).abs() <= tol, "{} vs {}", m32.beta1, m64.beta1);
    }
}
