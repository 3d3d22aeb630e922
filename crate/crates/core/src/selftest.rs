//! Built-in oracle checks, runnable from the command line.
//!
//! Each check compares an implementation against a value worked out by a
//! separate route: a closed form, a brute-force reference or a published
//! table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clock::{Clock, Tick};
use crate::driver::{AlarmSignal, DriverParams};
use crate::dynamics::{car_following_accel, FollowingGains, Role, VehicleId, VehicleSpec, VehicleState};
use crate::platoon::gap_between_arcs;
use crate::road_net::{build_network, RoadEdge, Route, RoutePath};
use crate::scenario::Scenario;
use crate::sim::{run_cell, spawn_background, Dataset, UseCase};
use crate::stats::special::{f_quantile_upper, f_sf, t_two_sided_p};
use crate::stats::{chow_f_test, fit_ols, lof_scores, lof_scores_brute_force};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn straight_route(length: f64) -> RoutePath {
    let edges = vec![RoadEdge { id: "s".into(), length, speed_limit: 20.0, successors: vec![], light_at_end: None }];
    build_network(edges, vec![])
        .and_then(|n| {
            n.resolve_route(&Route { edges: vec!["s".into()], origin_offset: 0.0, destination_offset: length })
        })
        .expect("valid straight route")
}

fn kinematics() -> Vec<Check> {
    let spec = VehicleSpec::default();
    let route = straight_route(1000.0);
    let gains = FollowingGains::default();
    let dt = Clock::default().dt();
    let at = |speed: f64| VehicleState::new(VehicleId(0), Role::Leader, &route, 0.0, speed, spec.battery_capacity);
    let brake = car_following_accel(&at(15.0), 2.0, 5.0, 7.0, &spec, &gains, dt);
    let free = car_following_accel(&at(10.0), 500.0, 10.0, 7.0, &spec, &gains, dt);
    let gap = gap_between_arcs(100.0, 5.94, 87.06).unwrap_or(f64::NAN);
    vec![
        check(
            "safe speed: 2 m behind a 5 m/s leader at 15 m/s brakes fully",
            brake == -spec.max_decel,
            format!("a = {brake}"),
        ),
        check("free road: 500 m gap accelerates at max", (free - spec.max_accel).abs() < 1e-12, format!("a = {free}")),
        check("bumper gap 100 - 5.94 - 87.06 = 7", (gap - 7.0).abs() < 1e-9, format!("gap = {gap}")),
    ]
}

fn alarm() -> Check {
    let clock = Clock::default();
    let params = DriverParams::default();
    let a = AlarmSignal::new(Tick(1000), 0.7, &params, &clock);
    check(
        "takeover at issue + 0.5 s + 0.7 s",
        a.acknowledged == Tick(1120),
        format!("acknowledged at tick {}", a.acknowledged),
    )
}

fn f_distribution() -> Vec<Check> {
    let p = f_sf(4.9646_f64, 1.0, 10.0);
    let crit = f_quantile_upper(0.05_f64, 1.0, 10.0);
    let (t, df) = (2.3_f64, 17.0);
    let gap = (f_sf(t * t, 1.0, df) - t_two_sided_p(t, df)).abs();
    vec![
        check("F(1,10) survival at 4.9646 is 0.05", (p - 0.05).abs() < 1e-4, format!("p = {p:.6}")),
        check("F(1,10) upper 5 % point is 4.9646", (crit - 4.9646).abs() < 1e-3, format!("crit = {crit:.5}")),
        check("F(1,d) tail equals two-sided t tail at sqrt(f)", gap < 1e-12, format!("|diff| = {gap:e}")),
        check("F survival at 0 is 1", f_sf(0.0_f64, 3.0, 7.0) == 1.0, String::new()),
    ]
}

fn regression() -> Vec<Check> {
    let m = fit_ols(&[1.0_f64, 2.0, 3.0], &[2.0, 3.0, 5.0]);
    let ok = m.as_ref().is_ok_and(|m| {
        (m.beta1 - 1.5).abs() < 1e-12 && (m.beta0 - 1.0 / 3.0).abs() < 1e-12 && (m.ess - 1.0 / 6.0).abs() < 1e-12
    });
    let ident = m.as_ref().is_ok_and(|m| m.f_stat == m.r_squared * (m.n as f64 - 2.0) / (1.0 - m.r_squared));
    vec![
        check("three-point least squares: slope 1.5, intercept 1/3, ESS 1/6", ok, format!("{m:?}")),
        check("regression F equals R²(n-2)/(1-R²)", ident, String::new()),
    ]
}

fn chow(trials: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let x: Vec<f64> = (0..50).map(|i| i as f64 / 5.0).collect();
    let same = chow_f_test(&x, &x, &x, &x, 0.05).map(|r| r.f).unwrap_or(f64::NAN);
    let mut rejected = 0;
    for _ in 0..trials {
        let ye: Vec<f64> = x.iter().map(|&x| 2.0 * x + noise.sample(&mut rng)).collect();
        let ys: Vec<f64> = x.iter().map(|&x| -2.0 * x + noise.sample(&mut rng)).collect();
        if chow_f_test(&x, &ye, &x, &ys, 0.05).is_ok_and(|r| r.reject_null) {
            rejected += 1;
        }
    }
    vec![
        check("identical exp and sim data give F = 0", same == 0.0, format!("F = {same}")),
        check(
            "opposite slopes rejected in > 99 % of trials",
            rejected as f64 > 0.99 * trials as f64,
            format!("{rejected}/{trials}"),
        ),
    ]
}

fn lof() -> Vec<Check> {
    let mut grid: Vec<Vec<f64>> = (0..10).flat_map(|i| (0..10).map(move |j| vec![i as f64, j as f64])).collect();
    let interior = lof_scores(&grid, 8).map(|s| s[45]).unwrap_or(f64::NAN);
    grid[0] = vec![-1000.0, -1000.0];
    let displaced = lof_scores(&grid, 8).map(|s| s[0]).unwrap_or(f64::NAN);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let fast = lof_scores(&pts, 20).unwrap_or_default();
    let slow = lof_scores_brute_force(&pts, 20).unwrap_or_default();
    let worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
    vec![
        check(
            "LOF of a grid interior point within [0.9, 1.1]",
            (0.9..=1.1).contains(&interior),
            format!("{interior:.4}"),
        ),
        check("LOF of a point displaced 100 pitches above 2", displaced > 2.0, format!("{displaced:.2}")),
        check(
            "tree LOF matches brute force on 300 points",
            fast.len() == 300 && slow.len() == 300 && worst <= 1e-9,
            format!("max |diff| = {worst:e}"),
        ),
    ]
}

fn demand() -> Check {
    let clock = Clock::default();
    let counts: Vec<usize> = (0..100)
        .map(|s| spawn_background(360.0, ChaCha8Rng::seed_from_u64(s), &clock, 3600.0).iter().map(|(_, n)| n).sum())
        .collect();
    let band = 3.0 * 360f64.sqrt();
    let outside = counts.iter().filter(|&&c| (c as f64 - 360.0).abs() > band).count();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    check(
        "360 veh/h over one hour stays within 3σ of 360",
        outside <= 2 && (mean - 360.0).abs() < 6.0,
        format!("mean {mean:.1}, {outside}/100 outside ±{band:.1}"),
    )
}

fn degeneracy() -> Check {
    let mut sc = Scenario::default();
    sc.driver = DriverParams::degenerate(&sc.clock);
    let result = (|| {
        let a = run_cell(&sc, UseCase::Manual, Dataset::Sim, 5).ok()?;
        let b = run_cell(&sc, UseCase::Manual, Dataset::Exp, 5).ok()?;
        Some((a.telemetry == b.telemetry, a.travel_time))
    })();
    match result {
        Some((same, tt)) => {
            check("noise-free one-tick human equals the autonomous controller", same, format!("travel time {tt:.2} s"))
        }
        None => check("noise-free one-tick human equals the autonomous controller", false, "run failed".into()),
    }
}

/// Runs every check; `quick` trims the Monte Carlo trial counts.
pub fn run_all(quick: bool) -> Vec<Check> {
    let mut out = kinematics();
    out.push(alarm());
    out.extend(f_distribution());
    out.extend(regression());
    out.extend(chow(if quick { 200 } else { 1000 }));
    out.extend(lof());
    out.push(demand());
    out.push(degeneracy());
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all(true) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
