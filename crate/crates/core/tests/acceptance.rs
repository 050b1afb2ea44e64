//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits non-zero on any FAIL.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use common::*;
use qshuttle::analysis::{fleet_overlap_report, static_baseline_overlap, trip_stats};
use qshuttle::day::{run_day, DayConfig, DayReport};
use qshuttle::geo::{cumulative_lengths, haversine_distance, point_at_arc_length, point_in_box, BoundingBox, GeoPoint};
use qshuttle::ids::{LineTag, VehicleId};
use qshuttle::qubo::{build_tfo_qubo, QuboConfig};
use qshuttle::routing::{candidate_routes, time_filter, CandidateRoute, NodeId};
use qshuttle::scenario::shared_corridor;
use qshuttle::service::{FleetService, LineSpec, LocationFix, ServiceConfig, ARRIVAL_RECORD_RADIUS_M};
use qshuttle::solver::{
    BruteForceSolver, MockRemoteConfig, RemoteSolver, SimulatedAnnealingSolver, SolveRequest, Solver, TabuHybridSolver,
};
use qshuttle::traffic::TrafficState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENERGY_TOL: f64 = 1e-9;

const LIVE_SCALE_INSTANCES: usize = 100;
const LIVE_SCALE_MAX_VARS: usize = 12;
const LIVE_SCALE_BUDGET_MS: u64 = 100;
const LIVE_SCALE_MIN_HITS: usize = 99;
const LIVE_SCALE_MAX_RUNTIME: Duration = Duration::from_secs(30);

const GROUND_STATE_INSTANCES: usize = 200;
const GROUND_STATE_MAX_VARS: usize = 14;

const ENERGY_PAIRS: usize = 1000;
const ENERGY_MAX_VARS: usize = 16;

const TIME_SLACK_S: f64 = 120.0;
const ROUTING_PROPERTY_CASES: usize = 500;
const EXCLUSION_FUZZ_ROUNDS: usize = 1000;

const REMOTE_LATENCY_MS: u64 = 20;
const REMOTE_TIMEOUT: Duration = Duration::from_secs(1);
const REMOTE_FAILURE_RATES: [f64; 3] = [0.0, 0.5, 1.0];

const OVERLAP_MEDIAN_MAX: f64 = 0.5;
const BASELINE_MIN: f64 = 0.6;
const CORRIDOR_PAIR: &str = "red-blue";
const DAY_MAX_RUNTIME: Duration = Duration::from_secs(300);

const VALID_MIN: f64 = 0.85;
const VALID_FIELD: f64 = 0.876;
const VALID_TOLERANCE: f64 = 0.05;

const LATENCY_VEHICLES: usize = 10;
const LATENCY_ROUTES: usize = 5;
const LATENCY_MAX: Duration = Duration::from_millis(500);
const LATENCY_REPEATS: usize = 5;

const HAVERSINE_PAIRS: usize = 10_000;
const HAVERSINE_REL_TOL: f64 = 1e-6;
const ORACLE_BITS: usize = 256;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exhaustive_min(routes: &[CandidateRoute], lambda: f64) -> f64 {
    all_samples(routes.len()).map(|x| direct_objective(routes, lambda, &x)).fold(f64::INFINITY, f64::min)
}

fn one_route_per_vehicle(routes: &[CandidateRoute], sample: &[u8]) -> bool {
    let mut per: BTreeMap<&VehicleId, u32> = BTreeMap::new();
    for (r, &x) in routes.iter().zip(sample) {
        *per.entry(&r.vehicle_id).or_default() += x as u32;
    }
    per.values().all(|&n| n == 1)
}

fn solver_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (sa, tabu) = (SimulatedAnnealingSolver::default(), TabuHybridSolver::default());
    let (mut sa_hits, mut tabu_hits, mut brute_agrees) = (0, 0, 0);
    for seed in 0..LIVE_SCALE_INSTANCES as u64 {
        let p = build_tfo_qubo(&random_fleet(&mut rng, LIVE_SCALE_MAX_VARS), &QuboConfig::default()).unwrap();
        let brute = BruteForceSolver.solve(&SolveRequest::new(p.bqm.clone(), LIVE_SCALE_BUDGET_MS, seed)).unwrap().energy;
        brute_agrees += usize::from((brute - exhaustive_min(&p.routes, p.lambda)).abs() <= ENERGY_TOL);
        let req = SolveRequest::new(p.bqm.clone(), LIVE_SCALE_BUDGET_MS, seed);
        sa_hits += usize::from((sa.solve(&req).unwrap().energy - brute).abs() <= ENERGY_TOL);
        tabu_hits += usize::from((tabu.solve(&req).unwrap().energy - brute).abs() <= ENERGY_TOL);
    }
    let elapsed = started.elapsed();
    outcome(
        sa_hits >= LIVE_SCALE_MIN_HITS
            && tabu_hits >= LIVE_SCALE_MIN_HITS
            && brute_agrees == LIVE_SCALE_INSTANCES
            && elapsed < LIVE_SCALE_MAX_RUNTIME,
        format!(
            "sa {sa_hits}/{n}, tabu {tabu_hits}/{n} (need {LIVE_SCALE_MIN_HITS}), brute vs enumeration {brute_agrees}/{n}, {:.1} s (limit {} s)",
            elapsed.as_secs_f64(),
            LIVE_SCALE_MAX_RUNTIME.as_secs(),
            n = LIVE_SCALE_INSTANCES
        ),
    )
}

fn ground_state_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut ok = 0;
    for seed in 0..GROUND_STATE_INSTANCES as u64 {
        let p = build_tfo_qubo(&random_fleet(&mut rng, GROUND_STATE_MAX_VARS), &QuboConfig::default()).unwrap();
        let r = BruteForceSolver.solve(&SolveRequest::new(p.bqm.clone(), 100, seed)).unwrap();
        ok += usize::from(one_route_per_vehicle(&p.routes, &r.sample));
    }
    outcome(ok == GROUND_STATE_INSTANCES, format!("{ok}/{GROUND_STATE_INSTANCES} ground states feasible"))
}

fn energy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..ENERGY_PAIRS {
        let p = build_tfo_qubo(&random_fleet(&mut rng, ENERGY_MAX_VARS), &QuboConfig::default()).unwrap();
        let x = random_sample(&mut rng, p.varmap.len());
        worst = worst.max((p.bqm.energy(&x) - direct_objective(&p.routes, p.lambda, &x)).abs());
    }
    outcome(worst <= ENERGY_TOL, format!("{ENERGY_PAIRS} pairs, max |diff| {worst:.3e} (limit {ENERGY_TOL:e})"))
}

/// 5 × 5 grid, 400 m blocks, random speeds.
fn fuzz_grid(rng: &mut ChaCha8Rng) -> (Net, Vec<NodeId>) {
    let mut net = Net::new();
    let ids: Vec<NodeId> = (0..25).map(|i| net.node(400.0 * (i % 5) as f64, 400.0 * (i / 5) as f64)).collect();
    for i in 0..25 {
        if i % 5 < 4 {
            net.road(ids[i], ids[i + 1], rng.random_range(6.0..20.0));
        }
        if i / 5 < 4 {
            net.road(ids[i], ids[i + 5], rng.random_range(6.0..20.0));
        }
    }
    (net, ids)
}

fn span(routes: &[CandidateRoute]) -> f64 {
    let lo = routes.iter().map(|r| r.expected_travel_time_s).fold(f64::INFINITY, f64::min);
    let hi = routes.iter().map(|r| r.expected_travel_time_s).fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn time_filter_and_exclusions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // direct property suite on the router
    let mut worst_span: f64 = 0.0;
    let mut sets = 0;
    for _ in 0..ROUTING_PROPERTY_CASES {
        let (net, ids) = fuzz_grid(&mut rng);
        let g = net.graph();
        let mut traffic = TrafficState::free_flow(&g);
        traffic.set_background_ratio(&g, rng.random_range(0.0..1.5));
        let (o, d) = (ids[rng.random_range(0..25)], ids[rng.random_range(0..25)]);
        if o == d {
            continue;
        }
        let k = rng.random_range(1..=8);
        if let Ok(routes) = candidate_routes(&g, &traffic, &vid("v"), &net.point(o), &net.point(d), k, &[]) {
            let kept = time_filter(routes, TIME_SLACK_S);
            worst_span = worst_span.max(span(&kept));
            sets += 1;
        }
    }

    // service-level fuzz with exclusions coming and going
    let (net, ids) = fuzz_grid(&mut rng);
    let stops = [(0, 24), (4, 20), (2, 22)];
    let lines: Vec<LineSpec> = ["red", "blue", "black"]
        .iter()
        .zip(stops)
        .map(|(tag, (o, d))| LineSpec { tag: LineTag::new(*tag), origin: net.point(ids[o]), destination: net.point(ids[d]) })
        .collect();
    let vehicles: Vec<VehicleId> = (1..=6).map(|i| vid(&format!("bus-{i}"))).collect();
    let config = ServiceConfig { solver_budget_ms: 5, route_count: 5, seed: 4, ..ServiceConfig::default() };
    let svc = FleetService::new(
        Arc::new(net.graph()),
        lines.clone(),
        vehicles.clone(),
        config,
        Arc::new(SimulatedAnnealingSolver::default()),
    )
    .unwrap();
    for (i, v) in vehicles.iter().enumerate() {
        svc.start_trip(v, &lines[i % 3].tag, 0.0).unwrap();
    }
    let stop_points: BTreeSet<NodeId> = stops.iter().flat_map(|&(o, d)| [ids[o], ids[d]]).collect();
    let (mut violations, mut missing, mut candidates, mut max_boxes) = (0, 0, 0, 0);
    for round in 0..EXCLUSION_FUZZ_ROUNDS {
        let active = svc.exclusions();
        if !active.is_empty() && (active.len() >= 4 || rng.random_bool(0.3)) {
            svc.remove_exclusion(active[rng.random_range(0..active.len())].id).unwrap();
        }
        if rng.random_bool(0.5) {
            let node = ids[rng.random_range(0..25)];
            if !stop_points.contains(&node) {
                let jitter = net.point(node).offset_m(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
                svc.add_exclusion(BoundingBox::around(jitter, rng.random_range(70.0..250.0))).unwrap();
            }
        }
        let boxes: Vec<BoundingBox> = svc.exclusions().iter().map(|e| e.bbox).collect();
        max_boxes = max_boxes.max(boxes.len());
        let mut overrides = BTreeMap::new();
        for v in &vehicles {
            if rng.random_bool(0.5) {
                overrides.insert(v.clone(), net.point(ids[rng.random_range(0..25)]));
            }
        }
        let out = svc.handle_optimize(round as f64 * 120.0, &overrides).unwrap();
        missing += vehicles.len() - out.vehicles.len();
        candidates += out.candidates.len();
        for r in &out.candidates {
            violations += r.polyline.iter().filter(|p| boxes.iter().any(|b| point_in_box(p, b))).count();
        }
        let mut by_vehicle: BTreeMap<&VehicleId, Vec<CandidateRoute>> = BTreeMap::new();
        for r in &out.candidates {
            by_vehicle.entry(&r.vehicle_id).or_default().push(r.clone());
        }
        for set in by_vehicle.values() {
            worst_span = worst_span.max(span(set));
        }
    }
    outcome(
        worst_span <= TIME_SLACK_S && violations == 0 && missing == 0,
        format!(
            "max span {worst_span:.1} s over {sets} router sets and {EXCLUSION_FUZZ_ROUNDS} optimizations (limit {TIME_SLACK_S} s), \
             {candidates} candidates with {violations} points inside active boxes (up to {max_boxes} boxes), {missing} vehicles unrouted"
        ),
    )
}

fn fallback_totality() -> Outcome {
    let scenario = shared_corridor();
    let mut pass = true;
    let mut parts = Vec::new();
    for rate in REMOTE_FAILURE_RATES {
        let remote = RemoteSolver::mock(
            MockRemoteConfig { latency_ms: REMOTE_LATENCY_MS, failure_rate: rate, failure_seed: 17 },
            REMOTE_TIMEOUT,
        );
        let mut config = DayConfig::new(Arc::new(remote));
        config.seed = 1;
        let r: DayReport = run_day(&scenario, config).unwrap().report;
        let finished = r.trips_auto_ended + r.trips_ended_manually;
        pass &= r.trips_started > 0
            && finished == r.trips_started
            && r.trips_unfinished == 0
            && r.rounds_missing_routes == 0
            && r.optimizations > 0;
        parts.push(format!(
            "rate {rate}: {finished}/{} trips finished, {} rounds ({} fell back), {} missing routes",
            r.trips_started, r.optimizations, r.fallback_rounds, r.rounds_missing_routes
        ));
    }
    outcome(pass, parts.join("; "))
}

fn anti_flapping() -> Outcome {
    let scenario = shared_corridor();
    let graph = Arc::new(scenario.road_graph().unwrap());
    let config = ServiceConfig { route_count: scenario.route_count.unwrap_or(3), seed: 7, ..ServiceConfig::default() };
    let svc = FleetService::new(
        Arc::clone(&graph),
        scenario.line_specs(),
        scenario.vehicle_ids(),
        config,
        Arc::new(SimulatedAnnealingSolver::default()),
    )
    .unwrap();
    let mut frozen = TrafficState::free_flow(&graph);
    frozen.set_background_ratio(&graph, 0.8);
    svc.publish_traffic(Arc::new(frozen));
    for (i, v) in scenario.vehicles.iter().enumerate() {
        let trip = svc.start_trip(&v.id, &v.line, 0.0).unwrap();
        let r = trip.current_route().unwrap();
        let cum = cumulative_lengths(&r.polyline);
        let p = point_at_arc_length(&r.polyline, &cum, cum.last().unwrap() * (0.05 + 0.08 * i as f64));
        svc.handle_update(&[LocationFix { id: v.id.clone(), lat: p.lat, lon: p.lon, ts: 10.0 }]).unwrap();
    }
    let settle = svc.handle_optimize(20.0, &BTreeMap::new()).unwrap();
    let settled = settle.vehicles.iter().filter(|v| v.changed).count();
    let rounds: Vec<usize> =
        [30.0, 40.0].iter().map(|t| svc.handle_optimize(*t, &BTreeMap::new()).unwrap().vehicles.iter().filter(|v| v.changed).count()).collect();
    outcome(
        rounds.iter().all(|&c| c == 0),
        format!(
            "{} vehicles; first round moved {settled}, the next two moved {} and {}",
            settle.vehicles.len(),
            rounds[0],
            rounds[1]
        ),
    )
}

fn simulated_day() -> (Outcome, Outcome) {
    let scenario = shared_corridor();
    let started = Instant::now();
    let run = run_day(&scenario, DayConfig::new(Arc::new(SimulatedAnnealingSolver::default()))).unwrap();
    let elapsed = started.elapsed();
    let trips = run.service.trips();
    let overlap = fleet_overlap_report(&trips);
    let baseline = static_baseline_overlap(run.service.graph(), &scenario.line_specs()).unwrap();
    let base = baseline[CORRIDOR_PAIR];
    let medians: Vec<(String, Option<f64>)> =
        overlap.summary.iter().map(|s| (s.pair.clone(), s.stats.as_ref().map(|b| b.median))).collect();
    let corridor = overlap.group(CORRIDOR_PAIR).map(|b| b.median);
    let overlap_pass = base >= BASELINE_MIN
        && corridor.is_some_and(|m| m < base)
        && medians.len() == 6
        && medians.iter().all(|(_, m)| m.is_some_and(|m| m < OVERLAP_MEDIAN_MAX))
        && elapsed < DAY_MAX_RUNTIME;
    let listing: Vec<String> =
        medians.iter().map(|(p, m)| format!("{p} {}", m.map_or("none".into(), |m| format!("{m:.3}")))).collect();
    let overlap_out = outcome(
        overlap_pass,
        format!(
            "{CORRIDOR_PAIR} baseline {base:.3} (need >= {BASELINE_MIN}), medians [{}] (need < {OVERLAP_MEDIAN_MAX}), \
             {} observations, day took {:.1} s",
            listing.join(", "),
            overlap.observations.len(),
            elapsed.as_secs_f64()
        ),
    );

    let stats = trip_stats(&trips, ARRIVAL_RECORD_RADIUS_M);
    let fraction = stats.valid_fraction().unwrap_or(0.0);
    let (lo, hi) = (VALID_FIELD - VALID_TOLERANCE, VALID_FIELD + VALID_TOLERANCE);
    let validity_out = outcome(
        fraction >= VALID_MIN && (lo..=hi).contains(&fraction),
        format!(
            "{}/{} valid = {:.3} (need >= {VALID_MIN} and within [{lo:.3}, {hi:.3}]), {} trips ended by hand",
            stats.valid,
            stats.valid + stats.invalid,
            fraction,
            run.report.trips_ended_manually
        ),
    );
    (overlap_out, validity_out)
}

fn service_latency() -> Outcome {
    let mut net = Net::new();
    let o = net.node(0.0, 0.0);
    let d = net.node(3000.0, 0.0);
    for i in 0..LATENCY_ROUTES {
        let north = 150.0 * i as f64;
        let (b1, b2) = (net.node(1000.0, north), net.node(2000.0, north));
        net.chain(&[o, b1, b2, d], 14.0);
    }
    let line = LineSpec { tag: LineTag::new("red"), origin: net.point(o), destination: net.point(d) };
    let vehicles: Vec<VehicleId> = (1..=LATENCY_VEHICLES).map(|i| vid(&format!("bus-{i:02}"))).collect();
    let config = ServiceConfig { route_count: LATENCY_ROUTES, ..ServiceConfig::default() };
    let svc =
        FleetService::new(Arc::new(net.graph()), vec![line], vehicles.clone(), config, Arc::new(SimulatedAnnealingSolver::default()))
            .unwrap();
    for v in &vehicles {
        svc.start_trip(v, &LineTag::new("red"), 0.0).unwrap();
    }
    let at_origin: BTreeMap<VehicleId, GeoPoint> = vehicles.iter().map(|v| (v.clone(), net.point(o))).collect();
    let mut worst = Duration::ZERO;
    let mut variables = 0;
    for k in 0..LATENCY_REPEATS {
        let t = Instant::now();
        let out = svc.handle_optimize(10.0 * (k + 1) as f64, &at_origin).unwrap();
        worst = worst.max(t.elapsed());
        variables = out.variables;
    }
    outcome(
        worst < LATENCY_MAX && variables == LATENCY_VEHICLES * LATENCY_ROUTES,
        format!(
            "{variables} variables, slowest of {LATENCY_REPEATS} calls {:.1} ms (limit {} ms)",
            worst.as_secs_f64() * 1e3,
            LATENCY_MAX.as_millis()
        ),
    )
}

/// Haversine in 256-bit floating point.
fn haversine_oracle(a: &GeoPoint, b: &GeoPoint, cc: &mut Consts) -> BigFloat {
    let (p, rm) = (ORACLE_BITS, RoundingMode::ToEven);
    let big = |x: f64| BigFloat::from_f64(x, p);
    let rad = |deg: f64, cc: &mut Consts| big(deg).mul(&cc.pi(p, rm), p, rm).div(&big(180.0), p, rm);
    let (phi1, phi2) = (rad(a.lat, cc), rad(b.lat, cc));
    let half = |x: BigFloat| x.div(&big(2.0), p, rm);
    let dphi = half(phi2.sub(&phi1, p, rm));
    let dlambda = half(rad(b.lon, cc).sub(&rad(a.lon, cc), p, rm));
    let s1 = dphi.sin(p, rm, cc);
    let s2 = dlambda.sin(p, rm, cc);
    let h = s1.mul(&s1, p, rm).add(
        &phi1.cos(p, rm, cc).mul(&phi2.cos(p, rm, cc), p, rm).mul(&s2.mul(&s2, p, rm), p, rm),
        p,
        rm,
    );
    big(2.0).mul(&big(6_371_009.0), p, rm).mul(&h.sqrt(p, rm).asin(p, rm, cc), p, rm)
}

fn haversine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut cc = Consts::new().expect("constants cache");
    let (p, rm) = (ORACLE_BITS, RoundingMode::ToEven);
    let mut worst: f64 = 0.0;
    for _ in 0..HAVERSINE_PAIRS {
        let mut pt = || GeoPoint { lat: rng.random_range(-90.0..=90.0), lon: rng.random_range(-180.0..=180.0) };
        let (a, b) = (pt(), pt());
        let want = haversine_oracle(&a, &b, &mut cc);
        let got = BigFloat::from_f64(haversine_distance(&a, &b), p);
        let rel = got.sub(&want, p, rm).abs().div(&want, p, rm);
        let rel: f64 = rel.to_string().parse().expect("decimal rendering");
        worst = worst.max(rel);
    }
    outcome(worst <= HAVERSINE_REL_TOL, format!("{HAVERSINE_PAIRS} pairs, max relative error {worst:.3e} (limit {HAVERSINE_REL_TOL:e})"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("solver correctness at live scale", solver_correctness),
        ("ground-state feasibility", ground_state_feasibility),
        ("qubo energy identity", energy_identity),
        ("time filter and exclusions", time_filter_and_exclusions),
        ("fallback totality", fallback_totality),
        ("anti-flapping", anti_flapping),
        ("service latency", service_latency),
        ("haversine", haversine),
    ];
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    for (name, f) in criteria {
        report(name, f());
    }
    let (overlap, validity) = simulated_day();
    report("overlap reduction", overlap);
    report("trip validity", validity);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
