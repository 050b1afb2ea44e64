//! A simulated service day: the traffic simulator drives the fleet service
//! the way the drivers' phones and the dispatcher would.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LineTag, TripId, VehicleId};
use crate::scenario::{Scenario, ScenarioError};
use crate::service::{FleetService, LocationFix, ServiceConfig, ServiceError};
use crate::solver::Solver;
use crate::traffic::{SimClock, SimVehicle, Simulator, TrafficState, VehicleState};

/// Share of trips that drivers end by hand before arriving.
pub const DEFAULT_ANOMALY_RATE: f64 = 0.1;
/// How long after the service window unfinished trips may keep running.
pub const DRAIN_LIMIT_S: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum DayError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("telemetry: {0}")]
    Io(#[from] std::io::Error),
}

pub struct DayConfig {
    pub service: ServiceConfig,
    pub solver: Arc<dyn Solver>,
    pub anomaly_rate: f64,
    pub seed: u64,
    pub tick_s: f64,
    pub event_log: Option<PathBuf>,
    pub telemetry: Option<PathBuf>,
}

impl DayConfig {
    pub fn new(solver: Arc<dyn Solver>) -> Self {
        Self {
            service: ServiceConfig::default(),
            solver,
            anomaly_rate: DEFAULT_ANOMALY_RATE,
            seed: 0,
            tick_s: 1.0,
            event_log: None,
            telemetry: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub trips_started: usize,
    pub trips_auto_ended: usize,
    pub trips_ended_manually: usize,
    pub trips_unfinished: usize,
    pub departures_missed: usize,
    pub optimizations: usize,
    pub fallback_rounds: usize,
    /// Rounds where some bus on a trip got no route back.
    pub rounds_missing_routes: usize,
    pub routes_changed: usize,
    pub reassign_failures: usize,
    pub end_s: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Anomaly {
    /// Ended after this many location updates.
    Truncated(usize),
    /// Ended once the bus is this far along its route.
    Abandoned(f64),
}

struct Dispatch {
    tag: LineTag,
    next_s: f64,
    last_s: f64,
    headway_s: f64,
    origin: crate::geo::GeoPoint,
}

struct Running {
    trip: TripId,
    anomaly: Option<Anomaly>,
    updates: usize,
}

pub struct DayRun {
    pub service: FleetService,
    pub report: DayReport,
}

/// Runs a full service day of `scenario`.
///
/// Every tick: due departures start trips on idle buses of their line, the
/// simulator advances, every update interval all buses report their
/// position, and every optimize interval the service re-routes the fleet
/// against the simulator's current traffic. Buses whose trip ends are
/// returned to their line's first stop.
pub fn run_day(scenario: &Scenario, config: DayConfig) -> Result<DayRun, DayError> {
    let started = Instant::now();
    scenario.validate()?;
    let graph = Arc::new(scenario.road_graph()?);
    let mut service_cfg = config.service.clone();
    if let Some(k) = scenario.route_count {
        service_cfg.route_count = k;
    }
    let update_every = service_cfg.update_interval_s;
    let optimize_every = service_cfg.optimize_interval_s;
    let mut service =
        FleetService::new(Arc::clone(&graph), scenario.line_specs(), scenario.vehicle_ids(), service_cfg, config.solver)?;
    if let Some(dir) = &config.event_log {
        service = service.with_event_log(dir)?;
    }

    let mut dispatch: Vec<Dispatch> = scenario
        .lines
        .iter()
        .map(|l| Dispatch {
            tag: l.tag.clone(),
            next_s: l.first_departure_s,
            last_s: l.last_departure_s,
            headway_s: l.headway_s,
            origin: l.origin,
        })
        .collect();
    let origin_of: BTreeMap<LineTag, crate::geo::GeoPoint> = dispatch.iter().map(|d| (d.tag.clone(), d.origin)).collect();
    let vehicles = scenario
        .vehicles
        .iter()
        .map(|v| SimVehicle::new(v.id.clone(), v.line.clone(), origin_of[&v.line]))
        .collect();
    let start = scenario.service_start_s;
    let mut traffic = TrafficState::free_flow(&graph);
    traffic.set_background_ratio(&graph, scenario.load_ratio_at(start));
    let mut sim = Simulator::new(Arc::clone(&graph), traffic, vehicles, SimClock::new(start, config.tick_s));

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ config.seed.rotate_left(32));
    let mut telemetry = config.telemetry.as_ref().map(|p| File::create(p).map(BufWriter::new)).transpose()?;
    let mut running: BTreeMap<VehicleId, Running> = BTreeMap::new();
    let mut report = DayReport::default();
    let mut hour = (start / 3600.0).floor();
    let ticks_per = |interval: f64| ((interval / config.tick_s).round() as u64).max(1);
    let (update_ticks, optimize_ticks) = (ticks_per(update_every), ticks_per(optimize_every));
    let mut tick: u64 = 0;

    loop {
        let now = sim.clock.now_s;
        let in_service = now < scenario.service_end_s;
        if !in_service && (running.is_empty() || now >= scenario.service_end_s + DRAIN_LIMIT_S) {
            break;
        }
        if (now / 3600.0).floor() != hour {
            hour = (now / 3600.0).floor();
            sim.traffic.set_background_ratio(&graph, scenario.load_ratio_at(now));
        }

        for d in &mut dispatch {
            if !in_service || now < d.next_s || d.next_s > d.last_s {
                continue;
            }
            let idle = sim
                .vehicles
                .iter()
                .find(|v| v.line == d.tag && v.state == VehicleState::Idle && !running.contains_key(&v.id))
                .map(|v| v.id.clone());
            match idle {
                Some(vid) => {
                    let trip = service.start_trip(&vid, &d.tag, now)?;
                    let route = trip.current_route().expect("new trips carry the static route").clone();
                    sim.start_vehicle(&vid, route).expect("known vehicle");
                    service.handle_update(&[fix(&sim, &vid, now)])?;
                    let anomaly = rng.random_bool(config.anomaly_rate).then(|| {
                        if rng.random_bool(0.5) {
                            Anomaly::Truncated(rng.random_range(1..=3))
                        } else {
                            Anomaly::Abandoned(rng.random_range(0.2..0.7))
                        }
                    });
                    running.insert(vid, Running { trip: trip.trip_id, anomaly, updates: 1 });
                    report.trips_started += 1;
                    d.next_s += d.headway_s;
                }
                None if now >= d.next_s + d.headway_s => {
                    // the bus for this slot never showed up
                    report.departures_missed += 1;
                    d.next_s += d.headway_s;
                }
                None => {}
            }
        }

        sim.step();
        tick += 1;
        let now = sim.clock.now_s;

        if let Some(w) = telemetry.as_mut() {
            for rec in sim.telemetry() {
                serde_json::to_writer(&mut *w, &rec).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
        }

        if tick.is_multiple_of(update_ticks) {
            let batch: Vec<LocationFix> = sim.vehicles.iter().map(|v| fix(&sim, &v.id, now)).collect();
            let ack = service.handle_update(&batch)?;
            for trip in ack.auto_ended {
                if let Some((vid, _)) = running.iter().find(|(_, r)| r.trip == trip).map(|(v, r)| (v.clone(), r.trip)) {
                    running.remove(&vid);
                    report.trips_auto_ended += 1;
                    park(&mut sim, &vid, &origin_of);
                }
            }
            let mut abandon = Vec::new();
            for (vid, r) in running.iter_mut() {
                r.updates += 1;
                let v = sim.vehicle(vid).expect("known vehicle");
                let quit = match r.anomaly {
                    Some(Anomaly::Truncated(n)) => r.updates > n,
                    Some(Anomaly::Abandoned(f)) => v.progress_m() >= f * v.route_length_m(),
                    None => false,
                };
                if quit {
                    abandon.push((vid.clone(), r.trip));
                }
            }
            for (vid, trip) in abandon {
                service.end_trip(trip, true, now)?;
                running.remove(&vid);
                report.trips_ended_manually += 1;
                park(&mut sim, &vid, &origin_of);
            }
        }

        if tick.is_multiple_of(optimize_ticks) && !running.is_empty() {
            service.publish_traffic(Arc::new(sim.traffic.clone()));
            match service.handle_optimize(now, &BTreeMap::new()) {
                Ok(out) => {
                    report.optimizations += 1;
                    if out.fallback {
                        report.fallback_rounds += 1;
                    }
                    if running.keys().any(|v| !out.vehicles.iter().any(|r| &r.vehicle_id == v)) {
                        report.rounds_missing_routes += 1;
                    }
                    for vr in out.vehicles.into_iter().filter(|v| v.changed) {
                        report.routes_changed += 1;
                        if let Err(e) = sim.reassign(&vr.vehicle_id, vr.route, vr.projected) {
                            tracing::warn!(vehicle = %vr.vehicle_id, error = %e, "route not applied");
                            report.reassign_failures += 1;
                        }
                    }
                }
                Err(ServiceError::NoActiveTrips) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    report.trips_unfinished = running.len();
    report.end_s = sim.clock.now_s;
    report.wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
    if let Some(mut w) = telemetry {
        w.flush()?;
    }
    Ok(DayRun { service, report })
}

fn fix(sim: &Simulator, id: &VehicleId, now: f64) -> LocationFix {
    let p = sim.vehicle(id).expect("known vehicle").position();
    LocationFix { id: id.clone(), lat: p.lat, lon: p.lon, ts: now }
}

fn park(sim: &mut Simulator, id: &VehicleId, origins: &BTreeMap<LineTag, crate::geo::GeoPoint>) {
    let line = sim.vehicle(id).expect("known vehicle").line.clone();
    sim.park(id, origins[&line]).expect("known vehicle");
}
