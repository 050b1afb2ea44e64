use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::diff::is_continuation;
use super::events::{read_events, Event, EventLog, Ledger};
use super::projection::{project_location, speed_from_fixes, ProjectionError};
use super::trip::{TimedPoint, TripRecord, TripState};
use super::{LineSpec, ServiceConfig, ServiceError};
use crate::geo::{cumulative_lengths, haversine_distance, BoundingBox, GeoPoint};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::qubo::{build_tfo_qubo, Assignment, BqmWire};
use crate::routing::{candidate_routes, time_filter, CandidateRoute, NodeId, RoadGraph};
use crate::solver::{solve_with_fallback, SolveRequest, Solver};
use crate::traffic::TrafficState;

pub const STATIC_ROUTE_TAG: &str = "static";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFix {
    pub id: VehicleId,
    pub lat: f64,
    pub lon: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalePoint {
    pub vehicle_id: VehicleId,
    pub ts: f64,
    pub last_ts: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateAck {
    pub accepted: usize,
    pub stale: Vec<StalePoint>,
    pub auto_ended: Vec<TripId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRoute {
    pub vehicle_id: VehicleId,
    pub trip_id: TripId,
    pub route: CandidateRoute,
    pub changed: bool,
    pub eta_s: f64,
    /// The vehicle kept its previous route because solving or routing failed.
    pub fallback: bool,
    pub projected: Option<GeoPoint>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub t: f64,
    pub vehicles: Vec<VehicleRoute>,
    pub variables: usize,
    pub response_ms: f64,
    pub fallback: bool,
    pub solver: String,
    /// The time-filtered candidates the model was built from.
    #[serde(skip)]
    pub candidates: Vec<CandidateRoute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub vehicle_id: VehicleId,
    pub live: Option<TimedPoint>,
    pub projected: Option<GeoPoint>,
    pub off_route: bool,
    pub trip_id: Option<TripId>,
    pub line: Option<LineTag>,
    pub trip_state: Option<TripState>,
    pub route: Option<CandidateRoute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub t: f64,
    pub vehicles: Vec<VehicleSnapshot>,
    pub exclusions: Vec<Exclusion>,
    pub last_optimization: Option<f64>,
}

/// Work counters, used to check that updates never route or solve.
#[derive(Debug, Default)]
pub struct Counters {
    pub updates: AtomicU64,
    pub routing_calls: AtomicU64,
    pub solve_calls: AtomicU64,
    pub optimizations: AtomicU64,
    pub coalesced: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub updates: u64,
    pub routing_calls: u64,
    pub solve_calls: u64,
    pub optimizations: u64,
    pub coalesced: u64,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            updates: self.updates.load(Ordering::Relaxed),
            routing_calls: self.routing_calls.load(Ordering::Relaxed),
            solve_calls: self.solve_calls.load(Ordering::Relaxed),
            optimizations: self.optimizations.load(Ordering::Relaxed),
            coalesced: self.coalesced.load(Ordering::Relaxed),
        }
    }
}

struct State {
    ledger: Ledger,
    log: Option<EventLog>,
}

impl State {
    fn record(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.ledger.apply(&event);
        Ok(())
    }
}

struct Line {
    spec: LineSpec,
    static_route: CandidateRoute,
}

/// Clears the in-flight flag when an optimization finishes or unwinds.
struct FlightGuard<'a>(&'a AtomicBool);

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// What an optimization needs to know about one vehicle, copied out of the
/// state at the start.
struct PlanInput {
    vehicle: VehicleId,
    trip: TripId,
    destination: GeoPoint,
    route: CandidateRoute,
    live: Option<TimedPoint>,
    previous_fix: Option<TimedPoint>,
}

enum Plan {
    /// Keep the current route; nothing to optimize.
    Keep { note: Option<String>, fallback: bool, projected: Option<GeoPoint> },
    Optimize {
        candidates: Vec<CandidateRoute>,
        /// Current route nodes from the one behind the vehicle up to the
        /// origin node, when the origin lies on the current route.
        prefix: Option<Vec<NodeId>>,
        lead_s: f64,
        projected: Option<GeoPoint>,
    },
}

/// Serves one fleet. All mutations go through a single lock and the event
/// log; optimizations run outside the lock on a copy of the state taken at
/// their start, and at most one runs at a time.
pub struct FleetService {
    graph: Arc<RoadGraph>,
    lines: BTreeMap<LineTag, Line>,
    vehicles: Vec<VehicleId>,
    config: ServiceConfig,
    solver: Arc<dyn Solver>,
    traffic: RwLock<Arc<TrafficState>>,
    state: Mutex<State>,
    in_flight: AtomicBool,
    counters: Counters,
}

impl FleetService {
    /// Builds the service and pre-computes each line's static route: the
    /// fastest path with no traffic.
    pub fn new(
        graph: Arc<RoadGraph>,
        lines: Vec<LineSpec>,
        vehicles: Vec<VehicleId>,
        config: ServiceConfig,
        solver: Arc<dyn Solver>,
    ) -> Result<Self, ServiceError> {
        let free = TrafficState::free_flow(&graph);
        let mut table = BTreeMap::new();
        for spec in lines {
            spec.origin.validate()?;
            spec.destination.validate()?;
            let route = candidate_routes(&graph, &free, &VehicleId::new(""), &spec.origin, &spec.destination, 1, &[])
                .map_err(|source| ServiceError::Unroutable { line: spec.tag.clone(), source })?
                .remove(0);
            table.insert(spec.tag.clone(), Line { spec, static_route: route });
        }
        let mut vehicles = vehicles;
        vehicles.sort();
        vehicles.dedup();
        Ok(Self {
            traffic: RwLock::new(Arc::new(free)),
            graph,
            lines: table,
            vehicles,
            config,
            solver,
            state: Mutex::new(State { ledger: Ledger::default(), log: None }),
            in_flight: AtomicBool::new(false),
            counters: Counters::default(),
        })
    }

    /// Replays `dir/events.jsonl` if present and appends to it from now on.
    pub fn with_event_log(self, dir: &Path) -> Result<Self, ServiceError> {
        let events = read_events(dir)?;
        let log = EventLog::open(dir)?;
        {
            let mut st = self.lock();
            st.ledger = Ledger::replay(&events);
            st.log = Some(log);
        }
        Ok(self)
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn graph(&self) -> &Arc<RoadGraph> {
        &self.graph
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn solver_name(&self) -> String {
        self.solver.name().to_string()
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.counters.snapshot()
    }

    pub fn vehicles(&self) -> &[VehicleId] {
        &self.vehicles
    }

    pub fn lines(&self) -> Vec<LineSpec> {
        self.lines.values().map(|l| l.spec.clone()).collect()
    }

    pub fn static_route(&self, line: &LineTag) -> Option<&CandidateRoute> {
        self.lines.get(line).map(|l| &l.static_route)
    }

    /// Replaces the traffic picture used by subsequent optimizations.
    pub fn publish_traffic(&self, traffic: Arc<TrafficState>) {
        *self.traffic.write().unwrap_or_else(|e| e.into_inner()) = traffic;
    }

    fn known(&self, v: &VehicleId) -> Result<(), ServiceError> {
        if self.vehicles.binary_search(v).is_ok() {
            Ok(())
        } else {
            Err(ServiceError::UnknownVehicle(v.clone()))
        }
    }

    /// Records live locations. An unknown vehicle rejects the whole batch;
    /// a point older than the vehicle's last one is dropped and reported.
    /// Trips within the auto-end radius of their destination are ended.
    pub fn handle_update(&self, batch: &[LocationFix]) -> Result<UpdateAck, ServiceError> {
        for fix in batch {
            self.known(&fix.id)?;
            GeoPoint { lat: fix.lat, lon: fix.lon }.validate()?;
        }
        self.counters.updates.fetch_add(1, Ordering::Relaxed);
        let mut st = self.lock();
        let mut ack = UpdateAck::default();
        for fix in batch {
            if let Some(last) = st.ledger.live.get(&fix.id) {
                if fix.ts < last.t {
                    tracing::warn!(vehicle = %fix.id, ts = fix.ts, last = last.t, "stale location dropped");
                    ack.stale.push(StalePoint { vehicle_id: fix.id.clone(), ts: fix.ts, last_ts: last.t });
                    continue;
                }
            }
            let trip_id = st.ledger.active.get(&fix.id).copied();
            st.record(Event::Location { t: fix.ts, vehicle_id: fix.id.clone(), trip_id, lat: fix.lat, lon: fix.lon })?;
            ack.accepted += 1;
            if let Some(id) = self.auto_end_locked(&mut st, &fix.id, fix.ts)? {
                ack.auto_ended.push(id);
            }
        }
        Ok(ack)
    }

    fn auto_end_locked(&self, st: &mut State, vehicle: &VehicleId, now: f64) -> Result<Option<TripId>, ServiceError> {
        let Some(trip) = st.ledger.active_trip(vehicle) else { return Ok(None) };
        let Some(live) = st.ledger.live.get(vehicle) else { return Ok(None) };
        if haversine_distance(&live.point(), &trip.destination) > self.config.auto_end_radius_m {
            return Ok(None);
        }
        let id = trip.trip_id;
        st.record(Event::TripEnded { t: now, trip_id: id, state: TripState::EndedAuto })?;
        Ok(Some(id))
    }

    /// Ends the vehicle's active trip if its live location is within the
    /// auto-end radius of the destination.
    pub fn auto_end_check(&self, vehicle: &VehicleId, now: f64) -> Result<Option<TripRecord>, ServiceError> {
        self.known(vehicle)?;
        let mut st = self.lock();
        Ok(self.auto_end_locked(&mut st, vehicle, now)?.map(|id| st.ledger.trips[&id].clone()))
    }

    /// Starts a trip on `line` and assigns the line's static route.
    pub fn start_trip(&self, vehicle: &VehicleId, line: &LineTag, now: f64) -> Result<TripRecord, ServiceError> {
        self.known(vehicle)?;
        let l = self.lines.get(line).ok_or_else(|| ServiceError::UnknownLine(line.clone()))?;
        let mut st = self.lock();
        if st.ledger.active.contains_key(vehicle) {
            return Err(ServiceError::VehicleBusy(vehicle.clone()));
        }
        let trip_id = TripId(st.ledger.next_trip);
        st.record(Event::TripStarted {
            t: now,
            trip_id,
            vehicle_id: vehicle.clone(),
            line: line.clone(),
            origin: l.spec.origin,
            destination: l.spec.destination,
        })?;
        let mut route = l.static_route.clone();
        route.vehicle_id = vehicle.clone();
        st.record(Event::RouteAssigned { t: now, trip_id, route, solver: STATIC_ROUTE_TAG.into(), fallback: false })?;
        Ok(st.ledger.trips[&trip_id].clone())
    }

    /// Ends an active trip, manually or as an automatic arrival.
    pub fn end_trip(&self, trip: TripId, manual: bool, now: f64) -> Result<TripRecord, ServiceError> {
        let mut st = self.lock();
        let rec = st.ledger.trips.get(&trip).ok_or(ServiceError::UnknownTrip(trip))?;
        if rec.state != TripState::Active {
            return Err(ServiceError::NoActiveTrip(trip));
        }
        let state = if manual { TripState::EndedManual } else { TripState::EndedAuto };
        st.record(Event::TripEnded { t: now, trip_id: trip, state })?;
        Ok(st.ledger.trips[&trip].clone())
    }

    pub fn add_exclusion(&self, bbox: BoundingBox) -> Result<Exclusion, ServiceError> {
        bbox.validate()?;
        let mut st = self.lock();
        let id = st.ledger.next_exclusion;
        st.record(Event::ExclusionAdded { id, bbox })?;
        Ok(Exclusion { id, bbox })
    }

    pub fn remove_exclusion(&self, id: u64) -> Result<(), ServiceError> {
        let mut st = self.lock();
        if !st.ledger.exclusions.contains_key(&id) {
            return Err(ServiceError::UnknownExclusion(id));
        }
        st.record(Event::ExclusionRemoved { id })
    }

    pub fn exclusions(&self) -> Vec<Exclusion> {
        self.lock().ledger.exclusions.iter().map(|(&id, &bbox)| Exclusion { id, bbox }).collect()
    }

    pub fn trips(&self) -> Vec<TripRecord> {
        self.lock().ledger.trips.values().cloned().collect()
    }

    pub fn trip(&self, id: TripId) -> Option<TripRecord> {
        self.lock().ledger.trips.get(&id).cloned()
    }

    pub fn active_trip(&self, vehicle: &VehicleId) -> Option<TripRecord> {
        self.lock().ledger.active_trip(vehicle).cloned()
    }

    /// A copy of the persisted state.
    pub fn ledger(&self) -> Ledger {
        self.lock().ledger.clone()
    }

    fn speed_of(&self, input: &PlanInput) -> f64 {
        let measured = match (input.previous_fix, input.live) {
            (Some(a), Some(b)) => speed_from_fixes((a.t, a.point()), (b.t, b.point())),
            _ => None,
        };
        measured.unwrap_or_else(|| {
            let len: f64 = input.route.links.iter().map(|&l| self.graph.link(l).length_m).sum();
            if input.route.expected_travel_time_s > 0.0 {
                len / input.route.expected_travel_time_s
            } else {
                0.0
            }
        })
    }

    pub fn snapshot(&self, now: f64) -> FleetSnapshot {
        let st = self.lock();
        let l = &st.ledger;
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                let trip = l.active_trip(v);
                let live = l.live.get(v).copied();
                let route = trip.and_then(|t| t.current_route()).cloned();
                let (projected, off_route) = match (&route, live, trip) {
                    (Some(r), Some(p), Some(t)) => {
                        let input = self.plan_input(t, r.clone(), live);
                        match project_location(
                            &r.polyline,
                            &p.point(),
                            self.speed_of(&input),
                            self.config.projection_horizon_s,
                            self.config.off_route_tolerance_m,
                        ) {
                            Ok(pr) => (Some(pr.point), false),
                            Err(_) => (None, true),
                        }
                    }
                    _ => (None, false),
                };
                VehicleSnapshot {
                    vehicle_id: v.clone(),
                    live,
                    projected,
                    off_route,
                    trip_id: trip.map(|t| t.trip_id),
                    line: trip.map(|t| t.line.clone()),
                    trip_state: trip.map(|t| t.state),
                    route,
                }
            })
            .collect();
        FleetSnapshot {
            t: now,
            vehicles,
            exclusions: l.exclusions.iter().map(|(&id, &bbox)| Exclusion { id, bbox }).collect(),
            last_optimization: l.last_optimization,
        }
    }

    fn plan_input(&self, trip: &TripRecord, route: CandidateRoute, live: Option<TimedPoint>) -> PlanInput {
        // the fix before the live one, if it belongs to this trip
        let previous_fix = match trip.history.as_slice() {
            [.., a, b] if Some(*b) == live => Some(*a),
            [.., b] if Some(*b) != live => Some(*b),
            _ => None,
        };
        PlanInput {
            vehicle: trip.vehicle_id.clone(),
            trip: trip.trip_id,
            destination: trip.destination,
            route,
            live,
            previous_fix,
        }
    }

    /// Re-plans every vehicle with an active trip.
    ///
    /// Each vehicle's origin is its location projected along its current
    /// route, or the override given for it. Candidates are searched from
    /// the first route node at or past that origin, time-filtered, and
    /// jointly assigned through the QUBO. A vehicle whose chosen candidate
    /// continues its current route keeps the current route unchanged. If
    /// the solver fails, every vehicle keeps its current route.
    pub fn handle_optimize(
        &self,
        now: f64,
        overrides: &BTreeMap<VehicleId, GeoPoint>,
    ) -> Result<OptimizeOutcome, ServiceError> {
        if self.in_flight.swap(true, Ordering::AcqRel) {
            self.counters.coalesced.fetch_add(1, Ordering::Relaxed);
            return Err(ServiceError::OptimizationInFlight);
        }
        let _guard = FlightGuard(&self.in_flight);
        let started = Instant::now();
        for v in overrides.keys() {
            self.known(v)?;
        }

        let (inputs, exclusions) = {
            let st = self.lock();
            let l = &st.ledger;
            let inputs: Vec<PlanInput> = l
                .active
                .values()
                .filter_map(|id| l.trips.get(id))
                .filter_map(|t| t.current_route().map(|r| self.plan_input(t, r.clone(), l.live.get(&t.vehicle_id).copied())))
                .collect();
            (inputs, l.exclusions.values().copied().collect::<Vec<_>>())
        };
        if inputs.is_empty() {
            return Err(ServiceError::NoActiveTrips);
        }
        let traffic = Arc::clone(&self.traffic.read().unwrap_or_else(|e| e.into_inner()));

        let plans: Vec<Plan> =
            inputs.iter().map(|input| self.plan_vehicle(input, overrides.get(&input.vehicle), &traffic, &exclusions)).collect();

        let mut all = Vec::new();
        for p in &plans {
            if let Plan::Optimize { candidates, .. } = p {
                all.extend(candidates.iter().cloned());
            }
        }

        let mut chosen: HashMap<VehicleId, usize> = HashMap::new();
        let mut solve_fallback = false;
        let mut solver_tag = self.solver.name().to_string();
        let mut variables = 0;
        let mut problem_record = None;
        let mut solve_note = None;
        if !all.is_empty() {
            match build_tfo_qubo(&all, &self.config.qubo) {
                Ok(problem) => {
                    variables = problem.varmap.len();
                    // feasible stand-in: the candidate continuing each
                    // current route, else the fastest
                    let mut warm = vec![0u8; variables];
                    let mut fallback_routes = BTreeMap::new();
                    for (vehicle, vars) in problem.varmap.groups() {
                        let input = inputs.iter().find(|i| i.vehicle == vehicle).expect("vehicle has an input");
                        let pick = vars
                            .iter()
                            .copied()
                            .find(|&i| is_continuation(&input.route, &problem.routes[i]))
                            .unwrap_or(vars[0]);
                        warm[pick] = 1;
                        fallback_routes.insert(vehicle, problem.varmap.entry(pick).1);
                    }
                    let fallback = Assignment { routes: fallback_routes, energy: problem.bqm.energy(&warm), feasible: true };
                    let mut req = SolveRequest::new(problem.bqm.clone(), self.config.solver_budget_ms, self.config.seed);
                    if self.config.warm_start {
                        req = req.with_initial(warm);
                    }
                    self.counters.solve_calls.fetch_add(1, Ordering::Relaxed);
                    let out = solve_with_fallback(self.solver.as_ref(), &req, &problem.varmap, &fallback);
                    if let Some(r) = &out.result {
                        solver_tag = r.solver.clone();
                    }
                    solve_fallback = out.fallback_used;
                    solve_note = out.error.clone();
                    if !out.fallback_used {
                        chosen = out.assignment.routes.into_iter().collect();
                    }
                    if self.config.persist_problems {
                        let sample = out.result.as_ref().map(|r| r.sample.clone());
                        problem_record = Some((BqmWire::encode(&problem.bqm, Some(&problem.varmap)), sample));
                    }
                    if let Some(e) = &out.error {
                        tracing::warn!(error = %e, "optimization fell back to previous routes");
                    }
                }
                Err(e) => {
                    solve_fallback = true;
                    solve_note = Some(e.to_string());
                }
            }
        }

        let mut vehicles = Vec::with_capacity(inputs.len());
        for (input, plan) in inputs.iter().zip(plans) {
            let keep = |note: Option<String>, fallback: bool, projected: Option<GeoPoint>| VehicleRoute {
                vehicle_id: input.vehicle.clone(),
                trip_id: input.trip,
                route: input.route.clone(),
                changed: false,
                eta_s: self.remaining_time(input, &traffic),
                fallback,
                projected,
                note,
            };
            let vr = match plan {
                Plan::Keep { note, fallback, projected } => keep(note, fallback, projected),
                Plan::Optimize { candidates, prefix, lead_s, projected } => {
                    let pick = chosen.get(&input.vehicle).and_then(|j| candidates.iter().find(|c| c.route_index == *j));
                    match pick {
                        None => keep(solve_note.clone(), true, projected),
                        Some(c) if is_continuation(&input.route, c) => VehicleRoute {
                            eta_s: lead_s + c.expected_travel_time_s,
                            ..keep(None, false, projected)
                        },
                        Some(c) => {
                            let route = match &prefix {
                                Some(p) => splice(&self.graph, &traffic, p, c).unwrap_or_else(|| c.clone()),
                                None => c.clone(),
                            };
                            VehicleRoute {
                                vehicle_id: input.vehicle.clone(),
                                trip_id: input.trip,
                                route,
                                changed: true,
                                eta_s: lead_s + c.expected_travel_time_s,
                                fallback: false,
                                projected,
                                note: None,
                            }
                        }
                    }
                }
            };
            vehicles.push(vr);
        }

        let response_ms = started.elapsed().as_secs_f64() * 1e3;
        {
            let mut st = self.lock();
            for vr in &vehicles {
                // the trip may have ended while we were solving
                if st.ledger.active.get(&vr.vehicle_id) != Some(&vr.trip_id) {
                    continue;
                }
                st.record(Event::RouteAssigned {
                    t: now,
                    trip_id: vr.trip_id,
                    route: vr.route.clone(),
                    solver: solver_tag.clone(),
                    fallback: vr.fallback,
                })?;
            }
            let (problem, sample) = problem_record.unzip();
            st.record(Event::Optimization {
                t: now,
                variables,
                response_ms,
                fallback: solve_fallback,
                solver: solver_tag.clone(),
                problem,
                sample: sample.flatten(),
            })?;
        }
        self.counters.optimizations.fetch_add(1, Ordering::Relaxed);
        Ok(OptimizeOutcome {
            t: now,
            vehicles,
            variables,
            response_ms,
            fallback: solve_fallback,
            solver: solver_tag,
            candidates: all,
        })
    }

    fn remaining_time(&self, input: &PlanInput, traffic: &TrafficState) -> f64 {
        let r = &input.route;
        let Some(live) = input.live else { return r.expected_travel_time_s };
        let cum = cumulative_lengths(&r.polyline);
        let near = crate::geo::nearest_on_polyline(&r.polyline, &cum, &live.point());
        let seg = near.segment.min(r.links.len().saturating_sub(1));
        let mut t = 0.0;
        for (k, &l) in r.links.iter().enumerate().skip(seg) {
            let full = traffic.congested_time(l);
            if k == seg {
                let len = cum[k + 1] - cum[k];
                let left = if len > 0.0 { (cum[k + 1] - near.arc_length) / len } else { 0.0 };
                t += full * left.clamp(0.0, 1.0);
            } else {
                t += full;
            }
        }
        t
    }

    fn plan_vehicle(
        &self,
        input: &PlanInput,
        override_origin: Option<&GeoPoint>,
        traffic: &TrafficState,
        exclusions: &[BoundingBox],
    ) -> Plan {
        let route = &input.route;
        let cum = cumulative_lengths(&route.polyline);
        let last = route.node_path.len() - 1;

        // (origin node index on the current route, if any; origin point)
        let (on_route, origin, lead_s, projected) = match (override_origin, input.live) {
            (Some(o), _) => match self.graph.nearest_node(o) {
                Some((idx, _)) => {
                    let id = self.graph.node_id(idx);
                    let k = route.node_path.iter().position(|&n| n == id);
                    (k.map(|k| (0, k)), self.graph.point(idx), 0.0, Some(*o))
                }
                None => return Plan::Keep { note: Some("empty road graph".into()), fallback: true, projected: None },
            },
            (None, live) => {
                let here = live.map_or(route.polyline[0], |p| p.point());
                let speed = self.speed_of(input);
                match project_location(
                    &route.polyline,
                    &here,
                    speed,
                    self.config.projection_horizon_s,
                    self.config.off_route_tolerance_m,
                ) {
                    Ok(p) => {
                        let k = cum.partition_point(|&c| c < p.arc_length_m - 1e-6).min(last);
                        let seg = cum.partition_point(|&c| c <= p.live_arc_length_m).saturating_sub(1).min(k);
                        let lead: f64 = route.links[seg..k].iter().map(|&l| traffic.congested_time(l)).sum();
                        (Some((seg, k)), route.polyline[k], lead, Some(p.point))
                    }
                    Err(ProjectionError::OffRoute { distance_m }) => {
                        tracing::warn!(vehicle = %input.vehicle, distance_m, "off route, optimizing from live location");
                        (None, here, 0.0, None)
                    }
                    Err(e) => return Plan::Keep { note: Some(e.to_string()), fallback: true, projected: None },
                }
            }
        };
        if let Some((_, k)) = on_route {
            if k == last {
                return Plan::Keep { note: None, fallback: false, projected };
            }
        }
        self.counters.routing_calls.fetch_add(1, Ordering::Relaxed);
        let found = candidate_routes(
            &self.graph,
            traffic,
            &input.vehicle,
            &origin,
            &input.destination,
            self.config.route_count,
            exclusions,
        );
        match found {
            Ok(c) => Plan::Optimize {
                candidates: time_filter(c, self.config.time_slack_s),
                prefix: on_route.map(|(s, k)| route.node_path[s..=k].to_vec()),
                lead_s,
                projected,
            },
            Err(e) => Plan::Keep { note: Some(e.to_string()), fallback: true, projected },
        }
    }
}

/// Joins `prefix` (ending at the candidate's first node) and `candidate`,
/// cutting out any loop where the candidate revisits a prefix node.
fn splice(graph: &RoadGraph, traffic: &TrafficState, prefix: &[NodeId], candidate: &CandidateRoute) -> Option<CandidateRoute> {
    let mut nodes: Vec<NodeId> = Vec::with_capacity(prefix.len() + candidate.node_path.len());
    for &n in prefix.iter().chain(candidate.node_path.iter().skip(1)) {
        if let Some(pos) = nodes.iter().position(|&m| m == n) {
            nodes.truncate(pos + 1);
        } else {
            nodes.push(n);
        }
    }
    CandidateRoute::from_node_path(graph, traffic, candidate.vehicle_id.clone(), candidate.route_index, &nodes).ok()
}
