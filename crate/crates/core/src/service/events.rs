//! Append-only JSON-lines event log and the state it folds into.
//!
//! The live service mutates its state only by applying events, so replaying
//! a log rebuilds exactly what the service held.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trip::{RouteRecord, TimedPoint, TripRecord, TripState};
use crate::geo::{BoundingBox, GeoPoint};
use crate::ids::{LineTag, TripId, VehicleId};
use crate::qubo::BqmWire;
use crate::routing::CandidateRoute;

pub const EVENT_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    TripStarted {
        t: f64,
        trip_id: TripId,
        vehicle_id: VehicleId,
        line: LineTag,
        origin: GeoPoint,
        destination: GeoPoint,
    },
    Location {
        t: f64,
        vehicle_id: VehicleId,
        trip_id: Option<TripId>,
        lat: f64,
        lon: f64,
    },
    RouteAssigned {
        t: f64,
        trip_id: TripId,
        route: CandidateRoute,
        solver: String,
        fallback: bool,
    },
    TripEnded {
        t: f64,
        trip_id: TripId,
        state: TripState,
    },
    ExclusionAdded {
        id: u64,
        bbox: BoundingBox,
    },
    ExclusionRemoved {
        id: u64,
    },
    Optimization {
        t: f64,
        variables: usize,
        response_ms: f64,
        fallback: bool,
        solver: String,
        problem: Option<BqmWire>,
        sample: Option<Vec<u8>>,
    },
}

/// Everything the service persists, as a fold over events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub trips: BTreeMap<TripId, TripRecord>,
    pub active: BTreeMap<VehicleId, TripId>,
    pub live: BTreeMap<VehicleId, TimedPoint>,
    pub exclusions: BTreeMap<u64, BoundingBox>,
    pub last_optimization: Option<f64>,
    pub next_trip: u64,
    pub next_exclusion: u64,
}

impl Ledger {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut l = Ledger::default();
        for e in events {
            l.apply(e);
        }
        l
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::TripStarted { t, trip_id, vehicle_id, line, origin, destination } => {
                self.trips.insert(
                    *trip_id,
                    TripRecord {
                        trip_id: *trip_id,
                        vehicle_id: vehicle_id.clone(),
                        line: line.clone(),
                        origin: *origin,
                        destination: *destination,
                        state: TripState::Active,
                        start_s: Some(*t),
                        end_s: None,
                        history: Vec::new(),
                        routes: Vec::new(),
                    },
                );
                self.active.insert(vehicle_id.clone(), *trip_id);
                self.next_trip = self.next_trip.max(trip_id.0 + 1);
            }
            Event::Location { t, vehicle_id, trip_id, lat, lon } => {
                let p = TimedPoint { t: *t, lat: *lat, lon: *lon };
                self.live.insert(vehicle_id.clone(), p);
                if let Some(trip) = trip_id.and_then(|id| self.trips.get_mut(&id)) {
                    trip.history.push(p);
                }
            }
            Event::RouteAssigned { t, trip_id, route, solver, fallback } => {
                if let Some(trip) = self.trips.get_mut(trip_id) {
                    trip.routes.push(RouteRecord { t: *t, route: route.clone(), solver: solver.clone(), fallback: *fallback });
                }
            }
            Event::TripEnded { t, trip_id, state } => {
                if let Some(trip) = self.trips.get_mut(trip_id) {
                    trip.state = *state;
                    trip.end_s = Some(*t);
                    if self.active.get(&trip.vehicle_id) == Some(trip_id) {
                        self.active.remove(&trip.vehicle_id);
                    }
                }
            }
            Event::ExclusionAdded { id, bbox } => {
                self.exclusions.insert(*id, *bbox);
                self.next_exclusion = self.next_exclusion.max(id + 1);
            }
            Event::ExclusionRemoved { id } => {
                self.exclusions.remove(id);
            }
            Event::Optimization { t, .. } => {
                self.last_optimization = Some(*t);
            }
        }
    }

    pub fn active_trip(&self, vehicle: &VehicleId) -> Option<&TripRecord> {
        self.active.get(vehicle).and_then(|id| self.trips.get(id))
    }
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens `dir/events.jsonl` for appending, creating it if needed.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(EVENT_LOG_FILE);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)
    }
}

/// Reads every event in `dir/events.jsonl`, or from `path` directly if it
/// is a file. A missing log reads as empty.
pub fn read_events(path: &Path) -> io::Result<Vec<Event>> {
    let file_path = if path.is_dir() { path.join(EVENT_LOG_FILE) } else { path.to_path_buf() };
    let file = match File::open(&file_path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|err| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", n + 1)))?;
        events.push(e);
    }
    Ok(events)
}
