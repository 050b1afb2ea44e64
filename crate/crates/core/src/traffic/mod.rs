//! Congestion model and the discrete-time fleet simulator.

mod congestion;
mod sim;

pub use congestion::{CongestionModel, TrafficState};
pub use sim::{
    SimClock, SimError, SimVehicle, Simulator, TelemetryRecord, VehicleState, REASSIGN_TOLERANCE_M,
};
