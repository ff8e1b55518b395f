//! Deterministic discrete-time underwater world.
//!
//! All physical constants are scenario parameters. The defaults are synthetic
//! values chosen for a small harbour-sized arena, not measured vehicle data.

mod sense;
mod transfer;
mod vlc;
mod world;

pub use sense::{sense, Detection, SensorReading};
pub use transfer::{
    transfer_knowledge, HandoffTask, Transfer, TransferError, TransferPacket, TransferProgress,
    TransferResult,
};
pub use vlc::{vlc_link, LinkState, VlcLinkStatus};
pub use world::{Command, RobotState, SimEvent, Station, World, WorldObject};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Step length, s.
    pub dt: f64,
    /// m/s.
    pub max_speed: f64,
    /// %/s while undocked.
    pub drain_idle: f64,
    /// %/m travelled.
    pub drain_move: f64,
    /// %/s while docked.
    pub recharge: f64,
    pub sensor_range: f64,
    pub fov_deg: f64,
    pub vlc_range: f64,
    pub vlc_half_angle_deg: f64,
    /// Bytes per second at link quality 1.
    pub vlc_base_rate: f64,
    /// Radius of the sphere each object occupies for line-of-sight checks, m.
    pub object_radius: f64,
    /// Standard deviation of measured object positions, m.
    pub position_noise: f64,
    /// Battery level that raises `LowBattery`, %.
    pub battery_floor: f64,
    /// Maximum robot-to-station distance for docking, m.
    pub dock_distance: f64,
    /// Distance in front of the station where a robot that starts docked rests, m.
    pub dock_offset: f64,
    /// Maximum robot-to-object distance for grasping, m.
    pub grasp_distance: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.1,
            max_speed: 1.0,
            drain_idle: 0.01,
            drain_move: 0.05,
            recharge: 1.0,
            sensor_range: 8.0,
            fov_deg: 90.0,
            vlc_range: 10.0,
            vlc_half_angle_deg: 30.0,
            vlc_base_rate: 1000.0,
            object_radius: 0.5,
            position_noise: 0.0,
            battery_floor: 20.0,
            dock_distance: 1.0,
            dock_offset: 0.5,
            grasp_distance: 0.5,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("max_speed", self.max_speed),
            ("sensor_range", self.sensor_range),
            ("fov_deg", self.fov_deg),
            ("vlc_range", self.vlc_range),
            ("vlc_half_angle_deg", self.vlc_half_angle_deg),
            ("vlc_base_rate", self.vlc_base_rate),
            ("dock_distance", self.dock_distance),
            ("grasp_distance", self.grasp_distance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::BadParameter(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("drain_idle", self.drain_idle),
            ("drain_move", self.drain_move),
            ("recharge", self.recharge),
            ("object_radius", self.object_radius),
            ("position_noise", self.position_noise),
            ("dock_offset", self.dock_offset),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::BadParameter(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=100.0).contains(&self.battery_floor) {
            return Err(SimError::BadParameter("battery_floor must be within [0, 100]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid command for `{robot}`: {reason}")]
    InvalidCommand { robot: String, reason: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("`{0}` has no VLC transceiver")]
    NotEquipped(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}
