//! Discrete-event Monte Carlo model of 5G NR radio latency for V2N2V traffic.
//!
//! A packet travels UL from a vehicle to the gNB and back DL to one or more
//! neighbours. Each leg pays processing, frame alignment, resource waiting,
//! air time and, for dynamic scheduling, SR/DCI signalling. Replications are
//! seeded and independent; see [`sim_engine::run`].

pub mod control_plane;
pub mod error;
pub mod experiment;
pub mod latency_engine;
pub mod link_adaptation;
pub mod phy_profile;
pub mod resource_grid;
pub mod scenario;
pub mod sim_engine;
mod tables;
pub mod time;

pub use error::{Error, Result};
pub use latency_engine::{DlCast, LatencyBreakdown, Retransmission, SchemeConfig, Scheduling};
pub use link_adaptation::McsTable;
pub use phy_profile::{CyclicPrefix, Direction, NumerologyProfile};
pub use resource_grid::{ControlConfig, ControlVariant, SlotGrid, SlotType};
pub use sim_engine::{run, MetricsReport, PointConfig, Service};
pub use time::{Ticks, TICKS_PER_MS};
