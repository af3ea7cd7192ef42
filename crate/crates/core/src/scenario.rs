//! Highway cell world: vehicle placement, packet arrivals and the stale-packet rule.

use crate::error::{Error, Result};
use crate::link_adaptation::CqiMap;
use crate::time::Ticks;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const LANES: u8 = 6;
pub const PACKET_BYTES: u32 = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub lane: u8,
    /// Position along the road; the gNB sits at 0.
    pub position_m: f64,
    pub distance_m: f64,
    pub cqi: u8,
}

/// Vehicles on a road of length 2 x radius at the given density.
pub fn vehicle_count(density_per_km_lane: f64, lanes: u8, cell_radius_m: f64) -> usize {
    (density_per_km_lane * lanes as f64 * 2.0 * cell_radius_m / 1000.0).round() as usize
}

pub fn place_vehicles<R: Rng + ?Sized>(
    density_per_km_lane: f64,
    lanes: u8,
    cell_radius_m: f64,
    map: &CqiMap,
    rng: &mut R,
) -> Result<Vec<Vehicle>> {
    if !(density_per_km_lane > 0.0 && density_per_km_lane.is_finite()) {
        return Err(Error::InvalidConfig(format!("density {density_per_km_lane} veh/km/lane")));
    }
    if lanes == 0 || cell_radius_m <= 0.0 || map.radius() < cell_radius_m {
        return Err(Error::InvalidConfig("road geometry not covered by the CQI map".into()));
    }
    let n = vehicle_count(density_per_km_lane, lanes, cell_radius_m);
    (0..n)
        .map(|i| {
            let position_m = rng.random_range(-cell_radius_m..=cell_radius_m);
            let distance_m = position_m.abs();
            let cqi = map
                .bins()
                .iter()
                .find(|(bound, _)| *bound >= distance_m)
                .map(|b| b.1)
                .ok_or(Error::OutsideCell(distance_m))?;
            Ok(Vehicle { id: i as u32, lane: rng.random_range(1..=lanes), position_m, distance_m, cqi })
        })
        .collect()
}

/// The `m` vehicles closest to `sender` along the road, nearest first.
pub fn nearest_neighbours(vehicles: &[Vehicle], sender: usize, m: usize) -> Vec<usize> {
    let x = vehicles[sender].position_m;
    let mut others: Vec<usize> = (0..vehicles.len()).filter(|&i| i != sender).collect();
    others.sort_by(|&a, &b| {
        let da = (vehicles[a].position_m - x).abs();
        let db = (vehicles[b].position_m - x).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    others.truncate(m);
    others
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrafficModel {
    Periodic { period_ms: f64 },
    /// Inter-arrival T/2 + Exp(mean T/2).
    Aperiodic { mean_ms: f64 },
}

impl TrafficModel {
    pub fn mean_interval_ms(&self) -> f64 {
        match *self {
            TrafficModel::Periodic { period_ms } => period_ms,
            TrafficModel::Aperiodic { mean_ms } => mean_ms,
        }
    }
}

impl fmt::Display for TrafficModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficModel::Periodic { period_ms } => write!(f, "periodic({period_ms} ms)"),
            TrafficModel::Aperiodic { mean_ms } => write!(f, "aperiodic({mean_ms} ms)"),
        }
    }
}

pub fn aperiodic_gap<R: Rng + ?Sized>(mean_ms: f64, rng: &mut R) -> Ticks {
    let half = Ticks::from_ms(mean_ms / 2.0);
    let exp = Exp::new(2.0 / mean_ms).expect("positive mean");
    half + Ticks::from_ms(exp.sample(rng))
}

/// Arrival times in `[0, horizon)` for each of `n_vehicles`, each with a
/// random phase.
pub fn generate_arrivals<R: Rng + ?Sized>(
    model: &TrafficModel,
    horizon: Ticks,
    n_vehicles: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Ticks>>> {
    let mean = model.mean_interval_ms();
    if !(mean > 0.0 && mean.is_finite()) || horizon == Ticks::ZERO {
        return Err(Error::InvalidConfig(format!("traffic {model} over {horizon}")));
    }
    let span = Ticks::from_ms(mean);
    Ok((0..n_vehicles)
        .map(|_| {
            let mut t = Ticks(rng.random_range(0..span.0));
            let mut out = Vec::new();
            while t < horizon {
                out.push(t);
                t += match *model {
                    TrafficModel::Periodic { .. } => span,
                    TrafficModel::Aperiodic { mean_ms } => aperiodic_gap(mean_ms, rng),
                };
            }
            out
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingPacket {
    pub packet_id: u64,
    /// End of the packet's first transmission, once it is on the grid.
    pub transmitted_at: Option<Ticks>,
}

/// The one packet a vehicle may hold while it waits for its first transmission.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VehicleQueue {
    pub pending: Option<PendingPacket>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    NoDrop,
    Dropped(u64),
}

/// Installs `new_id` as the pending packet. The previous one is dropped if
/// its first transmission has not finished by `arrival`.
pub fn drop_stale(queue: &mut VehicleQueue, new_id: u64, arrival: Ticks) -> Disposition {
    let verdict = match queue.pending {
        Some(p) if p.transmitted_at.is_none_or(|t| t > arrival) => Disposition::Dropped(p.packet_id),
        _ => Disposition::NoDrop,
    };
    queue.pending = Some(PendingPacket { packet_id: new_id, transmitted_at: None });
    verdict
}

/// Replayable world of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub density_per_km_lane: f64,
    pub cell_radius_m: f64,
    pub vehicles: Vec<Vehicle>,
    /// Arrival ticks per vehicle.
    pub arrivals: Vec<Vec<Ticks>>,
}

impl Scenario {
    pub fn generate<R: Rng + ?Sized>(
        density_per_km_lane: f64,
        lanes: u8,
        cell_radius_m: f64,
        map: &CqiMap,
        traffic: &TrafficModel,
        horizon: Ticks,
        rng: &mut R,
    ) -> Result<Self> {
        let vehicles = place_vehicles(density_per_km_lane, lanes, cell_radius_m, map, rng)?;
        let arrivals = generate_arrivals(traffic, horizon, vehicles.len(), rng)?;
        Ok(Scenario { density_per_km_lane, cell_radius_m, vehicles, arrivals })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn packet_count(&self) -> usize {
        self.arrivals.iter().map(Vec::len).sum()
    }
}
