//! Seeded replications of the full UL+DL pipeline and their aggregation.

mod engine;
pub mod metrics;

pub use engine::{replication_scenario, run_replication, run_scenario};
pub use metrics::{
    aggregate, check_requirement, percentile, MetricsReport, PacketDisposition, PacketRecord, ReplicationOutput,
    RequirementCheck, Service,
};

use crate::control_plane::ControlTiming;
use crate::error::{Error, Result};
use crate::latency_engine::{DlCast, Retransmission, SchemeConfig, Scheduling};
use crate::link_adaptation::{mcs_from_cqi, rbs_for_packet, CqiMap, LinkProfile, McsTable, CELL_RADIUS_M};
use crate::phy_profile::{
    processing_times, BandwidthProfile, CyclicPrefix, Direction, NumerologyProfile, ProcessingDelays, ProcessingSplit,
};
use crate::resource_grid::{ControlConfig, ControlVariant, GridGeometry, SlotType};
use crate::scenario::{TrafficModel, LANES, PACKET_BYTES};
use crate::time::Ticks;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CastMode {
    #[default]
    Broadcast,
    Unicast,
}

impl fmt::Display for CastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CastMode::Broadcast => "broadcast",
            CastMode::Unicast => "unicast",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    #[default]
    Periodic,
    Aperiodic,
}

impl fmt::Display for TrafficKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrafficKind::Periodic => "periodic",
            TrafficKind::Aperiodic => "aperiodic",
        })
    }
}

/// Every parameter of one simulated configuration point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointConfig {
    /// Vehicles per km per lane.
    pub density: f64,
    pub lanes: u8,
    pub cell_radius_m: f64,
    pub bandwidth_mhz: u32,
    pub scs_khz: u32,
    /// Defaults to ECP at 60 kHz and NCP otherwise.
    pub cp: Option<CyclicPrefix>,
    pub slot_type: SlotType,
    pub scheduling: Scheduling,
    pub retransmission: Retransmission,
    pub cast: CastMode,
    /// M, the unicast receivers per packet.
    pub receivers: u32,
    /// Receivers of one broadcast/multicast DL packet.
    pub multicast_group: u32,
    pub traffic: TrafficKind,
    /// T_p (periodic) or T_avg (aperiodic).
    pub period_ms: f64,
    pub packet_bytes: u32,
    pub mcs_table: McsTable,
    pub control: ControlVariant,
    /// Explicit control reservations replacing the variant's defaults.
    pub control_resources: Option<ControlConfig>,
    pub ue_capability: u8,
    pub layers: u8,
    pub overhead_re_per_rb: u32,
    /// `(upper bound m, cqi)` pairs; the calibrated linear map when absent.
    pub cqi_map: Option<Vec<(f64, u8)>>,
    pub processing_split: ProcessingSplit,
    /// Upper end of the uniform non-radio delay between UL reception and DL
    /// availability at the gNB.
    pub dl_transit_ms: f64,
    pub horizon_ms: f64,
    pub warmup_ms: f64,
    pub min_replications: u32,
    pub max_replications: u32,
    pub batch_replications: u32,
    pub target_relative_error: f64,
}

impl Default for PointConfig {
    fn default() -> Self {
        PointConfig {
            density: 20.0,
            lanes: LANES,
            cell_radius_m: CELL_RADIUS_M,
            bandwidth_mhz: 20,
            scs_khz: 30,
            cp: None,
            slot_type: SlotType::Full,
            scheduling: Scheduling::SemiStatic,
            retransmission: Retransmission::None,
            cast: CastMode::Broadcast,
            receivers: 1,
            multicast_group: 1,
            traffic: TrafficKind::Periodic,
            period_ms: 100.0,
            packet_bytes: PACKET_BYTES,
            mcs_table: McsTable::Lep,
            control: ControlVariant::Conf1,
            control_resources: None,
            ue_capability: 2,
            layers: 2,
            overhead_re_per_rb: 0,
            cqi_map: None,
            processing_split: ProcessingSplit::Quarter,
            dl_transit_ms: 1.0,
            horizon_ms: 10_000.0,
            warmup_ms: 200.0,
            min_replications: 10,
            max_replications: 100,
            batch_replications: 10,
            target_relative_error: 0.01,
        }
    }
}

impl PointConfig {
    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            scheduling: self.scheduling,
            retransmission: self.retransmission,
            dl_cast: match self.cast {
                CastMode::Broadcast => DlCast::Broadcast,
                CastMode::Unicast => DlCast::Unicast { receivers: self.receivers },
            },
            slot_type: self.slot_type,
            mcs_table: self.mcs_table,
        }
    }

    pub fn traffic_model(&self) -> TrafficModel {
        match self.traffic {
            TrafficKind::Periodic => TrafficModel::Periodic { period_ms: self.period_ms },
            TrafficKind::Aperiodic => TrafficModel::Aperiodic { mean_ms: self.period_ms },
        }
    }

    pub fn control_config(&self) -> ControlConfig {
        self.control_resources.unwrap_or_else(|| ControlConfig::for_variant(self.control))
    }

    pub fn cqi_map_or_default(&self) -> Result<CqiMap> {
        match &self.cqi_map {
            Some(bins) => CqiMap::new(bins.clone()),
            None if self.cell_radius_m == CELL_RADIUS_M => Ok(CqiMap::default()),
            None => CqiMap::linear(self.cell_radius_m, 15, 5),
        }
    }

    pub fn numerology(&self) -> Result<NumerologyProfile> {
        match self.cp {
            Some(cp) => NumerologyProfile::from_scs(self.scs_khz, cp),
            None => NumerologyProfile::default_for_scs(self.scs_khz),
        }
    }
}

/// Everything derived from a `PointConfig` that replications share.
#[derive(Clone, Debug)]
pub struct PointContext {
    pub config: PointConfig,
    pub scheme: SchemeConfig,
    pub numerology: NumerologyProfile,
    pub bandwidth: BandwidthProfile,
    pub control: ControlConfig,
    pub timing: ControlTiming,
    pub link: LinkProfile,
    pub traffic: TrafficModel,
    /// RBs per CQI index for UL and DL; `None` if the packet does not fit.
    pub rbs_ul: [Option<u16>; 16],
    pub rbs_dl: [Option<u16>; 16],
    pub horizon: Ticks,
    pub warmup: Ticks,
    pub dl_transit: Ticks,
}

impl PointContext {
    pub fn new(config: &PointConfig) -> Result<Self> {
        let c = config;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let scheme = c.scheme();
        scheme.validate()?;
        if !(c.density > 0.0 && c.density.is_finite()) {
            return bad(format!("density must be positive, got {}", c.density));
        }
        if !(c.period_ms > 0.0 && c.period_ms.is_finite()) {
            return bad(format!("traffic period must be positive, got {}", c.period_ms));
        }
        if c.packet_bytes == 0 || !(1..=2).contains(&c.layers) {
            return bad("packet size must be positive and layers 1 or 2".into());
        }
        if !(c.horizon_ms > c.warmup_ms && c.warmup_ms >= 0.0) {
            return bad(format!("horizon {} ms must exceed warm-up {} ms", c.horizon_ms, c.warmup_ms));
        }
        if c.min_replications == 0 || c.max_replications < c.min_replications || c.batch_replications == 0 {
            return bad("replication limits must satisfy 1 <= min <= max and batch >= 1".into());
        }
        if c.multicast_group == 0 || !c.dl_transit_ms.is_finite() || c.dl_transit_ms < 0.0 {
            return bad("multicast group must be >= 1 and DL transit >= 0".into());
        }
        let numerology = c.numerology()?;
        let bandwidth = BandwidthProfile::new(c.bandwidth_mhz, c.scs_khz)?;
        let control = c.control_config();
        let times = processing_times(numerology.mu, c.ue_capability)?;
        let delays = ProcessingDelays::new(&times, c.processing_split);
        let ul = GridGeometry::new(&numerology, &bandwidth, &control, Direction::Uplink)?;
        let dl = GridGeometry::new(&numerology, &bandwidth, &control, Direction::Downlink)?;
        for g in [&ul, &dl] {
            g.admissible_starts(c.slot_type.n_symbols(g.data_len()))?;
        }
        let link = LinkProfile::new(c.mcs_table, c.cqi_map_or_default()?);
        if link.cqi_map.radius() < c.cell_radius_m {
            return bad("CQI map does not cover the cell radius".into());
        }
        let payload = c.packet_bytes * 8;
        let footprint = |g: &GridGeometry| -> Result<[Option<u16>; 16]> {
            let mut out = [None; 16];
            let n_sym = c.slot_type.n_symbols(g.data_len()) as u32;
            for (cqi, slot) in out.iter_mut().enumerate().skip(1) {
                let mcs = mcs_from_cqi(cqi as u8, c.mcs_table)?;
                *slot = rbs_for_packet(payload, &mcs, n_sym, c.layers as u32, c.overhead_re_per_rb, g.n_rb).ok();
            }
            Ok(out)
        };
        let (rbs_ul, rbs_dl) = (footprint(&ul)?, footprint(&dl)?);
        Ok(PointContext {
            config: c.clone(),
            scheme,
            numerology,
            bandwidth,
            control,
            timing: ControlTiming { ul, dl, delays },
            link,
            traffic: c.traffic_model(),
            rbs_ul,
            rbs_dl,
            horizon: Ticks::from_ms(c.horizon_ms),
            warmup: Ticks::from_ms(c.warmup_ms),
            dl_transit: Ticks::from_ms(c.dl_transit_ms),
        })
    }

    pub fn slot(&self) -> Ticks {
        self.numerology.slot_ticks()
    }

    pub fn bler(&self) -> f64 {
        self.link.target_bler
    }

    /// DL receivers needed per packet.
    pub fn dl_receivers(&self) -> usize {
        match self.scheme.dl_cast {
            DlCast::Broadcast => self.config.multicast_group as usize,
            DlCast::Unicast { receivers } => receivers as usize,
        }
    }

    pub fn is_dynamic(&self) -> bool {
        self.scheme.scheduling == Scheduling::Dynamic
    }
}

/// Runs replications in fixed-size batches until the relative 95% CI
/// half-width of mean l_radio drops below the target.
pub fn run(config: &PointConfig, seed: u64) -> Result<MetricsReport> {
    let ctx = PointContext::new(config)?;
    let mut reps: Vec<ReplicationOutput> = Vec::new();
    loop {
        let start = reps.len() as u32;
        let want = if start == 0 { config.min_replications } else { config.batch_replications };
        let end = (start + want).min(config.max_replications);
        let batch: Vec<ReplicationOutput> = (start..end)
            .into_par_iter()
            .map(|r| run_replication(&ctx, seed, r, false))
            .collect::<Result<_>>()?;
        reps.extend(batch);
        let report = aggregate(&reps);
        let settled = report.ci_relative_error < config.target_relative_error || report.delivered == 0;
        if settled || reps.len() as u32 >= config.max_replications {
            return Ok(report);
        }
    }
}
