//! Per-packet latency composition for every scheduling/retransmission/cast combination.

use crate::control_plane::{sched_latency_dl, sched_latency_ul, ControlTiming, DciQueue, SchedBreakdown, SrConfig};
use crate::error::{Error, Result};
use crate::link_adaptation::McsTable;
use crate::phy_profile::{Direction, ProcessingDelays};
use crate::resource_grid::{frame_alignment, Placement, SlotGrid, SlotType};
use crate::time::Ticks;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduling {
    /// Configured Grant (UL) / SPS (DL).
    #[default]
    SemiStatic,
    Dynamic,
}

impl fmt::Display for Scheduling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheduling::SemiStatic => "semi_static",
            Scheduling::Dynamic => "dynamic",
        })
    }
}

/// Written as `none`, `k2`/`k4`/`k8` or `harq<n>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Retransmission {
    #[default]
    None,
    Repetitions(u8),
    Harq { max_retx: u8 },
}

impl Retransmission {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Retransmission::Repetitions(k) if ![2, 4, 8].contains(&k) => {
                Err(Error::InvalidConfig(format!("k = {k} repetitions; k must be 2, 4 or 8")))
            }
            Retransmission::Harq { max_retx: 0 } => Err(Error::InvalidConfig("HARQ needs max_retx >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Copies transmitted per attempt.
    pub fn copies(&self) -> u8 {
        match *self {
            Retransmission::Repetitions(k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for Retransmission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Retransmission::None => f.write_str("none"),
            Retransmission::Repetitions(k) => write!(f, "k{k}"),
            Retransmission::Harq { max_retx } => write!(f, "harq{max_retx}"),
        }
    }
}

impl FromStr for Retransmission {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown retransmission scheme '{s}'"));
        let r = if s == "none" {
            Retransmission::None
        } else if let Some(k) = s.strip_prefix('k') {
            Retransmission::Repetitions(k.parse().map_err(|_| bad())?)
        } else if let Some(n) = s.strip_prefix("harq") {
            Retransmission::Harq { max_retx: n.parse().map_err(|_| bad())? }
        } else {
            return Err(bad());
        };
        r.validate()?;
        Ok(r)
    }
}

impl TryFrom<String> for Retransmission {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Retransmission> for String {
    fn from(r: Retransmission) -> String {
        r.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DlCast {
    Broadcast,
    Unicast { receivers: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheduling: Scheduling,
    pub retransmission: Retransmission,
    pub dl_cast: DlCast,
    pub slot_type: SlotType,
    pub mcs_table: McsTable,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        self.retransmission.validate()?;
        if let DlCast::Unicast { receivers: 0 } = self.dl_cast {
            return Err(Error::InvalidConfig("unicast needs M >= 1 receivers".into()));
        }
        Ok(())
    }
}

/// Latency components of one leg. All values are tick counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LatencyBreakdown {
    pub direction: Direction,
    pub t_sch: Ticks,
    pub t_p_tx: Ticks,
    pub t_fa: Ticks,
    pub t_w: Ticks,
    pub t_tt: Ticks,
    pub t_p_rx: Ticks,
    pub t_retx_total: Ticks,
    pub n_attempts: u32,
}

impl LatencyBreakdown {
    pub fn new(direction: Direction) -> Self {
        LatencyBreakdown {
            direction,
            t_sch: Ticks::ZERO,
            t_p_tx: Ticks::ZERO,
            t_fa: Ticks::ZERO,
            t_w: Ticks::ZERO,
            t_tt: Ticks::ZERO,
            t_p_rx: Ticks::ZERO,
            t_retx_total: Ticks::ZERO,
            n_attempts: 0,
        }
    }

    pub fn total(&self) -> Ticks {
        self.t_sch + self.t_p_tx + self.t_fa + self.t_w + self.t_tt + self.t_p_rx + self.t_retx_total
    }

    pub fn total_ms(&self) -> f64 {
        self.total().as_ms()
    }
}

/// Result of placing one data transmission on the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataTransmission {
    pub t_p_tx: Ticks,
    pub t_fa: Ticks,
    pub t_w: Ticks,
    pub t_tt: Ticks,
    pub t_p_rx: Ticks,
    pub placements: Vec<Placement>,
}

impl DataTransmission {
    /// Duration of the first copy's exchange (t_pkt).
    pub fn t_pkt(&self) -> Ticks {
        self.t_p_tx + self.t_fa + self.t_w + self.t_tt + self.t_p_rx
    }
}

/// Data path from the moment the transmitter holds the packet: processing,
/// frame alignment, first-fit wait, air time and receive processing.
pub fn transmit_data(
    ready: Ticks,
    owner: u64,
    n_rb: u16,
    slot_type: SlotType,
    copies: u8,
    grid: &mut SlotGrid,
    delays: &ProcessingDelays,
) -> Result<DataTransmission> {
    let t_p_tx = delays.data_tx;
    let processed = ready + t_p_tx;
    let t_fa = frame_alignment(processed, grid.geometry(), slot_type)?;
    let n_symbols = slot_type.n_symbols(grid.geometry().data_len());
    let earliest = processed + t_fa;
    let placements = grid.allocate_repeated(owner, n_rb, n_symbols, earliest, copies)?;
    let start = placements[0].start(grid.geometry());
    Ok(DataTransmission {
        t_p_tx,
        t_fa,
        t_w: start - earliest,
        t_tt: grid.geometry().symbol_ticks * n_symbols as u64,
        t_p_rx: delays.data_rx,
        placements,
    })
}

fn with_data(mut b: LatencyBreakdown, tx: &DataTransmission) -> LatencyBreakdown {
    b.t_p_tx = tx.t_p_tx;
    b.t_fa = tx.t_fa;
    b.t_w = tx.t_w;
    b.t_tt = tx.t_tt;
    b.t_p_rx = tx.t_p_rx;
    b.n_attempts = 1;
    b
}

/// Configured Grant / SPS leg: no scheduling latency.
pub fn latency_semistatic(
    generated: Ticks,
    owner: u64,
    direction: Direction,
    n_rb: u16,
    slot_type: SlotType,
    grid: &mut SlotGrid,
    delays: &ProcessingDelays,
) -> Result<LatencyBreakdown> {
    let tx = transmit_data(generated, owner, n_rb, slot_type, 1, grid, delays)?;
    Ok(with_data(LatencyBreakdown::new(direction), &tx))
}

/// Dynamically scheduled leg, running the DCI queue forward from `generated`.
/// `p` is the SR-slot draw (ignored for DL).
#[allow(clippy::too_many_arguments)]
pub fn latency_dynamic(
    generated: Ticks,
    owner: u64,
    direction: Direction,
    n_rb: u16,
    slot_type: SlotType,
    p: f64,
    grid: &mut SlotGrid,
    timing: &ControlTiming,
    sr: &SrConfig,
    queue: &mut DciQueue,
) -> Result<LatencyBreakdown> {
    let t_sch = scheduling_delay(generated, owner, direction, p, timing, sr, queue);
    let tx = transmit_data(generated + t_sch, owner, n_rb, slot_type, 1, grid, &timing.delays)?;
    let mut b = with_data(LatencyBreakdown::new(direction), &tx);
    b.t_sch = t_sch;
    Ok(b)
}

fn scheduling_delay(
    ready: Ticks,
    owner: u64,
    direction: Direction,
    p: f64,
    timing: &ControlTiming,
    sr: &SrConfig,
    queue: &mut DciQueue,
) -> Ticks {
    match direction {
        Direction::Uplink => sched_latency_ul(ready, owner, p, sr, timing, queue).total(),
        Direction::Downlink => sched_latency_dl(ready, owner, timing, queue).total(),
    }
}

/// Adds the k-1 extra slots of blind repetitions.
pub fn apply_k_repetitions(base: LatencyBreakdown, k: u8, slot: Ticks) -> LatencyBreakdown {
    let mut b = base;
    b.t_retx_total += slot * (k.max(1) as u64 - 1);
    b.n_attempts = k as u32;
    b
}

/// HARQ with failures drawn by `fails`. Each failure adds the cycle returned
/// by `cycle(decoded_at)` (NACK + dynamic scheduling + t_pkt). Returns the
/// breakdown and whether the packet was eventually delivered.
pub fn apply_harq_with(
    base: LatencyBreakdown,
    start: Ticks,
    max_retx: u8,
    mut fails: impl FnMut() -> bool,
    mut cycle: impl FnMut(Ticks) -> Result<Ticks>,
) -> Result<(LatencyBreakdown, bool)> {
    let mut b = base;
    b.n_attempts = b.n_attempts.max(1);
    let mut retx = 0;
    loop {
        if !fails() {
            return Ok((b, true));
        }
        if retx == max_retx {
            return Ok((b, false));
        }
        retx += 1;
        b.t_retx_total += cycle(start + b.total())?;
        b.n_attempts += 1;
    }
}

/// HARQ with i.i.d. attempt failures at `bler`.
pub fn apply_harq<R: Rng + ?Sized>(
    base: LatencyBreakdown,
    start: Ticks,
    bler: f64,
    max_retx: u8,
    rng: &mut R,
    cycle: impl FnMut(Ticks) -> Result<Ticks>,
) -> Result<(LatencyBreakdown, bool)> {
    apply_harq_with(base, start, max_retx, || rng.random::<f64>() < bler, cycle)
}

/// One standalone HARQ retransmission cycle starting when the failed attempt
/// is decoded: NACK, dynamic scheduling, then the data path.
#[allow(clippy::too_many_arguments)]
pub fn harq_cycle(
    decoded: Ticks,
    owner: u64,
    direction: Direction,
    n_rb: u16,
    slot_type: SlotType,
    p: f64,
    grid: &mut SlotGrid,
    timing: &ControlTiming,
    sr: &SrConfig,
    queue: &mut DciQueue,
) -> Result<Ticks> {
    let nack: SchedBreakdown = timing.nack_breakdown(decoded, direction);
    let ready = decoded + nack.total();
    let b = latency_dynamic(ready, owner, direction, n_rb, slot_type, p, grid, timing, sr, queue)?;
    Ok(nack.total() + b.total())
}

/// Unicast DL latency: the slowest of the M receiver legs.
pub fn unicast_dl_latency(per_receiver: &[LatencyBreakdown]) -> Result<Ticks> {
    per_receiver
        .iter()
        .map(LatencyBreakdown::total)
        .max()
        .ok_or_else(|| Error::InvalidConfig("unicast DL latency of zero receivers".into()))
}

/// Upper bound on the probability of correct reception.
pub fn reliability_bound(bler: f64, retransmission: Retransmission) -> f64 {
    match retransmission {
        Retransmission::None => 1.0 - bler,
        Retransmission::Repetitions(k) => 1.0 - bler.powi(k as i32),
        Retransmission::Harq { max_retx } => 1.0 - bler.powi(max_retx as i32 + 1),
    }
}
