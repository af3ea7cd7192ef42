//! Numerology geometry, carrier RB counts and UE processing times.

use crate::error::{Error, Result};
use crate::resource_grid::ControlConfig;
use crate::tables;
use crate::time::{Ticks, TICKS_PER_MS};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UL")]
    Uplink,
    #[serde(rename = "DL")]
    Downlink,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "UL",
            Direction::Downlink => "DL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CyclicPrefix {
    #[serde(rename = "NCP")]
    Normal,
    #[serde(rename = "ECP")]
    Extended,
}

impl CyclicPrefix {
    pub fn name(self) -> &'static str {
        match self {
            CyclicPrefix::Normal => "NCP",
            CyclicPrefix::Extended => "ECP",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NumerologyProfile {
    pub mu: u8,
    pub scs_khz: u32,
    pub cp: CyclicPrefix,
    pub symbols_per_slot: u8,
}

impl NumerologyProfile {
    /// Only the evaluated combinations are accepted: NCP at 15/30 kHz and
    /// ECP at 60 kHz.
    pub fn new(mu: u8, cp: CyclicPrefix) -> Result<Self> {
        if mu > 2 {
            return Err(Error::InvalidNumerology(mu));
        }
        match (mu, cp) {
            (0 | 1, CyclicPrefix::Normal) | (2, CyclicPrefix::Extended) => {}
            _ => {
                return Err(Error::UnsupportedNumerology(format!(
                    "{} kHz with {:?} cyclic prefix",
                    15u32 << mu,
                    cp
                )))
            }
        }
        let symbols_per_slot = match cp {
            CyclicPrefix::Normal => 14,
            CyclicPrefix::Extended => 12,
        };
        Ok(NumerologyProfile { mu, scs_khz: 15 << mu, cp, symbols_per_slot })
    }

    pub fn from_scs(scs_khz: u32, cp: CyclicPrefix) -> Result<Self> {
        let mu = match scs_khz {
            15 => 0,
            30 => 1,
            60 => 2,
            _ => {
                return Err(Error::UnsupportedNumerology(format!("{scs_khz} kHz SCS")));
            }
        };
        Self::new(mu, cp)
    }

    /// The cyclic prefix used for each SCS in the evaluation.
    pub fn default_for_scs(scs_khz: u32) -> Result<Self> {
        let cp = if scs_khz == 60 { CyclicPrefix::Extended } else { CyclicPrefix::Normal };
        Self::from_scs(scs_khz, cp)
    }

    pub fn slot_ticks(&self) -> Ticks {
        Ticks(TICKS_PER_MS >> self.mu)
    }

    pub fn symbol_ticks(&self) -> Ticks {
        Ticks(self.slot_ticks().0 / self.symbols_per_slot as u64)
    }

    pub fn slot_duration_ms(&self) -> f64 {
        self.slot_ticks().as_ms()
    }

    pub fn symbol_duration_ms(&self) -> f64 {
        self.symbol_ticks().as_ms()
    }

    /// Symbol unit used by the N1/N2 processing-time formulas (NCP symbol at mu).
    pub fn processing_unit_ticks(&self) -> Ticks {
        Ticks(TICKS_PER_MS / (14u64 << self.mu))
    }
}

pub fn slot_duration(mu: u8) -> Result<f64> {
    if mu > 2 {
        return Err(Error::InvalidNumerology(mu));
    }
    Ok(1.0 / f64::from(1u32 << mu))
}

/// Data symbols of one slot: DL data follows the PDCCH, UL data precedes the PUCCH.
pub fn data_region(
    numerology: &NumerologyProfile,
    direction: Direction,
    control: &ControlConfig,
    n_rb_total: u16,
) -> Result<Range<u8>> {
    let sps = numerology.symbols_per_slot;
    let reserved = control.control_symbols(direction, n_rb_total);
    if reserved >= sps {
        return Err(Error::InvalidConfig(format!(
            "{direction} control reservation of {reserved} symbols leaves no data symbols"
        )));
    }
    Ok(match direction {
        Direction::Downlink => reserved..sps,
        Direction::Uplink => 0..sps - reserved,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandwidthProfile {
    pub bw_mhz: u32,
    pub n_rb_total: u16,
}

impl BandwidthProfile {
    pub fn new(bw_mhz: u32, scs_khz: u32) -> Result<Self> {
        Ok(BandwidthProfile { bw_mhz, n_rb_total: total_rbs(bw_mhz, scs_khz)? })
    }
}

pub fn total_rbs(bw_mhz: u32, scs_khz: u32) -> Result<u16> {
    tables::NRB
        .get(&format!("scs{scs_khz}_bw{bw_mhz}"))
        .map(|v| *v as u16)
        .ok_or(Error::UnsupportedBandwidth { bw_mhz, scs_khz })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProcessingTimes {
    /// PDSCH processing time.
    pub t_proc1: Ticks,
    /// PUSCH preparation time.
    pub t_proc2: Ticks,
    pub ue_capability: u8,
}

impl ProcessingTimes {
    pub fn t_proc1_ms(&self) -> f64 {
        self.t_proc1.as_ms()
    }

    pub fn t_proc2_ms(&self) -> f64 {
        self.t_proc2.as_ms()
    }
}

pub fn processing_times(mu: u8, ue_capability: u8) -> Result<ProcessingTimes> {
    if mu > 2 {
        return Err(Error::InvalidNumerology(mu));
    }
    if !(1..=2).contains(&ue_capability) {
        return Err(Error::InvalidCapability(ue_capability));
    }
    let unit = TICKS_PER_MS as f64 / f64::from(14u32 << mu);
    let lookup = |name: &str| -> Ticks {
        let n = tables::PROC[&format!("{name}_cap{ue_capability}_mu{mu}")];
        Ticks((n * unit).round() as u64)
    };
    Ok(ProcessingTimes { t_proc1: lookup("n1"), t_proc2: lookup("n2"), ue_capability })
}

/// Share of T_proc charged at each end of a transmission.
///
/// `Half` is the literal even split. `Quarter` is the calibrated default; it
/// reproduces the reported 0.8 ms configured-grant UL latency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingSplit {
    Half,
    #[default]
    Quarter,
}

impl ProcessingSplit {
    pub fn apply(self, t: Ticks) -> Ticks {
        match self {
            ProcessingSplit::Half => Ticks(t.0 / 2),
            ProcessingSplit::Quarter => Ticks(t.0 / 4),
        }
    }
}

/// Processing delays charged around data and control transmissions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProcessingDelays {
    pub data_tx: Ticks,
    pub data_rx: Ticks,
    pub ctrl_tx: Ticks,
    pub ctrl_rx: Ticks,
}

impl ProcessingDelays {
    pub fn new(times: &ProcessingTimes, split: ProcessingSplit) -> Self {
        ProcessingDelays {
            data_tx: split.apply(times.t_proc2),
            data_rx: split.apply(times.t_proc1),
            ctrl_tx: split.apply(times.t_proc1),
            ctrl_rx: split.apply(times.t_proc2),
        }
    }
}
