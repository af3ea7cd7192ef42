//! Distance to CQI, CQI to MCS, and transport block sizing.

use crate::error::{Error, Result};
use crate::tables::{self, RateRow};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const CELL_RADIUS_M: f64 = 866.0;

/// MCS/CQI table pair. `Lep` is MCS Table 2 (256QAM, BLER 0.1); `Hep` is
/// MCS Table 3 (low spectral efficiency, BLER 1e-5).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum McsTable {
    #[serde(rename = "LEP")]
    Lep,
    #[serde(rename = "HEP")]
    Hep,
}

impl McsTable {
    pub fn target_bler(self) -> f64 {
        match self {
            McsTable::Lep => 0.1,
            McsTable::Hep => 1e-5,
        }
    }

    pub fn entries(self) -> Vec<McsEntry> {
        self.mcs_rows().iter().map(McsEntry::from_row).collect()
    }

    pub fn entry(self, index: u8) -> Option<McsEntry> {
        self.mcs_rows().get(index as usize).map(McsEntry::from_row)
    }

    fn mcs_rows(self) -> &'static [RateRow] {
        match self {
            McsTable::Lep => &tables::MCS_TABLE2,
            McsTable::Hep => &tables::MCS_TABLE3,
        }
    }

    fn cqi_rows(self) -> &'static [RateRow] {
        match self {
            McsTable::Lep => &tables::CQI_TABLE2,
            McsTable::Hep => &tables::CQI_TABLE3,
        }
    }
}

impl fmt::Display for McsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McsTable::Lep => "LEP",
            McsTable::Hep => "HEP",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    pub modulation_order: u8,
    /// Target code rate x 1024, as printed in the table.
    pub code_rate_x1024: f64,
    pub spectral_efficiency: f64,
}

impl McsEntry {
    fn from_row(row: &RateRow) -> Self {
        McsEntry {
            index: row.index,
            modulation_order: row.modulation_order,
            code_rate_x1024: row.code_rate_x1024,
            spectral_efficiency: row.spectral_efficiency,
        }
    }

    pub fn code_rate(&self) -> f64 {
        self.code_rate_x1024 / 1024.0
    }

    fn efficiency_x1024(&self) -> f64 {
        self.modulation_order as f64 * self.code_rate_x1024
    }
}

/// Highest MCS whose efficiency does not exceed the reported CQI's efficiency.
///
/// CQI 1 of CQI Table 2 (QPSK 78/1024) is below MCS 0 of MCS Table 2; it is
/// mapped to MCS 0, the most robust entry available.
pub fn mcs_from_cqi(cqi: u8, table: McsTable) -> Result<McsEntry> {
    let cqi_rows = table.cqi_rows();
    if cqi == 0 || cqi as usize > cqi_rows.len() {
        return Err(Error::CqiOutOfRange(cqi));
    }
    let c = &cqi_rows[cqi as usize - 1];
    let threshold = c.modulation_order as f64 * c.code_rate_x1024;
    let entries = table.entries();
    Ok(entries
        .iter()
        .rev()
        .find(|m| m.efficiency_x1024() <= threshold)
        .copied()
        .unwrap_or(entries[0]))
}

/// Piecewise-constant distance to CQI map: `(upper bound in m, cqi)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqiMap {
    bins: Vec<(f64, u8)>,
}

impl CqiMap {
    pub fn new(bins: Vec<(f64, u8)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidCqiMap("empty map".into()));
        }
        for w in bins.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidCqiMap("distance bounds must be strictly increasing".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::InvalidCqiMap("CQI must not increase with distance".into()));
            }
        }
        if bins[0].0 <= 0.0 {
            return Err(Error::InvalidCqiMap("first bound must be positive".into()));
        }
        if let Some(&(_, cqi)) = bins.iter().find(|(_, c)| *c == 0 || *c > 15) {
            return Err(Error::CqiOutOfRange(cqi));
        }
        Ok(CqiMap { bins })
    }

    /// Equal-width bins from `best` at the gNB down to `worst` at `radius`.
    pub fn linear(radius_m: f64, best: u8, worst: u8) -> Result<Self> {
        if worst == 0 || best < worst || best > 15 {
            return Err(Error::InvalidCqiMap(format!("bad CQI range {best}..{worst}")));
        }
        let n = (best - worst + 1) as usize;
        let bins = (0..n)
            .map(|i| (radius_m * (i + 1) as f64 / n as f64, best - i as u8))
            .collect();
        Self::new(bins)
    }

    pub fn bins(&self) -> &[(f64, u8)] {
        &self.bins
    }

    pub fn radius(&self) -> f64 {
        self.bins.last().map(|b| b.0).unwrap_or(0.0)
    }
}

impl Default for CqiMap {
    /// Calibrated default: CQI 15 at the gNB down to CQI 5 at 866 m.
    fn default() -> Self {
        CqiMap::linear(CELL_RADIUS_M, 15, 5).expect("default map is valid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkProfile {
    pub mcs_table: McsTable,
    pub target_bler: f64,
    pub cqi_map: CqiMap,
}

impl LinkProfile {
    pub fn new(mcs_table: McsTable, cqi_map: CqiMap) -> Self {
        LinkProfile { mcs_table, target_bler: mcs_table.target_bler(), cqi_map }
    }
}

pub fn cqi_from_distance(distance_m: f64, profile: &LinkProfile) -> Result<u8> {
    if !(0.0..=profile.cqi_map.radius()).contains(&distance_m) {
        return Err(Error::OutsideCell(distance_m));
    }
    Ok(profile
        .cqi_map
        .bins
        .iter()
        .find(|(bound, _)| *bound >= distance_m)
        .map(|b| b.1)
        .expect("radius check guarantees a bin"))
}

/// TS 38.214 5.1.3.2 transport block size.
pub fn transport_block_size(
    mcs: &McsEntry,
    n_rb: u32,
    n_symbols: u32,
    layers: u32,
    overhead_re_per_rb: u32,
) -> u32 {
    let re_per_rb = (12 * n_symbols).saturating_sub(overhead_re_per_rb).min(156);
    let n_re = re_per_rb * n_rb;
    let n_info = n_re as f64 * mcs.code_rate() * mcs.modulation_order as f64 * layers as f64;
    if n_info <= 0.0 {
        return 0;
    }
    if n_info <= 3824.0 {
        let n = (floor_log2(n_info) - 6).max(3);
        let step = (1u64 << n) as f64;
        let n_info_q = (step * (n_info / step).floor()).max(24.0);
        *tables::TBS_TABLE
            .iter()
            .find(|&&t| t as f64 >= n_info_q)
            .expect("quantized N_info never exceeds 3824")
    } else {
        let n = floor_log2(n_info - 24.0) - 5;
        let step = (1u64 << n) as f64;
        let n_info_q = (step * ((n_info - 24.0) / step).round()).max(3840.0);
        let total = n_info_q + 24.0;
        let c = if mcs.code_rate() <= 0.25 {
            (total / 3816.0).ceil()
        } else if n_info_q > 8424.0 {
            (total / 8424.0).ceil()
        } else {
            1.0
        };
        (8.0 * c * (total / (8.0 * c)).ceil() - 24.0) as u32
    }
}

fn floor_log2(x: f64) -> i32 {
    let mut n = 0i32;
    while ((1u64 << (n + 1)) as f64) <= x {
        n += 1;
    }
    n
}

/// Smallest RB count whose TBS carries `payload_bits`, capped at `max_rb`.
pub fn rbs_for_packet(
    payload_bits: u32,
    mcs: &McsEntry,
    n_symbols: u32,
    layers: u32,
    overhead_re_per_rb: u32,
    max_rb: u16,
) -> Result<u16> {
    (1..=max_rb)
        .find(|&n| transport_block_size(mcs, n as u32, n_symbols, layers, overhead_re_per_rb) >= payload_bits)
        .ok_or(Error::InfeasibleAllocation { payload_bits, max_rb })
}

/// Mean RB footprint over vehicles uniformly distributed in distance.
///
/// Exact for a piecewise-constant map: each bin is weighted by its width.
/// Bins needing more than `max_rb` RBs are reported through the second value
/// (probability mass of infeasible distances) and excluded from the mean.
pub fn mean_rbs_uniform(
    payload_bits: u32,
    profile: &LinkProfile,
    n_symbols: u32,
    layers: u32,
    overhead_re_per_rb: u32,
    max_rb: u16,
) -> Result<(f64, f64)> {
    let mut lower = 0.0;
    let (mut weighted, mut feasible, mut infeasible) = (0.0, 0.0, 0.0);
    for &(upper, cqi) in profile.cqi_map.bins() {
        let width = upper - lower;
        lower = upper;
        let mcs = mcs_from_cqi(cqi, profile.mcs_table)?;
        match rbs_for_packet(payload_bits, &mcs, n_symbols, layers, overhead_re_per_rb, max_rb) {
            Ok(n) => {
                weighted += width * n as f64;
                feasible += width;
            }
            Err(Error::InfeasibleAllocation { .. }) => infeasible += width,
            Err(e) => return Err(e),
        }
    }
    let total = feasible + infeasible;
    Ok((weighted / feasible, infeasible / total))
}
