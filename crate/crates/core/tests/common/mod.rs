//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nr_latency::phy_profile::Direction;
use nr_latency::resource_grid::{GridGeometry, Placement};
use nr_latency::time::Ticks;

/// TBS table of TS 38.214 Table 5.1.3.2-1, typed in from the standard.
pub const TBS_TABLE: [u32; 93] = [
    24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128, 136, 144, 152, 160, 168, 176, 184, 192, 208, 224,
    240, 256, 272, 288, 304, 320, 336, 352, 368, 384, 408, 432, 456, 480, 504, 528, 552, 576, 608, 640, 672, 704,
    736, 768, 808, 848, 888, 928, 984, 1032, 1064, 1128, 1160, 1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480,
    1544, 1608, 1672, 1736, 1800, 1864, 1928, 2024, 2088, 2152, 2216, 2280, 2408, 2472, 2536, 2600, 2664, 2728,
    2792, 2856, 2976, 3104, 3240, 3368, 3496, 3624, 3752, 3824,
];

fn ilog2(x: u128) -> i64 {
    127 - x.leading_zeros() as i64
}

/// Straight-line TS 38.214 5.1.3.2 in exact integer arithmetic. The code
/// rate is given as R x 2048 so half-integer table entries stay exact.
pub fn tbs_oracle(qm: u32, r_x2048: u32, n_rb: u32, n_sym: u32, layers: u32, overhead: u32) -> u32 {
    let re = (12 * n_sym - overhead).min(156) * n_rb;
    // N_info x 2048
    let num = re as u128 * r_x2048 as u128 * qm as u128 * layers as u128;
    const D: u128 = 2048;
    if num <= 3824 * D {
        let n = (ilog2(num) - 11 - 6).max(3);
        let step = D << n;
        let q = ((num / step) << n).max(24);
        TBS_TABLE.iter().copied().find(|&t| t as u128 >= q).unwrap()
    } else {
        let shifted = num - 24 * D;
        let n = ilog2(shifted) - 11 - 5;
        let step = D << n;
        let rounded = (2 * shifted + step) / (2 * step);
        let q = (rounded << n).max(3840);
        let total = q + 24;
        let c = if r_x2048 * 4 <= 2048 {
            total.div_ceil(3816)
        } else if q > 8424 {
            total.div_ceil(8424)
        } else {
            1
        };
        (8 * c * total.div_ceil(8 * c) - 24) as u32
    }
}

/// Exhaustive first-fit: every rectangle of a small grid in (slot, symbol,
/// RB) order; returns the first that is free and admissible.
pub fn brute_force_first_fit(
    occupied: &[Vec<Vec<bool>>],
    g: &GridGeometry,
    n_rb: u16,
    n_sym: u8,
    earliest: Ticks,
) -> Option<Placement> {
    let full = n_sym == g.data_len();
    for (slot, grid) in occupied.iter().enumerate() {
        for sym in g.data.start..g.data.end {
            if sym + n_sym > g.data.end || (full && sym != g.data.start) {
                continue;
            }
            if g.slot_ticks * (slot as u64) + g.symbol_ticks * (sym as u64) < earliest {
                continue;
            }
            'rb: for rb in 0..g.n_rb {
                if rb + n_rb > g.n_rb {
                    continue;
                }
                for r in rb..rb + n_rb {
                    for s in sym..sym + n_sym {
                        if grid[r as usize][s as usize] {
                            continue 'rb;
                        }
                    }
                }
                return Some(Placement { slot: slot as u64, first_rb: rb, n_rb, first_symbol: sym, n_symbols: n_sym });
            }
        }
    }
    None
}

/// Discrete-time FIFO: occasions every `slot` ticks from `phase`; each
/// serves up to `cap` waiting messages that arrived no later than it.
pub fn fifo_oracle(arrivals: &[u64], cap: Option<usize>, slot: u64, phase: u64) -> Vec<u64> {
    let mut out = vec![0; arrivals.len()];
    let mut head = 0;
    let first = arrivals.first().copied().unwrap_or(0);
    let mut k = if first <= phase { 0 } else { (first - phase).div_ceil(slot) };
    while head < arrivals.len() {
        let t = phase + k * slot;
        let mut served = 0;
        while head < arrivals.len() && arrivals[head] <= t && cap.is_none_or(|c| served < c) {
            out[head] = t;
            head += 1;
            served += 1;
        }
        k += 1;
    }
    out
}

/// Every admissible data start inside `[0, horizon]`, listed explicitly.
pub fn admissible_boundaries(g: &GridGeometry, n_sym: u8, horizon: Ticks) -> Vec<Ticks> {
    let mut out = Vec::new();
    let mut slot = 0u64;
    loop {
        let base = g.slot_ticks.0 * slot;
        if base > horizon.0 {
            break;
        }
        for sym in 0..g.symbols_per_slot {
            let in_data = sym >= g.data.start && sym + n_sym <= g.data.end;
            let ok = if n_sym == g.data_len() { sym == g.data.start } else { in_data };
            if ok {
                out.push(Ticks(base + g.symbol_ticks.0 * sym as u64));
            }
        }
        slot += 1;
    }
    out
}

/// Small synthetic geometry for oracle grids.
pub fn tiny_geometry(n_rb: u16, data: std::ops::Range<u8>) -> GridGeometry {
    GridGeometry {
        direction: Direction::Uplink,
        n_rb,
        symbols_per_slot: 14,
        control_symbols: 14 - (data.end - data.start),
        data,
        slot_ticks: Ticks(14 * 48),
        symbol_ticks: Ticks(48),
    }
}

/// Nearest-rank percentile with +inf samples, computed by sorting.
pub fn percentile_oracle(samples: &[u32], infinite: usize, q: f64) -> Option<u32> {
    let mut all: Vec<Option<u32>> = samples.iter().map(|&s| Some(s)).collect();
    all.extend(std::iter::repeat_n(None, infinite));
    all.sort_by_key(|s| s.map_or(u64::MAX, |v| v as u64));
    let n = all.len();
    let rank = ((q * 1e6).round() as usize * n).div_ceil(1_000_000).max(1);
    all[rank - 1]
}

/// Cell occupancy of the first `slots` slots, control symbols counted busy.
pub fn occupancy_of(grid: &nr_latency::resource_grid::SlotGrid, g: &GridGeometry, slots: usize) -> Vec<Vec<Vec<bool>>> {
    (0..slots)
        .map(|s| {
            (0..g.n_rb)
                .map(|rb| {
                    (0..14u8)
                        .map(|sym| {
                            !g.data.contains(&sym)
                                || !grid.is_free(&Placement {
                                    slot: s as u64,
                                    first_rb: rb,
                                    n_rb: 1,
                                    first_symbol: sym,
                                    n_symbols: 1,
                                })
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}
