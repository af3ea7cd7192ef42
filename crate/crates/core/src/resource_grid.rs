//! RB x symbol occupancy of one link direction, with first-fit allocation.

use crate::error::{Error, Result};
use crate::phy_profile::{data_region, BandwidthProfile, Direction, NumerologyProfile};
use crate::time::Ticks;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::ops::Range;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotType {
    #[default]
    Full,
    Mini7,
    Mini4,
}

impl SlotType {
    /// Symbols occupied by one transmission given the data-region length.
    pub fn n_symbols(self, data_len: u8) -> u8 {
        match self {
            SlotType::Full => data_len,
            SlotType::Mini7 => 7,
            SlotType::Mini4 => 4,
        }
    }
}

impl fmt::Display for SlotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotType::Full => "full",
            SlotType::Mini7 => "mini7",
            SlotType::Mini4 => "mini4",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlVariant {
    #[default]
    Conf1,
    Conf2,
    Conf3,
}

impl fmt::Display for ControlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlVariant::Conf1 => "conf1",
            ControlVariant::Conf2 => "conf2",
            ControlVariant::Conf3 => "conf3",
        })
    }
}

/// RBs and symbols reserved per slot for PDCCH (DL) and PUCCH (UL).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub variant: ControlVariant,
    pub n_rb_pdcch: u16,
    pub n_sy_pdcch: u8,
    pub n_rb_pucch: u16,
    pub n_sy_pucch: u8,
}

impl ControlConfig {
    pub const CONF1_PDCCH_RB: u16 = 24;
    pub const CONF1_PUCCH_RB: u16 = 3;
    pub const CONF2_PDCCH_FACTOR: u16 = 6;
    pub const CONF2_PUCCH_FACTOR: u16 = 8;

    pub fn conf1() -> Self {
        ControlConfig {
            variant: ControlVariant::Conf1,
            n_rb_pdcch: Self::CONF1_PDCCH_RB,
            n_sy_pdcch: 1,
            n_rb_pucch: Self::CONF1_PUCCH_RB,
            n_sy_pucch: 1,
        }
    }

    pub fn conf2() -> Self {
        let c1 = Self::conf1();
        ControlConfig {
            variant: ControlVariant::Conf2,
            n_rb_pdcch: c1.n_rb_pdcch * Self::CONF2_PDCCH_FACTOR,
            n_rb_pucch: c1.n_rb_pucch * Self::CONF2_PUCCH_FACTOR,
            ..c1
        }
    }

    /// conf1 reservations with ideal (never queueing) control signalling.
    pub fn conf3() -> Self {
        ControlConfig { variant: ControlVariant::Conf3, ..Self::conf1() }
    }

    pub fn for_variant(variant: ControlVariant) -> Self {
        match variant {
            ControlVariant::Conf1 => Self::conf1(),
            ControlVariant::Conf2 => Self::conf2(),
            ControlVariant::Conf3 => Self::conf3(),
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.variant == ControlVariant::Conf3
    }

    /// Whole symbols taken by the control region. A reservation wider than
    /// the carrier spills over into additional symbols.
    pub fn control_symbols(&self, direction: Direction, n_rb_total: u16) -> u8 {
        let (rb, sy) = match direction {
            Direction::Downlink => (self.n_rb_pdcch, self.n_sy_pdcch),
            Direction::Uplink => (self.n_rb_pucch, self.n_sy_pucch),
        };
        let area = rb as u32 * sy as u32;
        let spill = area.div_ceil(n_rb_total.max(1) as u32);
        spill.max(sy as u32).min(u8::MAX as u32) as u8
    }

    /// DCIs per PDCCH occasion (6 RB x 1 symbol each); `None` when ideal.
    pub fn dci_capacity(&self) -> Option<u32> {
        if self.is_ideal() {
            None
        } else {
            Some(self.n_rb_pdcch as u32 * self.n_sy_pdcch as u32 / 6)
        }
    }

    /// SRs per PUCCH occasion (6 UEs multiplexed per RB x symbol).
    pub fn sr_capacity(&self) -> u32 {
        self.n_rb_pucch as u32 * self.n_sy_pucch as u32 * 6
    }
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self::conf1()
    }
}

/// Static geometry of one direction's grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridGeometry {
    pub direction: Direction,
    pub n_rb: u16,
    pub symbols_per_slot: u8,
    pub data: Range<u8>,
    pub control_symbols: u8,
    pub slot_ticks: Ticks,
    pub symbol_ticks: Ticks,
}

impl GridGeometry {
    pub fn new(
        numerology: &NumerologyProfile,
        bandwidth: &BandwidthProfile,
        control: &ControlConfig,
        direction: Direction,
    ) -> Result<Self> {
        let data = data_region(numerology, direction, control, bandwidth.n_rb_total)?;
        Ok(GridGeometry {
            direction,
            n_rb: bandwidth.n_rb_total,
            symbols_per_slot: numerology.symbols_per_slot,
            control_symbols: numerology.symbols_per_slot - (data.end - data.start),
            data,
            slot_ticks: numerology.slot_ticks(),
            symbol_ticks: numerology.symbol_ticks(),
        })
    }

    pub fn data_len(&self) -> u8 {
        self.data.end - self.data.start
    }

    pub fn slot_start(&self, slot: u64) -> Ticks {
        self.slot_ticks * slot
    }

    pub fn slot_of(&self, t: Ticks) -> u64 {
        t.0 / self.slot_ticks.0
    }

    pub fn symbol_start(&self, slot: u64, symbol: u8) -> Ticks {
        self.slot_start(slot) + self.symbol_ticks * symbol as u64
    }

    /// Start of the control region in `slot` (PDCCH first symbols, PUCCH last symbols).
    pub fn control_start(&self, slot: u64) -> Ticks {
        match self.direction {
            Direction::Downlink => self.slot_start(slot),
            Direction::Uplink => self.symbol_start(slot, self.data.end),
        }
    }

    /// Control region transmission time.
    pub fn control_duration(&self) -> Ticks {
        self.symbol_ticks * self.control_symbols as u64
    }

    /// Next control occasion at or after `t`.
    pub fn next_control_occasion(&self, t: Ticks) -> Ticks {
        let phase = self.control_start(0);
        t.ceil_to(self.slot_ticks, phase)
    }

    /// Admissible starting symbols for an `n_symbols` transmission: the data
    /// start only for full-slot, any data symbol that fits for mini-slots.
    pub fn admissible_starts(&self, n_symbols: u8) -> Result<Range<u8>> {
        if n_symbols == 0 || n_symbols > self.data_len() {
            return Err(Error::InvalidConfig(format!(
                "{n_symbols}-symbol transmission does not fit the {}-symbol {} data region",
                self.data_len(),
                self.direction
            )));
        }
        if n_symbols == self.data_len() {
            Ok(self.data.start..self.data.start + 1)
        } else {
            Ok(self.data.start..self.data.end - n_symbols + 1)
        }
    }

    /// Earliest admissible transmission start at or after `ready`.
    pub fn next_admissible(&self, ready: Ticks, n_symbols: u8) -> Result<Ticks> {
        let starts = self.admissible_starts(n_symbols)?;
        let slot = self.slot_of(ready);
        for s in [slot, slot + 1] {
            for sym in starts.clone() {
                let t = self.symbol_start(s, sym);
                if t >= ready {
                    return Ok(t);
                }
            }
        }
        unreachable!("every slot has an admissible start")
    }
}

/// Time from `ready` to the next admissible PUSCH/PDSCH start (t_fa).
pub fn frame_alignment(ready: Ticks, geometry: &GridGeometry, slot_type: SlotType) -> Result<Ticks> {
    let n = slot_type.n_symbols(geometry.data_len());
    Ok(geometry.next_admissible(ready, n)? - ready)
}

const MASK_WORDS: usize = 5;
const MAX_SYMBOLS: usize = 14;
type RbMask = [u64; MASK_WORDS];

fn bit(mask: &RbMask, i: u16) -> bool {
    mask[i as usize / 64] >> (i % 64) & 1 == 1
}

fn set_range(mask: &mut RbMask, first: u16, n: u16, value: bool) {
    for i in first..first + n {
        let (w, b) = (i as usize / 64, i % 64);
        if value {
            mask[w] |= 1 << b;
        } else {
            mask[w] &= !(1 << b);
        }
    }
}

/// First index `>= from` whose bit equals `want`, or `width`.
fn next_with(mask: &RbMask, from: u16, width: u16, want: bool) -> u16 {
    let mut i = from;
    while i < width {
        let w = i as usize / 64;
        let word = if want { mask[w] } else { !mask[w] } >> (i % 64);
        if word != 0 {
            return (i + word.trailing_zeros() as u16).min(width);
        }
        i = (w as u16 + 1) * 64;
    }
    width
}

/// Lowest start of `len` consecutive clear bits below `width`.
fn first_free_run(mask: &RbMask, width: u16, len: u16) -> Option<u16> {
    let mut i = 0;
    while i < width {
        let start = next_with(mask, i, width, false);
        if start >= width {
            return None;
        }
        let end = next_with(mask, start, width, true);
        if end - start >= len {
            return Some(start);
        }
        i = end;
    }
    None
}

/// A data rectangle: consecutive RBs x consecutive symbols of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub slot: u64,
    pub first_rb: u16,
    pub n_rb: u16,
    pub first_symbol: u8,
    pub n_symbols: u8,
}

impl Placement {
    pub fn start(&self, geometry: &GridGeometry) -> Ticks {
        geometry.symbol_start(self.slot, self.first_symbol)
    }

    pub fn end(&self, geometry: &GridGeometry) -> Ticks {
        geometry.symbol_start(self.slot, self.first_symbol + self.n_symbols)
    }

    pub fn area(&self) -> u64 {
        self.n_rb as u64 * self.n_symbols as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub owner: u64,
    pub placement: Placement,
    pub cancelled: bool,
}

#[derive(Clone, Default)]
struct SlotState {
    symbols: [RbMask; MAX_SYMBOLS],
}

/// Occupancy of one direction's grid over time.
#[derive(Clone)]
pub struct SlotGrid {
    geometry: GridGeometry,
    base_slot: u64,
    live: VecDeque<SlotState>,
    usage: Vec<[u16; MAX_SYMBOLS]>,
    ledger: Option<Vec<Reservation>>,
    now: Ticks,
}

impl SlotGrid {
    pub fn new(geometry: GridGeometry) -> Self {
        SlotGrid { geometry, base_slot: 0, live: VecDeque::new(), usage: Vec::new(), ledger: None, now: Ticks::ZERO }
    }

    /// Keeps every reservation for trace output.
    pub fn with_ledger(mut self) -> Self {
        self.ledger = Some(Vec::new());
        self
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn now(&self) -> Ticks {
        self.now
    }

    pub fn ledger(&self) -> &[Reservation] {
        self.ledger.as_deref().unwrap_or(&[])
    }

    fn state_mut(&mut self, slot: u64) -> &mut SlotState {
        let idx = (slot - self.base_slot) as usize;
        while self.live.len() <= idx {
            self.live.push_back(SlotState::default());
        }
        &mut self.live[idx]
    }

    fn usage_mut(&mut self, slot: u64) -> &mut [u16; MAX_SYMBOLS] {
        let idx = slot as usize;
        if self.usage.len() <= idx {
            self.usage.resize(idx + 1, [0; MAX_SYMBOLS]);
        }
        &mut self.usage[idx]
    }

    fn usage_at(&self, slot: u64, symbol: u8) -> u16 {
        self.usage.get(slot as usize).map_or(0, |u| u[symbol as usize])
    }

    fn check_request(&self, n_rb: u16, n_symbols: u8, earliest: Ticks) -> Result<Range<u8>> {
        if n_rb == 0 || n_rb > self.geometry.n_rb {
            return Err(Error::InvalidConfig(format!(
                "{n_rb} RBs requested on a {}-RB grid",
                self.geometry.n_rb
            )));
        }
        let slot = self.geometry.slot_of(earliest);
        if slot < self.base_slot {
            return Err(Error::SlotReleased { requested: slot, first_live: self.base_slot });
        }
        self.geometry.admissible_starts(n_symbols)
    }

    /// Whether any symbol of the window is too full to ever fit `n_rb`.
    fn quick_reject(&self, slot: u64, sym: u8, n_symbols: u8, n_rb: u16) -> bool {
        (sym..sym + n_symbols).any(|s| self.usage_at(slot, s) + n_rb > self.geometry.n_rb)
    }

    fn free_run(&mut self, slots: Range<u64>, sym: u8, n_symbols: u8, n_rb: u16) -> Option<u16> {
        if slots.clone().any(|s| self.quick_reject(s, sym, n_symbols, n_rb)) {
            return None;
        }
        let mut mask = [0u64; MASK_WORDS];
        for s in slots {
            let st = self.state_mut(s);
            for m in &st.symbols[sym as usize..(sym + n_symbols) as usize] {
                for w in 0..MASK_WORDS {
                    mask[w] |= m[w];
                }
            }
        }
        first_free_run(&mask, self.geometry.n_rb, n_rb)
    }

    fn reserve(&mut self, owner: u64, p: Placement) {
        let st = self.state_mut(p.slot);
        for m in &mut st.symbols[p.first_symbol as usize..(p.first_symbol + p.n_symbols) as usize] {
            debug_assert!((p.first_rb..p.first_rb + p.n_rb).all(|i| !bit(m, i)));
            set_range(m, p.first_rb, p.n_rb, true);
        }
        let u = self.usage_mut(p.slot);
        for s in p.first_symbol..p.first_symbol + p.n_symbols {
            u[s as usize] += p.n_rb;
        }
        if let Some(ledger) = &mut self.ledger {
            ledger.push(Reservation { owner, placement: p, cancelled: false });
        }
    }

    /// First-fit rectangle at or after `earliest`: slots in time order, then
    /// lowest start symbol, then lowest RB. Returns the placement and t_w.
    pub fn allocate(&mut self, owner: u64, n_rb: u16, n_symbols: u8, earliest: Ticks) -> Result<(Placement, Ticks)> {
        let placements = self.allocate_repeated(owner, n_rb, n_symbols, earliest, 1)?;
        let p = placements[0];
        Ok((p, p.start(&self.geometry) - earliest))
    }

    /// Like `allocate`, but the same rectangle must be free in `copies`
    /// consecutive slots; all copies are reserved.
    pub fn allocate_repeated(
        &mut self,
        owner: u64,
        n_rb: u16,
        n_symbols: u8,
        earliest: Ticks,
        copies: u8,
    ) -> Result<Vec<Placement>> {
        let starts = self.check_request(n_rb, n_symbols, earliest)?;
        let copies = copies.max(1) as u64;
        let mut slot = self.geometry.slot_of(earliest);
        loop {
            for sym in starts.clone() {
                if self.geometry.symbol_start(slot, sym) < earliest {
                    continue;
                }
                if let Some(rb) = self.free_run(slot..slot + copies, sym, n_symbols, n_rb) {
                    let placements: Vec<Placement> = (slot..slot + copies)
                        .map(|s| Placement { slot: s, first_rb: rb, n_rb, first_symbol: sym, n_symbols })
                        .collect();
                    for p in &placements {
                        self.reserve(owner, *p);
                    }
                    return Ok(placements);
                }
            }
            slot += 1;
        }
    }

    /// Frees a reservation whose slot is still live.
    pub fn cancel(&mut self, owner: u64, p: &Placement) {
        if p.slot < self.base_slot {
            return;
        }
        let st = self.state_mut(p.slot);
        for m in &mut st.symbols[p.first_symbol as usize..(p.first_symbol + p.n_symbols) as usize] {
            set_range(m, p.first_rb, p.n_rb, false);
        }
        let u = self.usage_mut(p.slot);
        for s in p.first_symbol..p.first_symbol + p.n_symbols {
            u[s as usize] -= p.n_rb;
        }
        if let Some(ledger) = &mut self.ledger {
            if let Some(r) = ledger.iter_mut().rev().find(|r| r.owner == owner && r.placement == *p && !r.cancelled) {
                r.cancelled = true;
            }
        }
    }

    /// Drops occupancy state of slots ending at or before `now`. Utilization
    /// counters and the ledger are kept.
    pub fn release_expired(&mut self, now: Ticks) -> usize {
        self.now = self.now.max(now);
        let past = now.0 / self.geometry.slot_ticks.0;
        let mut freed = 0;
        while self.base_slot < past {
            if self.live.pop_front().is_some() {
                freed += 1;
            }
            self.base_slot += 1;
            if self.live.is_empty() {
                self.base_slot = past;
            }
        }
        freed
    }

    /// Allocated data RB x tick area inside `window`.
    pub fn allocated_area(&self, window: Range<Ticks>) -> u128 {
        self.area(window, |slot, sym| self.usage_at(slot, sym) as u128)
    }

    /// Total data RB x tick area inside `window`.
    pub fn capacity_area(&self, window: Range<Ticks>) -> u128 {
        self.area(window, |_, _| self.geometry.n_rb as u128)
    }

    fn area(&self, window: Range<Ticks>, rbs: impl Fn(u64, u8) -> u128) -> u128 {
        if window.end <= window.start {
            return 0;
        }
        let g = &self.geometry;
        let mut total = 0u128;
        for slot in g.slot_of(window.start)..=g.slot_of(window.end - Ticks(1)) {
            for sym in g.data.clone() {
                let a = g.symbol_start(slot, sym).max(window.start);
                let b = g.symbol_start(slot, sym + 1).min(window.end);
                if b > a {
                    total += (b - a).0 as u128 * rbs(slot, sym);
                }
            }
        }
        total
    }

    /// Fraction of data RB x symbols allocated inside `window`.
    pub fn utilization(&self, window: Range<Ticks>) -> f64 {
        let cap = self.capacity_area(window.clone());
        if cap == 0 {
            0.0
        } else {
            self.allocated_area(window) as f64 / cap as f64
        }
    }

    /// Writes the reservation ledger as CSV.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "first_rb", "last_rb", "first_symbol", "last_symbol", "owner", "cancelled"])?;
        for r in self.ledger() {
            let p = &r.placement;
            w.write_record([
                p.slot.to_string(),
                p.first_rb.to_string(),
                (p.first_rb + p.n_rb - 1).to_string(),
                p.first_symbol.to_string(),
                (p.first_symbol + p.n_symbols - 1).to_string(),
                r.owner.to_string(),
                r.cancelled.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whether the rectangle is currently free (live slots only).
    pub fn is_free(&self, p: &Placement) -> bool {
        if p.slot < self.base_slot {
            return false;
        }
        match self.live.get((p.slot - self.base_slot) as usize) {
            None => true,
            Some(st) => st.symbols[p.first_symbol as usize..(p.first_symbol + p.n_symbols) as usize]
                .iter()
                .all(|m| (p.first_rb..p.first_rb + p.n_rb).all(|i| !bit(m, i))),
        }
    }
}
